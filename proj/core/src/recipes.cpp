#include "unloc/recipes.hpp"

namespace unloc {

TrainConfig default_train_config(TaskKind task) {
  TrainConfig c;
  c.model.task = task;
  switch (task) {
    case TaskKind::MomentRetrieval:
      c.model.max_text_tokens = 32;
      c.optimizer.learning_rate = 0.1;
      break;
    case TaskKind::ActionLocalization:
      break;
    case TaskKind::ActionSegmentation:
      c.sampling.mode = SamplingMode::ConsecutivePadded;
      break;
  }
  return c;
}

SyntheticSpec default_synthetic_spec(TaskKind task) {
  SyntheticSpec s;
  s.task = task;
  switch (task) {
    case TaskKind::MomentRetrieval:
      s.n_classes = 8;
      s.min_events = 2;
      s.max_events = 3;
      break;
    case TaskKind::ActionLocalization:
      break;
    case TaskKind::ActionSegmentation:
      s.min_frames = 200;
      s.max_frames = 300;
      s.min_events = 2;
      s.max_events = 5;
      s.background_fraction = 0.589;
      break;
  }
  return s;
}

void fit_to_dataset(TrainConfig& config, const Dataset& dataset) {
  auto& m = config.model;
  m.task = dataset.task;
  if (dataset.raw_dim > 0) m.raw_dim = dataset.raw_dim;
  if (m.text_mode == TextMode::NoText) m.num_classes = static_cast<int>(dataset.classes.size());
  if (m.pyramid_style == PyramidStyle::None && m.levels != 1) {
    m.levels = 1;
    m.regression_ranges = default_regression_ranges(1);
  }
  config.sampling.n = m.n_frames;
}

}  // namespace unloc
