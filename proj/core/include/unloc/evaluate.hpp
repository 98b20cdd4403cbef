#pragma once

#include <ostream>

#include "unloc/config.hpp"
#include "unloc/data.hpp"
#include "unloc/decode.hpp"
#include "unloc/metrics.hpp"
#include "unloc/model.hpp"

namespace unloc {

/// Anything that can localize the texts of a sample.
class Localizer {
 public:
  virtual ~Localizer() = default;
  /// Scored segments in sampled-index units; class_id indexes sample.texts.
  virtual CandidateSet detect(const TaskSample& sample, const EvalConfig& eval) const = 0;
  /// valid_frames x texts relevancy probabilities.
  virtual ag::Matrix frame_scores(const TaskSample& sample) const = 0;
};

/// expand -> SoftNMS -> top-k on the model's dense predictions.
class ModelLocalizer : public Localizer {
 public:
  explicit ModelLocalizer(const UnlocModel& model, bool ensemble_prompts = false)
      : model_(model), ensemble_(ensemble_prompts) {}
  CandidateSet detect(const TaskSample& sample, const EvalConfig& eval) const override;
  ag::Matrix frame_scores(const TaskSample& sample) const override;

 private:
  const UnlocModel& model_;
  bool ensemble_;
};

/// Emits the ground truth with score 1.
class OracleLocalizer : public Localizer {
 public:
  CandidateSet detect(const TaskSample& sample, const EvalConfig& eval) const override;
  ag::Matrix frame_scores(const TaskSample& sample) const override;
};

/// Predicts nothing: every frame is background.
class BackgroundLocalizer : public Localizer {
 public:
  CandidateSet detect(const TaskSample& sample, const EvalConfig& eval) const override;
  ag::Matrix frame_scores(const TaskSample& sample) const override;
};

/// The model-ready views evaluation uses for one video.
std::vector<TaskSample> evaluation_samples(const VideoRecord& video, const Dataset& dataset,
                                           const SamplingConfig& sampling);

/// Per-frame labels (class or kBackground) of a whole video.
std::vector<int> frame_labels(const VideoRecord& video);

/// Moment retrieval: Recall@{1,5} at IoU {0.5, 0.7}. Localization: mAP at
/// IoU {0.5, 0.7}. Segmentation: non-overlapping N-frame windows on the
/// bottom level, each frame labelled with its best class when that
/// probability reaches 0.5 and background otherwise.
EvalReport evaluate(const Localizer& localizer, const Dataset& dataset,
                    const TrainConfig& config);

/// One JSON object per line: video_id, class_id (or caption_id), start_sec,
/// end_sec, score.
void write_predictions(const Localizer& localizer, const Dataset& dataset,
                       const TrainConfig& config, std::ostream& out);

}  // namespace unloc
