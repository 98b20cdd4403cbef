#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "unloc/checkpoint.hpp"
#include "unloc/errors.hpp"
#include "unloc/evaluate.hpp"
#include "unloc/recipes.hpp"
#include "unloc/train.hpp"

using namespace unloc;
namespace fs = std::filesystem;

namespace {

Dataset tiny_data(TaskKind task = TaskKind::ActionLocalization, int classes = 2,
                  double noise = 0.3) {
  SyntheticSpec s = default_synthetic_spec(task);
  s.n_videos = 16;
  s.n_classes = classes;
  s.noise_std = noise;
  s.seed = 3;
  return generate_synthetic(s);
}

TrainConfig tiny_config(const Dataset& ds, int steps = 5) {
  TrainConfig c = default_train_config(ds.task);
  c.model.n_frames = 32;
  c.model.hidden = 16;
  c.model.fusion_mlp_dim = 32;
  c.model.levels = 3;
  c.model.regression_ranges = default_regression_ranges(3);
  c.optimizer.steps = steps;
  c.optimizer.batch_size = 4;
  c.optimizer.warmup_steps = 2;
  fit_to_dataset(c, ds);
  return c;
}

UnlocModel make_model(const TrainConfig& c, const Dataset& ds) {
  return UnlocModel(c.model, build_vocabulary(ds, PromptSet::kinetics()), c.seed);
}

std::map<std::string, ag::Matrix> snapshot(const UnlocModel& m) {
  std::map<std::string, ag::Matrix> out;
  for (const auto& p : m.parameters().parameters()) out[p.name] = p.tensor.value();
  return out;
}

std::size_t count_predictions(const std::vector<QueryOutput>& out) {
  std::size_t n = 0;
  for (const auto& q : out) {
    for (const auto& level : q) n += static_cast<std::size_t>(level.logits.rows());
  }
  return n;
}

TaskSample first_sample(const Dataset& ds, const TrainConfig& c) {
  Rng rng(1);
  return sample_frames(ds.videos[0], ds, c.sampling, rng);
}

}  // namespace

TEST(Model, PredictionCountFollowsTheGrid) {
  const Dataset ds = tiny_data(TaskKind::ActionLocalization, 3);
  TrainConfig c = tiny_config(ds);
  c.model.n_frames = 128;
  c.model.levels = 4;
  c.model.regression_ranges = default_regression_ranges(4);
  const UnlocModel m = make_model(c, ds);
  FeatureArray raw{ag::Matrix::Zero(128, ds.raw_dim), std::vector<std::uint8_t>(128, 1)};
  const auto texts = m.encode_texts(ds.classes, ds.task);
  EXPECT_EQ(count_predictions(m.forward(m.encode_frames(raw), texts, texts.size())), 3u * 240u);
}

TEST(Model, NoTextShapes) {
  const Dataset ds = tiny_data(TaskKind::ActionLocalization, 3);
  TrainConfig c = tiny_config(ds);
  c.model.text_mode = TextMode::NoText;
  fit_to_dataset(c, ds);
  const UnlocModel m = make_model(c, ds);
  ASSERT_NE(m.parameters().find("heads.w_cls"), nullptr);
  EXPECT_EQ(m.parameters().find("heads.w_cls")->tensor.cols(), 3);
  EXPECT_EQ(m.parameters().find("heads.w_reg")->tensor.cols(), 6);
  const TaskSample s = first_sample(ds, c);
  const auto preds = m.predict(s);
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].levels[0].logits.size(), 32u);
  EXPECT_EQ(preds[2].levels[0].displacement.size(), 32u);
}

TEST(Model, DeterministicPrediction) {
  const Dataset ds = tiny_data();
  const TrainConfig c = tiny_config(ds);
  const UnlocModel a = make_model(c, ds), b = make_model(c, ds);
  const TaskSample s = first_sample(ds, c);
  const auto pa = a.predict(s), pb = b.predict(s);
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t l = 0; l < pa[k].levels.size(); ++l) {
      EXPECT_EQ(pa[k].levels[l].logits, pb[k].levels[l].logits);
    }
  }
}

TEST(Model, SegmentationReadsOnlyTheBottomLevel) {
  const Dataset ds = tiny_data(TaskKind::ActionSegmentation);
  const TrainConfig c = tiny_config(ds);
  const UnlocModel m = make_model(c, ds);
  m.stats() = {};
  const auto preds = m.predict(first_sample(ds, c));
  EXPECT_EQ(m.stats().max_level_read, 0);
  EXPECT_EQ(preds[0].levels.size(), 1u);
}

TEST(Model, LateFusionAndUnpairedEncodersRun) {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config(ds, 3);
  c.model.late_fusion = true;
  c.unpaired_encoders = true;
  UnlocModel m(c.model, build_vocabulary(ds, PromptSet::kinetics()), c.seed, true);
  EXPECT_FALSE(m.encoders().paired);
  EXPECT_NO_THROW(train(m, ds, c));
  EXPECT_EQ(m.predict(first_sample(ds, c)).size(), ds.classes.size());
}

TEST(Train, ZeroLearningRateChangesNothing) {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config(ds, 4);
  c.optimizer.learning_rate = 0.0;
  c.optimizer.weight_decay = 0.0;
  UnlocModel m = make_model(c, ds);
  const auto before = snapshot(m);
  train(m, ds, c);
  EXPECT_EQ(snapshot(m), before);
}

TEST(Train, FrozenTextEncoderStaysBitIdentical) {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config(ds, 100);
  UnlocModel m = make_model(c, ds);
  const auto before = snapshot(m);
  train(m, ds, c);
  const auto after = snapshot(m);
  for (const auto& p : m.parameters().parameters()) {
    if (p.group == "text_encoder") {
      EXPECT_EQ(after.at(p.name), before.at(p.name)) << p.name;
    }
  }
  EXPECT_NE(after.at("heads.w_cls"), before.at("heads.w_cls"));
}

TEST(Train, LossDecreasesOnSeparableData) {
  const Dataset ds = tiny_data(TaskKind::ActionLocalization, 2, 0.0);
  const TrainConfig c = tiny_config(ds, 500);
  UnlocModel m = make_model(c, ds);
  const TrainResult r = train(m, ds, c);
  ASSERT_EQ(r.curve.size(), 500u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 20; ++i) {
    head += r.curve[static_cast<std::size_t>(i)].total;
    tail += r.curve[r.curve.size() - 1 - static_cast<std::size_t>(i)].total;
  }
  EXPECT_LT(tail, head);
  EXPECT_LT(r.curve.back().total, r.curve.front().total);
}

TEST(Train, LearningRateSchedule) {
  nn::ParameterStore store;
  OptimizerConfig o;
  o.learning_rate = 0.1;
  o.steps = 100;
  o.warmup_steps = 10;
  const MomentumSgd sgd(store, o);
  EXPECT_LT(sgd.learning_rate(0), sgd.learning_rate(9));
  // Warmup scales the cosine curve.
  EXPECT_NEAR(sgd.learning_rate(4), 0.1 * 0.5 * 0.5 * (1.0 + std::cos(std::numbers::pi * 0.04)), 1e-12);
  EXPECT_NEAR(sgd.learning_rate(10), 0.1 * 0.5 * (1.0 + std::cos(std::numbers::pi * 0.1)), 1e-12);
  EXPECT_GT(sgd.learning_rate(50), sgd.learning_rate(90));
  EXPECT_GE(sgd.learning_rate(99), 0.0);
}

TEST(Pretrain, MatchedClassScoresHigher) {
  SyntheticSpec s = default_synthetic_spec(TaskKind::ActionLocalization);
  s.n_classes = 2;
  s.n_videos = 40;
  s.seed = 8;
  const Dataset clips = generate_clips(s);
  const auto [train_clips, held_out] = split_videos(clips, 30);
  TrainConfig c = tiny_config(clips, 150);
  UnlocModel m = make_model(c, clips);
  const auto before = snapshot(m);
  pretrain_multilabel(m, train_clips, c);
  double matched = 0.0, mismatched = 0.0;
  for (const auto& v : held_out.videos) {
    Rng rng(1);
    const auto logits = clip_logits(m, sample_frames(v, held_out, c.sampling, rng));
    const int cls = v.segments[0].class_id;
    matched += logits[static_cast<std::size_t>(cls)];
    mismatched += logits[static_cast<std::size_t>(1 - cls)];
  }
  EXPECT_GT(matched, mismatched);
  const auto after = snapshot(m);
  for (const auto& p : m.parameters().parameters()) {
    if (p.group == "text_encoder") EXPECT_EQ(after.at(p.name), before.at(p.name));
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const Dataset ds = tiny_data();
  const TrainConfig c = tiny_config(ds);
  const UnlocModel m = make_model(c, ds);
  const fs::path dir = fs::temp_directory_path() / "unloc_ckpt_test";
  fs::create_directories(dir);
  save_checkpoint(m, {ds.classes, ds.task}, dir / "m.ulck");
  const LoadedCheckpoint back = load_checkpoint(dir / "m.ulck");
  EXPECT_EQ(back.info.classes, ds.classes);
  EXPECT_EQ(snapshot(back.model), snapshot(m));
  const TaskSample s = first_sample(ds, c);
  EXPECT_EQ(back.model.predict(s)[1].levels[2].logits, m.predict(s)[1].levels[2].logits);

  fs::copy_file(dir / "m.ulck", dir / "cut.ulck", fs::copy_options::overwrite_existing);
  fs::resize_file(dir / "cut.ulck", fs::file_size(dir / "m.ulck") - 7);
  EXPECT_THROW(load_checkpoint(dir / "cut.ulck"), FormatError);
  std::ofstream(dir / "junk.ulck") << "JUNKJUNKJUNK";
  EXPECT_THROW(load_checkpoint(dir / "junk.ulck"), FormatError);
}

TEST(Checkpoint, CopyMatchingParameters) {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config(ds);
  UnlocModel a = make_model(c, ds);
  c.seed = 99;
  c.model.text_mode = TextMode::NoText;
  fit_to_dataset(c, ds);
  UnlocModel b = make_model(c, ds);
  const std::size_t n = copy_matching_parameters(b.parameters(), a.parameters());
  EXPECT_GT(n, 0u);
  EXPECT_LT(n, b.parameters().parameters().size());
  EXPECT_EQ(b.parameters().find("fusion.positional")->tensor.value(),
            a.parameters().find("fusion.positional")->tensor.value());
}

TEST(Evaluate, OracleScoresPerfectly) {
  const Dataset tal = tiny_data();
  EvalReport r = evaluate(OracleLocalizer{}, tal, tiny_config(tal));
  EXPECT_EQ(r.metrics.at("mAP@0.5"), 1.0);
  EXPECT_EQ(r.metrics.at("mAP@0.7"), 1.0);
  const Dataset mr = tiny_data(TaskKind::MomentRetrieval, 6);
  r = evaluate(OracleLocalizer{}, mr, tiny_config(mr));
  EXPECT_EQ(r.metrics.at("recall@1@0.7"), 1.0);
}

TEST(Evaluate, BackgroundPredictorAccuracyIsTheBackgroundShare) {
  const Dataset as = tiny_data(TaskKind::ActionSegmentation);
  const EvalReport r = evaluate(BackgroundLocalizer{}, as, tiny_config(as));
  std::size_t bg = 0, total = 0;
  for (const auto& v : as.videos) {
    for (int l : frame_labels(v)) bg += l == kBackground;
    total += static_cast<std::size_t>(v.length());
  }
  EXPECT_EQ(r.metrics.at("frame_accuracy"), static_cast<double>(bg) / static_cast<double>(total));
}

TEST(Evaluate, SingleTemplateEnsembleIsANoOp) {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config(ds);
  UnlocModel m = make_model(c, ds);
  m.set_prompts(PromptSet({"a video of a person doing {label}"}));
  const EvalReport plain = evaluate(ModelLocalizer(m, false), ds, c);
  const EvalReport ens = evaluate(ModelLocalizer(m, true), ds, c);
  EXPECT_EQ(plain.to_json(), ens.to_json());
}

TEST(Config, JsonRoundTripAndOverlay) {
  TrainConfig c = default_train_config(TaskKind::MomentRetrieval);
  c.model.loss_kind = RegressionLoss::Diou;
  c.freeze.text_encoder = EncoderState::Finetuned;
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  const TrainConfig o = overlay_config(c, R"({"model": {"levels": 2}})");
  EXPECT_EQ(o.model.levels, 2);
  EXPECT_EQ(o.model.regression_ranges.size(), 2u);
  EXPECT_EQ(o.model.loss_kind, RegressionLoss::Diou);
  EXPECT_THROW(overlay_config(c, R"({"model": {"levles": 2}})"), ConfigError);
  EXPECT_THROW(overlay_config(c, R"({"model": {"text_mode": "sometimes"}})"), ConfigError);
}

TEST(Config, Validation) {
  ModelConfig m;
  m.pyramid_style = PyramidStyle::None;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.head_blocks = 5;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.n_frames = 4;
  EXPECT_THROW(m.validate(), ConfigError);
  EXPECT_EQ(default_train_config(TaskKind::MomentRetrieval).model.max_text_tokens, 32);
  EXPECT_EQ(default_train_config(TaskKind::ActionLocalization).model.max_text_tokens, 16);
}
