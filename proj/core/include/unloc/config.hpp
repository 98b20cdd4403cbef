#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace unloc {

enum class TaskKind { MomentRetrieval, ActionLocalization, ActionSegmentation };
enum class TextMode { ClsOnly, AllTokens, NoText };
enum class PyramidStyle { ViTDet, Fpn, None };
enum class RegressionLoss { L1, Iou, Diou, L1PlusIou };
enum class SamplingMode { EvenlySpaced, ConsecutivePadded };
enum class EncoderState { Frozen, Finetuned };

std::string to_string(TaskKind v);
std::string to_string(TextMode v);
std::string to_string(PyramidStyle v);
std::string to_string(RegressionLoss v);
std::string to_string(SamplingMode v);
std::string to_string(EncoderState v);

TaskKind parse_task(const std::string& s);
TextMode parse_text_mode(const std::string& s);
PyramidStyle parse_pyramid_style(const std::string& s);
RegressionLoss parse_regression_loss(const std::string& s);
SamplingMode parse_sampling_mode(const std::string& s);
EncoderState parse_encoder_state(const std::string& s);

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct RegressionRange {
  double lo = 0.0;
  double hi = kUnbounded;
};

/// Architecture hyper-parameters. Defaults are the desk-scale setup; the
/// comments give the published large-scale values where they differ.
struct ModelConfig {
  int hidden = 32;            // 512 / 768
  int n_frames = 128;
  int max_text_tokens = 16;   // 32 for moment retrieval
  int levels = 4;
  int head_blocks = 3;
  int fusion_layers = 2;      // 6
  int fusion_mlp_dim = 64;    // 2048 / 3072
  int attention_heads = 2;
  int raw_dim = 16;
  int vocab_size = 64;
  TextMode text_mode = TextMode::AllTokens;
  PyramidStyle pyramid_style = PyramidStyle::ViTDet;
  std::vector<RegressionRange> regression_ranges = {
      {0.0, 4.0}, {4.0, 8.0}, {8.0, 16.0}, {16.0, kUnbounded}};
  RegressionLoss loss_kind = RegressionLoss::L1;
  double alpha = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double cls_prior_logit = -2.0;
  TaskKind task = TaskKind::ActionLocalization;
  // Score classes by cosine similarity with text embeddings after a
  // text-free temporal encoder instead of fusing text tokens.
  bool late_fusion = false;
  // Number of fixed classes for the text-free heads (text_mode = no-text).
  int num_classes = 0;

  void validate() const;
};

/// Ranges for `levels` pyramid levels: [0,4], (4,8], (8,16], ... with the
/// last level unbounded.
std::vector<RegressionRange> default_regression_ranges(int levels);

struct FreezePolicy {
  EncoderState image_encoder = EncoderState::Finetuned;
  EncoderState text_encoder = EncoderState::Frozen;
};

struct OptimizerConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 1.0;     // global L2 norm; <= 0 disables
  int steps = 1000;
  int batch_size = 8;
  int warmup_steps = 50;
};

struct SamplingConfig {
  SamplingMode mode = SamplingMode::EvenlySpaced;
  int n = 128;
};

struct EvalConfig {
  double nms_sigma = 0.5;
  double nms_min_score = 0.001;
  double score_threshold = 0.001;
  int max_detections = 100;
  bool ensemble_prompts = false;
};

struct TrainConfig {
  ModelConfig model;
  FreezePolicy freeze;
  OptimizerConfig optimizer;
  SamplingConfig sampling;
  EvalConfig eval;
  std::uint64_t seed = 0;
  // Run the text encoder with an independent initialisation instead of the
  // jointly pretrained pair.
  bool unpaired_encoders = false;

  void validate() const;
};

std::string to_json(const ModelConfig& c);
std::string to_json(const TrainConfig& c);
ModelConfig model_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);
/// Applies a partial JSON object on top of `base`; unknown keys throw.
TrainConfig overlay_config(const TrainConfig& base, const std::string& text);

}  // namespace unloc
