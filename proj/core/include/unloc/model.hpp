#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/data.hpp"
#include "unloc/decode.hpp"
#include "unloc/encoders.hpp"
#include "unloc/fusion.hpp"
#include "unloc/heads.hpp"
#include "unloc/pyramid.hpp"

namespace unloc {

/// Counts how deep the pyramid was read during forwards.
struct ForwardStats {
  int forwards = 0;
  int max_level_read = -1;
};

/// Head outputs of one text query across the pyramid levels.
using QueryOutput = std::vector<LevelOutput>;

/// Encoders, fusion, pyramid and heads wired together. Text-conditioned by
/// default; `late_fusion` scores classes by cosine similarity between
/// temporal features and the text summary, and text_mode no-text uses
/// class-indexed heads.
class UnlocModel {
 public:
  UnlocModel(const ModelConfig& config, Vocabulary vocabulary, std::uint64_t seed,
             bool unpaired_encoders = false);

  UnlocModel(const UnlocModel&) = delete;
  UnlocModel& operator=(const UnlocModel&) = delete;
  UnlocModel(UnlocModel&&) = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const PromptSet& prompts() const { return prompts_; }
  void set_prompts(PromptSet prompts) { prompts_ = std::move(prompts); }
  const EncoderPair& encoders() const { return encoders_; }

  /// Pyramid levels used for the model's task (1 for segmentation).
  int active_levels() const;

  FrameTokens encode_frames(const FeatureArray& frames, bool freeze = false) const;
  /// Class names go through the prompt templates; captions are used as is.
  std::vector<TextTokens> encode_texts(const std::vector<std::string>& texts, TaskKind task,
                                       bool ensemble = false) const;

  /// One QueryOutput per text (per class for no-text, where `n_queries`
  /// gives the class count and `texts` may be empty).
  std::vector<QueryOutput> forward(const FrameTokens& frames,
                                   std::span<const TextTokens> texts,
                                   std::size_t n_queries) const;

  /// Gradient-free forward on a sample. Padded cells get a -inf logit.
  DensePredictions predict(const TaskSample& sample, bool ensemble = false) const;

  ForwardStats& stats() const { return stats_; }

 private:
  QueryOutput run_heads(const PyramidFeatures& pyramid, const ag::Tensor* text_summary) const;

  ModelConfig config_;
  Vocabulary vocab_;
  PromptSet prompts_;
  nn::ParameterStore store_;
  EncoderPair encoders_;
  FusionModule fusion_;
  FeaturePyramid pyramid_;
  HeadParams heads_;
  ag::Tensor late_scale_, late_bias_;
  mutable ForwardStats stats_;
};

}  // namespace unloc
