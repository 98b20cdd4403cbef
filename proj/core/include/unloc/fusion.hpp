#pragma once

#include <span>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/encoders.hpp"
#include "unloc/layers.hpp"

namespace unloc {

/// Frame-token slice X^c of the fusion output for one class/caption.
struct FusedFrameTokens {
  ag::Tensor x;  // N x K
  std::vector<std::uint8_t> mask;
  int class_id = 0;
};

struct FusionSettings {
  int width = 32;
  int layers = 2;
  int mlp_dim = 64;
  int heads = 2;
  int max_frames = 128;
  int max_text_tokens = 16;
};

FusionSettings fusion_settings(const ModelConfig& config);

/// Transformer encoder over [frame tokens ; text tokens] with learned
/// absolute positions (text positions start at max_frames). Padding is
/// masked as attention keys.
class FusionModule {
 public:
  FusionModule() = default;
  FusionModule(nn::ParameterStore& store, const FusionSettings& settings, Rng& rng);

  /// Length of the sequence the transformer sees for `mode`.
  static int sequence_length(int n_frames, const TextTokens* text, TextMode mode);

  FusedFrameTokens fuse(const FrameTokens& frames, const TextTokens* text,
                        TextMode mode, int class_id = 0) const;
  std::vector<FusedFrameTokens> fuse_per_class(const FrameTokens& frames,
                                               std::span<const TextTokens> texts,
                                               TextMode mode) const;

  std::vector<nn::TransformerBlock>& blocks() { return blocks_; }
  const ag::Tensor& positional() const { return positional_; }
  int width() const { return settings_.width; }

 private:
  FusionSettings settings_;
  ag::Tensor positional_;
  std::vector<nn::TransformerBlock> blocks_;
};

}  // namespace unloc
