#include "unloc/fusion.hpp"

#include "unloc/errors.hpp"

namespace unloc {

FusionSettings fusion_settings(const ModelConfig& config) {
  return {config.hidden,          config.fusion_layers, config.fusion_mlp_dim,
          config.attention_heads, config.n_frames,      config.max_text_tokens};
}

FusionModule::FusionModule(nn::ParameterStore& store, const FusionSettings& settings,
                           Rng& rng)
    : settings_(settings),
      positional_(store.create(
          "fusion.positional", "fusion",
          rng.normal_matrix(settings.max_frames + settings.max_text_tokens,
                            settings.width, 0.02))) {
  for (int i = 0; i < settings.layers; ++i) {
    blocks_.emplace_back(store, "fusion.block" + std::to_string(i), "fusion",
                         settings.width, settings.mlp_dim, settings.heads, rng);
  }
}

int FusionModule::sequence_length(int n_frames, const TextTokens* text, TextMode mode) {
  switch (mode) {
    case TextMode::NoText:
      return n_frames;
    case TextMode::ClsOnly:
      return n_frames + 1;
    case TextMode::AllTokens:
      return n_frames + (text ? static_cast<int>(text->tokens.rows()) : 0);
  }
  return n_frames;
}

FusedFrameTokens FusionModule::fuse(const FrameTokens& frames, const TextTokens* text,
                                    TextMode mode, int class_id) const {
  const Eigen::Index n = frames.tokens.rows();
  if (frames.tokens.cols() != settings_.width) {
    throw InputError("frame tokens have width " + std::to_string(frames.tokens.cols()) +
                     ", fusion expects " + std::to_string(settings_.width));
  }
  if (n > settings_.max_frames) {
    throw InputError("more frames than the positional table covers");
  }
  if (static_cast<Eigen::Index>(frames.mask.size()) != n) {
    throw InputError("frame mask length mismatch");
  }
  if (mode != TextMode::NoText) {
    if (!text) throw InputError("text mode requires text tokens");
    if (text->tokens.cols() != settings_.width) {
      throw InputError("text tokens have width " + std::to_string(text->tokens.cols()) +
                       ", fusion expects " + std::to_string(settings_.width));
    }
    if (text->tokens.rows() > settings_.max_text_tokens) {
      throw InputError("more text tokens than the positional table covers");
    }
  }

  std::vector<ag::Tensor> parts{
      ag::add(frames.tokens, ag::slice_rows(positional_, 0, n))};
  std::vector<std::uint8_t> key_valid(frames.mask);
  const Eigen::Index text_pos = settings_.max_frames;
  if (mode == TextMode::ClsOnly) {
    parts.push_back(ag::add(ag::slice_rows(text->tokens, text->cls_index, 1),
                            ag::slice_rows(positional_, text_pos, 1)));
    key_valid.push_back(1);
  } else if (mode == TextMode::AllTokens) {
    const Eigen::Index t = text->tokens.rows();
    parts.push_back(ag::add(text->tokens, ag::slice_rows(positional_, text_pos, t)));
    key_valid.insert(key_valid.end(), text->mask.begin(), text->mask.end());
  }

  ag::Tensor h = parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
  for (const auto& block : blocks_) h = block(h, key_valid);

  FusedFrameTokens out;
  out.mask = frames.mask;
  out.class_id = class_id;
  out.x = ag::mask_rows(h.rows() == n ? h : ag::slice_rows(h, 0, n), out.mask);
  return out;
}

std::vector<FusedFrameTokens> FusionModule::fuse_per_class(
    const FrameTokens& frames, std::span<const TextTokens> texts, TextMode mode) const {
  if (texts.empty()) throw InputError("fuse_per_class needs at least one text");
  std::vector<FusedFrameTokens> out;
  out.reserve(texts.size());
  for (std::size_t c = 0; c < texts.size(); ++c) {
    out.push_back(fuse(frames, &texts[c], mode, static_cast<int>(c)));
  }
  return out;
}

}  // namespace unloc
