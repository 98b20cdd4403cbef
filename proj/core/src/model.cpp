#include "unloc/model.hpp"

#include <limits>

#include "unloc/errors.hpp"

namespace unloc {

UnlocModel::UnlocModel(const ModelConfig& config, Vocabulary vocabulary, std::uint64_t seed,
                       bool unpaired_encoders)
    : config_(config), vocab_(std::move(vocabulary)), prompts_(PromptSet::kinetics()) {
  config_.vocab_size = std::max(config_.vocab_size, vocab_.size());
  config_.validate();
  Rng rng(seed);
  const int k = config_.hidden;
  encoders_.frame_encoder = FrameEncoder(store_, config_.raw_dim, k, rng);
  // An unpaired text tower is drawn from an unrelated stream.
  Rng text_rng(unpaired_encoders ? seed ^ 0x9e3779b97f4a7c15ULL : rng.next());
  encoders_.text_encoder = TextEncoder(store_, config_.vocab_size, k, text_rng);
  encoders_.paired = !unpaired_encoders;
  fusion_ = FusionModule(store_, fusion_settings(config_), rng);
  pyramid_ = FeaturePyramid(store_, config_.pyramid_style, config_.levels, k,
                            config_.regression_ranges, rng);
  if (config_.text_mode == TextMode::NoText) {
    heads_ = HeadParams(store_, k, config_.head_blocks, config_.cls_prior_logit, rng,
                        config_.num_classes, 2 * config_.num_classes);
  } else {
    heads_ = HeadParams(store_, k, config_.head_blocks, config_.cls_prior_logit, rng);
  }
  if (config_.late_fusion) {
    late_scale_ = store_.create("late_fusion.scale", "heads", ag::Matrix::Constant(1, 1, 5.0f));
    late_bias_ = store_.create("late_fusion.bias", "heads",
                               ag::Matrix::Constant(1, 1, static_cast<float>(config_.cls_prior_logit)));
  }
}

int UnlocModel::active_levels() const {
  return config_.task == TaskKind::ActionSegmentation ? 1 : config_.levels;
}

FrameTokens UnlocModel::encode_frames(const FeatureArray& frames, bool freeze) const {
  return unloc::encode_frames(frames, encoders_.frame_encoder, freeze);
}

std::vector<TextTokens> UnlocModel::encode_texts(const std::vector<std::string>& texts,
                                                 TaskKind task, bool ensemble) const {
  std::vector<TextTokens> out;
  if (config_.text_mode == TextMode::NoText) return out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (task == TaskKind::MomentRetrieval) {
      out.push_back(encode_text(vocab_.tokenize(t), encoders_.text_encoder,
                                config_.max_text_tokens));
    } else {
      out.push_back(apply_prompts(t, prompts_, encoders_.text_encoder, vocab_,
                                  config_.max_text_tokens, ensemble));
    }
  }
  return out;
}

QueryOutput UnlocModel::run_heads(const PyramidFeatures& pyramid,
                                  const ag::Tensor* text_summary) const {
  const bool regress = config_.task != TaskKind::ActionSegmentation;
  QueryOutput out;
  for (const auto& level : pyramid.levels) {
    if (!text_summary) {
      out.push_back(heads_(level, regress));
      continue;
    }
    const ag::Tensor z = ag::l2_normalize_rows(heads_.cls_tower(level));
    const ag::Tensor cosine = ag::matmul(z, ag::transpose(*text_summary));
    LevelOutput lo;
    lo.logits = ag::add_bias(ag::matmul(cosine, late_scale_), late_bias_);
    if (regress) {
      lo.displacement = regression_head(heads_.reg_tower(level), heads_.w_reg, heads_.b_reg);
    }
    out.push_back(lo);
  }
  return out;
}

std::vector<QueryOutput> UnlocModel::forward(const FrameTokens& frames,
                                             std::span<const TextTokens> texts,
                                             std::size_t n_queries) const {
  if (frames.size() != config_.n_frames) {
    throw InputError("sample has " + std::to_string(frames.size()) + " frames, model expects " +
                     std::to_string(config_.n_frames));
  }
  const int max_levels = active_levels();
  stats_.forwards += 1;
  stats_.max_level_read = std::max(stats_.max_level_read, max_levels - 1);
  std::vector<QueryOutput> out;

  if (config_.text_mode == TextMode::NoText) {
    if (n_queries != static_cast<std::size_t>(config_.num_classes)) {
      throw InputError("no-text model has " + std::to_string(config_.num_classes) +
                       " classes, sample has " + std::to_string(n_queries));
    }
    const FusedFrameTokens fused = fusion_.fuse(frames, nullptr, TextMode::NoText);
    const PyramidFeatures pyr = pyramid_(fused.x, max_levels);
    out.assign(n_queries, QueryOutput(pyr.levels.size()));
    for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
      const NoTextOutput nt = no_text_heads(config_.text_mode, heads_.cls_tower(pyr.levels[l]),
                                            heads_.reg_tower(pyr.levels[l]), heads_.w_cls,
                                            heads_.b_cls, heads_.w_reg, heads_.b_reg);
      for (std::size_t c = 0; c < n_queries; ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        out[c][l].logits = ag::slice_cols(nt.logits, ci, 1);
        out[c][l].displacement = ag::slice_cols(nt.displacement, 2 * ci, 2);
      }
    }
    return out;
  }

  if (texts.size() != n_queries) throw InputError("one text per query is required");
  if (config_.late_fusion) {
    const FusedFrameTokens fused = fusion_.fuse(frames, nullptr, TextMode::NoText);
    const PyramidFeatures pyr = pyramid_(fused.x, max_levels);
    for (const auto& text : texts) {
      const ag::Tensor summary =
          ag::l2_normalize_rows(ag::slice_rows(text.tokens, text.cls_index, 1));
      out.push_back(run_heads(pyr, &summary));
    }
    return out;
  }

  for (const auto& fused : fusion_.fuse_per_class(frames, texts, config_.text_mode)) {
    out.push_back(run_heads(pyramid_(fused.x, max_levels), nullptr));
  }
  return out;
}

DensePredictions UnlocModel::predict(const TaskSample& sample, bool ensemble) const {
  ag::NoGradGuard no_grad;
  const FrameTokens frames = encode_frames(sample.frames, true);
  const auto texts = encode_texts(sample.texts, sample.task, ensemble);
  const auto outputs = forward(frames, texts, sample.texts.size());
  DensePredictions preds;
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    ClassPredictions cp;
    cp.class_id = static_cast<int>(c);
    for (std::size_t l = 0; l < outputs[c].size(); ++l) {
      const auto& lo = outputs[c][l];
      const int stride = 1 << l;
      LevelPrediction lp;
      const auto n = static_cast<std::size_t>(lo.logits.rows());
      lp.logits.resize(n);
      lp.displacement.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool valid = sample.frames.mask[i * static_cast<std::size_t>(stride)] != 0;
        lp.logits[i] = valid ? lo.logits.value()(static_cast<Eigen::Index>(i), 0)
                             : -std::numeric_limits<double>::infinity();
        if (lo.displacement.defined()) {
          lp.displacement[i] = {lo.displacement.value()(static_cast<Eigen::Index>(i), 0),
                                lo.displacement.value()(static_cast<Eigen::Index>(i), 1)};
        }
      }
      cp.levels.push_back(std::move(lp));
    }
    preds.push_back(std::move(cp));
  }
  return preds;
}

}  // namespace unloc
