#pragma once

#include <vector>

#include "unloc/config.hpp"
#include "unloc/layers.hpp"

namespace unloc {

/// M blocks of [LayerNorm -> conv1d(k=3, same length, zero padding) -> ReLU].
class ConvTower {
 public:
  ConvTower() = default;
  ConvTower(nn::ParameterStore& store, const std::string& name, int width, int blocks,
            Rng& rng);

  ag::Tensor operator()(const ag::Tensor& x) const;
  int size() const { return static_cast<int>(convs_.size()); }
  std::vector<nn::Conv1d>& convs() { return convs_; }
  std::vector<nn::LayerNorm>& norms() { return norms_; }

 private:
  std::vector<nn::LayerNorm> norms_;
  std::vector<nn::Conv1d> convs_;
};

ag::Tensor apply_conv_blocks(const ag::Tensor& x, const ConvTower& tower);

/// y^c = Z^c w_cls + b_cls  (N_l x 1 logits)
ag::Tensor classification_head(const ag::Tensor& z, const ag::Tensor& w_cls,
                               const ag::Tensor& b_cls);
/// dt^c = relu(Z^c w_reg + b_reg)  (N_l x 2, start/end)
ag::Tensor regression_head(const ag::Tensor& z, const ag::Tensor& w_reg,
                           const ag::Tensor& b_reg);

/// Per-level output of the relevancy and displacement heads.
struct LevelOutput {
  ag::Tensor logits;        // N_l x 1
  ag::Tensor displacement;  // N_l x 2, empty when regression is skipped
};

/// Classification and regression towers plus their final linears; one
/// instance serves every pyramid level and every class. The two towers
/// share no parameters.
class HeadParams {
 public:
  HeadParams() = default;
  HeadParams(nn::ParameterStore& store, int width, int blocks, double prior_logit,
             Rng& rng, int cls_outputs = 1, int reg_outputs = 2,
             const std::string& prefix = "heads");

  LevelOutput operator()(const ag::Tensor& level, bool with_regression = true) const;

  ConvTower cls_tower;
  ConvTower reg_tower;
  ag::Tensor w_cls, b_cls;
  ag::Tensor w_reg, b_reg;
};

/// Class-indexed projections for the text-free variant:
/// Y = Z W_cls + b_cls (N x C), dT = relu(Z W_reg + b_reg) (N x 2C) where
/// columns 2c and 2c+1 are class c's start and end.
struct NoTextOutput {
  ag::Tensor logits;
  ag::Tensor displacement;
};

/// Throws ContractError unless `mode` is no-text.
NoTextOutput no_text_heads(TextMode mode, const ag::Tensor& z_cls, const ag::Tensor& z_reg,
                           const ag::Tensor& w_cls, const ag::Tensor& b_cls,
                           const ag::Tensor& w_reg, const ag::Tensor& b_reg);

}  // namespace unloc
