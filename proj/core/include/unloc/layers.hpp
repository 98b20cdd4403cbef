#pragma once

#include <span>
#include <string>
#include <vector>

#include "unloc/autograd.hpp"
#include "unloc/random.hpp"

namespace unloc::nn {

using ag::Matrix;
using ag::Tensor;

struct NamedParameter {
  std::string name;
  std::string group;  // "image_encoder", "text_encoder", "fusion", ...
  Tensor tensor;
};

/// Owns every trainable array of a model, in creation order.
class ParameterStore {
 public:
  Tensor create(const std::string& name, const std::string& group, Matrix init);

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  const NamedParameter* find(const std::string& name) const;
  NamedParameter* find(const std::string& name);

  void zero_grad();
  /// Toggles gradient tracking for every parameter of `group`.
  void set_group_trainable(const std::string& group, bool trainable);
  std::size_t parameter_count() const;

 private:
  std::vector<NamedParameter> params_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, const std::string& group,
         int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, const std::string& group,
            int width);
  Tensor operator()(const Tensor& x) const;

  Tensor gamma;
  Tensor beta;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, const std::string& group,
         int in, int out, int kernel, int stride, ag::Padding padding, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  /// Sets every tap to I / kernel (requires in == out).
  void set_averaging();
  /// Centre tap identity, other taps zero (requires in == out).
  void set_identity();

  Tensor weight;  // (kernel * in) x out
  Tensor bias;
  int kernel = 3;
  int stride = 1;
  ag::Padding padding = ag::Padding::Zero;
};

/// Pre-norm transformer encoder block: x + MHA(LN(x)), then h + MLP(LN(h)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name,
                   const std::string& group, int width, int mlp_dim, int heads,
                   Rng& rng);
  Tensor operator()(const Tensor& x, std::span<const std::uint8_t> key_valid) const;

  /// Zeroes the attention and MLP output projections so the block is the
  /// identity on its residual stream.
  void zero_output_projections();

  LayerNorm ln1, ln2;
  Linear qkv, attn_out, fc1, fc2;
  int heads = 1;
};

}  // namespace unloc::nn
