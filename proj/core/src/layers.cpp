#include "unloc/layers.hpp"

#include <cmath>

#include "unloc/errors.hpp"

namespace unloc::nn {

Tensor ParameterStore::create(const std::string& name, const std::string& group,
                              Matrix init) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor t(std::move(init), true);
  params_.push_back({name, group, t});
  return t;
}

const NamedParameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

NamedParameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterStore::set_group_trainable(const std::string& group, bool trainable) {
  for (auto& p : params_) {
    if (p.group == group) p.tensor.set_requires_grad(trainable);
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.value().size());
  return n;
}

Linear::Linear(ParameterStore& store, const std::string& name, const std::string& group,
               int in, int out, Rng& rng)
    : weight(store.create(name + ".weight", group,
                          rng.normal_matrix(in, out, 1.0 / std::sqrt(in)))),
      bias(store.create(name + ".bias", group, Matrix::Zero(1, out))) {}

Tensor Linear::operator()(const Tensor& x) const {
  return ag::add_bias(ag::matmul(x, weight), bias);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name,
                     const std::string& group, int width)
    : gamma(store.create(name + ".gamma", group, Matrix::Ones(1, width))),
      beta(store.create(name + ".beta", group, Matrix::Zero(1, width))) {}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ag::layer_norm(x, gamma, beta);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, const std::string& group,
               int in, int out, int kernel_size, int stride_, ag::Padding pad, Rng& rng)
    : weight(store.create(
          name + ".weight", group,
          rng.normal_matrix(kernel_size * in, out, 1.0 / std::sqrt(kernel_size * in)))),
      bias(store.create(name + ".bias", group, Matrix::Zero(1, out))),
      kernel(kernel_size),
      stride(stride_),
      padding(pad) {}

Tensor Conv1d::operator()(const Tensor& x) const {
  return ag::conv1d(x, weight, bias, kernel, stride, padding);
}

void Conv1d::set_averaging() {
  const Eigen::Index width = weight.cols();
  if (weight.rows() != kernel * width) {
    throw ContractError("averaging kernel needs in == out");
  }
  Matrix& w = weight.mutable_value();
  w.setZero();
  for (int t = 0; t < kernel; ++t) {
    w.block(t * width, 0, width, width) =
        Matrix::Identity(width, width) / static_cast<float>(kernel);
  }
  bias.mutable_value().setZero();
}

void Conv1d::set_identity() {
  const Eigen::Index width = weight.cols();
  if (weight.rows() != kernel * width) {
    throw ContractError("identity kernel needs in == out");
  }
  Matrix& w = weight.mutable_value();
  w.setZero();
  w.block((kernel / 2) * width, 0, width, width) = Matrix::Identity(width, width);
  bias.mutable_value().setZero();
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name,
                                   const std::string& group, int width, int mlp_dim,
                                   int heads_, Rng& rng)
    : ln1(store, name + ".ln1", group, width),
      ln2(store, name + ".ln2", group, width),
      qkv(store, name + ".qkv", group, width, 3 * width, rng),
      attn_out(store, name + ".attn_out", group, width, width, rng),
      fc1(store, name + ".fc1", group, width, mlp_dim, rng),
      fc2(store, name + ".fc2", group, mlp_dim, width, rng),
      heads(heads_) {}

Tensor TransformerBlock::operator()(const Tensor& x,
                                    std::span<const std::uint8_t> key_valid) const {
  Tensor h = ag::add(x, attn_out(ag::attention(qkv(ln1(x)), key_valid, heads)));
  return ag::add(h, fc2(ag::gelu(fc1(ln2(h)))));
}

void TransformerBlock::zero_output_projections() {
  attn_out.weight.mutable_value().setZero();
  attn_out.bias.mutable_value().setZero();
  fc2.weight.mutable_value().setZero();
  fc2.bias.mutable_value().setZero();
}

}  // namespace unloc::nn
