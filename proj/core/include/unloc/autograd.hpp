#pragma once

// Minimal reverse-mode automatic differentiation over row-major float
// matrices. Every op records a closure that pushes its output gradient into
// its inputs; `backward` replays them in reverse topological order.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace unloc::ag {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Lazily allocates `grad` and returns it.
  Matrix& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient accumulated by `backward`; empty if none reached this tensor.
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  float item() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op output. The closure runs only if some parent needs a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

/// Accumulates `g` into `parent` if it tracks gradients.
void accumulate(Node& parent, const Matrix& g);

/// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
void backward(const Tensor& root);

Tensor constant(Matrix value);

// Linear algebra and elementwise ops.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& a, const Tensor& bias);  // bias is 1 x cols
Tensor scale(const Tensor& a, float s);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

/// Row-wise layer normalisation with affine gamma/beta (each 1 x cols).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

/// Multi-head scaled dot-product self-attention. `qkv` is S x 3K laid out as
/// [Q | K | V]; keys whose `key_valid` entry is 0 receive zero weight.
Tensor attention(const Tensor& qkv, std::span<const std::uint8_t> key_valid,
                 int heads);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor slice_cols(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor transpose(const Tensor& x);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// Multiplies row i by mask[i] (0 or 1).
Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask);
/// 1 x cols weighted sum of rows.
Tensor weighted_sum_rows(const Tensor& x, std::span<const float> weights);
Tensor l2_normalize_rows(const Tensor& x, float eps = 1e-6f);
Tensor sum(const Tensor& x);

enum class Padding { Zero, Replicate };

/// Temporal convolution over the rows of x (N x Cin). `weight` is
/// (kernel * Cin) x Cout with tap-major rows. Output row i is centred on
/// input row i * stride, and there are floor(N / stride) of them.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int kernel, int stride, Padding padding);

/// Nearest-neighbour x2 upsampling: output row i copies input row
/// min(i / 2, rows - 1).
Tensor upsample2(const Tensor& x, Eigen::Index out_rows);

}  // namespace unloc::ag
