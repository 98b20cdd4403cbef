#include "unloc/autograd.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "unloc/errors.hpp"

namespace unloc::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

}  // namespace

Matrix& Node::grad_buffer() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Matrix value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void accumulate(Node& parent, const Matrix& g) {
  if (!parent.requires_grad) return;
  parent.grad_buffer() += g;
}

void backward(const Tensor& root) {
  require(root.defined() && root.rows() == 1 && root.cols() == 1,
          "backward expects a 1x1 root");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()(0, 0) += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() > 0) node->backward(*node);
  }
}

Tensor constant(Matrix value) { return Tensor(std::move(value), false); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out;
  out.noalias() = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.grad_buffer().noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad_buffer().noalias() += pa.value.transpose() * self.grad;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias: shape mismatch");
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {a, bias}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& pb = *self.parents[1];
    if (pb.requires_grad) pb.grad_buffer() += self.grad.colwise().sum();
  });
}

Tensor scale(const Tensor& a, float s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    Node& pa = *self.parents[0];
    if (pa.requires_grad) pa.grad_buffer() += self.grad * s;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.grad_buffer() += self.grad.cwiseProduct(pb.value);
    if (pb.requires_grad) pb.grad_buffer() += self.grad.cwiseProduct(pa.value);
  });
}

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0f), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.grad_buffer() +=
        (pa.value.array() > 0.0f).select(self.grad.array(), 0.0f).matrix();
  });
}

namespace {
constexpr float kSqrt2OverPi = 0.7978845608028654f;
constexpr float kGeluCoeff = 0.044715f;
}  // namespace

Tensor gelu(const Tensor& a) {
  const auto& x = a.value().array();
  Matrix out =
      (0.5f * x * (1.0f + (kSqrt2OverPi * (x + kGeluCoeff * x.cube())).tanh()))
          .matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const auto x = pa.value.array();
    const auto inner = kSqrt2OverPi * (x + kGeluCoeff * x.cube());
    const Eigen::ArrayXXf t = inner.tanh();
    const auto d_inner = kSqrt2OverPi * (1.0f + 3.0f * kGeluCoeff * x.square());
    const auto d = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t.square()) * d_inner;
    pa.grad_buffer() += (self.grad.array() * d).matrix();
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 &&
              beta.cols() == c,
          "layer_norm: parameter shape mismatch");
  Matrix xhat(n, c);
  Eigen::VectorXf inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = x.value().row(i).array();
    const float mean = row.mean();
    const float var = (row - mean).square().mean();
    inv_std(i) = 1.0f / std::sqrt(var + eps);
    xhat.row(i) = ((row - mean) * inv_std(i)).matrix();
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_result(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        if (pg.requires_grad) {
          pg.grad_buffer() += self.grad.cwiseProduct(xhat).colwise().sum();
        }
        if (pb.requires_grad) pb.grad_buffer() += self.grad.colwise().sum();
        if (!px.requires_grad) return;
        Matrix dxhat = self.grad;
        dxhat.array().rowwise() *= pg.value.row(0).array();
        const Eigen::VectorXf mean_d = dxhat.rowwise().mean();
        const Eigen::VectorXf mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix& g = px.grad_buffer();
        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
          g.row(i).array() += inv_std(i) * (dxhat.row(i).array() - mean_d(i) -
                                            xhat.row(i).array() * mean_dx(i));
        }
      });
}

Tensor attention(const Tensor& qkv, std::span<const std::uint8_t> key_valid, int heads) {
  const Eigen::Index s = qkv.rows();
  require(qkv.cols() % 3 == 0, "attention: qkv width must be 3K");
  const Eigen::Index k = qkv.cols() / 3;
  require(heads >= 1 && k % heads == 0, "attention: heads must divide K");
  require(static_cast<Eigen::Index>(key_valid.size()) == s,
          "attention: key mask length mismatch");
  const Eigen::Index d = k / heads;
  const float scale_factor = 1.0f / std::sqrt(static_cast<float>(d));
  const Matrix& in = qkv.value();

  std::vector<Matrix> probs(heads);
  Matrix out(s, k);
  for (int h = 0; h < heads; ++h) {
    const auto q = in.block(0, h * d, s, d);
    const auto kk = in.block(0, k + h * d, s, d);
    const auto v = in.block(0, 2 * k + h * d, s, d);
    Matrix p;
    p.noalias() = (q * kk.transpose()) * scale_factor;
    for (Eigen::Index i = 0; i < s; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (Eigen::Index j = 0; j < s; ++j) {
        if (key_valid[j]) mx = std::max(mx, p(i, j));
      }
      float denom = 0.0f;
      for (Eigen::Index j = 0; j < s; ++j) {
        const float e = key_valid[j] ? std::exp(p(i, j) - mx) : 0.0f;
        p(i, j) = e;
        denom += e;
      }
      if (denom > 0.0f) p.row(i) /= denom;
    }
    out.block(0, h * d, s, d).noalias() = p * v;
    probs[h] = std::move(p);
  }

  return make_result(
      std::move(out), {qkv},
      [probs = std::move(probs), heads, d, k, scale_factor](Node& self) {
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        const Matrix& in = px.value;
        const Eigen::Index s = in.rows();
        Matrix& g = px.grad_buffer();
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[h];
          const auto q = in.block(0, h * d, s, d);
          const auto kk = in.block(0, k + h * d, s, d);
          const auto v = in.block(0, 2 * k + h * d, s, d);
          const auto d_out = self.grad.block(0, h * d, s, d);
          g.block(0, 2 * k + h * d, s, d).noalias() += p.transpose() * d_out;
          Matrix dp;
          dp.noalias() = d_out * v.transpose();
          const Eigen::VectorXf row_dot = dp.cwiseProduct(p).rowwise().sum();
          Matrix ds = p.cwiseProduct(dp.colwise() - row_dot);
          ds *= scale_factor;
          g.block(0, h * d, s, d).noalias() += ds * kk;
          g.block(0, k + h * d, s, d).noalias() += ds.transpose() * q;
        }
      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index c = parts.front().cols();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch");
    total += p.rows();
  }
  Matrix out(total, c);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result(std::move(out), {parts.begin(), parts.end()},
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         Node& p = *self.parents[i];
                         if (!p.requires_grad) continue;
                         p.grad_buffer() +=
                             self.grad.middleRows(offsets[i], p.value.rows());
                       }
                     });
}

Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(),
          "slice_rows: range out of bounds");
  return make_result(x.value().middleRows(begin, count), {x},
                     [begin, count](Node& self) {
                       Node& p = *self.parents[0];
                       if (p.requires_grad) {
                         p.grad_buffer().middleRows(begin, count) += self.grad;
                       }
                     });
}

Tensor slice_cols(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.cols(),
          "slice_cols: range out of bounds");
  return make_result(x.value().middleCols(begin, count), {x},
                     [begin, count](Node& self) {
                       Node& p = *self.parents[0];
                       if (p.requires_grad) {
                         p.grad_buffer().middleCols(begin, count) += self.grad;
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  return make_result(x.value().transpose(), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer() += self.grad.transpose();
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  Matrix out(n, table.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
    out.row(i) = table.value().row(ids[i]);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [kept = std::move(kept)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      g.row(kept[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  require(static_cast<Eigen::Index>(mask.size()) == x.rows(),
          "mask_rows: length mismatch");
  Matrix out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!mask[i]) out.row(i).setZero();
  }
  std::vector<std::uint8_t> kept(mask.begin(), mask.end());
  return make_result(std::move(out), {x}, [kept = std::move(kept)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (kept[i]) g.row(i) += self.grad.row(i);
    }
  });
}

Tensor weighted_sum_rows(const Tensor& x, std::span<const float> weights) {
  require(static_cast<Eigen::Index>(weights.size()) == x.rows(),
          "weighted_sum_rows: length mismatch");
  const Eigen::Map<const RowVector> w(weights.data(), x.rows());
  Matrix out = w * x.value();
  RowVector kept = w;
  return make_result(std::move(out), {x}, [kept = std::move(kept)](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().noalias() += kept.transpose() * self.grad;
  });
}

Tensor l2_normalize_rows(const Tensor& x, float eps) {
  const Eigen::VectorXf norms =
      (x.value().rowwise().squaredNorm().array() + eps * eps).sqrt().matrix();
  Matrix out = norms.cwiseInverse().asDiagonal() * x.value();
  Matrix y = out;
  return make_result(std::move(out), {x},
                     [norms, y = std::move(y)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       const Eigen::VectorXf dot =
                           self.grad.cwiseProduct(y).rowwise().sum();
                       Matrix g = self.grad - dot.asDiagonal() * y;
                       p.grad_buffer() += norms.cwiseInverse().asDiagonal() * g;
                     });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().array() += self.grad(0, 0);
  });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int kernel,
              int stride, Padding padding) {
  const Eigen::Index n = x.rows();
  const Eigen::Index cin = x.cols();
  require(kernel >= 1 && kernel % 2 == 1, "conv1d: kernel must be odd");
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(weight.rows() == kernel * cin, "conv1d: weight rows must be kernel*Cin");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "conv1d: bias shape");
  const Eigen::Index n_out = n / stride;
  const int half = kernel / 2;

  // im2col with the source row for every (output, tap), -1 for zero padding.
  std::vector<Eigen::Index> src(static_cast<std::size_t>(n_out * kernel));
  Matrix cols = Matrix::Zero(n_out, kernel * cin);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    for (int t = 0; t < kernel; ++t) {
      Eigen::Index j = i * stride + t - half;
      if (j < 0 || j >= n) {
        j = padding == Padding::Replicate ? std::clamp<Eigen::Index>(j, 0, n - 1) : -1;
      }
      src[static_cast<std::size_t>(i * kernel + t)] = j;
      if (j >= 0) cols.block(i, t * cin, 1, cin) = x.value().row(j);
    }
  }
  Matrix out;
  out.noalias() = cols * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_result(
      std::move(out), {x, weight, bias},
      [cols = std::move(cols), src = std::move(src), kernel, cin](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (pw.requires_grad) pw.grad_buffer().noalias() += cols.transpose() * self.grad;
        if (pb.requires_grad) pb.grad_buffer() += self.grad.colwise().sum();
        if (!px.requires_grad) return;
        Matrix dcols;
        dcols.noalias() = self.grad * pw.value.transpose();
        Matrix& g = px.grad_buffer();
        for (Eigen::Index i = 0; i < dcols.rows(); ++i) {
          for (int t = 0; t < kernel; ++t) {
            const Eigen::Index j = src[static_cast<std::size_t>(i * kernel + t)];
            if (j >= 0) g.row(j) += dcols.block(i, t * cin, 1, cin);
          }
        }
      });
}

Tensor upsample2(const Tensor& x, Eigen::Index out_rows) {
  require(x.rows() >= 1, "upsample2: empty input");
  const Eigen::Index last = x.rows() - 1;
  Matrix out(out_rows, x.cols());
  for (Eigen::Index i = 0; i < out_rows; ++i) {
    out.row(i) = x.value().row(std::min(i / 2, last));
  }
  return make_result(std::move(out), {x}, [last](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (Eigen::Index i = 0; i < self.grad.rows(); ++i) {
      g.row(std::min(i / 2, last)) += self.grad.row(i);
    }
  });
}

}  // namespace unloc::ag
