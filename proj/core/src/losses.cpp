#include "unloc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "unloc/errors.hpp"

namespace unloc::losses {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_sizes(std::size_t n, std::span<const double> targets,
                 std::span<const std::uint8_t> mask, std::span<double> grad) {
  if (targets.size() != n) throw InputError("loss: target count differs from logits");
  if (!mask.empty() && mask.size() != n) throw InputError("loss: mask length mismatch");
  if (!grad.empty() && grad.size() != n) throw InputError("loss: gradient length mismatch");
}

bool kept(std::span<const std::uint8_t> mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
double indicator(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

double sigmoid_ce(std::span<const double> logits, std::span<const double> targets,
                  std::span<const std::uint8_t> mask, std::span<double> grad) {
  check_sizes(logits.size(), targets, mask, grad);
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) count += kept(mask, i) ? 1 : 0;
  std::fill(grad.begin(), grad.end(), 0.0);
  if (count == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!kept(mask, i)) continue;
    const double x = logits[i];
    const double t = targets[i];
    // -[t log s(x) + (1-t) log(1-s(x))] = t*softplus(-x) + (1-t)*softplus(x)
    total += t * softplus(-x) + (1.0 - t) * softplus(x);
    if (!grad.empty()) grad[i] = (sigmoid(x) - t) / static_cast<double>(count);
  }
  return total / static_cast<double>(count);
}

double focal_loss(std::span<const double> logits, std::span<const double> targets,
                  double gamma, double alpha, std::span<const std::uint8_t> mask,
                  std::span<double> grad) {
  check_sizes(logits.size(), targets, mask, grad);
  if (gamma < 0.0) throw InputError("focal_loss: gamma must be >= 0");
  if (alpha > 1.0) throw InputError("focal_loss: alpha must be <= 1");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (kept(mask, i) && targets[i] > 0.5) ++n_pos;
  }
  const double norm = static_cast<double>(std::max<std::size_t>(n_pos, 1));
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!kept(mask, i)) continue;
    const double x = logits[i];
    const double p = sigmoid(x);
    const bool positive = targets[i] > 0.5;
    const double weight = alpha < 0.0 ? 1.0 : (positive ? alpha : 1.0 - alpha);
    if (positive) {
      const double neg_log_p = softplus(-x);
      const double mod = std::pow(1.0 - p, gamma);
      total += weight * mod * neg_log_p;
      if (!grad.empty()) {
        grad[i] = weight * mod * (-gamma * p * neg_log_p - (1.0 - p)) / norm;
      }
    } else {
      const double neg_log_q = softplus(x);
      const double mod = std::pow(p, gamma);
      total += weight * mod * neg_log_q;
      if (!grad.empty()) {
        grad[i] = weight * mod * (gamma * (1.0 - p) * neg_log_q + p) / norm;
      }
    }
  }
  return total / norm;
}

double l1_loss(Displacement pred, Displacement target, Displacement* grad) {
  if (grad) {
    grad->start = sign_or_zero(pred.start - target.start);
    grad->end = sign_or_zero(pred.end - target.end);
  }
  return std::abs(pred.start - target.start) + std::abs(pred.end - target.end);
}

double iou_loss(Displacement pred, Displacement target, Displacement* grad) {
  const double inter = std::min(pred.start, target.start) + std::min(pred.end, target.end);
  const double uni = std::max(pred.start, target.start) + std::max(pred.end, target.end);
  if (uni <= 0.0) {
    if (grad) *grad = {};
    return 0.0;
  }
  if (grad) {
    const double di_s = indicator(pred.start < target.start);
    const double di_e = indicator(pred.end < target.end);
    const double du_s = indicator(pred.start > target.start);
    const double du_e = indicator(pred.end > target.end);
    grad->start = -(di_s * uni - inter * du_s) / (uni * uni);
    grad->end = -(di_e * uni - inter * du_e) / (uni * uni);
  }
  return 1.0 - inter / uni;
}

double diou_loss(Displacement pred, Displacement target, Displacement* grad) {
  // Both intervals contain the anchor, so the enclosing interval equals the
  // union and the centres sit at (end - start) / 2 relative to the anchor.
  Displacement g_iou;
  const double base = iou_loss(pred, target, grad ? &g_iou : nullptr);
  const double enclose =
      std::max(pred.start, target.start) + std::max(pred.end, target.end);
  if (enclose <= 0.0) {
    if (grad) *grad = {};
    return 0.0;
  }
  const double rho = 0.5 * (pred.end - pred.start) - 0.5 * (target.end - target.start);
  const double c2 = enclose * enclose;
  if (grad) {
    const double dc_s = indicator(pred.start > target.start);
    const double dc_e = indicator(pred.end > target.end);
    const double c3 = c2 * enclose;
    grad->start = g_iou.start + (-rho) / c2 - 2.0 * rho * rho * dc_s / c3;
    grad->end = g_iou.end + rho / c2 - 2.0 * rho * rho * dc_e / c3;
  }
  return base + rho * rho / c2;
}

double regression_loss(RegressionLoss kind, Displacement pred, Displacement target,
                       Displacement* grad) {
  switch (kind) {
    case RegressionLoss::L1:
      return l1_loss(pred, target, grad);
    case RegressionLoss::Iou:
      return iou_loss(pred, target, grad);
    case RegressionLoss::Diou:
      return diou_loss(pred, target, grad);
    case RegressionLoss::L1PlusIou: {
      Displacement ga;
      Displacement gb;
      const double v = l1_loss(pred, target, grad ? &ga : nullptr) +
                       iou_loss(pred, target, grad ? &gb : nullptr);
      if (grad) *grad = {ga.start + gb.start, ga.end + gb.end};
      return v;
    }
  }
  throw ConfigError("unknown regression loss kind");
}

LossSettings settings_from(const ModelConfig& config) {
  return {config.task, config.loss_kind, config.alpha, config.focal_gamma,
          config.focal_alpha};
}

LossBreakdown combined_loss(const LossInputs& in, const LossSettings& s,
                            LossGradients* grads) {
  const std::size_t n = in.logits.size();
  if (in.relevancy.size() != n) throw InputError("combined_loss: relevancy length");
  if (!in.valid.empty() && in.valid.size() != n) {
    throw InputError("combined_loss: mask length");
  }
  const bool has_reg = !in.pred_disp.empty();
  if (has_reg && (in.pred_disp.size() != 2 * n || in.target_disp.size() != 2 * n)) {
    throw InputError("combined_loss: displacement arrays must hold 2 values per cell");
  }
  switch (s.kind) {
    case RegressionLoss::L1:
    case RegressionLoss::Iou:
    case RegressionLoss::Diou:
    case RegressionLoss::L1PlusIou:
      break;
    default:
      throw ConfigError("unknown regression loss kind");
  }

  LossBreakdown out;
  std::vector<double> d_logits(grads ? n : 0);
  if (s.task == TaskKind::ActionSegmentation) {
    out.cls_loss = sigmoid_ce(in.logits, in.relevancy, in.valid, d_logits);
  } else {
    out.cls_loss = focal_loss(in.logits, in.relevancy, s.focal_gamma, s.focal_alpha,
                              in.valid, d_logits);
  }

  std::vector<double> d_disp(grads && has_reg ? 2 * n : 0, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if ((in.valid.empty() || in.valid[i]) && in.relevancy[i] > 0.5) ++out.n_pos;
  }
  if (has_reg && out.n_pos > 0) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!((in.valid.empty() || in.valid[i]) && in.relevancy[i] > 0.5)) continue;
      const Displacement pred{in.pred_disp[2 * i], in.pred_disp[2 * i + 1]};
      const Displacement target{in.target_disp[2 * i], in.target_disp[2 * i + 1]};
      Displacement g;
      sum += regression_loss(s.kind, pred, target, grads ? &g : nullptr);
      if (grads) {
        d_disp[2 * i] = s.alpha * g.start / out.n_pos;
        d_disp[2 * i + 1] = s.alpha * g.end / out.n_pos;
      }
    }
    out.reg_loss = sum / out.n_pos;
  }
  out.total = out.cls_loss + s.alpha * out.reg_loss;
  if (grads) {
    grads->d_logits = std::move(d_logits);
    grads->d_disp = std::move(d_disp);
  }
  return out;
}

}  // namespace unloc::losses
