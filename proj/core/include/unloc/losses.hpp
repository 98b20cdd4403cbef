#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unloc/config.hpp"

namespace unloc::losses {

// Each loss returns its value and, when `grad` is non-empty, writes the
// analytic gradient w.r.t. its prediction argument into it. Kinks of |.|,
// min and max use subgradient 0.

/// Mean over masked-in cells of the numerically stable sigmoid cross entropy.
/// Returns 0 when every cell is masked out.
double sigmoid_ce(std::span<const double> logits, std::span<const double> targets,
                  std::span<const std::uint8_t> mask, std::span<double> grad = {});

/// Sum of alpha_t * (1 - p_t)^gamma * CE over masked-in cells divided by
/// max(n_pos, 1). A negative `alpha` disables the alpha_t weighting.
double focal_loss(std::span<const double> logits, std::span<const double> targets,
                  double gamma, double alpha, std::span<const std::uint8_t> mask,
                  std::span<double> grad = {});

/// A start/end displacement pair measured from an anchor point.
struct Displacement {
  double start = 0.0;
  double end = 0.0;
};

double l1_loss(Displacement pred, Displacement target, Displacement* grad = nullptr);
double iou_loss(Displacement pred, Displacement target, Displacement* grad = nullptr);
double diou_loss(Displacement pred, Displacement target, Displacement* grad = nullptr);

/// Single-pair loss of the requested kind (l1+iou is the plain sum).
double regression_loss(RegressionLoss kind, Displacement pred, Displacement target,
                       Displacement* grad = nullptr);

struct LossBreakdown {
  double cls_loss = 0.0;
  double reg_loss = 0.0;
  double total = 0.0;
  int n_pos = 0;
};

struct LossSettings {
  TaskKind task = TaskKind::ActionLocalization;
  RegressionLoss kind = RegressionLoss::L1;
  double alpha = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

LossSettings settings_from(const ModelConfig& config);

/// Dense targets for one (video, class) pair flattened across pyramid levels.
/// Displacement arrays are interleaved (start, end) per cell.
struct LossInputs {
  std::span<const double> logits;
  std::span<const double> relevancy;        // 0/1
  std::span<const std::uint8_t> valid;      // padding mask
  std::span<const double> pred_disp;        // 2 * cells, may be empty for AS
  std::span<const double> target_disp;      // 2 * cells
};

struct LossGradients {
  std::vector<double> d_logits;
  std::vector<double> d_disp;
};

/// cls (sigmoid CE for segmentation, focal otherwise) + alpha * mean
/// regression loss over valid positive cells.
LossBreakdown combined_loss(const LossInputs& in, const LossSettings& settings,
                            LossGradients* grads = nullptr);

}  // namespace unloc::losses
