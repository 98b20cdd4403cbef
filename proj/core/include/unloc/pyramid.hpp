#pragma once

#include <optional>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/layers.hpp"
#include "unloc/losses.hpp"

namespace unloc {

/// Multi-scale features; level l has floor(N / 2^l) rows and stride 2^l.
struct PyramidFeatures {
  std::vector<ag::Tensor> levels;
  std::vector<int> strides;
  std::vector<RegressionRange> ranges;
};

/// Temporal pyramid on top of the fused frame tokens.
///  - ViTDet: level 0 is the input; level l applies LN + stride-2 conv
///    (kernel 3, edge-replicating) to level l-1.
///  - FPN: the same bottom-up path, then 1x1 laterals with a nearest
///    top-down pathway.
///  - None: a single stride-1 level equal to the input.
class FeaturePyramid {
 public:
  FeaturePyramid() = default;
  FeaturePyramid(nn::ParameterStore& store, PyramidStyle style, int levels, int width,
                 std::vector<RegressionRange> ranges, Rng& rng);

  /// Builds at most `max_levels` levels (all when negative).
  PyramidFeatures operator()(const ag::Tensor& x, int max_levels = -1) const;

  PyramidStyle style() const { return style_; }
  int levels() const { return levels_; }
  std::vector<nn::Conv1d>& downsamplers() { return down_; }
  std::vector<nn::LayerNorm>& norms() { return norms_; }

 private:
  PyramidStyle style_ = PyramidStyle::ViTDet;
  int levels_ = 1;
  std::vector<RegressionRange> ranges_;
  std::vector<nn::LayerNorm> norms_;
  std::vector<nn::Conv1d> down_;
  std::vector<nn::Linear> lateral_;
};

/// The level responsible for a cell whose larger displacement is
/// `max_displacement` frames: level 0 covers [lo, hi], the others (lo, hi].
std::optional<int> level_of_range(double max_displacement,
                                  const std::vector<RegressionRange>& ranges);
std::optional<int> level_of_range(losses::Displacement raw_displacement,
                                  const std::vector<RegressionRange>& ranges);

}  // namespace unloc
