#include "unloc/pyramid.hpp"

#include <algorithm>

#include "unloc/errors.hpp"

namespace unloc {

FeaturePyramid::FeaturePyramid(nn::ParameterStore& store, PyramidStyle style, int levels,
                               int width, std::vector<RegressionRange> ranges, Rng& rng)
    : style_(style), levels_(levels), ranges_(std::move(ranges)) {
  if (levels < 1) throw ConfigError("pyramid needs at least one level");
  if (style == PyramidStyle::None && levels != 1) {
    throw ConfigError("pyramid_style 'none' has exactly one level");
  }
  if (static_cast<int>(ranges_.size()) != levels) {
    throw ConfigError("one regression range per pyramid level is required");
  }
  for (int l = 1; l < levels; ++l) {
    const std::string name = "pyramid.down" + std::to_string(l);
    norms_.emplace_back(store, name + ".norm", "pyramid", width);
    down_.emplace_back(store, name + ".conv", "pyramid", width, width, 3, 2,
                       ag::Padding::Replicate, rng);
  }
  if (style == PyramidStyle::Fpn) {
    for (int l = 0; l < levels; ++l) {
      lateral_.emplace_back(store, "pyramid.lateral" + std::to_string(l), "pyramid",
                            width, width, rng);
    }
  }
}

PyramidFeatures FeaturePyramid::operator()(const ag::Tensor& x, int max_levels) const {
  const int n_levels = max_levels < 0 ? levels_ : std::min(levels_, max_levels);
  if (x.rows() < (Eigen::Index{1} << (n_levels - 1))) {
    throw ConfigError(std::to_string(x.rows()) + " frames cannot host " +
                      std::to_string(n_levels) + " pyramid levels");
  }
  PyramidFeatures out;
  out.ranges.assign(ranges_.begin(), ranges_.begin() + n_levels);
  std::vector<ag::Tensor> bottom_up{x};
  out.strides.push_back(1);
  for (int l = 1; l < n_levels; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    bottom_up.push_back(down_[idx](norms_[idx](bottom_up.back())));
    out.strides.push_back(1 << l);
  }
  if (style_ != PyramidStyle::Fpn) {
    out.levels = std::move(bottom_up);
    return out;
  }
  // FPN: laterals plus top-down nearest upsampling.
  out.levels.resize(static_cast<std::size_t>(n_levels));
  for (int l = n_levels - 1; l >= 0; --l) {
    const auto idx = static_cast<std::size_t>(l);
    ag::Tensor lat = lateral_[idx](bottom_up[idx]);
    if (l + 1 < n_levels) {
      lat = ag::add(lat, ag::upsample2(out.levels[idx + 1], bottom_up[idx].rows()));
    }
    out.levels[idx] = lat;
  }
  return out;
}

std::optional<int> level_of_range(double max_displacement,
                                  const std::vector<RegressionRange>& ranges) {
  if (!(max_displacement >= 0.0)) return std::nullopt;
  for (std::size_t l = 0; l < ranges.size(); ++l) {
    const auto& r = ranges[l];
    const bool above_lo = l == 0 ? max_displacement >= r.lo : max_displacement > r.lo;
    if (above_lo && max_displacement <= r.hi) return static_cast<int>(l);
  }
  return std::nullopt;
}

std::optional<int> level_of_range(losses::Displacement raw,
                                  const std::vector<RegressionRange>& ranges) {
  if (raw.start < 0.0 || raw.end < 0.0) return std::nullopt;
  return level_of_range(std::max(raw.start, raw.end), ranges);
}

}  // namespace unloc
