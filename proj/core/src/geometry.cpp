#include "unloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unloc/errors.hpp"

namespace unloc {

bool Segment::valid() const {
  if (!(end >= start)) return false;
  if (score && !(*score >= 0.0 && *score <= 1.0)) return false;
  return true;
}

bool operator==(const Segment& a, const Segment& b) {
  return a.start == b.start && a.end == b.end && a.class_id == b.class_id &&
         a.score == b.score;
}

void validate(const Segment& s) {
  if (!(s.end >= s.start)) {
    throw InputError("segment end " + std::to_string(s.end) +
                     " precedes start " + std::to_string(s.start));
  }
  if (s.score && !(*s.score >= 0.0 && *s.score <= 1.0)) {
    throw InputError("segment score " + std::to_string(*s.score) +
                     " outside [0, 1]");
  }
}

double temporal_iou(const Segment& a, const Segment& b) {
  validate(a);
  validate(b);
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  if (uni <= 0.0) {
    return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  }
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::size_t FrameGrid::total_cells() const {
  std::size_t total = 0;
  for (const auto& level : timestamps) total += level.size();
  return total;
}

std::vector<std::size_t> level_sizes(std::size_t n_frames, std::size_t n_levels) {
  std::vector<std::size_t> sizes;
  sizes.reserve(n_levels);
  for (std::size_t l = 0; l < n_levels; ++l) sizes.push_back(n_frames >> l);
  return sizes;
}

FrameGrid make_frame_grid(std::size_t n_frames, std::size_t n_levels,
                          double seconds_per_frame) {
  if (n_levels < 1) throw ConfigError("frame grid needs at least one level");
  if (n_levels > 30 || n_frames < (std::size_t{1} << (n_levels - 1))) {
    throw ConfigError(std::to_string(n_frames) + " frames cannot host " +
                      std::to_string(n_levels) + " pyramid levels");
  }
  if (!(seconds_per_frame > 0.0)) {
    throw ConfigError("seconds_per_frame must be positive");
  }
  FrameGrid grid;
  grid.n_frames = n_frames;
  grid.seconds_per_frame = seconds_per_frame;
  for (std::size_t l = 0; l < n_levels; ++l) {
    const int stride = 1 << l;
    grid.level_strides.push_back(stride);
    std::vector<double> ts(n_frames >> l);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ts[i] = static_cast<double>(i) * stride;
    }
    grid.timestamps.push_back(std::move(ts));
  }
  return grid;
}

}  // namespace unloc
