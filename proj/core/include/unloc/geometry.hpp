#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace unloc {

/// A temporal interval in frame-index units. Ground truth leaves `score`
/// empty; predictions carry a post-sigmoid score in [0, 1].
struct Segment {
  double start = 0.0;
  double end = 0.0;
  int class_id = 0;
  std::optional<double> score;

  double length() const { return end - start; }
  bool valid() const;
};

bool operator==(const Segment& a, const Segment& b);

/// Throws InputError unless end >= start and score (if any) is in [0, 1].
void validate(const Segment& s);

/// |a ∩ b| / |a ∪ b|. Two identical zero-length segments give 1, any other
/// zero-length union gives 0.
double temporal_iou(const Segment& a, const Segment& b);

/// Cell layout of the temporal pyramid. Level l (0-based here) has stride
/// 2^l and floor(N / 2^l) cells; cell i sits at time i * 2^l.
struct FrameGrid {
  std::size_t n_frames = 0;
  std::vector<int> level_strides;
  std::vector<std::vector<double>> timestamps;
  double seconds_per_frame = 1.0;

  std::size_t n_levels() const { return level_strides.size(); }
  std::size_t level_size(std::size_t level) const { return timestamps[level].size(); }
  std::size_t total_cells() const;
};

FrameGrid make_frame_grid(std::size_t n_frames, std::size_t n_levels,
                          double seconds_per_frame = 1.0);

/// Number of cells at each level for N frames and L levels.
std::vector<std::size_t> level_sizes(std::size_t n_frames, std::size_t n_levels);

}  // namespace unloc
