#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/geometry.hpp"

namespace unloc {

/// Dense targets of one class on one pyramid level.
struct LevelTargets {
  std::vector<double> relevancy;     // 0/1 per cell
  std::vector<double> displacement;  // 2 per cell, stride units; 0 on negatives
  std::vector<std::uint8_t> valid;   // cell's frame is not padding
};

struct TrainTargets {
  int class_id = 0;
  std::vector<LevelTargets> levels;

  int positives() const;
};

/// Marks cell t of level l positive when t lies inside a gt whose raw
/// displacement pair (t - s, e - t) falls in level l's regression range;
/// several candidates resolve to the shortest one. With `use_ranges` false
/// every enclosing cell is positive (segmentation). `frame_mask` may be
/// empty (all frames valid); padded cells are never positive.
TrainTargets assign_targets(std::span<const Segment> gts, const FrameGrid& grid,
                            const std::vector<RegressionRange>& ranges,
                            std::span<const std::uint8_t> frame_mask,
                            bool use_ranges = true, int class_id = 0);

}  // namespace unloc
