#include "unloc/targets.hpp"

#include <algorithm>

#include "unloc/errors.hpp"
#include "unloc/pyramid.hpp"

namespace unloc {

int TrainTargets::positives() const {
  int n = 0;
  for (const auto& l : levels) {
    n += static_cast<int>(std::count(l.relevancy.begin(), l.relevancy.end(), 1.0));
  }
  return n;
}

TrainTargets assign_targets(std::span<const Segment> gts, const FrameGrid& grid,
                            const std::vector<RegressionRange>& ranges,
                            std::span<const std::uint8_t> frame_mask, bool use_ranges,
                            int class_id) {
  if (use_ranges && ranges.size() < grid.n_levels()) {
    throw InputError("assign_targets: fewer regression ranges than pyramid levels");
  }
  if (!frame_mask.empty() && frame_mask.size() != grid.n_frames) {
    throw InputError("assign_targets: frame mask length differs from the grid");
  }
  TrainTargets out;
  out.class_id = class_id;
  out.levels.resize(grid.n_levels());
  for (std::size_t l = 0; l < grid.n_levels(); ++l) {
    const std::size_t n = grid.level_size(l);
    const double stride = grid.level_strides[l];
    auto& lt = out.levels[l];
    lt.relevancy.assign(n, 0.0);
    lt.displacement.assign(2 * n, 0.0);
    lt.valid.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = grid.timestamps[l][i];
      const auto frame = static_cast<std::size_t>(t);
      if (!frame_mask.empty() && !frame_mask[frame]) {
        lt.valid[i] = 0;
        continue;
      }
      const Segment* best = nullptr;
      for (const auto& g : gts) {
        if (t < g.start || t > g.end) continue;
        if (use_ranges) {
          const auto level = level_of_range(losses::Displacement{t - g.start, g.end - t}, ranges);
          if (!level || static_cast<std::size_t>(*level) != l) continue;
        }
        if (!best || g.length() < best->length() ||
            (g.length() == best->length() && g.start < best->start)) {
          best = &g;
        }
      }
      if (!best) continue;
      lt.relevancy[i] = 1.0;
      lt.displacement[2 * i] = (t - best->start) / stride;
      lt.displacement[2 * i + 1] = (best->end - t) / stride;
    }
  }
  return out;
}

}  // namespace unloc
