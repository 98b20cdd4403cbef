#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/geometry.hpp"

namespace unloc {

inline constexpr int kBackground = -1;

/// A segment tagged with the video it belongs to.
struct Detection {
  int video = 0;
  Segment segment;
};

/// For each threshold, the fraction of queries whose top-k predictions
/// (ranked internally) contain one with IoU >= threshold against any of the
/// query's ground-truth segments.
std::vector<double> recall_at_k(const std::vector<std::vector<Segment>>& predictions,
                                const std::vector<std::vector<Segment>>& ground_truth,
                                int k, std::span<const double> iou_thresholds);

struct MapResult {
  double mean_ap = 0.0;
  std::map<int, double> per_class;
};

/// Per class: rank predictions, greedily match each to the unmatched
/// same-video ground truth with highest IoU >= threshold, and integrate the
/// precision envelope over recall. Classes without ground truth are skipped.
MapResult map_at_iou(std::span<const Detection> predictions,
                     std::span<const Detection> ground_truth, double threshold);

/// All-point interpolated AP from hit flags in rank order.
double average_precision(std::span<const std::uint8_t> hits, std::size_t n_positive);

/// Fraction of frames whose label matches, background included.
double frame_accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mean over non-background classes present in `truth` of the AP obtained by
/// ranking all frames by that class's score. `scores` is frames x classes,
/// row-major.
double segmentation_map(std::span<const double> scores, std::size_t n_classes,
                        std::span<const int> truth);

struct EvalReport {
  TaskKind task = TaskKind::ActionLocalization;
  std::map<std::string, double> metrics;
  std::map<int, double> per_class_ap;

  std::string to_json() const;
  std::string table() const;
};

}  // namespace unloc
