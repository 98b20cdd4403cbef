#include "unloc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "unloc/decode.hpp"
#include "unloc/errors.hpp"

namespace unloc {

std::vector<double> recall_at_k(const std::vector<std::vector<Segment>>& predictions,
                                const std::vector<std::vector<Segment>>& ground_truth,
                                int k, std::span<const double> iou_thresholds) {
  if (ground_truth.empty()) throw InputError("recall_at_k: empty query set");
  if (predictions.size() != ground_truth.size()) {
    throw InputError("recall_at_k: prediction and ground-truth query counts differ");
  }
  if (k < 1) throw InputError("recall_at_k: k must be >= 1");
  std::vector<double> hits(iou_thresholds.size(), 0.0);
  for (std::size_t q = 0; q < ground_truth.size(); ++q) {
    if (ground_truth[q].empty()) {
      throw InputError("recall_at_k: query " + std::to_string(q) + " has no ground truth");
    }
    std::vector<Segment> ranked = predictions[q];
    std::stable_sort(ranked.begin(), ranked.end(), ranks_before);
    if (ranked.size() > static_cast<std::size_t>(k)) {
      ranked.resize(static_cast<std::size_t>(k));
    }
    double best = 0.0;
    for (const auto& p : ranked) {
      for (const auto& g : ground_truth[q]) best = std::max(best, temporal_iou(p, g));
    }
    for (std::size_t t = 0; t < iou_thresholds.size(); ++t) {
      if (!ranked.empty() && best >= iou_thresholds[t]) hits[t] += 1.0;
    }
  }
  for (auto& h : hits) h /= static_cast<double>(ground_truth.size());
  return hits;
}

double average_precision(std::span<const std::uint8_t> hits, std::size_t n_positive) {
  if (n_positive == 0) return 0.0;
  const std::size_t n = hits.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += hits[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Envelope: best precision at this or any deeper rank.
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) ap += precision[i];
  }
  return ap / static_cast<double>(n_positive);
}

MapResult map_at_iou(std::span<const Detection> predictions,
                     std::span<const Detection> ground_truth, double threshold) {
  std::map<int, std::vector<Detection>> preds_by_class;
  std::map<int, std::vector<Detection>> gts_by_class;
  for (const auto& p : predictions) preds_by_class[p.segment.class_id].push_back(p);
  for (const auto& g : ground_truth) gts_by_class[g.segment.class_id].push_back(g);

  MapResult result;
  for (auto& [cls, gts] : gts_by_class) {
    auto& preds = preds_by_class[cls];
    std::stable_sort(preds.begin(), preds.end(), [](const Detection& a, const Detection& b) {
      if (ranks_before(a.segment, b.segment)) return true;
      if (ranks_before(b.segment, a.segment)) return false;
      return a.video < b.video;
    });
    std::vector<std::uint8_t> matched(gts.size(), 0);
    std::vector<std::uint8_t> hits(preds.size(), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      double best_iou = -1.0;
      std::size_t best = gts.size();
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (matched[j] || gts[j].video != preds[i].video) continue;
        const double iou = temporal_iou(preds[i].segment, gts[j].segment);
        if (iou >= threshold && iou > best_iou) {
          best_iou = iou;
          best = j;
        }
      }
      if (best < gts.size()) {
        matched[best] = 1;
        hits[i] = 1;
      }
    }
    result.per_class[cls] = average_precision(hits, gts.size());
  }
  if (!result.per_class.empty()) {
    double total = 0.0;
    for (const auto& [cls, ap] : result.per_class) total += ap;
    result.mean_ap = total / static_cast<double>(result.per_class.size());
  }
  return result;
}

double frame_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw InputError("frame_accuracy: " + std::to_string(predicted.size()) +
                     " predictions for " + std::to_string(truth.size()) + " frames");
  }
  if (truth.empty()) throw InputError("frame_accuracy: no frames");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double segmentation_map(std::span<const double> scores, std::size_t n_classes,
                        std::span<const int> truth) {
  const std::size_t n = truth.size();
  if (scores.size() != n * n_classes) {
    throw InputError("segmentation_map: score matrix must be frames x classes");
  }
  double total = 0.0;
  int counted = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t positives = static_cast<std::size_t>(
        std::count(truth.begin(), truth.end(), static_cast<int>(c)));
    if (positives == 0) continue;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a * n_classes + c] > scores[b * n_classes + c];
    });
    std::vector<std::uint8_t> hits(n);
    for (std::size_t r = 0; r < n; ++r) hits[r] = truth[order[r]] == static_cast<int>(c);
    total += average_precision(hits, positives);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  j["per_class_ap"] = nlohmann::json::object();
  for (const auto& [k, v] : per_class_ap) j["per_class_ap"][std::to_string(k)] = v;
  return j.dump(2);
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << "task: " << to_string(task) << "\n";
  char line[128];
  for (const auto& [k, v] : metrics) {
    std::snprintf(line, sizeof line, "  %-16s %8.4f\n", k.c_str(), v);
    out << line;
  }
  if (!per_class_ap.empty()) {
    out << "  per-class AP:\n";
    for (const auto& [k, v] : per_class_ap) {
      std::snprintf(line, sizeof line, "    class %-6d %8.4f\n", k, v);
      out << line;
    }
  }
  return out.str();
}

}  // namespace unloc
