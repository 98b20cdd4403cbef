#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <list>
#include <map>
#include <set>

namespace unloc::oracle {

CandidateSet soft_nms(const CandidateSet& candidates, double sigma, double min_score) {
  std::set<int> classes;
  for (const auto& c : candidates) classes.insert(c.segment.class_id);
  CandidateSet out;
  for (int cls : classes) {
    std::list<Candidate> pool;
    for (const auto& c : candidates) {
      if (c.segment.class_id == cls) pool.push_back(c);
    }
    while (!pool.empty()) {
      auto best = pool.begin();
      for (auto it = pool.begin(); it != pool.end(); ++it) {
        if (ranks_before(it->segment, best->segment)) best = it;
      }
      const Candidate top = *best;
      pool.erase(best);
      out.push_back(top);
      for (auto it = pool.begin(); it != pool.end();) {
        const double iou = temporal_iou(top.segment, it->segment);
        it->segment.score = *it->segment.score * std::exp(-(iou * iou) / sigma);
        if (*it->segment.score < min_score) {
          it = pool.erase(it);
        } else {
          ++it;
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return ranks_before(a.segment, b.segment);
  });
  return out;
}

double average_precision(const std::vector<std::uint8_t>& hits, std::size_t n_positive) {
  if (n_positive == 0) return 0.0;
  std::vector<double> precision(hits.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (!hits[i]) continue;
    total += *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(i),
                               precision.end());
  }
  return total / static_cast<double>(n_positive);
}

double mean_ap(const std::vector<Detection>& predictions,
               const std::vector<Detection>& ground_truth, double threshold) {
  std::set<int> classes;
  for (const auto& g : ground_truth) classes.insert(g.segment.class_id);
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (int cls : classes) {
    std::vector<Detection> preds, gts;
    for (const auto& p : predictions) {
      if (p.segment.class_id == cls) preds.push_back(p);
    }
    for (const auto& g : ground_truth) {
      if (g.segment.class_id == cls) gts.push_back(g);
    }
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const Segment& x = preds[a].segment;
      const Segment& y = preds[b].segment;
      if (*x.score != *y.score) return *x.score > *y.score;
      if (x.start != y.start) return x.start < y.start;
      if (x.end != y.end) return x.end < y.end;
      return preds[a].video < preds[b].video;
    });
    std::vector<std::vector<double>> iou(preds.size(), std::vector<double>(gts.size(), 0.0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (preds[i].video == gts[j].video) iou[i][j] = temporal_iou(preds[i].segment, gts[j].segment);
      }
    }
    std::vector<bool> taken(gts.size(), false);
    std::vector<std::uint8_t> hits;
    for (std::size_t i : order) {
      int best = -1;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (taken[j] || preds[i].video != gts[j].video || iou[i][j] < threshold) continue;
        if (best < 0 || iou[i][j] > iou[i][static_cast<std::size_t>(best)]) best = static_cast<int>(j);
      }
      if (best >= 0) taken[static_cast<std::size_t>(best)] = true;
      hits.push_back(best >= 0);
    }
    total += average_precision(hits, gts.size());
  }
  return total / static_cast<double>(classes.size());
}

double recall(const std::vector<std::vector<Segment>>& predictions,
              const std::vector<std::vector<Segment>>& ground_truth, int k, double threshold) {
  std::size_t found = 0;
  for (std::size_t q = 0; q < ground_truth.size(); ++q) {
    std::vector<Segment> ranked = predictions[q];
    std::sort(ranked.begin(), ranked.end(), [](const Segment& a, const Segment& b) {
      if (*a.score != *b.score) return *a.score > *b.score;
      if (a.start != b.start) return a.start < b.start;
      if (a.class_id != b.class_id) return a.class_id < b.class_id;
      return a.end < b.end;
    });
    bool hit = false;
    for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
      for (const auto& g : ground_truth[q]) {
        hit = hit || temporal_iou(ranked[static_cast<std::size_t>(i)], g) >= threshold;
      }
    }
    found += hit;
  }
  return static_cast<double>(found) / static_cast<double>(ground_truth.size());
}

}  // namespace unloc::oracle
