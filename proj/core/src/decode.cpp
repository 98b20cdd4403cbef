#include "unloc/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "unloc/errors.hpp"

namespace unloc {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool candidate_before(const Candidate& a, const Candidate& b) {
  return ranks_before(a.segment, b.segment);
}

}  // namespace

bool ranks_before(const Segment& a, const Segment& b) {
  const double sa = a.score.value_or(0.0);
  const double sb = b.score.value_or(0.0);
  if (sa != sb) return sa > sb;
  if (a.start != b.start) return a.start < b.start;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return a.end < b.end;
}

CandidateSet expand(const DensePredictions& preds, const FrameGrid& grid,
                    double score_threshold) {
  const double max_t = static_cast<double>(grid.n_frames) - 1.0;
  CandidateSet out;
  for (const auto& cls : preds) {
    if (cls.levels.size() > grid.n_levels()) {
      throw InputError("predictions have more levels than the frame grid");
    }
    for (std::size_t l = 0; l < cls.levels.size(); ++l) {
      const auto& level = cls.levels[l];
      const auto& ts = grid.timestamps[l];
      const double stride = grid.level_strides[l];
      if (level.logits.size() != ts.size() || level.displacement.size() != ts.size()) {
        throw InputError("prediction level " + std::to_string(l) +
                         " does not match the grid size");
      }
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const double score = sigmoid(level.logits[i]);
        if (score < score_threshold) continue;
        const auto& d = level.displacement[i];
        Segment seg;
        seg.start = std::clamp(ts[i] - d[0] * stride, 0.0, max_t);
        seg.end = std::clamp(ts[i] + d[1] * stride, 0.0, max_t);
        seg.class_id = cls.class_id;
        seg.score = score;
        out.push_back({seg, {static_cast<int>(l), static_cast<int>(i), cls.class_id}});
      }
    }
  }
  return out;
}

CandidateSet soft_nms(CandidateSet candidates, double sigma, double min_score) {
  if (!(sigma > 0.0)) throw InputError("soft_nms: sigma must be positive");
  std::map<int, CandidateSet> by_class;
  for (auto& c : candidates) {
    validate(c.segment);
    by_class[c.segment.class_id].push_back(std::move(c));
  }
  CandidateSet kept;
  for (auto& [cls, pool] : by_class) {
    // pool[0, i) is finalised; pool[i, end) is still competing.
    std::size_t end = pool.size();
    for (std::size_t i = 0; i < end; ++i) {
      auto best = std::min_element(pool.begin() + static_cast<std::ptrdiff_t>(i),
                                   pool.begin() + static_cast<std::ptrdiff_t>(end),
                                   candidate_before);
      std::iter_swap(pool.begin() + static_cast<std::ptrdiff_t>(i), best);
      const Segment& top = pool[i].segment;
      std::size_t write = i + 1;
      for (std::size_t j = i + 1; j < end; ++j) {
        Candidate c = std::move(pool[j]);
        const double iou = temporal_iou(top, c.segment);
        double score = *c.segment.score;
        score *= std::exp(-(iou * iou) / sigma);
        c.segment.score = score;
        if (score >= min_score) pool[write++] = std::move(c);
      }
      end = write;
    }
    pool.resize(end);
    for (auto& c : pool) kept.push_back(std::move(c));
  }
  std::stable_sort(kept.begin(), kept.end(), candidate_before);
  return kept;
}

CandidateSet top_k(CandidateSet candidates, int k) {
  if (k < 1) throw InputError("top_k: k must be >= 1");
  std::stable_sort(candidates.begin(), candidates.end(), candidate_before);
  if (candidates.size() > static_cast<std::size_t>(k)) {
    candidates.resize(static_cast<std::size_t>(k));
  }
  return candidates;
}

}  // namespace unloc
