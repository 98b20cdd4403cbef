#pragma once

#include <array>
#include <vector>

#include "unloc/geometry.hpp"

namespace unloc {

/// Numeric head outputs for one pyramid level of one class.
struct LevelPrediction {
  std::vector<double> logits;                     // N_l relevancy logits
  std::vector<std::array<double, 2>> displacement;  // N_l (start, end), stride units
};

/// Dense outputs for one class/caption across all levels.
struct ClassPredictions {
  int class_id = 0;
  std::vector<LevelPrediction> levels;
};

using DensePredictions = std::vector<ClassPredictions>;

struct Provenance {
  int level = 0;
  int cell = 0;
  int class_id = 0;
};

struct Candidate {
  Segment segment;  // always scored
  Provenance provenance;
};

using CandidateSet = std::vector<Candidate>;

/// Ranking order shared by decoding and metrics: higher score first, then
/// earlier start, lower class id, earlier end.
bool ranks_before(const Segment& a, const Segment& b);

/// Turns every cell into [t - ds * stride, t + de * stride] clipped to
/// [0, N - 1], scored by sigmoid(logit). Cells scoring below
/// `score_threshold` are dropped.
CandidateSet expand(const DensePredictions& preds, const FrameGrid& grid,
                    double score_threshold);

/// Gaussian SoftNMS applied per class. Repeatedly keeps the best remaining
/// candidate and multiplies every other remaining score of that class by
/// exp(-IoU^2 / sigma); candidates falling below `min_score` are dropped.
/// The result is sorted with `ranks_before`.
CandidateSet soft_nms(CandidateSet candidates, double sigma, double min_score);

/// The k best candidates under `ranks_before`.
CandidateSet top_k(CandidateSet candidates, int k);

}  // namespace unloc
