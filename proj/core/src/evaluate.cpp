#include "unloc/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "unloc/errors.hpp"

namespace unloc {

namespace {

constexpr double kForegroundProbability = 0.5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Candidates of every evaluation view mapped to source frames, ranked.
std::vector<Candidate> source_candidates(const Localizer& localizer, const VideoRecord& video,
                                         const Dataset& dataset, const TrainConfig& config) {
  std::vector<Candidate> out;
  const double last = video.length() - 1;
  for (const auto& sample : evaluation_samples(video, dataset, config.sampling)) {
    for (auto c : localizer.detect(sample, config.eval)) {
      c.segment = sample.to_source(c.segment);
      c.segment.start = std::clamp(c.segment.start, 0.0, last);
      c.segment.end = std::clamp(c.segment.end, 0.0, last);
      c.segment.class_id = sample.query_ids.at(static_cast<std::size_t>(c.segment.class_id));
      out.push_back(c);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return ranks_before(a.segment, b.segment);
  });
  return out;
}

}  // namespace

CandidateSet ModelLocalizer::detect(const TaskSample& sample, const EvalConfig& eval) const {
  const DensePredictions preds = model_.predict(sample, ensemble_);
  const FrameGrid grid = make_frame_grid(sample.frames.mask.size(),
                                         static_cast<std::size_t>(model_.active_levels()));
  CandidateSet cands = expand(preds, grid, eval.score_threshold);
  cands = soft_nms(std::move(cands), eval.nms_sigma, eval.nms_min_score);
  return top_k(std::move(cands), eval.max_detections);
}

ag::Matrix ModelLocalizer::frame_scores(const TaskSample& sample) const {
  const DensePredictions preds = model_.predict(sample, ensemble_);
  const int n = sample.valid_frames();
  ag::Matrix out(n, static_cast<Eigen::Index>(preds.size()));
  for (std::size_t c = 0; c < preds.size(); ++c) {
    const auto& bottom = preds[c].levels.front().logits;
    for (int i = 0; i < n; ++i) {
      out(i, static_cast<Eigen::Index>(c)) =
          static_cast<float>(sigmoid(bottom[static_cast<std::size_t>(i)]));
    }
  }
  return out;
}

CandidateSet OracleLocalizer::detect(const TaskSample& sample, const EvalConfig&) const {
  CandidateSet out;
  for (const auto& g : sample.gts) {
    Segment s = g;
    s.score = 1.0;
    out.push_back({s, {0, static_cast<int>(std::lround(g.start)), g.class_id}});
  }
  return out;
}

ag::Matrix OracleLocalizer::frame_scores(const TaskSample& sample) const {
  const int n = sample.valid_frames();
  ag::Matrix out = ag::Matrix::Zero(n, static_cast<Eigen::Index>(sample.texts.size()));
  for (const auto& g : sample.gts) {
    for (int i = 0; i < n; ++i) {
      if (i >= g.start && i <= g.end) out(i, g.class_id) = 1.0f;
    }
  }
  return out;
}

CandidateSet BackgroundLocalizer::detect(const TaskSample&, const EvalConfig&) const {
  return {};
}

ag::Matrix BackgroundLocalizer::frame_scores(const TaskSample& sample) const {
  return ag::Matrix::Zero(sample.valid_frames(), static_cast<Eigen::Index>(sample.texts.size()));
}

std::vector<TaskSample> evaluation_samples(const VideoRecord& video, const Dataset& dataset,
                                           const SamplingConfig& sampling) {
  if (dataset.task == TaskKind::ActionSegmentation ||
      sampling.mode == SamplingMode::ConsecutivePadded) {
    return sliding_windows(video, dataset, sampling.n);
  }
  Rng unused(0);
  return {sample_frames(video, dataset, sampling, unused)};
}

std::vector<int> frame_labels(const VideoRecord& video) {
  std::vector<int> labels(static_cast<std::size_t>(video.length()), kBackground);
  for (const auto& s : video.segments) {
    for (int f = 0; f < video.length(); ++f) {
      if (f >= s.start && f <= s.end) labels[static_cast<std::size_t>(f)] = s.class_id;
    }
  }
  return labels;
}

EvalReport evaluate(const Localizer& localizer, const Dataset& dataset,
                    const TrainConfig& config) {
  EvalReport report;
  report.task = dataset.task;

  if (dataset.task == TaskKind::ActionSegmentation) {
    std::vector<int> predicted, truth;
    std::vector<double> scores;
    const std::size_t n_classes = dataset.classes.size();
    for (const auto& video : dataset.videos) {
      for (const auto& sample : sliding_windows(video, dataset, config.sampling.n)) {
        const ag::Matrix probs = localizer.frame_scores(sample);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
          Eigen::Index best = 0;
          const float top = n_classes ? probs.row(i).maxCoeff(&best) : 0.0f;
          predicted.push_back(top >= kForegroundProbability ? static_cast<int>(best) : kBackground);
          for (std::size_t c = 0; c < n_classes; ++c) {
            scores.push_back(probs(i, static_cast<Eigen::Index>(c)));
          }
        }
      }
      const auto labels = frame_labels(video);
      truth.insert(truth.end(), labels.begin(), labels.end());
    }
    report.metrics["frame_accuracy"] = frame_accuracy(predicted, truth);
    report.metrics["seg_mAP"] = segmentation_map(scores, n_classes, truth);
    return report;
  }

  if (dataset.task == TaskKind::MomentRetrieval) {
    std::vector<std::vector<Segment>> preds, gts;
    for (const auto& video : dataset.videos) {
      const auto cands = source_candidates(localizer, video, dataset, config);
      for (std::size_t q = 0; q < video.captions.size(); ++q) {
        std::vector<Segment> p, g;
        for (const auto& c : cands) {
          if (c.segment.class_id == static_cast<int>(q)) p.push_back(c.segment);
        }
        for (const auto& s : video.segments) {
          if (s.class_id == static_cast<int>(q)) g.push_back(s);
        }
        if (g.empty()) continue;
        preds.push_back(std::move(p));
        gts.push_back(std::move(g));
      }
    }
    const std::vector<double> thresholds{0.5, 0.7};
    for (int k : {1, 5}) {
      const auto r = recall_at_k(preds, gts, k, thresholds);
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        char key[32];
        std::snprintf(key, sizeof key, "recall@%d@%.1f", k, thresholds[t]);
        report.metrics[key] = r[t];
      }
    }
    return report;
  }

  std::vector<Detection> preds, gts;
  for (std::size_t v = 0; v < dataset.videos.size(); ++v) {
    const auto& video = dataset.videos[v];
    for (const auto& c : source_candidates(localizer, video, dataset, config)) {
      preds.push_back({static_cast<int>(v), c.segment});
    }
    for (const auto& s : video.segments) gts.push_back({static_cast<int>(v), s});
  }
  const MapResult at5 = map_at_iou(preds, gts, 0.5);
  report.metrics["mAP@0.5"] = at5.mean_ap;
  report.metrics["mAP@0.7"] = map_at_iou(preds, gts, 0.7).mean_ap;
  report.per_class_ap = at5.per_class;
  return report;
}

void write_predictions(const Localizer& localizer, const Dataset& dataset,
                       const TrainConfig& config, std::ostream& out) {
  if (dataset.task == TaskKind::ActionSegmentation) {
    throw ContractError("segment predictions are not defined for action segmentation");
  }
  const bool mr = dataset.task == TaskKind::MomentRetrieval;
  for (const auto& video : dataset.videos) {
    for (const auto& c : source_candidates(localizer, video, dataset, config)) {
      nlohmann::json rec;
      rec["video_id"] = video.id;
      rec[mr ? "caption_id" : "class_id"] = c.segment.class_id;
      rec["start_sec"] = c.segment.start / video.fps;
      rec["end_sec"] = c.segment.end / video.fps;
      rec["score"] = c.segment.score.value_or(0.0);
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace unloc
