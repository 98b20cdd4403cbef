// Acceptance suite: one PASS/FAIL line per criterion.
//
//   unloc_acceptance [--only 1,4,9] [--known-red 1]
//
// The exit status is 0 when the failing criteria are exactly the ones listed
// in --known-red, so a known red line stays visible without breaking ctest.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "unloc/checkpoint.hpp"
#include "unloc/evaluate.hpp"
#include "unloc/losses.hpp"
#include "unloc/recipes.hpp"
#include "unloc/targets.hpp"
#include "unloc/train.hpp"

using namespace unloc;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradFloor = 1e-6;     // denominator floor of the relative error
constexpr double kCornerGap = 1e-3;     // |a - b| below this is a kink
constexpr double kMapTol = 1e-12;
constexpr double kBackgroundTarget = 0.589;
constexpr double kBackgroundTol = 0.02;
constexpr double kTalMapTarget = 0.90;
constexpr int kTalSteps = 1500;
constexpr double kMrRecallTarget = 0.85;
constexpr int kMrSteps = 2000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

// --- 1 -----------------------------------------------------------------------

Outcome loss_gradients() {
  using namespace losses;
  std::mt19937 gen(1);
  std::normal_distribution<double> logit(0.0, 3.0);
  std::uniform_real_distribution<double> disp(0.05, 10.0);
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](double e, const std::string& name) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };

  for (int point = 0; point < 100; ++point) {
    std::vector<double> x(8), t(8), g(8);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = logit(gen);
      t[i] = gen() % 3 == 0 ? 1.0 : 0.0;
    }
    sigmoid_ce(x, t, {}, g);
    for (std::size_t i = 0; i < x.size(); ++i) {
      record(rel_err(g[i], oracle::central_difference(
                               [&](const auto& v) { return sigmoid_ce(v, t, {}); }, x, i, kGradStep)),
             "sigmoid_ce");
    }
    for (double gamma : {0.0, 1.0, 2.0}) {
      focal_loss(x, t, gamma, 0.25, {}, g);
      for (std::size_t i = 0; i < x.size(); ++i) {
        record(rel_err(g[i], oracle::central_difference(
                                 [&](const auto& v) { return focal_loss(v, t, gamma, 0.25, {}); },
                                 x, i, kGradStep)),
               "focal gamma=" + fmt("%.0f", gamma));
      }
    }
  }
  for (RegressionLoss kind : {RegressionLoss::L1, RegressionLoss::Iou, RegressionLoss::Diou}) {
    for (int point = 0; point < 100;) {
      const std::vector<double> p{disp(gen), disp(gen)};
      const Displacement target{disp(gen), disp(gen)};
      if (std::abs(p[0] - target.start) < kCornerGap || std::abs(p[1] - target.end) < kCornerGap) {
        continue;
      }
      Displacement g;
      regression_loss(kind, {p[0], p[1]}, target, &g);
      auto f = [&](const std::vector<double>& v) {
        return regression_loss(kind, {v[0], v[1]}, target);
      };
      record(rel_err(g.start, oracle::central_difference(f, p, 0, kGradStep)), to_string(kind));
      record(rel_err(g.end, oracle::central_difference(f, p, 1, kGradStep)), to_string(kind));
      ++point;
    }
  }

  // Gradient at a zero predicted coordinate with a positive target.
  Displacement g_iou, g_diou;
  iou_loss({0.0, 3.0}, {2.0, 4.0}, &g_iou);
  diou_loss({0.0, 3.0}, {2.0, 4.0}, &g_diou);
  const bool iou_zero = g_iou.start == 0.0;
  const bool diou_nonzero = g_diou.start != 0.0;

  Outcome o;
  o.pass = worst <= kGradRelTol && iou_zero && diou_nonzero;
  o.detail = "max rel err " + fmt("%.2e", worst) + " (" + worst_name + "); iou d/ds at ds=0: " +
             fmt("%.4f", g_iou.start) + (iou_zero ? " (zero)" : " (nonzero)") +
             "; diou d/ds: " + fmt("%.4f", g_diou.start);
  return o;
}

// --- 2 -----------------------------------------------------------------------

Outcome soft_nms_oracle() {
  std::mt19937 gen(2);
  std::uniform_real_distribution<double> pos(0.0, 50.0), score(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 12), cls(0, 2);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    CandidateSet c;
    const int n = count(gen);
    for (int i = 0; i < n; ++i) {
      const double a = pos(gen), b = pos(gen);
      c.push_back({Segment{std::min(a, b), std::max(a, b), cls(gen), score(gen)}, {}});
    }
    const auto got = soft_nms(c, 0.5, 0.001);
    const auto want = oracle::soft_nms(c, 0.5, 0.001);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].segment == want[i].segment;
    mismatches += !same;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 1000 cases differ"};
}

// --- 3 -----------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> pos(0.0, 40.0), score(0.0, 1.0);
  std::uniform_int_distribution<int> n_classes(1, 5), per_class(0, 8), vid(0, 2);
  double worst_map = 0.0;
  int recall_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Detection> preds, gts;
    const int c = n_classes(gen);
    for (int k = 0; k < c; ++k) {
      const int ng = 1 + per_class(gen) % 8, np = per_class(gen);
      for (int i = 0; i < ng; ++i) {
        const double a = pos(gen), b = pos(gen);
        gts.push_back({vid(gen), Segment{std::min(a, b), std::max(a, b) + 0.5, k, std::nullopt}});
      }
      for (int i = 0; i < np; ++i) {
        const double a = pos(gen), b = pos(gen);
        preds.push_back({vid(gen), Segment{std::min(a, b), std::max(a, b) + 0.5, k, score(gen)}});
      }
    }
    for (double th : {0.5, 0.7}) {
      worst_map = std::max(worst_map, std::abs(map_at_iou(preds, gts, th).mean_ap -
                                               oracle::mean_ap(preds, gts, th)));
    }
    std::vector<std::vector<Segment>> rp(static_cast<std::size_t>(c)), rg(static_cast<std::size_t>(c));
    for (const auto& g : gts) rg[static_cast<std::size_t>(g.segment.class_id)].push_back(g.segment);
    for (const auto& p : preds) rp[static_cast<std::size_t>(p.segment.class_id)].push_back(p.segment);
    const std::vector<double> th{0.5, 0.7};
    for (int k : {1, 5}) {
      const auto r = recall_at_k(rp, rg, k, th);
      for (std::size_t i = 0; i < th.size(); ++i) {
        recall_mismatch += r[i] != oracle::recall(rp, rg, k, th[i]);
      }
    }
  }

  const Dataset as = generate_synthetic(default_synthetic_spec(TaskKind::ActionSegmentation));
  std::size_t bg = 0, total = 0;
  for (const auto& v : as.videos) {
    for (int l : frame_labels(v)) bg += l == kBackground;
    total += static_cast<std::size_t>(v.length());
  }
  const double realized = static_cast<double>(bg) / static_cast<double>(total);
  const double accuracy = evaluate(BackgroundLocalizer{}, as,
                                   default_train_config(TaskKind::ActionSegmentation))
                              .metrics.at("frame_accuracy");

  Outcome o;
  o.pass = worst_map <= kMapTol && recall_mismatch == 0 && accuracy == realized &&
           std::abs(realized - kBackgroundTarget) <= kBackgroundTol;
  o.detail = "map max diff " + fmt("%.1e", worst_map) + ", recall mismatches " +
             std::to_string(recall_mismatch) + ", majority accuracy " + fmt("%.4f", accuracy) +
             " vs background share " + fmt("%.4f", realized);
  return o;
}

// --- 4 -----------------------------------------------------------------------

Outcome shape_law() {
  SyntheticSpec spec;
  spec.n_videos = 1;
  spec.n_classes = 3;
  const Dataset ds = generate_synthetic(spec);
  int bad = 0, cases = 0;
  for (int n : {64, 128}) {
    for (int levels = 1; levels <= 4; ++levels) {
      for (int c : {1, 3}) {
        TrainConfig cfg = default_train_config(TaskKind::ActionLocalization);
        cfg.model.n_frames = n;
        cfg.model.levels = levels;
        cfg.model.regression_ranges = default_regression_ranges(levels);
        fit_to_dataset(cfg, ds);
        const UnlocModel m(cfg.model, build_vocabulary(ds, PromptSet::kinetics()), 0);
        Rng rng(0);
        TaskSample s = sample_frames(ds.videos[0], ds, cfg.sampling, rng);
        s.texts.resize(static_cast<std::size_t>(c), ds.classes[0]);
        std::size_t count = 0;
        for (const auto& cls : m.predict(s)) {
          for (const auto& level : cls.levels) count += level.logits.size();
        }
        std::size_t expected = 0;
        for (int i = 1; i <= levels; ++i) expected += static_cast<std::size_t>(n >> (i - 1));
        expected *= static_cast<std::size_t>(c);
        bad += count != expected;
        ++cases;
      }
    }
  }
  return {bad == 0, std::to_string(cases - bad) + " of " + std::to_string(cases) + " configurations"};
}

// --- 5 -----------------------------------------------------------------------

Outcome round_trip() {
  std::mt19937 gen(5);
  const FrameGrid grid = make_frame_grid(128, 4);
  const auto ranges = default_regression_ranges(4);
  // Lengths drawn per range bucket so every level is exercised.
  const std::vector<std::pair<int, int>> buckets{{0, 16}, {17, 32}, {33, 64}, {65, 127}};
  std::uniform_int_distribution<std::size_t> bucket(0, buckets.size() - 1);
  int wrong = 0, orphans = 0;
  std::set<int> levels_hit;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [lo, hi] = buckets[bucket(gen)];
    // Quarter-frame endpoints keep the arithmetic exact.
    const double len = std::uniform_int_distribution<int>(lo * 4, hi * 4)(gen) / 4.0;
    const double start = std::uniform_int_distribution<int>(0, static_cast<int>((127.0 - len) * 4))(gen) / 4.0;
    const Segment gt{start, start + len, 0, std::nullopt};
    const std::vector<Segment> gts{gt};
    const TrainTargets t = assign_targets(gts, grid, ranges, {});
    ClassPredictions p;
    for (std::size_t l = 0; l < grid.n_levels(); ++l) {
      LevelPrediction lp;
      for (std::size_t i = 0; i < grid.level_size(l); ++i) {
        const bool positive = t.levels[l].relevancy[i] > 0.0;
        if (positive) levels_hit.insert(static_cast<int>(l));
        lp.logits.push_back(positive ? 20.0 : -20.0);
        lp.displacement.push_back({t.levels[l].displacement[2 * i], t.levels[l].displacement[2 * i + 1]});
      }
      p.levels.push_back(std::move(lp));
    }
    const CandidateSet cands = expand({p}, grid, 0.5);
    for (const auto& c : cands) wrong += c.segment.start != gt.start || c.segment.end != gt.end;
    const bool has_cell = std::floor(gt.end) >= std::ceil(gt.start);
    orphans += has_cell && cands.empty();
  }
  return {wrong == 0 && orphans == 0 && levels_hit.size() == 4,
          std::to_string(wrong) + " mis-decoded cells, " + std::to_string(orphans) +
              " orphan segments, levels used " + std::to_string(levels_hit.size())};
}

// --- 6 -----------------------------------------------------------------------

Outcome end_to_end() {
  SyntheticSpec spec = default_synthetic_spec(TaskKind::ActionLocalization);
  spec.n_videos = 300;
  spec.seed = 6;
  const auto [train_set, test_set] = split_videos(generate_synthetic(spec), 200);
  TrainConfig cfg = default_train_config(TaskKind::ActionLocalization);
  cfg.optimizer.steps = kTalSteps;
  cfg.seed = 6;
  fit_to_dataset(cfg, train_set);
  UnlocModel m(cfg.model, build_vocabulary(train_set, PromptSet::kinetics()), cfg.seed);
  train(m, train_set, cfg);
  const double held_out = evaluate(ModelLocalizer(m), test_set, cfg).metrics.at("mAP@0.5");
  const double oracle = evaluate(OracleLocalizer{}, test_set, cfg).metrics.at("mAP@0.5");
  return {held_out >= kTalMapTarget && oracle == 1.0,
          "held-out mAP@0.5 " + fmt("%.4f", held_out) + " after " + std::to_string(kTalSteps) +
              " steps, oracle " + fmt("%.4f", oracle)};
}

// --- 7 -----------------------------------------------------------------------

// Every variant starts from the same clip-level pretraining of the encoders
// and fusion (the late-fusion variant pretrains its own scorer) and then gets
// the same finetuning budget on the same data.
constexpr int kAblationClasses = 10;
constexpr int kPretrainSteps = 600;
constexpr int kFinetuneSteps = 400;

struct Variant {
  const char* name;
  std::function<void(ModelConfig&)> apply;
  bool late;
};

Outcome ablation_directions() {
  const std::vector<Variant> variants{
      {"full", [](ModelConfig&) {}, false},
      {"one-level", [](ModelConfig& m) { m.pyramid_style = PyramidStyle::None; }, false},
      {"no-text", [](ModelConfig& m) { m.text_mode = TextMode::NoText; }, false},
      {"late", [](ModelConfig& m) { m.late_fusion = true; }, true}};
  std::vector<std::vector<double>> scores(variants.size());

  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticSpec spec = default_synthetic_spec(TaskKind::ActionLocalization);
    spec.n_classes = kAblationClasses;
    spec.n_videos = 300;
    spec.seed = seed;
    const auto [train_set, test_set] = split_videos(generate_synthetic(spec), 200);
    spec.n_videos = 200;
    const Dataset clips = generate_clips(spec);

    auto base = [&](const Dataset& ds) {
      TrainConfig c = default_train_config(TaskKind::ActionLocalization);
      c.seed = seed;
      fit_to_dataset(c, ds);
      return c;
    };
    auto pretrained = [&](bool late) {
      TrainConfig c = base(clips);
      c.model.late_fusion = late;
      c.optimizer.steps = kPretrainSteps;
      auto m = std::make_unique<UnlocModel>(c.model, build_vocabulary(clips, PromptSet::kinetics()), seed);
      pretrain_multilabel(*m, clips, c);
      return m;
    };
    const auto mid = pretrained(false);
    const auto late = pretrained(true);

    for (std::size_t v = 0; v < variants.size(); ++v) {
      TrainConfig c = base(train_set);
      variants[v].apply(c.model);
      c.optimizer.steps = kFinetuneSteps;
      fit_to_dataset(c, train_set);
      UnlocModel m(c.model, build_vocabulary(train_set, PromptSet::kinetics()), seed);
      copy_matching_parameters(m.parameters(), (variants[v].late ? late : mid)->parameters());
      train(m, train_set, c);
      scores[v].push_back(evaluate(ModelLocalizer(m), test_set, c).metrics.at("mAP@0.5"));
    }
  }

  auto mean = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
  };
  auto stddev = [&](const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
  };
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t v = 1; v < variants.size(); ++v) {
    const double margin = mean(scores[0]) - mean(scores[v]);
    const double spread = std::max(stddev(scores[0]), stddev(scores[v]));
    const bool ok = margin > spread;
    pass = pass && ok;
    detail << "full " << fmt("%.3f", mean(scores[0])) << " vs " << variants[v].name << " "
           << fmt("%.3f", mean(scores[v])) << " (margin " << fmt("%.3f", margin) << ", std "
           << fmt("%.3f", spread) << (ok ? ")" : ", too small)") << "; ";
  }
  detail << "per seed:";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    detail << " " << variants[v].name;
    for (double x : scores[v]) detail << " " << fmt("%.3f", x);
  }
  return {pass, detail.str()};
}

// --- 8 -----------------------------------------------------------------------

Outcome freeze_contracts() {
  SyntheticSpec spec = default_synthetic_spec(TaskKind::ActionLocalization);
  spec.n_videos = 24;
  spec.seed = 8;
  const Dataset ds = generate_synthetic(spec);
  int violations = 0;
  std::ostringstream detail;
  for (EncoderState image : {EncoderState::Frozen, EncoderState::Finetuned}) {
    for (EncoderState text : {EncoderState::Frozen, EncoderState::Finetuned}) {
      TrainConfig c = default_train_config(TaskKind::ActionLocalization);
      c.freeze = {image, text};
      c.optimizer.steps = 20;
      c.optimizer.batch_size = 4;
      fit_to_dataset(c, ds);
      UnlocModel m(c.model, build_vocabulary(ds, PromptSet::kinetics()), 0);
      std::vector<ag::Matrix> before;
      for (const auto& p : m.parameters().parameters()) before.push_back(p.tensor.value());
      train(m, ds, c);
      const auto& params = m.parameters().parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const bool changed = params[i].tensor.value() != before[i];
        const bool frozen = (params[i].group == "image_encoder" && image == EncoderState::Frozen) ||
                            (params[i].group == "text_encoder" && text == EncoderState::Frozen);
        const bool encoder = params[i].group == "image_encoder" || params[i].group == "text_encoder";
        if ((frozen && changed) || (encoder && !frozen && !changed)) {
          ++violations;
          detail << " " << params[i].name << "[" << to_string(image) << "/" << to_string(text) << "]";
        }
      }
    }
  }
  return {violations == 0, violations == 0 ? "4 policies, frozen arrays bit-identical, trainable arrays updated"
                                           : std::to_string(violations) + " violations:" + detail.str()};
}

// --- 9 -----------------------------------------------------------------------

Outcome moment_retrieval() {
  SyntheticSpec spec = default_synthetic_spec(TaskKind::MomentRetrieval);
  spec.n_videos = 300;
  spec.seed = 9;
  const auto [train_set, test_set] = split_videos(generate_synthetic(spec), 200);
  auto recall_for = [&](TextMode mode) {
    TrainConfig c = default_train_config(TaskKind::MomentRetrieval);
    c.model.text_mode = mode;
    c.optimizer.steps = kMrSteps;
    c.seed = 9;
    fit_to_dataset(c, train_set);
    UnlocModel m(c.model, build_vocabulary(train_set, PromptSet::kinetics()), c.seed);
    train(m, train_set, c);
    return evaluate(ModelLocalizer(m), test_set, c).metrics.at("recall@1@0.5");
  };
  const double all = recall_for(TextMode::AllTokens);
  const double cls = recall_for(TextMode::ClsOnly);
  return {all >= kMrRecallTarget && all >= cls,
          "R@1@0.5 all-tokens " + fmt("%.4f", all) + ", cls-only " + fmt("%.4f", cls)};
}

std::set<int> parse_ids(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, known_red;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") {
      only = parse_ids(argv[i + 1]);
    } else if (flag == "--known-red") {
      known_red = parse_ids(argv[i + 1]);
    } else {
      std::fprintf(stderr, "unknown flag %s\n", flag.c_str());
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "loss gradients", 30, loss_gradients},
      {2, "softnms oracle", 10, soft_nms_oracle},
      {3, "metric oracles", 30, metric_oracles},
      {4, "prediction count law", 5, shape_law},
      {5, "target/decode round trip", 10, round_trip},
      {6, "end-to-end TAL learning", 600, end_to_end},
      {7, "ablation directions", 2700, ablation_directions},
      {8, "freeze contracts", 120, freeze_contracts},
      {9, "moment retrieval", 600, moment_retrieval},
  };

  std::set<int> failed;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) failed.insert(c.id);
    std::printf("[%s] %d %-26s %7.1fs/%.0fs  %s%s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.budget_s, o.detail.c_str(), in_time ? "" : "  (over time budget)",
                !pass && known_red.count(c.id) ? "  (known red)" : "");
    std::fflush(stdout);
  }
  std::set<int> expected;
  for (int id : known_red) {
    if (only.empty() || only.count(id)) expected.insert(id);
  }
  std::printf("%zu failing criteria; %s\n", failed.size(),
              failed == expected ? "matches the declared known-red set" : "UNEXPECTED result");
  return failed == expected ? 0 : 1;
}
