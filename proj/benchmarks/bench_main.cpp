#include <benchmark/benchmark.h>

#include <random>

#include "unloc/decode.hpp"
#include "unloc/metrics.hpp"
#include "unloc/recipes.hpp"
#include "unloc/train.hpp"

using namespace unloc;

namespace {

CandidateSet random_candidates(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pos(0.0, 128.0), score(0.0, 1.0);
  CandidateSet out;
  for (int i = 0; i < n; ++i) {
    const double a = pos(gen), b = pos(gen);
    out.push_back({Segment{std::min(a, b), std::max(a, b), i % 3, score(gen)}, {}});
  }
  return out;
}

Dataset bench_data() {
  SyntheticSpec s = default_synthetic_spec(TaskKind::ActionLocalization);
  s.n_videos = 16;
  return generate_synthetic(s);
}

}  // namespace

static void BM_SoftNms(benchmark::State& state) {
  const CandidateSet c = random_candidates(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(soft_nms(c, 0.5, 0.001));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SoftNms)->RangeMultiplier(4)->Range(16, 1024)->Complexity();

static void BM_MapAtIou(benchmark::State& state) {
  const CandidateSet c = random_candidates(2000, 2), g = random_candidates(300, 3);
  std::vector<Detection> preds, gts;
  for (std::size_t i = 0; i < c.size(); ++i) preds.push_back({static_cast<int>(i % 20), c[i].segment});
  for (std::size_t i = 0; i < g.size(); ++i) {
    Segment s = g[i].segment;
    s.score.reset();
    gts.push_back({static_cast<int>(i % 20), s});
  }
  for (auto _ : state) benchmark::DoNotOptimize(map_at_iou(preds, gts, 0.5));
}
BENCHMARK(BM_MapAtIou);

static void BM_Attention(benchmark::State& state) {
  Rng rng(4);
  const auto s = static_cast<Eigen::Index>(state.range(0));
  const ag::Tensor qkv = ag::constant(rng.normal_matrix(s, 96, 1.0));
  const std::vector<std::uint8_t> valid(static_cast<std::size_t>(s), 1);
  ag::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ag::attention(qkv, valid, 2));
}
BENCHMARK(BM_Attention)->Arg(129)->Arg(144)->Arg(512);

static void BM_Predict(benchmark::State& state) {
  const Dataset ds = bench_data();
  TrainConfig cfg = default_train_config(ds.task);
  cfg.model.text_mode = state.range(0) ? TextMode::AllTokens : TextMode::NoText;
  fit_to_dataset(cfg, ds);
  const UnlocModel m(cfg.model, build_vocabulary(ds, PromptSet::kinetics()), 0);
  Rng rng(5);
  const TaskSample s = sample_frames(ds.videos[0], ds, cfg.sampling, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(s));
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_TrainSteps(benchmark::State& state) {
  const Dataset ds = bench_data();
  TrainConfig cfg = default_train_config(ds.task);
  cfg.optimizer.steps = 5;
  fit_to_dataset(cfg, ds);
  for (auto _ : state) {
    UnlocModel m(cfg.model, build_vocabulary(ds, PromptSet::kinetics()), 0);
    benchmark::DoNotOptimize(train(m, ds, cfg));
  }
  state.SetItemsProcessed(state.iterations() * cfg.optimizer.steps);
}
BENCHMARK(BM_TrainSteps)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
