#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "unloc/checkpoint.hpp"
#include "unloc/errors.hpp"
#include "unloc/evaluate.hpp"
#include "unloc/recipes.hpp"
#include "unloc/train.hpp"

namespace unloc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  long long seed = -1;
};

fs::path output_dir(const Common& c, const std::string& command) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else {
    const char* root = std::getenv("UNLOC_OUTPUT_ROOT");
    dir = fs::path(root && *root ? root : "unloc_runs") / command;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

// "a.b.c=value" -> {"a": {"b": {"c": value}}} merged into `patch`.
void add_override(json& patch, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  json* node = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = parse_value(assignment.substr(eq + 1));
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TrainConfig resolve_config(const Common& c, const Dataset& dataset,
                           const std::vector<std::string>& extra = {}) {
  TrainConfig cfg = default_train_config(dataset.task);
  if (!c.config.empty()) cfg = overlay_config(cfg, read_file(c.config));
  json patch = json::object();
  for (const auto& o : c.overrides) add_override(patch, o);
  for (const auto& o : extra) add_override(patch, o);
  if (!patch.empty()) cfg = overlay_config(cfg, patch.dump());
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  fit_to_dataset(cfg, dataset);
  cfg.validate();
  return cfg;
}

Dataset require_data(const Common& c) {
  if (c.data.empty()) throw InputError("--data is required");
  return load_dataset(c.data);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

void add_common(CLI::App* cmd, Common& c, bool needs_data = true) {
  if (needs_data) cmd->add_option("--data", c.data, "Annotation JSON (features/ beside it)");
  cmd->add_option("--config", c.config, "TrainConfig JSON file");
  cmd->add_option("--set", c.overrides, "Dotted override, e.g. model.levels=1")->allow_extra_args(false);
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Random seed");
}

std::unique_ptr<UnlocModel> build_model(const TrainConfig& cfg, const Dataset& dataset,
                                        const PromptSet& prompts = PromptSet::kinetics()) {
  auto model = std::make_unique<UnlocModel>(cfg.model, build_vocabulary(dataset, prompts),
                                            cfg.seed, cfg.unpaired_encoders);
  model->set_prompts(prompts);
  return model;
}

// One template per non-empty line.
PromptSet read_prompts(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> templates;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) templates.push_back(line);
  }
  return PromptSet(templates);
}

// --- commands -------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& task, int videos, int classes,
                 double background, int holdout, std::ostream& out) {
  SyntheticSpec spec = default_synthetic_spec(parse_task(task));
  if (videos > 0) spec.n_videos = videos;
  if (classes > 0) spec.n_classes = classes;
  if (background >= 0.0) spec.background_fraction = background;
  if (c.seed >= 0) spec.seed = static_cast<std::uint64_t>(c.seed);
  if (holdout < 0) throw InputError("--holdout must be >= 0");
  spec.n_videos += holdout;
  const Dataset ds = generate_synthetic(spec);
  const fs::path dir = output_dir(c, "gen-data");
  if (holdout == 0) {
    save_dataset(ds, dir);
    out << "wrote " << ds.videos.size() << " videos to " << (dir / "annotations.json").string()
        << "\n";
    return kOk;
  }
  const auto [train_set, test_set] =
      split_videos(ds, ds.videos.size() - static_cast<std::size_t>(holdout));
  save_dataset(train_set, dir / "train");
  save_dataset(test_set, dir / "test");
  out << "wrote " << train_set.videos.size() << " training and " << test_set.videos.size()
      << " held-out videos under " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& init, const std::string& prompts,
              std::ostream& out) {
  const Dataset ds = require_data(c);
  const TrainConfig cfg = resolve_config(c, ds);
  const fs::path dir = output_dir(c, "train");
  auto model = build_model(cfg, ds, prompts.empty() ? PromptSet::kinetics() : read_prompts(prompts));
  if (!init.empty()) {
    const LoadedCheckpoint start = load_checkpoint(init);
    const std::size_t n = copy_matching_parameters(model->parameters(), start.model.parameters());
    out << "initialised " << n << " of " << model->parameters().parameters().size()
        << " arrays from " << init << "\n";
  }
  TrainOptions opts;
  const int every = std::max(1, cfg.optimizer.steps / 10);
  opts.on_step = [&](int step, const losses::LossBreakdown& b) {
    if (step % every == 0 || step + 1 == cfg.optimizer.steps) {
      out << "step " << step << "  loss " << std::fixed << std::setprecision(4) << b.total
          << "  (cls " << b.cls_loss << ", reg " << b.reg_loss << ")\n"
          << std::defaultfloat;
    }
  };
  const TrainResult result = train(*model, ds, cfg, opts);
  write_loss_curve(dir / "loss.csv", result.curve);
  write_text(dir / "config.json", to_json(cfg) + "\n");
  save_checkpoint(*model, {ds.classes, ds.task}, dir / "model.ulck");
  out << "checkpoint: " << (dir / "model.ulck").string() << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, bool ensemble, bool oracle,
             std::ostream& out) {
  const Dataset ds = require_data(c);
  TrainConfig cfg = resolve_config(c, ds);
  cfg.eval.ensemble_prompts = cfg.eval.ensemble_prompts || ensemble;
  const fs::path dir = output_dir(c, "eval");
  EvalReport report;
  if (oracle) {
    report = evaluate(OracleLocalizer{}, ds, cfg);
  } else {
    if (checkpoint.empty()) throw InputError("--checkpoint is required (or --oracle)");
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    TrainConfig model_cfg = cfg;
    model_cfg.model = loaded.model.config();
    model_cfg.sampling.n = model_cfg.model.n_frames;
    report = evaluate(ModelLocalizer(loaded.model, cfg.eval.ensemble_prompts), ds, model_cfg);
  }
  write_text(dir / "report.json", report.to_json() + "\n");
  out << report.table();
  return kOk;
}

int cmd_predict(const Common& c, const std::string& checkpoint, std::ostream& out) {
  const Dataset ds = require_data(c);
  TrainConfig cfg = resolve_config(c, ds);
  if (checkpoint.empty()) throw InputError("--checkpoint is required");
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  cfg.model = loaded.model.config();
  cfg.sampling.n = cfg.model.n_frames;
  const fs::path dir = output_dir(c, "predict");
  std::ofstream file(dir / "predictions.jsonl");
  if (!file) throw InputError("cannot write predictions");
  write_predictions(ModelLocalizer(loaded.model, cfg.eval.ensemble_prompts), ds, cfg, file);
  out << "predictions: " << (dir / "predictions.jsonl").string() << "\n";
  return kOk;
}

int cmd_pretrain(const Common& c, int clips, int classes, std::ostream& out) {
  SyntheticSpec spec = default_synthetic_spec(TaskKind::ActionLocalization);
  spec.n_videos = clips > 0 ? clips : 200;
  if (classes > 0) spec.n_classes = classes;
  if (c.seed >= 0) spec.seed = static_cast<std::uint64_t>(c.seed);
  const Dataset ds = c.data.empty() ? generate_clips(spec) : load_dataset(c.data);
  const TrainConfig cfg = resolve_config(c, ds);
  const fs::path dir = output_dir(c, "pretrain");
  auto model = build_model(cfg, ds);
  const TrainResult result = pretrain_multilabel(*model, ds, cfg);
  write_loss_curve(dir / "loss.csv", result.curve);
  save_checkpoint(*model, {ds.classes, ds.task}, dir / "model.ulck");
  out << "pretrained on " << ds.videos.size() << " clips; final loss "
      << (result.curve.empty() ? 0.0 : result.curve.back().total) << "\n";
  return kOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("grid axis '" + text + "' is not key=v1,v2,...");
  }
  GridAxis axis;
  axis.key = text.substr(0, eq);
  if (axis.key.find('.') == std::string::npos) axis.key = "model." + axis.key;
  std::stringstream ss(text.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    if (!v.empty()) axis.values.push_back(v);
  }
  return axis;
}

std::string primary_metric(TaskKind task) {
  switch (task) {
    case TaskKind::MomentRetrieval: return "recall@1@0.5";
    case TaskKind::ActionLocalization: return "mAP@0.5";
    case TaskKind::ActionSegmentation: return "frame_accuracy";
  }
  return "";
}

int cmd_ablate(const Common& c, const std::vector<std::string>& grid_text,
               const std::string& eval_data, const std::vector<long long>& seeds,
               std::ostream& out) {
  const Dataset ds = require_data(c);
  const Dataset eval_ds = eval_data.empty() ? ds : load_dataset(eval_data);
  std::vector<GridAxis> axes;
  for (const auto& g : grid_text) axes.push_back(parse_axis(g));
  if (axes.empty()) {
    axes = {parse_axis("loss_kind=l1,iou"), parse_axis("pyramid_style=vitdet,none"),
            parse_axis("head_blocks=3"), parse_axis("text_mode=all-tokens")};
  }
  const std::vector<long long> seed_list = seeds.empty() ? std::vector<long long>{0} : seeds;
  const std::string metric = primary_metric(ds.task);
  const fs::path dir = output_dir(c, "ablate");

  std::size_t rows = 1;
  for (const auto& a : axes) rows *= a.values.size();
  json results = json::array();
  std::ostringstream table;
  for (const auto& a : axes) table << "| " << a.key << " ";
  table << "| " << metric << " mean | std |\n";
  for (std::size_t i = 0; i <= axes.size() + 1; ++i) table << "|---";
  table << "|\n";

  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::string> assignment;
    std::size_t rest = r;
    json row;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const auto& v = it->values[rest % it->values.size()];
      rest /= it->values.size();
      assignment.insert(assignment.begin(), it->key + "=" + v);
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
      row[axes[a].key] = assignment[a].substr(axes[a].key.size() + 1);
    }
    std::vector<double> scores;
    for (long long seed : seed_list) {
      Common run = c;
      run.seed = seed;
      std::vector<std::string> extra = assignment;
      // Collapsing the pyramid implies a single level.
      for (const auto& s : assignment) {
        if (s == "model.pyramid_style=none") extra.push_back("model.levels=1");
      }
      const TrainConfig cfg = resolve_config(run, ds, extra);
      auto model = build_model(cfg, ds);
      train(*model, ds, cfg);
      const EvalReport report = evaluate(ModelLocalizer(*model), eval_ds, cfg);
      scores.push_back(report.metrics.at(metric));
    }
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    const double stddev = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;
    row["scores"] = scores;
    row["mean"] = mean;
    row["std"] = stddev;
    results.push_back(row);
    for (std::size_t a = 0; a < axes.size(); ++a) {
      table << "| " << assignment[a].substr(axes[a].key.size() + 1) << " ";
    }
    table << "| " << std::fixed << std::setprecision(4) << mean << " | " << stddev << " |\n"
          << std::defaultfloat;
    out << "row " << r + 1 << "/" << rows << " done\n";
  }
  write_text(dir / "ablation.json", results.dump(2) + "\n");
  write_text(dir / "ablation.md", table.str());
  out << table.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"unloc: moment retrieval, action localization and segmentation"};
  app.require_subcommand(1);

  Common common;
  std::string task = "tal";
  int videos = 0, classes = 0, clips = 0, holdout = 0;
  double background = -1.0;
  std::string checkpoint, eval_data;
  bool ensemble = false, oracle = false;
  std::vector<std::string> grid;
  std::vector<long long> seeds;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, common, false);
  gen->add_option("--task", task, "mr | tal | as");
  gen->add_option("--videos", videos, "Number of videos");
  gen->add_option("--classes", classes, "Number of classes / concepts");
  gen->add_option("--background-fraction", background, "Target background share");
  gen->add_option("--holdout", holdout, "Extra videos written to test/ (train/ gets the rest)");

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, common);
  std::string init, prompts;
  tr->add_option("--init", init, "Checkpoint to start from (matching arrays are copied)");
  tr->add_option("--prompts", prompts, "Prompt templates, one per line, each with {label}");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint");
  ev->add_flag("--ensemble-prompts", ensemble, "Average all prompt templates");
  ev->add_flag("--oracle", oracle, "Score the ground truth itself");

  auto* pr = app.add_subcommand("predict", "Dump ranked segments as JSON lines");
  add_common(pr, common);
  pr->add_option("--checkpoint", checkpoint, "Model checkpoint");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate a grid of variants");
  add_common(ab, common);
  ab->add_option("--grid", grid, "Axis key=v1,v2 (repeatable)");
  ab->add_option("--eval-data", eval_data, "Held-out annotation JSON");
  ab->add_option("--seeds", seeds, "Seeds per grid point")->delimiter(',');

  auto* pt = app.add_subcommand("pretrain", "Clip-level multi-label pretraining");
  add_common(pt, common);
  pt->add_option("--clips", clips, "Synthetic clip count when --data is absent");
  pt->add_option("--classes", classes, "Synthetic class count when --data is absent");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, task, videos, classes, background, holdout, out);
    if (tr->parsed()) return cmd_train(common, init, prompts, out);
    if (ev->parsed()) return cmd_eval(common, checkpoint, ensemble, oracle, out);
    if (pr->parsed()) return cmd_predict(common, checkpoint, out);
    if (ab->parsed()) return cmd_ablate(common, grid, eval_data, seeds, out);
    if (pt->parsed()) return cmd_pretrain(common, clips, classes, out);
  } catch (const unloc::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUserError;
}

}  // namespace unloc::cli
