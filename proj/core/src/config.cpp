#include "unloc/config.hpp"

#include <cmath>

#include "json.hpp"
#include "unloc/errors.hpp"

namespace unloc {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::string enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  throw ConfigError("unknown enum value");
}

template <typename E, std::size_t N>
E enum_parse(const std::string& s, const std::pair<E, const char*> (&table)[N],
             const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  std::string options;
  for (const auto& [value, name] : table) {
    if (!options.empty()) options += "|";
    options += name;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected " +
                    options + ")");
}

constexpr std::pair<TaskKind, const char*> kTasks[] = {
    {TaskKind::MomentRetrieval, "mr"},
    {TaskKind::ActionLocalization, "tal"},
    {TaskKind::ActionSegmentation, "as"}};
constexpr std::pair<TextMode, const char*> kTextModes[] = {
    {TextMode::ClsOnly, "cls-only"},
    {TextMode::AllTokens, "all-tokens"},
    {TextMode::NoText, "no-text"}};
constexpr std::pair<PyramidStyle, const char*> kPyramids[] = {
    {PyramidStyle::ViTDet, "vitdet"},
    {PyramidStyle::Fpn, "fpn"},
    {PyramidStyle::None, "none"}};
constexpr std::pair<RegressionLoss, const char*> kLosses[] = {
    {RegressionLoss::L1, "l1"},
    {RegressionLoss::Iou, "iou"},
    {RegressionLoss::Diou, "diou"},
    {RegressionLoss::L1PlusIou, "l1+iou"}};
constexpr std::pair<SamplingMode, const char*> kSampling[] = {
    {SamplingMode::EvenlySpaced, "evenly_spaced"},
    {SamplingMode::ConsecutivePadded, "consecutive_padded"}};
constexpr std::pair<EncoderState, const char*> kEncoderStates[] = {
    {EncoderState::Frozen, "frozen"},
    {EncoderState::Finetuned, "finetuned"}};

json ranges_to_json(const std::vector<RegressionRange>& ranges) {
  json out = json::array();
  for (const auto& r : ranges) {
    out.push_back({r.lo, std::isinf(r.hi) ? json(nullptr) : json(r.hi)});
  }
  return out;
}

std::vector<RegressionRange> ranges_from_json(const json& j) {
  std::vector<RegressionRange> out;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) {
      throw ConfigError("regression range must be a [lo, hi] pair");
    }
    RegressionRange r;
    r.lo = item[0].get<double>();
    r.hi = item[1].is_null() ? kUnbounded : item[1].get<double>();
    out.push_back(r);
  }
  return out;
}

json model_to_json(const ModelConfig& c) {
  return json{
      {"hidden", c.hidden},
      {"n_frames", c.n_frames},
      {"max_text_tokens", c.max_text_tokens},
      {"levels", c.levels},
      {"head_blocks", c.head_blocks},
      {"fusion_layers", c.fusion_layers},
      {"fusion_mlp_dim", c.fusion_mlp_dim},
      {"attention_heads", c.attention_heads},
      {"raw_dim", c.raw_dim},
      {"vocab_size", c.vocab_size},
      {"text_mode", to_string(c.text_mode)},
      {"pyramid_style", to_string(c.pyramid_style)},
      {"regression_ranges", ranges_to_json(c.regression_ranges)},
      {"loss_kind", to_string(c.loss_kind)},
      {"alpha", c.alpha},
      {"focal_gamma", c.focal_gamma},
      {"focal_alpha", c.focal_alpha},
      {"cls_prior_logit", c.cls_prior_logit},
      {"task", to_string(c.task)},
      {"late_fusion", c.late_fusion},
      {"num_classes", c.num_classes},
  };
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.n_frames = j.at("n_frames").get<int>();
  c.max_text_tokens = j.at("max_text_tokens").get<int>();
  c.levels = j.at("levels").get<int>();
  c.head_blocks = j.at("head_blocks").get<int>();
  c.fusion_layers = j.at("fusion_layers").get<int>();
  c.fusion_mlp_dim = j.at("fusion_mlp_dim").get<int>();
  c.attention_heads = j.at("attention_heads").get<int>();
  c.raw_dim = j.at("raw_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.text_mode = parse_text_mode(j.at("text_mode").get<std::string>());
  c.pyramid_style = parse_pyramid_style(j.at("pyramid_style").get<std::string>());
  c.regression_ranges = ranges_from_json(j.at("regression_ranges"));
  c.loss_kind = parse_regression_loss(j.at("loss_kind").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.focal_gamma = j.at("focal_gamma").get<double>();
  c.focal_alpha = j.at("focal_alpha").get<double>();
  c.cls_prior_logit = j.at("cls_prior_logit").get<double>();
  c.task = parse_task(j.at("task").get<std::string>());
  c.late_fusion = j.at("late_fusion").get<bool>();
  c.num_classes = j.at("num_classes").get<int>();
  return c;
}

json train_to_json(const TrainConfig& c) {
  const auto& o = c.optimizer;
  return json{
      {"model", model_to_json(c.model)},
      {"freeze",
       {{"image_encoder", to_string(c.freeze.image_encoder)},
        {"text_encoder", to_string(c.freeze.text_encoder)}}},
      {"optimizer",
       {{"learning_rate", o.learning_rate},
        {"momentum", o.momentum},
        {"weight_decay", o.weight_decay},
        {"grad_clip", o.grad_clip},
        {"steps", o.steps},
        {"batch_size", o.batch_size},
        {"warmup_steps", o.warmup_steps}}},
      {"sampling", {{"mode", to_string(c.sampling.mode)}, {"n", c.sampling.n}}},
      {"eval",
       {{"nms_sigma", c.eval.nms_sigma},
        {"nms_min_score", c.eval.nms_min_score},
        {"score_threshold", c.eval.score_threshold},
        {"max_detections", c.eval.max_detections},
        {"ensemble_prompts", c.eval.ensemble_prompts}}},
      {"seed", c.seed},
      {"unpaired_encoders", c.unpaired_encoders},
  };
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.model = model_from_json(j.at("model"));
  const auto& f = j.at("freeze");
  c.freeze.image_encoder = parse_encoder_state(f.at("image_encoder").get<std::string>());
  c.freeze.text_encoder = parse_encoder_state(f.at("text_encoder").get<std::string>());
  const auto& o = j.at("optimizer");
  c.optimizer.learning_rate = o.at("learning_rate").get<double>();
  c.optimizer.momentum = o.at("momentum").get<double>();
  c.optimizer.weight_decay = o.at("weight_decay").get<double>();
  c.optimizer.grad_clip = o.at("grad_clip").get<double>();
  c.optimizer.steps = o.at("steps").get<int>();
  c.optimizer.batch_size = o.at("batch_size").get<int>();
  c.optimizer.warmup_steps = o.at("warmup_steps").get<int>();
  const auto& s = j.at("sampling");
  c.sampling.mode = parse_sampling_mode(s.at("mode").get<std::string>());
  c.sampling.n = s.at("n").get<int>();
  const auto& e = j.at("eval");
  c.eval.nms_sigma = e.at("nms_sigma").get<double>();
  c.eval.nms_min_score = e.at("nms_min_score").get<double>();
  c.eval.score_threshold = e.at("score_threshold").get<double>();
  c.eval.max_detections = e.at("max_detections").get<int>();
  c.eval.ensemble_prompts = e.at("ensemble_prompts").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.unpaired_encoders = j.at("unpaired_encoders").get<bool>();
  return c;
}

// Overlay `patch` onto `base`, rejecting keys that `base` does not have.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) {
    throw ConfigError("expected an object at '" + path + "'");
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      overlay(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

json parse_or_throw(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

template <typename Fn>
auto convert(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

}  // namespace

std::string to_string(TaskKind v) { return enum_name(v, kTasks); }
std::string to_string(TextMode v) { return enum_name(v, kTextModes); }
std::string to_string(PyramidStyle v) { return enum_name(v, kPyramids); }
std::string to_string(RegressionLoss v) { return enum_name(v, kLosses); }
std::string to_string(SamplingMode v) { return enum_name(v, kSampling); }
std::string to_string(EncoderState v) { return enum_name(v, kEncoderStates); }

TaskKind parse_task(const std::string& s) { return enum_parse(s, kTasks, "task"); }
TextMode parse_text_mode(const std::string& s) {
  return enum_parse(s, kTextModes, "text_mode");
}
PyramidStyle parse_pyramid_style(const std::string& s) {
  return enum_parse(s, kPyramids, "pyramid_style");
}
RegressionLoss parse_regression_loss(const std::string& s) {
  return enum_parse(s, kLosses, "loss_kind");
}
SamplingMode parse_sampling_mode(const std::string& s) {
  return enum_parse(s, kSampling, "sampling mode");
}
EncoderState parse_encoder_state(const std::string& s) {
  return enum_parse(s, kEncoderStates, "encoder state");
}

std::vector<RegressionRange> default_regression_ranges(int levels) {
  std::vector<RegressionRange> out;
  double lo = 0.0;
  double hi = 4.0;
  for (int l = 0; l < levels; ++l) {
    out.push_back({lo, l + 1 == levels ? kUnbounded : hi});
    lo = hi;
    hi *= 2.0;
  }
  return out;
}

void ModelConfig::validate() const {
  if (hidden < 1) throw ConfigError("hidden size must be >= 1");
  if (attention_heads < 1 || hidden % attention_heads != 0) {
    throw ConfigError("hidden size must be divisible by attention_heads");
  }
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (max_text_tokens < 1) throw ConfigError("max_text_tokens must be >= 1");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (levels > 30 || n_frames < (1 << (levels - 1))) {
    throw ConfigError("n_frames too small for the requested pyramid depth");
  }
  if (pyramid_style == PyramidStyle::None && levels != 1) {
    throw ConfigError("pyramid_style 'none' requires levels = 1");
  }
  if (head_blocks < 0 || head_blocks > 4) {
    throw ConfigError("head_blocks must be in 0..4");
  }
  if (fusion_layers < 0) throw ConfigError("fusion_layers must be >= 0");
  if (fusion_mlp_dim < 1) throw ConfigError("fusion_mlp_dim must be >= 1");
  if (raw_dim < 1) throw ConfigError("raw_dim must be >= 1");
  if (vocab_size < 4) throw ConfigError("vocab_size must cover the special tokens");
  if (static_cast<int>(regression_ranges.size()) != levels) {
    throw ConfigError("regression_ranges must have one entry per level");
  }
  for (std::size_t l = 0; l < regression_ranges.size(); ++l) {
    const auto& r = regression_ranges[l];
    if (!(r.hi > r.lo)) throw ConfigError("regression range with hi <= lo");
    if (l > 0 && r.lo != regression_ranges[l - 1].hi) {
      throw ConfigError("regression ranges must be contiguous bottom-to-top");
    }
  }
  if (regression_ranges.front().lo != 0.0) {
    throw ConfigError("the bottom regression range must start at 0");
  }
  if (!std::isinf(regression_ranges.back().hi)) {
    throw ConfigError("the top regression range must be unbounded");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (focal_gamma < 0.0) throw ConfigError("focal_gamma must be >= 0");
  if (focal_alpha < 0.0 || focal_alpha > 1.0) {
    throw ConfigError("focal_alpha must be in [0, 1]");
  }
  if (text_mode == TextMode::NoText && num_classes < 1) {
    throw ConfigError("text_mode 'no-text' needs num_classes >= 1");
  }
  if (text_mode == TextMode::NoText && task == TaskKind::MomentRetrieval) {
    throw ConfigError("moment retrieval cannot run without text");
  }
  if (late_fusion && text_mode == TextMode::NoText) {
    throw ConfigError("late fusion needs text embeddings; text_mode is no-text");
  }
}

void TrainConfig::validate() const {
  model.validate();
  if (optimizer.steps < 0) throw ConfigError("optimizer.steps must be >= 0");
  if (optimizer.batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  if (optimizer.learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (sampling.n < 1) throw ConfigError("sampling.n must be >= 1");
  if (sampling.n != model.n_frames) {
    throw ConfigError("sampling.n must equal model.n_frames");
  }
  if (!(eval.nms_sigma > 0.0)) throw ConfigError("eval.nms_sigma must be > 0");
  if (eval.max_detections < 1) throw ConfigError("eval.max_detections must be >= 1");
}

std::string to_json(const ModelConfig& c) { return model_to_json(c).dump(2); }
std::string to_json(const TrainConfig& c) { return train_to_json(c).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  json base = model_to_json(ModelConfig{});
  const json patch = parse_or_throw(text);
  overlay(base, patch, "");
  if (patch.contains("levels") && !patch.contains("regression_ranges")) {
    base["regression_ranges"] =
        ranges_to_json(default_regression_ranges(base["levels"].get<int>()));
  }
  return convert([&] { return model_from_json(base); });
}

TrainConfig train_config_from_json(const std::string& text) {
  return overlay_config(TrainConfig{}, text);
}

TrainConfig overlay_config(const TrainConfig& start, const std::string& text) {
  json base = train_to_json(start);
  const json patch = parse_or_throw(text);
  overlay(base, patch, "");
  if (patch.contains("model") && patch["model"].contains("levels") &&
      !patch["model"].contains("regression_ranges")) {
    base["model"]["regression_ranges"] = ranges_to_json(
        default_regression_ranges(base["model"]["levels"].get<int>()));
  }
  return convert([&] { return train_from_json(base); });
}

}  // namespace unloc
