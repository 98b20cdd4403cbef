#include "unloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "unloc/errors.hpp"

namespace unloc {

namespace {

constexpr const char* kGroups[] = {"image_encoder", "text_encoder", "fusion", "pyramid", "heads"};

void apply_freeze_policy(nn::ParameterStore& store, const FreezePolicy& policy) {
  for (const char* g : kGroups) store.set_group_trainable(g, true);
  store.set_group_trainable("image_encoder", policy.image_encoder == EncoderState::Finetuned);
  store.set_group_trainable("text_encoder", policy.text_encoder == EncoderState::Finetuned);
}

struct FrozenSnapshot {
  std::vector<std::pair<std::string, ag::Matrix>> values;
};

FrozenSnapshot snapshot_frozen(const nn::ParameterStore& store) {
  FrozenSnapshot s;
  for (const auto& p : store.parameters()) {
    if (!p.tensor.requires_grad()) s.values.emplace_back(p.name, p.tensor.value());
  }
  return s;
}

void verify_frozen(const nn::ParameterStore& store, const FrozenSnapshot& s) {
  for (const auto& [name, before] : s.values) {
    const auto* p = store.find(name);
    const ag::Matrix& after = p->tensor.value();
    if (after.size() != before.size() ||
        std::memcmp(after.data(), before.data(), sizeof(float) * static_cast<std::size_t>(after.size())) != 0) {
      throw ContractError("frozen parameter '" + name + "' changed during training");
    }
  }
}

// Text tokens are constant while the text encoder is frozen, so they are
// computed once per distinct text.
class TextCache {
 public:
  TextCache(const UnlocModel& model, bool frozen) : model_(model), frozen_(frozen) {}

  std::vector<TextTokens> get(const TaskSample& sample) {
    if (model_.config().text_mode == TextMode::NoText) return {};
    if (!frozen_) return model_.encode_texts(sample.texts, sample.task);
    std::vector<TextTokens> out;
    for (const auto& t : sample.texts) {
      auto it = cache_.find(t);
      if (it == cache_.end()) {
        ag::NoGradGuard no_grad;
        it = cache_.emplace(t, model_.encode_texts({t}, sample.task).front()).first;
      }
      out.push_back(it->second);
    }
    return out;
  }

 private:
  const UnlocModel& model_;
  bool frozen_;
  std::map<std::string, TextTokens> cache_;
};

void check_finite(const losses::LossBreakdown& b, int step) {
  if (!std::isfinite(b.total)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                          " (cls " + std::to_string(b.cls_loss) + ", reg " +
                          std::to_string(b.reg_loss) + ")");
  }
}

// Epoch-wise shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }
  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainTargets targets_for(const TaskSample& sample, int query, const ModelConfig& config) {
  const bool segmentation = sample.task == TaskKind::ActionSegmentation;
  const int levels = segmentation ? 1 : config.levels;
  const FrameGrid grid = make_frame_grid(sample.frames.mask.size(), static_cast<std::size_t>(levels));
  std::vector<Segment> gts;
  for (const auto& g : sample.gts) {
    if (g.class_id == query) gts.push_back(g);
  }
  return assign_targets(gts, grid, config.regression_ranges, sample.frames.mask, !segmentation,
                        query);
}

ag::Tensor loss_node(const QueryOutput& outputs, const TrainTargets& targets,
                     const losses::LossSettings& settings, losses::LossBreakdown* breakdown) {
  if (outputs.size() != targets.levels.size()) {
    throw InputError("loss_node: outputs and targets have different level counts");
  }
  const bool has_reg = settings.task != TaskKind::ActionSegmentation &&
                       !outputs.empty() && outputs.front().displacement.defined();
  std::vector<double> logits, relevancy, pred, target;
  std::vector<std::uint8_t> valid;
  std::vector<ag::Tensor> parents;
  std::vector<Eigen::Index> sizes;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const auto& lo = outputs[l];
    const auto& lt = targets.levels[l];
    const Eigen::Index n = lo.logits.rows();
    if (static_cast<std::size_t>(n) != lt.relevancy.size()) {
      throw InputError("loss_node: level " + std::to_string(l) + " size mismatch");
    }
    sizes.push_back(n);
    parents.push_back(lo.logits);
    for (Eigen::Index i = 0; i < n; ++i) logits.push_back(lo.logits.value()(i, 0));
    relevancy.insert(relevancy.end(), lt.relevancy.begin(), lt.relevancy.end());
    valid.insert(valid.end(), lt.valid.begin(), lt.valid.end());
    if (has_reg) {
      for (Eigen::Index i = 0; i < n; ++i) {
        pred.push_back(lo.displacement.value()(i, 0));
        pred.push_back(lo.displacement.value()(i, 1));
      }
      target.insert(target.end(), lt.displacement.begin(), lt.displacement.end());
    }
  }
  if (has_reg) {
    for (const auto& lo : outputs) parents.push_back(lo.displacement);
  }

  losses::LossInputs in{logits, relevancy, valid, pred, target};
  auto grads = std::make_shared<losses::LossGradients>();
  const losses::LossBreakdown b = losses::combined_loss(in, settings, grads.get());
  if (breakdown) *breakdown = b;

  ag::Matrix value(1, 1);
  value(0, 0) = static_cast<float>(b.total);
  return ag::make_result(std::move(value), parents, [grads, sizes, has_reg](ag::Node& self) {
    const double g = self.grad(0, 0);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      ag::Node& p = *self.parents[l];
      if (p.requires_grad) {
        ag::Matrix m(sizes[l], 1);
        for (Eigen::Index i = 0; i < sizes[l]; ++i) {
          m(i, 0) = static_cast<float>(g * grads->d_logits[offset + static_cast<std::size_t>(i)]);
        }
        p.grad_buffer() += m;
      }
      offset += static_cast<std::size_t>(sizes[l]);
    }
    if (!has_reg) return;
    offset = 0;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      ag::Node& p = *self.parents[sizes.size() + l];
      if (p.requires_grad) {
        ag::Matrix m(sizes[l], 2);
        for (Eigen::Index i = 0; i < sizes[l]; ++i) {
          const std::size_t k = 2 * (offset + static_cast<std::size_t>(i));
          m(i, 0) = static_cast<float>(g * grads->d_disp[k]);
          m(i, 1) = static_cast<float>(g * grads->d_disp[k + 1]);
        }
        p.grad_buffer() += m;
      }
      offset += static_cast<std::size_t>(sizes[l]);
    }
  });
}

MomentumSgd::MomentumSgd(nn::ParameterStore& store, const OptimizerConfig& config)
    : store_(store), config_(config) {
  for (const auto& p : store_.parameters()) {
    velocity_.push_back(ag::Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

double MomentumSgd::learning_rate(int step) const {
  double lr = config_.learning_rate;
  if (config_.warmup_steps > 0 && step < config_.warmup_steps) {
    lr *= static_cast<double>(step + 1) / config_.warmup_steps;
  }
  if (config_.steps > 0) {
    const double progress = static_cast<double>(step) / config_.steps;
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
  }
  return lr;
}

double MomentumSgd::step(int step_index) {
  auto& params = store_.parameters();
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.tensor.requires_grad() && p.tensor.grad().size() > 0) {
      sq += p.tensor.grad().cast<double>().squaredNorm();
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = config_.grad_clip > 0.0 && norm > config_.grad_clip
                          ? config_.grad_clip / norm
                          : 1.0;
  const auto lr = static_cast<float>(learning_rate(step_index));
  const auto momentum = static_cast<float>(config_.momentum);
  const auto decay = static_cast<float>(config_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.requires_grad() || t.grad().size() == 0) continue;
    ag::Matrix g = t.grad() * static_cast<float>(clip);
    if (decay != 0.0f) g += decay * t.value();
    velocity_[i] = momentum * velocity_[i] + g;
    t.mutable_value() -= lr * velocity_[i];
    t.zero_grad();
  }
  return norm;
}

TrainResult train(UnlocModel& model, const Dataset& dataset, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.videos.empty()) throw InputError("training set is empty");
  if (dataset.task != model.config().task) {
    throw InputError("dataset task " + to_string(dataset.task) + " differs from the model's " +
                     to_string(model.config().task));
  }
  auto& store = model.parameters();
  apply_freeze_policy(store, config.freeze);
  const FrozenSnapshot frozen = snapshot_frozen(store);
  const bool image_frozen = config.freeze.image_encoder == EncoderState::Frozen;
  TextCache texts(model, config.freeze.text_encoder == EncoderState::Frozen);
  const losses::LossSettings settings = losses::settings_from(model.config());

  Rng rng(config.seed);
  BatchSampler sampler(dataset.videos.size(), rng);
  MomentumSgd optimizer(store, config.optimizer);
  store.zero_grad();

  // Detection losses are normalised by the positives of the whole batch, so
  // queries without positives do not each count as a full term.
  const bool per_batch = dataset.task != TaskKind::ActionSegmentation;
  TrainResult result;
  for (int step = 0; step < config.optimizer.steps; ++step) {
    std::vector<ag::Tensor> nodes;
    std::vector<losses::LossBreakdown> parts;
    for (int b = 0; b < config.optimizer.batch_size; ++b) {
      const VideoRecord& video = dataset.videos[sampler.next()];
      const TaskSample sample = sample_frames(video, dataset, config.sampling, rng);
      if (sample.texts.empty()) continue;
      const FrameTokens frames = model.encode_frames(sample.frames, image_frozen);
      const auto tokens = texts.get(sample);
      const auto outputs = model.forward(frames, tokens, sample.texts.size());
      for (std::size_t q = 0; q < outputs.size(); ++q) {
        losses::LossBreakdown part;
        nodes.push_back(loss_node(outputs[q], targets_for(sample, static_cast<int>(q), model.config()),
                                  settings, &part));
        parts.push_back(part);
      }
    }
    losses::LossBreakdown sum;
    if (!nodes.empty()) {
      int n_pos = 0;
      for (const auto& p : parts) n_pos += p.n_pos;
      std::vector<ag::Tensor> weighted;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double w = per_batch ? static_cast<double>(std::max(parts[i].n_pos, 1)) / std::max(n_pos, 1)
                                   : 1.0 / static_cast<double>(nodes.size());
        sum.cls_loss += w * parts[i].cls_loss;
        sum.reg_loss += w * parts[i].reg_loss;
        sum.total += w * parts[i].total;
        weighted.push_back(ag::scale(nodes[i], static_cast<float>(w)));
      }
      sum.n_pos = n_pos;
      check_finite(sum, step);
      ag::backward(ag::sum(ag::concat_rows(weighted)));
    }
    optimizer.step(step);
    result.curve.push_back(sum);
    if (options.on_step) options.on_step(step, sum);
  }
  verify_frozen(store, frozen);
  return result;
}

std::vector<double> clip_logits(const UnlocModel& model, const TaskSample& sample) {
  ag::NoGradGuard no_grad;
  const FrameTokens frames = model.encode_frames(sample.frames, true);
  const auto tokens = model.encode_texts(sample.texts, sample.task);
  const auto outputs = model.forward(frames, tokens, sample.texts.size());
  std::vector<double> out;
  const int valid = sample.valid_frames();
  for (const auto& q : outputs) {
    double s = 0.0;
    for (int i = 0; i < q.front().logits.rows(); ++i) {
      if (sample.frames.mask[static_cast<std::size_t>(i)]) s += q.front().logits.value()(i, 0);
    }
    out.push_back(s / std::max(valid, 1));
  }
  return out;
}

TrainResult pretrain_multilabel(UnlocModel& model, const Dataset& clips,
                                const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (clips.videos.empty()) throw InputError("pretraining set is empty");
  if (model.config().text_mode == TextMode::NoText) {
    throw ConfigError("pretraining scores class names and needs a text mode");
  }
  FreezePolicy policy = config.freeze;
  policy.text_encoder = EncoderState::Frozen;
  auto& store = model.parameters();
  apply_freeze_policy(store, policy);
  const FrozenSnapshot frozen = snapshot_frozen(store);
  const bool image_frozen = policy.image_encoder == EncoderState::Frozen;
  TextCache texts(model, true);

  Rng rng(config.seed);
  BatchSampler sampler(clips.videos.size(), rng);
  MomentumSgd optimizer(store, config.optimizer);
  store.zero_grad();
  TrainResult result;
  for (int step = 0; step < config.optimizer.steps; ++step) {
    std::vector<ag::Tensor> nodes;
    losses::LossBreakdown sum;
    for (int b = 0; b < config.optimizer.batch_size; ++b) {
      const VideoRecord& clip = clips.videos[sampler.next()];
      const TaskSample sample = sample_frames(clip, clips, config.sampling, rng);
      const FrameTokens frames = model.encode_frames(sample.frames, image_frozen);
      const auto tokens = texts.get(sample);
      const auto outputs = model.forward(frames, tokens, sample.texts.size());

      const int valid = std::max(sample.valid_frames(), 1);
      std::vector<float> weights(sample.frames.mask.size());
      for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] = sample.frames.mask[i] ? 1.0f / static_cast<float>(valid) : 0.0f;
      }
      std::vector<ag::Tensor> pooled;
      std::vector<double> logits, targets(outputs.size(), 0.0);
      for (const auto& q : outputs) {
        pooled.push_back(ag::weighted_sum_rows(q.front().logits, weights));
        logits.push_back(pooled.back().item());
      }
      for (const auto& g : sample.gts) targets.at(static_cast<std::size_t>(g.class_id)) = 1.0;
      std::vector<double> grad(logits.size());
      const double loss = losses::sigmoid_ce(logits, targets, {}, grad);
      ag::Matrix value(1, 1);
      value(0, 0) = static_cast<float>(loss);
      nodes.push_back(ag::make_result(std::move(value), pooled, [grad](ag::Node& self) {
        for (std::size_t c = 0; c < grad.size(); ++c) {
          ag::Matrix m(1, 1);
          m(0, 0) = static_cast<float>(self.grad(0, 0) * grad[c]);
          ag::accumulate(*self.parents[c], m);
        }
      }));
      sum.cls_loss += loss;
    }
    sum.cls_loss /= config.optimizer.batch_size;
    sum.total = sum.cls_loss;
    check_finite(sum, step);
    ag::backward(ag::scale(ag::sum(ag::concat_rows(nodes)),
                           1.0f / static_cast<float>(config.optimizer.batch_size)));
    optimizer.step(step);
    result.curve.push_back(sum);
    if (options.on_step) options.on_step(step, sum);
  }
  verify_frozen(store, frozen);
  return result;
}

void write_loss_curve(const std::filesystem::path& path,
                      const std::vector<losses::LossBreakdown>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,cls_loss,reg_loss,total\n";
  out.precision(9);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << i << ',' << curve[i].cls_loss << ',' << curve[i].reg_loss << ',' << curve[i].total
        << '\n';
  }
}

}  // namespace unloc
