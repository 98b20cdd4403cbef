#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/data.hpp"
#include "unloc/losses.hpp"
#include "unloc/model.hpp"
#include "unloc/targets.hpp"

namespace unloc {

/// Targets of text `query` of a sample on the model's active levels.
TrainTargets targets_for(const TaskSample& sample, int query, const ModelConfig& config);

/// Scalar graph node whose value is the combined loss of one query and whose
/// backward pushes the analytic loss gradients into the head outputs.
ag::Tensor loss_node(const QueryOutput& outputs, const TrainTargets& targets,
                     const losses::LossSettings& settings, losses::LossBreakdown* breakdown);

/// Momentum SGD over every parameter that tracks gradients.
class MomentumSgd {
 public:
  MomentumSgd(nn::ParameterStore& store, const OptimizerConfig& config);

  /// Learning rate at `step`: linear warmup, then cosine decay to zero.
  double learning_rate(int step) const;
  /// Clips, applies and clears the accumulated gradients. Returns the
  /// pre-clip gradient norm.
  double step(int step_index);

 private:
  nn::ParameterStore& store_;
  OptimizerConfig config_;
  std::vector<ag::Matrix> velocity_;
};

struct TrainOptions {
  // Called after every optimizer step.
  std::function<void(int, const losses::LossBreakdown&)> on_step;
};

struct TrainResult {
  std::vector<losses::LossBreakdown> curve;  // one entry per step
};

/// Trains in place. Frozen groups are verified bit-identical afterwards
/// (ContractError otherwise); a non-finite loss raises DivergenceError.
TrainResult train(UnlocModel& model, const Dataset& dataset, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Clip-level multi-label pretraining: every class name is scored by the
/// mean level-0 relevancy logit over valid frames, against a one-hot target
/// under sigmoid cross entropy. The text encoder stays frozen.
TrainResult pretrain_multilabel(UnlocModel& model, const Dataset& clips,
                                const TrainConfig& config, const TrainOptions& options = {});

/// Clip-level logits (one per class name) for one sample, without gradients.
std::vector<double> clip_logits(const UnlocModel& model, const TaskSample& sample);

void write_loss_curve(const std::filesystem::path& path,
                      const std::vector<losses::LossBreakdown>& curve);

}  // namespace unloc
