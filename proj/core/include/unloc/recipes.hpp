#pragma once

#include "unloc/config.hpp"
#include "unloc/data.hpp"

namespace unloc {

/// Desk-scale defaults per task.
TrainConfig default_train_config(TaskKind task);
SyntheticSpec default_synthetic_spec(TaskKind task);

/// Copies dataset-derived settings (task, raw width, class count) into the
/// model config and collapses the pyramid to one level for style none.
void fit_to_dataset(TrainConfig& config, const Dataset& dataset);

}  // namespace unloc
