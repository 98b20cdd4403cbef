#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unloc/model.hpp"

namespace unloc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Extra context stored next to the weights.
struct CheckpointInfo {
  std::vector<std::string> classes;
  TaskKind task = TaskKind::ActionLocalization;
};

/// "ULCK" container: version, metadata JSON (model config, vocabulary,
/// prompts, classes) and every named parameter array.
void save_checkpoint(const UnlocModel& model, const CheckpointInfo& info,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  UnlocModel model;
  CheckpointInfo info;
};

/// Throws FormatError on corrupt files and when the arrays do not match the
/// architecture described by the metadata.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter of `src` whose name and shape match one in `dst`.
/// Returns the number of arrays copied.
std::size_t copy_matching_parameters(nn::ParameterStore& dst, const nn::ParameterStore& src);

}  // namespace unloc
