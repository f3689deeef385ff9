#pragma once

#include <filesystem>

#include "uuconv/training.hpp"

namespace uuconv {

// Binary checkpoint:
//   magic "UUCKPT01" | u32 format version | model config JSON |
//   train config JSON | per parameter: name, value/m/v tensors (raw tensor
//   format), per-parameter step count | counters | RNG state.
// Deterministic serialization: save -> load -> save is byte-identical.
inline constexpr char kCheckpointMagic[8] = {'U', 'U', 'C', 'K',
                                             'P', 'T', '0', '1'};

void save_checkpoint(const std::filesystem::path& path,
                     const TrainState& state, const TrainConfig& train_config);

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig train_config;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uuconv
