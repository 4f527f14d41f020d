// Copyright 2026 The hdemg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HDEMG_PERSISTENCE_H_
#define HDEMG_PERSISTENCE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdemg/model.h"
#include "hdemg/preprocess.h"
#include "hdemg/training.h"

namespace hdemg {

// Weights file, little-endian:
//   "DBLW", u32 version,
//   architecture: u32 channels, hidden, layers, bidirectional, u32 count +
//     u32 dilations, u32 gestures, f64 dropout, u32 embedding_width,
//     use_embedding, embedding_rows,
//   u32 subject count, then (str subject, u32 row) pairs,
//   u32 tensor count, then per tensor (str name, u32 rank, u32 extents,
//     f32 values).
// Strings are u32 length + bytes. Normalization statistics travel as the
// tensors "stats.mu" and "stats.sigma".
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

// Checkpoint file: "DBCK", u32 version, u64 config hash, the architecture
// and subject table as above, then f64 tensors for parameters, best
// parameters, Adam moments and statistics, followed by the trainer
// counters, generator state and epoch history.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void SaveWeights(const TrainedModel& model, const std::filesystem::path& path);
// Report is empty; every tensor is marked trainable.
TrainedModel LoadWeights(const std::filesystem::path& path);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  ArchitectureConfig arch;
  std::vector<std::string> subjects;
  ChannelStats stats;
  TrainerState state;
};

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// With expected_hash set, a different stored hash is a LoadError.
Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          std::optional<std::uint64_t> expected_hash = std::nullopt);

}  // namespace hdemg

#endif  // HDEMG_PERSISTENCE_H_
