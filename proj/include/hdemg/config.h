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

#ifndef HDEMG_CONFIG_H_
#define HDEMG_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hdemg/evaluation.h"
#include "hdemg/model.h"
#include "hdemg/synthetic.h"
#include "hdemg/training.h"

namespace hdemg {

struct TrainSettings {
  std::size_t batch_size = 64;
  double validation_fraction = 0.1;
  std::size_t shard_size = 32;
  AdamConfig adam;
  std::size_t pretrain_epochs = 200;
  std::optional<std::size_t> pretrain_patience = 40;
  std::size_t retrain_epochs = 100;
  std::optional<std::size_t> retrain_patience;
  std::size_t scratch_epochs = 200;
  std::optional<std::size_t> scratch_patience = 40;
  // Write a checkpoint every N epochs (0 = never).
  std::size_t checkpoint_every = 0;
};

// Everything a command needs. JSON layout (all sections and keys optional,
// unknown keys rejected):
//
//   {"dataset":    {"manifest": "data/manifest.json"},
//    "window":     {"window_ms", "stride_ms", "phase", "transient_s",
//                   "plateau_offset_s", "plateau_len_s", "stats_scope"},
//    "model":      {"variant", "channels", "hidden", "layers",
//                   "bidirectional", "dilations", "dropout",
//                   "embedding_width"},
//    "train":      {"batch_size", "validation_fraction", "shard_size", "lr",
//                   "beta1", "beta2", "epsilon", "pretrain_epochs",
//                   "pretrain_patience", "retrain_epochs", "retrain_patience",
//                   "scratch_epochs", "scratch_patience", "checkpoint_every"},
//    "experiment": {"regime", "pretrain_subjects", "subject", "fraction",
//                   "gesture_count", "seed", "fractions", "gesture_counts",
//                   "pretrain_counts", "eval_subjects", "regimes", "seeds"},
//    "synthetic":  {"n_subjects", "n_gestures", "reps_per_gesture", "fs",
//                   "rep_seconds", "channels", "latent_sources",
//                   "subject_mixing_scale", "noise_sigma", "amplitude_jitter",
//                   "envelope_min_hz", "envelope_max_hz", "seed"},
//    "output":     {"dir"}}
//
// Patience keys accept null for "no early stopping". Relative paths resolve
// against the config file's directory.
struct ExperimentConfig {
  std::filesystem::path manifest;
  DataConfig data;
  std::string variant = "d_bilstm";
  ArchitectureConfig arch;
  TrainSettings train;

  ProtocolRegime regime = ProtocolRegime::kGeneralized;
  std::vector<std::string> pretrain_subjects;
  std::string subject;
  int fraction = 100;
  int gesture_count = 0;  // first N gestures; 0 = all
  std::uint64_t seed = 0;

  std::vector<int> fractions{33, 67, 100};
  std::vector<int> gesture_counts;
  std::vector<std::size_t> pretrain_counts;
  std::vector<std::string> eval_subjects;
  std::vector<ProtocolRegime> regimes{ProtocolRegime::kSubjectSpecific,
                                      ProtocolRegime::kGeneralized,
                                      ProtocolRegime::kTraditionalTl};
  std::vector<std::uint64_t> seeds;  // empty = {seed}

  SyntheticSpec synthetic;
  std::filesystem::path output_dir = "out";

  // Plan for a regime using the epochs/patience of its family.
  TrainPlan Plan(Regime regime, std::uint64_t seed) const;
  ProtocolConfig Protocol() const;
  // Seed applied to every seeded component.
  void OverrideSeed(std::uint64_t s);
};

// Parses JSON text; `base_dir` anchors relative paths. Throws ParseError
// with the offending key path on malformed input, unknown keys or bad types.
ExperimentConfig ParseConfig(std::string_view text, const std::filesystem::path& base_dir = {},
                             const std::map<std::string, std::string>& overrides = {});
ExperimentConfig LoadConfig(const std::filesystem::path& path,
                            const std::map<std::string, std::string>& overrides = {});

// Canonical JSON of the resolved configuration (absolute paths).
std::string ConfigToJson(const ExperimentConfig& cfg);
// Hash of the canonical JSON without the output section.
std::uint64_t ConfigHash(const ExperimentConfig& cfg);

// Environment overrides: HDEMG_SET_<section>__<key>=<JSON value>, e.g.
// HDEMG_SET_train__batch_size=32. Returns "section.key" -> JSON text.
inline constexpr std::string_view kEnvOverridePrefix = "HDEMG_SET_";
std::map<std::string, std::string> EnvOverrides();

}  // namespace hdemg

#endif  // HDEMG_CONFIG_H_
