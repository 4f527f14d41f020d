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

#ifndef HDEMG_PREPROCESS_H_
#define HDEMG_PREPROCESS_H_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hdemg/dataset.h"
#include "hdemg/tensor.h"

namespace hdemg {

// Per-channel z-score statistics pooled over every training sample and time
// step (population standard deviation).
struct ChannelStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::size_t n_values = 0;  // samples pooled per channel

  std::size_t channels() const { return mu.size(); }
};

// Standard deviations below this are treated as this value.
inline constexpr double kSigmaFloor = 1e-8;

enum class Phase { kTransient, kPlateau };

struct WindowConfig {
  double window_ms = 200.0;
  double stride_ms = 10.0;
  Phase phase = Phase::kTransient;
  double transient_s = 0.5;
  double plateau_offset_s = 0.5;
  double plateau_len_s = 3.0;

  // floor(ms / 1000 * fs); ContractError if that is zero.
  std::size_t WindowSamples(double fs_hz) const;
  std::size_t StrideSamples(double fs_hz) const;
  void Validate() const;
};

std::string PhaseName(Phase p);
Phase ParsePhase(const std::string& s);

// Throws ContractError for an empty set or any repetition tagged as test
// data.
ChannelStats ComputeStats(std::span<const Repetition> train);

// (x - mu) / max(sigma, kSigmaFloor), per channel.
Repetition ZScore(const Repetition& rep, const ChannelStats& stats);

// Transient: samples [0, transient_s*fs). Plateau: samples
// [plateau_offset_s*fs, (plateau_offset_s + plateau_len_s)*fs).
Repetition ExtractPhase(const Repetition& rep, const WindowConfig& cfg);

// floor((T - W) / s) + 1 windows starting at 0, s, 2s, ...
std::size_t WindowCount(std::size_t samples, std::size_t window, std::size_t stride);
std::vector<SignalTensor> Window(const Repetition& rep, const WindowConfig& cfg);

// Normalized windows with labels and embedding rows. Windows are stored as
// (source, start) references into the normalized repetitions; Materialize()
// produces the dense N x W x C tensor.
class WindowedDataset {
 public:
  struct Ref {
    std::size_t source = 0;
    std::size_t start = 0;
  };

  WindowedDataset() = default;
  WindowedDataset(std::size_t window_len, std::size_t channels)
      : window_len_(window_len), channels_(channels) {}

  // Appends every window of rep. Returns the number added.
  std::size_t AddRepetition(Repetition rep, std::size_t stride, std::size_t subject_row);

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  std::size_t window_len() const { return window_len_; }
  std::size_t channels() const { return channels_; }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  std::size_t subject_row(std::size_t i) const { return subject_rows_[i]; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::size_t>& subject_rows() const { return subject_rows_; }
  const Ref& ref(std::size_t i) const { return refs_[i]; }
  const Repetition& source(std::size_t i) const { return (*sources_)[i]; }
  std::size_t source_count() const { return sources_->size(); }

  // W x C copy of window i.
  SignalTensor WindowAt(std::size_t i) const;
  SignalTensor Materialize() const;
  // Time-major (W*B) x C batch of the given windows, row t*B + b.
  Tensor AssembleTimeMajor(std::span<const std::size_t> indices) const;

  // Subset sharing the same sources.
  WindowedDataset Select(std::span<const std::size_t> indices) const;

 private:
  std::size_t window_len_ = 0;
  std::size_t channels_ = 0;
  // Shared between a dataset and the subsets selected from it.
  std::shared_ptr<std::vector<Repetition>> sources_ = std::make_shared<std::vector<Repetition>>();
  std::vector<Ref> refs_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> subject_rows_;
};

// Subject id -> embedding row (0 for models without embedding).
using SubjectRowFn = std::function<std::size_t(const std::string& subject)>;

// Normalizes each repetition with stats and windows it.
WindowedDataset BuildWindows(std::span<const Repetition> reps, const ChannelStats& stats,
                             const WindowConfig& cfg, const SubjectRowFn& subject_row);

}  // namespace hdemg

#endif  // HDEMG_PREPROCESS_H_
