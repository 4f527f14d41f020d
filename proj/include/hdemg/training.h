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

#ifndef HDEMG_TRAINING_H_
#define HDEMG_TRAINING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hdemg/dataset.h"
#include "hdemg/model.h"
#include "hdemg/preprocess.h"
#include "hdemg/rng.h"

namespace hdemg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// First/second moment buffers shaped like the model tensors plus the shared
// step counter.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const ModelParameters& params);

  std::uint64_t step() const { return step_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_step(std::uint64_t s) { step_ = s; }

  friend bool operator==(const AdamState&, const AdamState&) = default;

 private:
  friend void AdamStep(ModelParameters&, std::span<const Tensor>, AdamState&, const AdamConfig&);
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

// One bias-corrected Adam update. Frozen tensors and frozen rows keep both
// their values and their moments. grads[i] must match params[i].
void AdamStep(ModelParameters& params, std::span<const Tensor> grads, AdamState& state,
              const AdamConfig& cfg);

enum class Regime {
  kSubjectSpecific,
  kPretrainGeneralized,
  kRetrainGeneralized,
  kTraditionalTlPretrain,
  kTraditionalTlRetrain,
};

std::string RegimeName(Regime r);
Regime ParseRegime(const std::string& s);

struct TrainPlan {
  Regime regime = Regime::kSubjectSpecific;
  std::size_t max_epochs = 200;
  std::optional<std::size_t> patience = 40;
  std::size_t batch_size = 64;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Windows per gradient shard. Shards may run on separate threads; their
  // gradients are summed in shard order, so results do not depend on the
  // thread count.
  std::size_t shard_size = 32;

  // 200 epochs with patience 40 for from-scratch and pre-training regimes,
  // 100 epochs without early stopping for retraining regimes.
  static TrainPlan ForRegime(Regime regime, std::uint64_t seed = 0);
  void Validate() const;
};

enum class StopReason { kMaxEpochs, kEarlyStop, kNoEpochs };
std::string StopReasonName(StopReason r);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  StopReason stop_reason = StopReason::kNoEpochs;
  double wall_seconds = 0.0;

  // "epoch,train_loss,val_acc" rows.
  std::string ToCsv() const;
  // Equality ignoring wall time.
  bool SameTrajectory(const TrainReport& other) const;
};

// Stratified (by label) holdout: (train indices, validation indices). Each
// label with at least two windows contributes max(1, round(fraction * n)).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> StratifiedHoldout(
    std::span<const std::size_t> labels, double fraction, std::uint64_t seed);

// Argmax predictions in inference mode. Embedding models read each window's
// subject row from the dataset unless subject_row overrides it.
std::vector<std::size_t> Predict(const ModelParameters& params, const ArchitectureConfig& arch,
                                 const WindowedDataset& data,
                                 std::optional<std::size_t> subject_row = std::nullopt,
                                 std::size_t batch_size = 64);

// Everything needed to continue a run bit-exactly.
struct TrainerState {
  ModelParameters params;
  AdamState adam;
  std::size_t epoch = 0;
  std::string rng_state;
  ModelParameters best_params;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  bool stopped = false;
  StopReason stop_reason = StopReason::kNoEpochs;
  std::vector<EpochRecord> history;
};

// Mini-batch Adam on cross-entropy with a stratified validation holdout,
// early stopping and best-weight restore.
class Trainer {
 public:
  Trainer(ArchitectureConfig arch, ModelParameters init, const WindowedDataset& data,
          TrainPlan plan);

  bool done() const;
  EpochRecord RunEpoch();
  // Runs until done, or at most `epochs` further epochs.
  void Run(std::optional<std::size_t> epochs = std::nullopt);

  const TrainerState& state() const { return state_; }
  void Restore(TrainerState state);

  // Best-validation weights (the initial ones if no epoch ran) and report.
  std::pair<ModelParameters, TrainReport> Finish() const;

  const WindowedDataset& train_set() const { return train_; }
  const WindowedDataset& validation_set() const { return validation_; }
  const TrainPlan& plan() const { return plan_; }
  const ArchitectureConfig& arch() const { return arch_; }

 private:
  // Mean loss over the batch; gradients written to grads.
  double BatchGradient(std::span<const std::size_t> batch, Rng& rng, std::vector<Tensor>& grads);

  ArchitectureConfig arch_;
  TrainPlan plan_;
  WindowedDataset train_;
  WindowedDataset validation_;
  TrainerState state_;
  double wall_seconds_ = 0.0;
};

// Trains params in place; returns the report.
TrainReport Train(ModelParameters& params, const ArchitectureConfig& arch,
                  const WindowedDataset& data, const TrainPlan& plan);

// Data handling shared by the regimes.
struct DataConfig {
  WindowConfig window;
  // Statistics over the phase-trimmed signal (true) or the full repetition.
  bool stats_on_phase = true;
};

// A trained network with what is needed to apply it to new recordings.
struct TrainedModel {
  ArchitectureConfig arch;
  ModelParameters params;
  // Embedding row r belongs to subjects[r]; empty without embedding.
  std::vector<std::string> subjects;
  ChannelStats stats;
  TrainReport report;

  std::size_t RowOf(const std::string& subject) const;
};

// Normalization statistics from reps, then phase-trimmed windows.
struct PreparedData {
  ChannelStats stats;
  WindowedDataset windows;
};
PreparedData PrepareTraining(std::span<const Repetition> reps, const DataConfig& cfg,
                             const SubjectRowFn& subject_row);
WindowedDataset PrepareEvaluation(std::span<const Repetition> reps, const ChannelStats& stats,
                                  const DataConfig& cfg, const SubjectRowFn& subject_row);

// Optional per-run hooks: after_epoch sees the trainer and the run's
// normalization statistics (e.g. to write checkpoints); resume restores a
// saved trainer state before the first epoch.
struct FitHooks {
  std::function<void(const Trainer&, const ChannelStats&)> after_epoch;
  const TrainerState* resume = nullptr;
};

// Fresh model without embedding on one subject's repetitions.
TrainedModel TrainSubjectSpecific(std::span<const Repetition> train, ArchitectureConfig arch,
                                  const DataConfig& data, const TrainPlan& plan,
                                  const FitHooks& hooks = {});

// Multi-subject model with one embedding row per subject, rows ordered by the
// sorted subject list. Every subject needs repetitions in train.
TrainedModel PretrainGeneralized(std::span<const Repetition> train,
                                 std::vector<std::string> subjects, ArchitectureConfig arch,
                                 const DataConfig& data, const TrainPlan& plan,
                                 const FitHooks& hooks = {});
// Loads repetitions {1,3,5} of the subjects from a manifest first.
TrainedModel PretrainGeneralized(const DatasetManifest& manifest,
                                 std::vector<std::string> subjects, int gesture_count,
                                 ArchitectureConfig arch, const DataConfig& data,
                                 const TrainPlan& plan);

// Copy of base with one more embedding row set to the column mean of the
// existing rows. Old rows are frozen; every other tensor is trainable.
ModelParameters ExtendEmbedding(const ModelParameters& base, ArchitectureConfig& arch);

// Subject-embedded transfer: starts from base plus the mean row and trains
// all shared tensors and the new row on the new subject.
TrainedModel RetrainOnNewSubject(const TrainedModel& base, const std::string& subject,
                                 std::span<const Repetition> train, const DataConfig& data,
                                 const TrainPlan& plan,
                                  const FitHooks& hooks = {});

// Multi-subject model without embedding (base of the frozen-layer baseline).
TrainedModel PretrainTraditionalTl(std::span<const Repetition> train, ArchitectureConfig arch,
                                   const DataConfig& data, const TrainPlan& plan,
                                  const FitHooks& hooks = {});

// Frozen-recurrent baseline: LSTM tensors frozen, FC1/FC2 retrained.
TrainedModel TraditionalTl(const TrainedModel& base, std::span<const Repetition> train,
                           const DataConfig& data, const TrainPlan& plan,
                                  const FitHooks& hooks = {});

}  // namespace hdemg

#endif  // HDEMG_TRAINING_H_
