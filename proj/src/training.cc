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

#include "hdemg/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>
#include <tuple>

#include "hdemg/errors.h"

namespace hdemg {

AdamState::AdamState(const ModelParameters& params) {
  for (const auto& t : params) {
    m_.emplace_back(t.value.shape());
    v_.emplace_back(t.value.shape());
  }
}

void AdamStep(ModelParameters& params, std::span<const Tensor> grads, AdamState& state,
              const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m_.size() != params.size()) {
    throw ContractError("gradient list does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.m_[i].shape() != grads[i].shape()) {
      throw ContractError("gradient shape mismatch for " + params[i].name);
    }
  }
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParameterTensor& p = params[i];
    if (p.TrainableCount() == 0) continue;
    const Tensor& g = grads[i];
    Tensor& m = state.m_[i];
    Tensor& v = state.v_[i];
    const std::size_t rows = p.value.dim(0);
    const std::size_t cols = p.value.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!p.RowTrainable(r)) continue;
      for (std::size_t c = r * cols; c < (r + 1) * cols; ++c) {
        m[c] = cfg.beta1 * m[c] + (1.0 - cfg.beta1) * g[c];
        v[c] = cfg.beta2 * v[c] + (1.0 - cfg.beta2) * g[c] * g[c];
        const double mhat = m[c] / bc1;
        const double vhat = v[c] / bc2;
        p.value[c] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
  }
}

std::string RegimeName(Regime r) {
  switch (r) {
    case Regime::kSubjectSpecific: return "subject_specific";
    case Regime::kPretrainGeneralized: return "pretrain_generalized";
    case Regime::kRetrainGeneralized: return "retrain_generalized";
    case Regime::kTraditionalTlPretrain: return "traditional_tl_pretrain";
    case Regime::kTraditionalTlRetrain: return "traditional_tl_retrain";
  }
  return "unknown";
}

Regime ParseRegime(const std::string& s) {
  for (Regime r : {Regime::kSubjectSpecific, Regime::kPretrainGeneralized,
                   Regime::kRetrainGeneralized, Regime::kTraditionalTlPretrain,
                   Regime::kTraditionalTlRetrain}) {
    if (RegimeName(r) == s) return r;
  }
  throw ParseError("unknown regime '" + s + "'");
}

TrainPlan TrainPlan::ForRegime(Regime regime, std::uint64_t seed) {
  TrainPlan p;
  p.regime = regime;
  p.seed = seed;
  if (regime == Regime::kRetrainGeneralized || regime == Regime::kTraditionalTlRetrain) {
    p.max_epochs = 100;
    p.patience.reset();
  }
  return p;
}

void TrainPlan::Validate() const {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (shard_size == 0) throw ContractError("shard size must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation fraction must be in (0, 1)");
  }
  if (patience && *patience == 0) throw ContractError("patience must be positive");
}

std::string StopReasonName(StopReason r) {
  switch (r) {
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kEarlyStop: return "early_stop";
    case StopReason::kNoEpochs: return "no_epochs";
  }
  return "unknown";
}

std::string TrainReport::ToCsv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_acc\n";
  for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_acc << '\n';
  return os.str();
}

bool TrainReport::SameTrajectory(const TrainReport& o) const {
  return epochs == o.epochs && best_epoch == o.best_epoch && best_val_acc == o.best_val_acc &&
         stop_reason == o.stop_reason;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> StratifiedHoldout(
    std::span<const std::size_t> labels, double fraction, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  Rng rng(DeriveSeed(seed, "validation"));
  std::vector<std::size_t> train, val;
  for (auto& [label, idx] : by_label) {
    rng.Shuffle(idx);
    std::size_t n_val = 0;
    if (idx.size() >= 2) {
      n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
      n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    }
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

namespace {

// Runs fn(i) for i in [0, n) on the OpenMP team, rethrowing the first
// exception on the calling thread.
template <typename Fn>
void ParallelFor(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(hdemg_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> RowsFor(const ArchitectureConfig& arch, const WindowedDataset& data,
                                 std::span<const std::size_t> idx,
                                 std::optional<std::size_t> override_row) {
  if (!arch.use_embedding) return {};
  std::vector<std::size_t> rows;
  rows.reserve(idx.size());
  for (std::size_t i : idx) rows.push_back(override_row ? *override_row : data.subject_row(i));
  return rows;
}

}  // namespace

std::vector<std::size_t> Predict(const ModelParameters& params, const ArchitectureConfig& arch,
                                 const WindowedDataset& data,
                                 std::optional<std::size_t> subject_row, std::size_t batch_size) {
  if (data.empty()) throw ContractError("prediction on an empty dataset");
  const std::size_t n = data.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<std::size_t> pred(n);
  ParallelFor(batches, [&](std::size_t bi) {
    const std::size_t lo = bi * batch_size, hi = std::min(n, lo + batch_size);
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
    Graph g;
    const BoundModel model = BoundModel::Bind(g, params);
    ForwardMode mode;
    mode.subject_rows = RowsFor(arch, data, idx, subject_row);
    const Var logits = BuildLogits(g, model, arch, g.Constant(data.AssembleTimeMajor(idx)),
                                   data.window_len(), idx.size(), mode);
    const Tensor& lv = g.value(logits);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* row = lv.data() + r * lv.cols();
      pred[lo + r] = static_cast<std::size_t>(std::max_element(row, row + lv.cols()) - row);
    }
  });
  return pred;
}

namespace {

double AccuracyOf(const ModelParameters& params, const ArchitectureConfig& arch,
                  const WindowedDataset& data, std::size_t batch_size) {
  const auto pred = Predict(params, arch, data, std::nullopt, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.label(i);
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace

Trainer::Trainer(ArchitectureConfig arch, ModelParameters init, const WindowedDataset& data,
                 TrainPlan plan)
    : arch_(std::move(arch)), plan_(std::move(plan)) {
  arch_.Validate();
  plan_.Validate();
  CheckParamsMatch(init, arch_);
  if (data.empty()) throw ContractError("training data is empty");
  if (data.channels() != arch_.channels) {
    throw DimensionError("data has " + std::to_string(data.channels()) + " channels, model expects " +
                         std::to_string(arch_.channels));
  }
  for (std::size_t l : data.labels()) {
    if (l >= arch_.gestures) throw IndexError("label " + std::to_string(l) + " outside model classes");
  }
  auto [train_idx, val_idx] = StratifiedHoldout(data.labels(), plan_.validation_fraction, plan_.seed);
  if (val_idx.empty()) throw ContractError("validation split is empty");
  if (train_idx.empty()) throw ContractError("training split is empty");
  train_ = data.Select(train_idx);
  validation_ = data.Select(val_idx);

  state_.adam = AdamState(init);
  state_.best_params = init;
  state_.params = std::move(init);
  state_.rng_state = Rng(DeriveSeed(plan_.seed, "epochs")).SaveState();
  if (plan_.max_epochs == 0) {
    state_.stopped = true;
    state_.stop_reason = StopReason::kNoEpochs;
  }
}

bool Trainer::done() const { return state_.stopped; }

void Trainer::Restore(TrainerState state) {
  CheckParamsMatch(state.params, arch_);
  CheckParamsMatch(state.best_params, arch_);
  // Trainability flags come from the live run; checkpoints carry values only.
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    state.params[i].trainable = state_.params[i].trainable;
    state.params[i].row_trainable = state_.params[i].row_trainable;
  }
  state_ = std::move(state);
}

double Trainer::BatchGradient(std::span<const std::size_t> batch, Rng& rng,
                              std::vector<Tensor>& grads) {
  const std::size_t shards = (batch.size() + plan_.shard_size - 1) / plan_.shard_size;
  // Shard seeds are drawn up front so dropout masks do not depend on thread
  // scheduling.
  std::vector<std::uint64_t> shard_seeds(shards);
  for (auto& s : shard_seeds) s = rng.NextU64();
  std::vector<std::vector<Tensor>> shard_grads(shards);
  std::vector<double> shard_loss(shards);
  const double total = static_cast<double>(batch.size());

  ParallelFor(shards, [&](std::size_t s) {
    const std::size_t lo = s * plan_.shard_size;
    const std::size_t hi = std::min(batch.size(), lo + plan_.shard_size);
    const std::span<const std::size_t> idx = batch.subspan(lo, hi - lo);
    Rng shard_rng(shard_seeds[s]);
    Graph g;
    const BoundModel model = BoundModel::Bind(g, state_.params);
    ForwardMode mode;
    mode.training = true;
    mode.dropout_rng = &shard_rng;
    mode.subject_rows = RowsFor(arch_, train_, idx, std::nullopt);
    const Var logits = BuildLogits(g, model, arch_, g.Constant(train_.AssembleTimeMajor(idx)),
                                   train_.window_len(), idx.size(), mode);
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_.label(idx[i]);
    const Var loss = g.SoftmaxCrossEntropy(logits, std::move(labels));
    g.Backward(loss);
    const double weight = static_cast<double>(idx.size()) / total;
    shard_loss[s] = g.value(loss)[0] * weight;
    auto& out = shard_grads[s];
    out.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
      Tensor gi = g.grad(model[i]);
      if (weight != 1.0) {
        for (double& v : gi.values()) v *= weight;
      }
      out.push_back(std::move(gi));
    }
  });

  grads = std::move(shard_grads[0]);
  double loss = shard_loss[0];
  for (std::size_t s = 1; s < shards; ++s) {
    loss += shard_loss[s];
    for (std::size_t i = 0; i < grads.size(); ++i) {
      double* dst = grads[i].data();
      const double* src = shard_grads[s][i].data();
      for (std::size_t k = 0; k < grads[i].size(); ++k) dst[k] += src[k];
    }
  }
  return loss;
}

EpochRecord Trainer::RunEpoch() {
  if (done()) throw ContractError("training already finished");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng;
  rng.LoadState(state_.rng_state);

  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.Shuffle(order);

  double loss_sum = 0.0;
  std::vector<Tensor> grads;
  for (std::size_t lo = 0; lo < order.size(); lo += plan_.batch_size) {
    const std::size_t hi = std::min(order.size(), lo + plan_.batch_size);
    const std::span<const std::size_t> batch(order.data() + lo, hi - lo);
    const double loss = BatchGradient(batch, rng, grads);
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(state_.epoch + 1));
    }
    loss_sum += loss * static_cast<double>(batch.size());
    AdamStep(state_.params, grads, state_.adam, plan_.adam);
  }

  state_.epoch += 1;
  EpochRecord rec;
  rec.epoch = state_.epoch;
  rec.train_loss = loss_sum / static_cast<double>(order.size());
  rec.val_acc = AccuracyOf(state_.params, arch_, validation_, plan_.batch_size);
  state_.history.push_back(rec);
  state_.rng_state = rng.SaveState();

  if (rec.val_acc > state_.best_val_acc) {
    state_.best_val_acc = rec.val_acc;
    state_.best_epoch = rec.epoch;
    state_.best_params = state_.params;
    state_.since_best = 0;
  } else {
    state_.since_best += 1;
  }
  if (plan_.patience && state_.since_best >= *plan_.patience) {
    state_.stopped = true;
    state_.stop_reason = StopReason::kEarlyStop;
  } else if (state_.epoch >= plan_.max_epochs) {
    state_.stopped = true;
    state_.stop_reason = StopReason::kMaxEpochs;
  }
  wall_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void Trainer::Run(std::optional<std::size_t> epochs) {
  std::size_t ran = 0;
  while (!done() && (!epochs || ran < *epochs)) {
    RunEpoch();
    ++ran;
  }
}

std::pair<ModelParameters, TrainReport> Trainer::Finish() const {
  TrainReport report;
  report.epochs = state_.history;
  report.best_epoch = state_.best_epoch;
  report.best_val_acc = state_.best_val_acc < 0 ? 0.0 : state_.best_val_acc;
  report.stop_reason = state_.stop_reason;
  report.wall_seconds = wall_seconds_;
  ModelParameters out = state_.history.empty() ? state_.params : state_.best_params;
  // Keep the trainability flags of the run.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].trainable = state_.params[i].trainable;
    out[i].row_trainable = state_.params[i].row_trainable;
  }
  return {std::move(out), std::move(report)};
}

TrainReport Train(ModelParameters& params, const ArchitectureConfig& arch,
                  const WindowedDataset& data, const TrainPlan& plan) {
  Trainer trainer(arch, params, data, plan);
  trainer.Run();
  auto [best, report] = trainer.Finish();
  params = std::move(best);
  return report;
}

std::size_t TrainedModel::RowOf(const std::string& subject) const {
  const auto it = std::find(subjects.begin(), subjects.end(), subject);
  if (it == subjects.end()) throw IndexError("subject '" + subject + "' has no embedding row");
  return static_cast<std::size_t>(it - subjects.begin());
}

PreparedData PrepareTraining(std::span<const Repetition> reps, const DataConfig& cfg,
                             const SubjectRowFn& subject_row) {
  if (reps.empty()) throw ContractError("no training repetitions");
  cfg.window.Validate();
  std::vector<Repetition> trimmed;
  trimmed.reserve(reps.size());
  for (const auto& r : reps) trimmed.push_back(ExtractPhase(r, cfg.window));
  PreparedData out;
  out.stats = cfg.stats_on_phase ? ComputeStats(trimmed) : ComputeStats(reps);
  out.windows = BuildWindows(trimmed, out.stats, cfg.window, subject_row);
  return out;
}

WindowedDataset PrepareEvaluation(std::span<const Repetition> reps, const ChannelStats& stats,
                                  const DataConfig& cfg, const SubjectRowFn& subject_row) {
  if (reps.empty()) throw ContractError("no evaluation repetitions");
  std::vector<Repetition> trimmed;
  trimmed.reserve(reps.size());
  for (const auto& r : reps) trimmed.push_back(ExtractPhase(r, cfg.window));
  return BuildWindows(trimmed, stats, cfg.window, subject_row);
}

namespace {

void CheckLabels(std::span<const Repetition> reps, const ArchitectureConfig& arch) {
  for (const auto& r : reps) {
    if (r.gesture_id < 0 || static_cast<std::size_t>(r.gesture_id) >= arch.gestures) {
      throw DataError("gesture " + std::to_string(r.gesture_id) + " outside the model's " +
                      std::to_string(arch.gestures) + " classes");
    }
  }
}

TrainedModel Fit(ArchitectureConfig arch, ModelParameters init, std::vector<std::string> subjects,
                 std::span<const Repetition> train, const DataConfig& data, const TrainPlan& plan,
                 const SubjectRowFn& rows, const FitHooks& hooks) {
  CheckLabels(train, arch);
  PreparedData prepared = PrepareTraining(train, data, rows);
  Trainer trainer(arch, std::move(init), prepared.windows, plan);
  if (hooks.resume) trainer.Restore(*hooks.resume);
  while (!trainer.done()) {
    trainer.RunEpoch();
    if (hooks.after_epoch) hooks.after_epoch(trainer, prepared.stats);
  }
  TrainedModel out;
  out.arch = std::move(arch);
  out.subjects = std::move(subjects);
  out.stats = std::move(prepared.stats);
  std::tie(out.params, out.report) = trainer.Finish();
  return out;
}

}  // namespace

TrainedModel TrainSubjectSpecific(std::span<const Repetition> train, ArchitectureConfig arch,
                                  const DataConfig& data, const TrainPlan& plan, const FitHooks& hooks) {
  if (train.empty()) throw ContractError("no training repetitions");
  arch.use_embedding = false;
  arch.embedding_rows = 0;
  ModelParameters init = InitModel(arch, DeriveSeed(plan.seed, "init"));
  return Fit(std::move(arch), std::move(init), {}, train, data, plan, {}, hooks);
}

TrainedModel PretrainGeneralized(std::span<const Repetition> train,
                                 std::vector<std::string> subjects, ArchitectureConfig arch,
                                 const DataConfig& data, const TrainPlan& plan, const FitHooks& hooks) {
  if (subjects.empty()) throw ContractError("no pre-training subjects");
  std::sort(subjects.begin(), subjects.end());
  if (std::adjacent_find(subjects.begin(), subjects.end()) != subjects.end()) {
    throw ContractError("duplicate pre-training subject");
  }
  for (const auto& s : subjects) {
    if (std::none_of(train.begin(), train.end(),
                     [&](const Repetition& r) { return r.subject_id == s; })) {
      throw DataError("pre-training subject '" + s + "' has no training repetitions");
    }
  }
  arch.use_embedding = true;
  arch.embedding_rows = subjects.size();
  ModelParameters init = InitModel(arch, DeriveSeed(plan.seed, "init"));
  const auto rows = [&subjects](const std::string& s) -> std::size_t {
    const auto it = std::lower_bound(subjects.begin(), subjects.end(), s);
    if (it == subjects.end() || *it != s) throw DataError("repetition of unknown subject '" + s + "'");
    return static_cast<std::size_t>(it - subjects.begin());
  };
  return Fit(std::move(arch), std::move(init), subjects, train, data, plan, rows, hooks);
}

TrainedModel PretrainGeneralized(const DatasetManifest& manifest,
                                 std::vector<std::string> subjects, int gesture_count,
                                 ArchitectureConfig arch, const DataConfig& data,
                                 const TrainPlan& plan) {
  const Split split = MakeSplit(manifest, SplitPlan{}, SplitFilter{subjects, gesture_count}, {},
                                /*load_test=*/false);
  return PretrainGeneralized(split.train, std::move(subjects), std::move(arch), data, plan);
}

ModelParameters ExtendEmbedding(const ModelParameters& base, ArchitectureConfig& arch) {
  if (!arch.use_embedding || !base.contains("embedding")) {
    throw ContractError("base model has no subject embedding to extend");
  }
  CheckParamsMatch(base, arch);
  const Tensor& old = base.at("embedding").value;
  const std::size_t rows = old.rows(), width = old.cols();
  Tensor extended({rows + 1, width});
  std::copy_n(old.data(), old.size(), extended.data());
  for (std::size_t c = 0; c < width; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += old.at(r, c);
    extended.at(rows, c) = s / static_cast<double>(rows);
  }
  ModelParameters out = base;
  out.SetAllTrainable(true);
  ParameterTensor& emb = out.at("embedding");
  emb.value = std::move(extended);
  emb.row_trainable.assign(rows + 1, false);
  emb.row_trainable[rows] = true;
  arch.embedding_rows = rows + 1;
  return out;
}

TrainedModel RetrainOnNewSubject(const TrainedModel& base, const std::string& subject,
                                 std::span<const Repetition> train, const DataConfig& data,
                                 const TrainPlan& plan, const FitHooks& hooks) {
  if (train.empty()) throw ContractError("no retraining repetitions");
  if (base.subjects.size() != base.arch.embedding_rows) {
    throw ContractError("base model subject table does not match its embedding");
  }
  if (std::find(base.subjects.begin(), base.subjects.end(), subject) != base.subjects.end()) {
    throw ContractError("subject '" + subject + "' already has an embedding row");
  }
  ArchitectureConfig arch = base.arch;
  ModelParameters init = ExtendEmbedding(base.params, arch);
  std::vector<std::string> subjects = base.subjects;
  subjects.push_back(subject);
  const std::size_t row = subjects.size() - 1;
  for (const auto& r : train) {
    if (r.subject_id != subject) throw DataError("retraining data mixes subjects");
  }
  return Fit(std::move(arch), std::move(init), std::move(subjects), train, data, plan,
             [row](const std::string&) { return row; }, hooks);
}

TrainedModel PretrainTraditionalTl(std::span<const Repetition> train, ArchitectureConfig arch,
                                   const DataConfig& data, const TrainPlan& plan, const FitHooks& hooks) {
  if (train.empty()) throw ContractError("no training repetitions");
  arch.use_embedding = false;
  arch.embedding_rows = 0;
  ModelParameters init = InitModel(arch, DeriveSeed(plan.seed, "init"));
  return Fit(std::move(arch), std::move(init), {}, train, data, plan, {}, hooks);
}

TrainedModel TraditionalTl(const TrainedModel& base, std::span<const Repetition> train,
                           const DataConfig& data, const TrainPlan& plan, const FitHooks& hooks) {
  if (train.empty()) throw ContractError("no retraining repetitions");
  if (base.arch.use_embedding) throw ContractError("frozen-layer transfer expects a model without embedding");
  CheckParamsMatch(base.params, base.arch);
  ModelParameters init = base.params;
  for (auto& t : init) {
    t.row_trainable.clear();
    t.trainable = t.name.starts_with("fc");
  }
  return Fit(base.arch, std::move(init), {}, train, data, plan, {}, hooks);
}

}  // namespace hdemg
