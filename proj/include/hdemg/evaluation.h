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

#ifndef HDEMG_EVALUATION_H_
#define HDEMG_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdemg/dataset.h"
#include "hdemg/model.h"
#include "hdemg/preprocess.h"
#include "hdemg/training.h"

namespace hdemg {

// Published mean generalized accuracy for 65 gestures, five pre-training
// subjects and full retraining data. Only reachable with the original
// recordings; used to annotate reports.
inline constexpr double kReferenceGeneralizedAccuracy = 0.7322;

struct GestureTally {
  std::size_t n_windows = 0;
  std::size_t n_correct = 0;
};

struct EvalResult {
  std::string subject_id;
  std::string regime;
  int data_fraction = 100;
  int gestures = 0;
  std::size_t pretrain_count = 0;
  std::uint64_t seed = 0;
  std::size_t n_windows = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;  // n_correct / n_windows
  std::map<std::size_t, GestureTally> per_gesture;
};

// Window-level argmax accuracy with dropout disabled. Throws ContractError
// for an empty test set.
EvalResult Evaluate(const ModelParameters& params, const ArchitectureConfig& arch,
                    const WindowedDataset& test, std::optional<std::size_t> subject_row = std::nullopt);

// Phase-trims, normalizes with the model's statistics and evaluates. Embedding
// models use the subject's row.
EvalResult EvaluateModel(const TrainedModel& model, std::span<const Repetition> test,
                         const DataConfig& data, const std::string& subject);

// Tally from predictions and labels (exposed for oracle models in tests).
EvalResult TallyPredictions(std::span<const std::size_t> predictions,
                            std::span<const std::size_t> labels);

struct WilcoxonResult {
  std::size_t n = 0;         // pairs with nonzero difference
  double w_plus = 0.0;       // rank sum of positive differences
  double w_minus = 0.0;
  double statistic = 0.0;    // min(w_plus, w_minus)
  double p_value = 1.0;      // two-sided
  bool exact = false;
  bool reject = false;       // p_value < alpha
};

// Two-sided signed-rank test on a - b. Zero differences are dropped and
// tied magnitudes share average ranks. n <= 25 uses the exact permutation
// distribution; larger n the tie-corrected normal approximation.
// Throws ContractError for fewer than 5 pairs or mismatched lengths and
// DegenerateError when every difference is zero.
WilcoxonResult WilcoxonSignedRank(std::span<const double> a, std::span<const double> b,
                                  double alpha = 0.05);

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

// Two-sided exact p-value 2 * P(W+ <= w) under random signs, capped at 1.
// Ranks are given doubled so tied (half-integer) ranks stay integral.
double SignedRankExactP(std::span<const std::uint32_t> doubled_ranks, std::uint64_t doubled_w);

// Centered moving average; the window shrinks at the ends.
std::vector<double> MovingAverage(std::span<const double> y, std::size_t window = 3);

enum class ProtocolRegime { kSubjectSpecific, kGeneralized, kTraditionalTl };
std::string ProtocolRegimeName(ProtocolRegime r);
ProtocolRegime ParseProtocolRegime(const std::string& s);

struct ProtocolConfig {
  std::vector<std::string> pretrain_subjects;
  // Pre-train on the first k pretrain_subjects for each k; empty = all.
  std::vector<std::size_t> pretrain_counts;
  // Held-out subjects to evaluate; empty = every manifest subject outside
  // pretrain_subjects.
  std::vector<std::string> eval_subjects;
  // First G gesture ids; empty = all manifest gestures.
  std::vector<int> gesture_counts;
  std::vector<int> fractions{33, 67, 100};
  std::vector<ProtocolRegime> regimes{ProtocolRegime::kSubjectSpecific,
                                      ProtocolRegime::kGeneralized,
                                      ProtocolRegime::kTraditionalTl};
  std::vector<std::uint64_t> seeds{0};

  ArchitectureConfig arch;  // gestures and embedding are set per cell
  DataConfig data;
  // Templates; regime and seed are filled in per cell.
  TrainPlan pretrain_plan = TrainPlan::ForRegime(Regime::kPretrainGeneralized);
  TrainPlan retrain_plan = TrainPlan::ForRegime(Regime::kRetrainGeneralized);
  TrainPlan scratch_plan = TrainPlan::ForRegime(Regime::kSubjectSpecific);

  void Validate() const;
};

struct CellKey {
  std::size_t pretrain_count = 0;
  int gestures = 0;
  int fraction = 100;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct ComparisonRow {
  CellKey key;
  std::map<std::string, double> mean_accuracy;  // regime -> mean
  std::map<std::string, std::size_t> n_results;
};

// Per-subject results of a protocol run; aggregate views are recomputed
// from them on demand.
class ComparisonTable {
 public:
  void Add(EvalResult r) { results_.push_back(std::move(r)); }
  const std::vector<EvalResult>& results() const { return results_; }

  std::vector<ComparisonRow> Rows() const;
  // Arithmetic mean over the matching results; NaN if none.
  double Mean(const CellKey& key, const std::string& regime) const;
  // Per-subject accuracy averaged over seeds, keyed by subject.
  std::map<std::string, double> SubjectMeans(const CellKey& key, const std::string& regime) const;

  // One line per EvalResult.
  std::string ResultsCsv() const;
  // One line per cell with a column per regime.
  std::string TableCsv() const;
  // Human- and machine-readable "key: value" report with signed-rank tests
  // of generalized against the other regimes where enough pairs exist.
  std::string Summary() const;
  // accuracy_vs_fraction.dat, accuracy_vs_pretrain.dat, per_subject.dat.
  void WritePlotData(const std::filesystem::path& dir) const;

 private:
  std::vector<EvalResult> results_;
};

using ProtocolProgress = std::function<void(const std::string& message)>;

// Pre-trains per (seed, pretrain count, gesture count), then retrains or
// trains from scratch per held-out subject and fraction, evaluating on
// repetitions {2, 4}.
ComparisonTable RunProtocol(const DatasetManifest& manifest, const ProtocolConfig& protocol,
                            const ProtocolProgress& progress = {});

}  // namespace hdemg

#endif  // HDEMG_EVALUATION_H_
