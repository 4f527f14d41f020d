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

#include "hdemg/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "hdemg/errors.h"
#include "hdemg/rng.h"

namespace hdemg {

EvalResult TallyPredictions(std::span<const std::size_t> predictions,
                            std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw ContractError("prediction/label count mismatch");
  if (labels.empty()) throw ContractError("empty test set");
  EvalResult r;
  r.n_windows = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    GestureTally& g = r.per_gesture[labels[i]];
    g.n_windows += 1;
    if (predictions[i] == labels[i]) {
      g.n_correct += 1;
      r.n_correct += 1;
    }
  }
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_windows);
  return r;
}

EvalResult Evaluate(const ModelParameters& params, const ArchitectureConfig& arch,
                    const WindowedDataset& test, std::optional<std::size_t> subject_row) {
  if (test.empty()) throw ContractError("empty test set");
  const auto pred = Predict(params, arch, test, subject_row);
  return TallyPredictions(pred, test.labels());
}

EvalResult EvaluateModel(const TrainedModel& model, std::span<const Repetition> test,
                         const DataConfig& data, const std::string& subject) {
  if (test.empty()) throw ContractError("empty test set");
  std::optional<std::size_t> row;
  if (model.arch.use_embedding) row = model.RowOf(subject);
  const WindowedDataset windows = PrepareEvaluation(test, model.stats, data, {});
  EvalResult r = Evaluate(model.params, model.arch, windows, row);
  r.subject_id = subject;
  return r;
}

double SignedRankExactP(std::span<const std::uint32_t> doubled_ranks, std::uint64_t doubled_w) {
  const std::uint64_t total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(),
                                              std::uint64_t{0});
  // counts[s]: sign patterns whose positive doubled-rank sum is s.
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  std::uint64_t reach = 0;
  for (std::uint32_t r : doubled_ranks) {
    reach += r;
    for (std::uint64_t s = reach; s >= r; --s) {
      counts[s] += counts[s - r];
      if (s == r) break;
    }
  }
  double below = 0.0;
  for (std::uint64_t s = 0; s <= std::min(doubled_w, total); ++s) below += counts[s];
  const double p = 2.0 * below / std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
  return std::min(1.0, p);
}

WilcoxonResult WilcoxonSignedRank(std::span<const double> a, std::span<const double> b,
                                  double alpha) {
  if (a.size() != b.size()) throw ContractError("signed-rank test needs paired samples");
  if (a.size() < 5) throw ContractError("signed-rank test needs at least 5 pairs");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (!std::isfinite(x)) throw ContractError("non-finite paired difference");
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) throw DegenerateError("all paired differences are zero");

  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Doubled average ranks: a tie group over positions [i, j) gets i + j + 1.
  std::vector<std::uint32_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = static_cast<std::uint32_t>(i + j + 1);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  std::uint64_t plus2 = 0, minus2 = 0;
  for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? plus2 : minus2) += rank2[i];

  WilcoxonResult r;
  r.n = n;
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = static_cast<double>(minus2) / 2.0;
  r.statistic = std::min(r.w_plus, r.w_minus);
  if (n <= kWilcoxonExactMaxN) {
    r.exact = true;
    r.p_value = SignedRankExactP(rank2, std::min(plus2, minus2));
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) throw DegenerateError("signed-rank variance is zero");
    const double z = (r.w_plus - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  r.reject = r.p_value < alpha;
  return r;
}

std::vector<double> MovingAverage(std::span<const double> y, std::size_t window) {
  if (window == 0) throw ContractError("moving-average window must be positive");
  const std::size_t half = window / 2;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(y.size(), i + (window - half));
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += y[k];
    out[i] = s / static_cast<double>(hi - lo);
  }
  return out;
}

std::string ProtocolRegimeName(ProtocolRegime r) {
  switch (r) {
    case ProtocolRegime::kSubjectSpecific: return "subject_specific";
    case ProtocolRegime::kGeneralized: return "generalized";
    case ProtocolRegime::kTraditionalTl: return "traditional_tl";
  }
  return "unknown";
}

ProtocolRegime ParseProtocolRegime(const std::string& s) {
  for (ProtocolRegime r : {ProtocolRegime::kSubjectSpecific, ProtocolRegime::kGeneralized,
                           ProtocolRegime::kTraditionalTl}) {
    if (ProtocolRegimeName(r) == s) return r;
  }
  throw ParseError("unknown protocol regime '" + s + "'");
}

void ProtocolConfig::Validate() const {
  if (seeds.empty()) throw ContractError("protocol needs at least one seed");
  if (fractions.empty()) throw ContractError("protocol needs at least one fraction");
  if (regimes.empty()) throw ContractError("protocol needs at least one regime");
  for (int f : fractions) {
    if (f != 33 && f != 67 && f != 100) throw ContractError("fraction must be 33, 67 or 100");
  }
  for (std::size_t k : pretrain_counts) {
    if (k == 0 || k > pretrain_subjects.size()) {
      throw ContractError("pretrain count outside [1, number of pretrain subjects]");
    }
  }
  for (int g : gesture_counts) {
    if (g <= 0) throw ContractError("gesture count must be positive");
  }
  const bool transfer = std::any_of(regimes.begin(), regimes.end(), [](ProtocolRegime r) {
    return r != ProtocolRegime::kSubjectSpecific;
  });
  if (transfer && pretrain_subjects.empty()) {
    throw ContractError("transfer regimes need pretrain subjects");
  }
  data.window.Validate();
}

namespace {

bool Matches(const EvalResult& r, const CellKey& k) {
  return r.pretrain_count == k.pretrain_count && r.gestures == k.gestures &&
         r.data_fraction == k.fraction;
}

CellKey KeyOf(const EvalResult& r) { return {r.pretrain_count, r.gestures, r.data_fraction}; }

std::vector<std::string> RegimesIn(const std::vector<EvalResult>& results) {
  std::set<std::string> s;
  for (const auto& r : results) s.insert(r.regime);
  // Stable presentation order.
  std::vector<std::string> out;
  for (ProtocolRegime p : {ProtocolRegime::kSubjectSpecific, ProtocolRegime::kGeneralized,
                           ProtocolRegime::kTraditionalTl}) {
    if (s.erase(ProtocolRegimeName(p))) out.push_back(ProtocolRegimeName(p));
  }
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string Num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double ComparisonTable::Mean(const CellKey& key, const std::string& regime) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : results_) {
    if (Matches(r, key) && r.regime == regime) {
      sum += r.accuracy;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

std::map<std::string, double> ComparisonTable::SubjectMeans(const CellKey& key,
                                                            const std::string& regime) const {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : results_) {
    if (Matches(r, key) && r.regime == regime) {
      auto& [s, n] = acc[r.subject_id];
      s += r.accuracy;
      ++n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [subject, sn] : acc) out[subject] = sn.first / static_cast<double>(sn.second);
  return out;
}

std::vector<ComparisonRow> ComparisonTable::Rows() const {
  std::set<CellKey> keys;
  for (const auto& r : results_) keys.insert(KeyOf(r));
  std::vector<ComparisonRow> rows;
  for (const CellKey& k : keys) {
    ComparisonRow row;
    row.key = k;
    for (const auto& r : results_) {
      if (Matches(r, k)) row.n_results[r.regime] += 1;
    }
    for (const auto& [regime, n] : row.n_results) row.mean_accuracy[regime] = Mean(k, regime);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ComparisonTable::ResultsCsv() const {
  std::ostringstream os;
  os << "subject,regime,pretrain_count,gestures,fraction,seed,n_windows,n_correct,accuracy\n";
  for (const auto& r : results_) {
    os << r.subject_id << ',' << r.regime << ',' << r.pretrain_count << ',' << r.gestures << ','
       << r.data_fraction << ',' << r.seed << ',' << r.n_windows << ',' << r.n_correct << ','
       << Num(r.accuracy) << '\n';
  }
  return os.str();
}

std::string ComparisonTable::TableCsv() const {
  const auto regimes = RegimesIn(results_);
  std::ostringstream os;
  os << "pretrain_count,gestures,fraction";
  for (const auto& r : regimes) os << ',' << r;
  os << '\n';
  for (const auto& row : Rows()) {
    os << row.key.pretrain_count << ',' << row.key.gestures << ',' << row.key.fraction;
    for (const auto& r : regimes) {
      const auto it = row.mean_accuracy.find(r);
      os << ',' << (it == row.mean_accuracy.end() ? std::string() : Num(it->second));
    }
    os << '\n';
  }
  return os.str();
}

std::string ComparisonTable::Summary() const {
  const auto regimes = RegimesIn(results_);
  std::ostringstream os;
  os.precision(6);
  os << "results: " << results_.size() << '\n';
  os << "reference_generalized_accuracy: " << kReferenceGeneralizedAccuracy
     << " (65 gestures, 5 pretrain subjects, fraction 100, original recordings only)\n";
  for (const auto& row : Rows()) {
    os << "cell pretrain_count=" << row.key.pretrain_count << " gestures=" << row.key.gestures
       << " fraction=" << row.key.fraction << ':';
    for (const auto& [regime, mean] : row.mean_accuracy) {
      os << ' ' << regime << '=' << mean << " (n=" << row.n_results.at(regime) << ')';
    }
    os << '\n';
    const auto gen = SubjectMeans(row.key, ProtocolRegimeName(ProtocolRegime::kGeneralized));
    if (gen.empty()) continue;
    for (const auto& other : regimes) {
      if (other == ProtocolRegimeName(ProtocolRegime::kGeneralized)) continue;
      const auto oth = SubjectMeans(row.key, other);
      std::vector<double> a, b;
      for (const auto& [subject, acc] : gen) {
        const auto it = oth.find(subject);
        if (it == oth.end()) continue;
        a.push_back(acc);
        b.push_back(it->second);
      }
      os << "  wilcoxon generalized vs " << other << ": ";
      if (a.size() < 5) {
        os << "skipped (pairs=" << a.size() << " < 5)\n";
        continue;
      }
      try {
        const WilcoxonResult w = WilcoxonSignedRank(a, b);
        os << "n=" << w.n << " w_plus=" << w.w_plus << " w_minus=" << w.w_minus
           << " p=" << w.p_value << (w.exact ? " exact" : " normal")
           << " reject=" << (w.reject ? "yes" : "no") << '\n';
      } catch (const DegenerateError&) {
        os << "degenerate (all differences zero)\n";
      }
    }
  }
  return os.str();
}

void ComparisonTable::WritePlotData(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto rows = Rows();
  const auto regimes = RegimesIn(results_);
  {
    std::ofstream f(dir / "accuracy_vs_fraction.dat");
    f << "# pretrain_count gestures regime fraction accuracy\n";
    for (const auto& row : rows) {
      for (const auto& [regime, mean] : row.mean_accuracy) {
        f << row.key.pretrain_count << ' ' << row.key.gestures << ' ' << regime << ' '
          << row.key.fraction << ' ' << Num(mean) << '\n';
      }
    }
  }
  {
    std::ofstream f(dir / "accuracy_vs_pretrain.dat");
    f << "# gestures fraction regime pretrain_count accuracy\n";
    std::vector<ComparisonRow> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
      return std::tie(x.key.gestures, x.key.fraction, x.key.pretrain_count) <
             std::tie(y.key.gestures, y.key.fraction, y.key.pretrain_count);
    });
    for (const auto& row : sorted) {
      for (const auto& [regime, mean] : row.mean_accuracy) {
        f << row.key.gestures << ' ' << row.key.fraction << ' ' << regime << ' '
          << row.key.pretrain_count << ' ' << Num(mean) << '\n';
      }
    }
  }
  {
    std::ofstream f(dir / "per_subject.dat");
    f << "# pretrain_count gestures fraction regime index subject accuracy trend3\n";
    for (const auto& row : rows) {
      for (const auto& regime : regimes) {
        const auto means = SubjectMeans(row.key, regime);
        if (means.empty()) continue;
        std::vector<std::string> subjects;
        std::vector<double> y;
        for (const auto& [s, acc] : means) {
          subjects.push_back(s);
          y.push_back(acc);
        }
        const auto trend = MovingAverage(y, 3);
        for (std::size_t i = 0; i < y.size(); ++i) {
          f << row.key.pretrain_count << ' ' << row.key.gestures << ' ' << row.key.fraction << ' '
            << regime << ' ' << i << ' ' << subjects[i] << ' ' << Num(y[i]) << ' '
            << Num(trend[i]) << '\n';
        }
      }
    }
  }
}

namespace {

std::string CellTag(std::size_t k, int g) {
  return "k=" + std::to_string(k) + "/G=" + std::to_string(g);
}

TrainPlan PlanFor(TrainPlan tmpl, Regime regime, std::uint64_t seed) {
  tmpl.regime = regime;
  tmpl.seed = seed;
  return tmpl;
}

}  // namespace

ComparisonTable RunProtocol(const DatasetManifest& manifest, const ProtocolConfig& protocol,
                            const ProtocolProgress& progress) {
  protocol.Validate();
  const auto note = [&](const std::string& m) {
    if (progress) progress(m);
  };
  for (const auto& s : protocol.pretrain_subjects) {
    if (!std::binary_search(manifest.subjects.begin(), manifest.subjects.end(), s)) {
      throw DataError("pretrain subject '" + s + "' not in manifest");
    }
  }
  std::vector<std::string> eval = protocol.eval_subjects;
  if (eval.empty()) {
    for (const auto& s : manifest.subjects) {
      if (std::find(protocol.pretrain_subjects.begin(), protocol.pretrain_subjects.end(), s) ==
          protocol.pretrain_subjects.end()) {
        eval.push_back(s);
      }
    }
  }
  if (eval.empty()) throw ContractError("protocol has no held-out subjects to evaluate");
  std::vector<std::size_t> counts = protocol.pretrain_counts;
  if (counts.empty()) counts.push_back(protocol.pretrain_subjects.size());
  std::vector<int> gesture_counts = protocol.gesture_counts;
  if (gesture_counts.empty()) gesture_counts.push_back(manifest.gestures);

  const auto wants = [&](ProtocolRegime r) {
    return std::find(protocol.regimes.begin(), protocol.regimes.end(), r) != protocol.regimes.end();
  };
  const DataConfig& data = protocol.data;
  ComparisonTable table;

  for (std::uint64_t seed : protocol.seeds) {
    for (int g : gesture_counts) {
      if (g > manifest.gestures) throw DataError("gesture count exceeds the manifest");
      ArchitectureConfig arch = protocol.arch;
      arch.gestures = static_cast<std::size_t>(g);
      // Subject-specific models do not depend on the pre-training subjects;
      // they are trained once per (subject, fraction) and reported for every
      // pretrain count.
      std::map<std::pair<std::string, int>, EvalResult> scratch;
      for (std::size_t k : counts) {
        const std::vector<std::string> pre(protocol.pretrain_subjects.begin(),
                                           protocol.pretrain_subjects.begin() +
                                               static_cast<std::ptrdiff_t>(k));
        std::optional<TrainedModel> gen_base, tl_base;
        if (wants(ProtocolRegime::kGeneralized) || wants(ProtocolRegime::kTraditionalTl)) {
          const Split pool = MakeSplit(manifest, SplitPlan{}, SplitFilter{pre, g}, {}, false);
          if (wants(ProtocolRegime::kGeneralized)) {
            note("seed " + std::to_string(seed) + " " + CellTag(k, g) + ": pre-training generalized");
            gen_base = PretrainGeneralized(
                pool.train, pre, arch, data,
                PlanFor(protocol.pretrain_plan, Regime::kPretrainGeneralized,
                        DeriveSeed(seed, "pretrain/generalized/" + CellTag(k, g))));
          }
          if (wants(ProtocolRegime::kTraditionalTl)) {
            note("seed " + std::to_string(seed) + " " + CellTag(k, g) + ": pre-training traditional");
            tl_base = PretrainTraditionalTl(
                pool.train, arch, data,
                PlanFor(protocol.pretrain_plan, Regime::kTraditionalTlPretrain,
                        DeriveSeed(seed, "pretrain/traditional/" + CellTag(k, g))));
          }
        }
        for (const std::string& u : eval) {
          for (int f : protocol.fractions) {
            const std::string cell = CellTag(k, g) + "/u=" + u + "/f=" + std::to_string(f);
            // The split depends on (seed, subject, fraction) only so every
            // regime sees the same repetitions.
            const SplitPlan plan = DrawSplitPlan(
                f, DeriveSeed(seed, "split/" + u + "/f=" + std::to_string(f)));
            const Split split = MakeSplit(manifest, plan, SplitFilter{{u}, g});
            const auto record = [&](EvalResult r, ProtocolRegime regime) {
              r.subject_id = u;
              r.regime = ProtocolRegimeName(regime);
              r.data_fraction = f;
              r.gestures = g;
              r.pretrain_count = k;
              r.seed = seed;
              note("seed " + std::to_string(seed) + " " + cell + " " + r.regime + ": " +
                   Num(r.accuracy));
              table.Add(std::move(r));
            };
            if (wants(ProtocolRegime::kSubjectSpecific)) {
              const auto key = std::make_pair(u, f);
              auto it = scratch.find(key);
              if (it == scratch.end()) {
                const TrainedModel m = TrainSubjectSpecific(
                    split.train, arch, data,
                    PlanFor(protocol.scratch_plan, Regime::kSubjectSpecific,
                            DeriveSeed(seed, "scratch/G=" + std::to_string(g) + "/u=" + u +
                                                 "/f=" + std::to_string(f))));
                it = scratch.emplace(key, EvaluateModel(m, split.test, data, u)).first;
              }
              record(it->second, ProtocolRegime::kSubjectSpecific);
            }
            if (gen_base) {
              const TrainedModel m = RetrainOnNewSubject(
                  *gen_base, u, split.train, data,
                  PlanFor(protocol.retrain_plan, Regime::kRetrainGeneralized,
                          DeriveSeed(seed, "retrain/generalized/" + cell)));
              record(EvaluateModel(m, split.test, data, u), ProtocolRegime::kGeneralized);
            }
            if (tl_base) {
              const TrainedModel m = TraditionalTl(
                  *tl_base, split.train, data,
                  PlanFor(protocol.retrain_plan, Regime::kTraditionalTlRetrain,
                          DeriveSeed(seed, "retrain/traditional/" + cell)));
              record(EvaluateModel(m, split.test, data, u), ProtocolRegime::kTraditionalTl);
            }
          }
        }
      }
    }
  }
  return table;
}

}  // namespace hdemg
