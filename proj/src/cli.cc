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

#include "hdemg/cli.h"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdemg/config.h"
#include "hdemg/dataset.h"
#include "hdemg/evaluation.h"
#include "hdemg/persistence.h"
#include "hdemg/synthetic.h"
#include "hdemg/training.h"

namespace hdemg {

int ExitCodeFor(const Error& e) {
  const std::string c = e.category();
  if (c == "parse") return kExitConfig;
  if (c == "load" || c == "data" || c == "dimension" || c == "index") return kExitData;
  if (c == "divergence") return kExitDivergence;
  return kExitFailure;
}

std::string FormatError(const std::string& category, const std::string& message) {
  std::string m = message;
  std::replace(m.begin(), m.end(), '\n', ' ');
  std::replace(m.begin(), m.end(), '\r', ' ');
  return "error: category=" + category + " message=" + m;
}

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct GlobalFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw LoadError("cannot write " + path.string());
  os << text;
}

// Config file < environment overrides < command-line flags.
ExperimentConfig Resolve(const GlobalFlags& flags) {
  const auto env = EnvOverrides();
  ExperimentConfig cfg = flags.config.empty() ? ParseConfig("", fs::current_path(), env)
                                              : LoadConfig(flags.config, env);
  if (flags.seed) cfg.OverrideSeed(*flags.seed);
  if (!flags.out.empty()) cfg.output_dir = fs::absolute(flags.out).lexically_normal();
  if (flags.threads > 0) omp_set_num_threads(flags.threads);
  fs::create_directories(cfg.output_dir);
  WriteText(cfg.output_dir / "resolved_config.json", ConfigToJson(cfg));
  return cfg;
}

DatasetManifest Manifest(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ParseError("dataset.manifest is required for this command");
  return LoadManifest(cfg.manifest);
}

int GestureCount(const ExperimentConfig& cfg, const DatasetManifest& m) {
  const int g = cfg.gesture_count > 0 ? cfg.gesture_count : m.gestures;
  if (g > m.gestures) throw DataError("gesture_count exceeds the manifest's gestures");
  return g;
}

const std::string& RequireSubject(const ExperimentConfig& cfg, const DatasetManifest& m) {
  if (cfg.subject.empty()) throw ParseError("experiment.subject is required for this command");
  if (!std::binary_search(m.subjects.begin(), m.subjects.end(), cfg.subject)) {
    throw DataError("subject '" + cfg.subject + "' not in manifest");
  }
  return cfg.subject;
}

SplitPlan SubjectSplit(const ExperimentConfig& cfg, const std::string& subject) {
  return DrawSplitPlan(cfg.fraction, DeriveSeed(cfg.seed, "split/" + subject + "/f=" +
                                                              std::to_string(cfg.fraction)));
}

json ReportJson(const TrainReport& r) {
  return {{"epochs_run", r.epochs.size()},
          {"best_epoch", r.best_epoch},
          {"best_val_acc", r.best_val_acc},
          {"stop_reason", StopReasonName(r.stop_reason)},
          {"wall_seconds", r.wall_seconds}};
}

// Checkpointing and resume shared by the training commands.
struct CheckpointPolicy {
  FitHooks base;
  std::optional<Checkpoint> resumed;

  FitHooks Hooks() const {
    FitHooks h = base;
    if (resumed) h.resume = &resumed->state;
    return h;
  }
};

CheckpointPolicy MakeCheckpointPolicy(const ExperimentConfig& cfg, const std::string& resume,
                                      std::vector<std::string> subjects_hint) {
  CheckpointPolicy p;
  const std::uint64_t hash = ConfigHash(cfg);
  if (!resume.empty()) {
    p.resumed = LoadCheckpoint(resume, hash);
    std::cout << "resuming from epoch " << p.resumed->state.epoch << '\n';
  }
  const std::size_t every = cfg.train.checkpoint_every;
  const fs::path path = cfg.output_dir / "checkpoint.dbck";
  p.base.after_epoch = [every, path, hash, subjects_hint](const Trainer& t,
                                                           const ChannelStats& stats) {
    const EpochRecord& e = t.state().history.back();
    std::cout << "epoch " << e.epoch << " train_loss=" << e.train_loss << " val_acc=" << e.val_acc
              << '\n';
    if (every == 0) return;
    if (e.epoch % every != 0 && !t.done()) return;
    Checkpoint c;
    c.config_hash = hash;
    c.arch = t.arch();
    c.subjects = subjects_hint;
    c.stats = stats;
    c.state = t.state();
    SaveCheckpoint(c, path);
  };
  return p;
}

void WriteModelOutputs(const ExperimentConfig& cfg, const TrainedModel& m) {
  SaveWeights(m, cfg.output_dir / "model.dblw");
  WriteText(cfg.output_dir / "train_report.csv", m.report.ToCsv());
  WriteText(cfg.output_dir / "train_summary.json", ReportJson(m.report).dump(2) + "\n");
  std::cout << "wrote " << (cfg.output_dir / "model.dblw").string() << " (best epoch "
            << m.report.best_epoch << ", val_acc " << m.report.best_val_acc << ")\n";
}

void WriteSplit(const ExperimentConfig& cfg, const SplitPlan& plan) {
  WriteText(cfg.output_dir / "split.json",
            json{{"fraction", plan.retrain_fraction},
                 {"train_reps", plan.train_reps},
                 {"test_reps", plan.test_reps}}
                    .dump(2) +
                "\n");
}

std::vector<double> ParseCsvRow(const std::string& line, std::size_t lineno, const fs::path& src) {
  std::vector<double> row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      row.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw DataError(src.string() + ":" + std::to_string(lineno) + ": non-numeric value '" + cell +
                      "'");
    }
  }
  return row;
}

// Numeric CSV, one sample per line; a non-numeric first line is a header.
SignalTensor ReadCsvSignal(const fs::path& src) {
  std::ifstream is(src);
  if (!is) throw LoadError("cannot open " + src.string());
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && !line.empty() &&
        (std::isalpha(static_cast<unsigned char>(line[0])) || line[0] == '#' || line[0] == '"')) {
      continue;
    }
    auto row = ParseCsvRow(line, lineno, src);
    if (cols == 0) cols = row.size();
    if (row.size() != cols) {
      throw DataError(src.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(cols) + " columns");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw DataError(src.string() + ": no samples");
  return SignalTensor({rows, cols}, std::move(values));
}

struct ConvertArgs {
  std::string src, dst, dorsal;
  double fs = kDefaultSampleRateHz;
};

int CmdConvert(const ConvertArgs& a) {
  Repetition rep;
  rep.sample_rate_hz = a.fs;
  SignalTensor first = ReadCsvSignal(a.src);
  if (!a.dorsal.empty()) {
    const SignalTensor second = ReadCsvSignal(a.dorsal);
    if (first.cols() != 64 || second.cols() != 64) {
      throw DimensionError("grid CSVs must have 64 columns (8 x 8 row-major)");
    }
    rep.signal = FlattenGrids(first.Reshaped({first.rows(), 8, 8}),
                              second.Reshaped({second.rows(), 8, 8}));
  } else {
    rep.signal = std::move(first);
  }
  SaveRepetition(rep, a.dst);
  std::cout << "wrote " << a.dst << " (" << rep.samples() << " x " << rep.channels() << ")\n";
  return kExitOk;
}

int CmdSynth(const GlobalFlags& flags) {
  const ExperimentConfig cfg = Resolve(flags);
  const DatasetManifest m = GenerateDataset(cfg.synthetic, cfg.output_dir);
  std::cout << "wrote " << m.files.size() << " repetitions and "
            << (cfg.output_dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int CmdPretrain(const GlobalFlags& flags, const std::string& resume) {
  const ExperimentConfig cfg = Resolve(flags);
  const DatasetManifest manifest = Manifest(cfg);
  if (cfg.pretrain_subjects.empty()) {
    throw ParseError("experiment.pretrain_subjects must not be empty");
  }
  const int g = GestureCount(cfg, manifest);
  ArchitectureConfig arch = cfg.arch;
  arch.gestures = static_cast<std::size_t>(g);
  const Split pool =
      MakeSplit(manifest, SplitPlan{}, SplitFilter{cfg.pretrain_subjects, g}, {}, false);
  TrainedModel m;
  if (cfg.regime == ProtocolRegime::kGeneralized) {
    std::vector<std::string> sorted = cfg.pretrain_subjects;
    std::sort(sorted.begin(), sorted.end());
    auto policy = MakeCheckpointPolicy(cfg, resume, sorted);
    m = PretrainGeneralized(pool.train, cfg.pretrain_subjects, arch, cfg.data,
                            cfg.Plan(Regime::kPretrainGeneralized, DeriveSeed(cfg.seed, "pretrain")),
                            policy.Hooks());
  } else if (cfg.regime == ProtocolRegime::kTraditionalTl) {
    auto policy = MakeCheckpointPolicy(cfg, resume, {});
    m = PretrainTraditionalTl(
        pool.train, arch, cfg.data,
        cfg.Plan(Regime::kTraditionalTlPretrain, DeriveSeed(cfg.seed, "pretrain")), policy.Hooks());
  } else {
    throw ParseError("pretrain needs experiment.regime generalized or traditional_tl");
  }
  WriteModelOutputs(cfg, m);
  return kExitOk;
}

void CheckBaseMatches(const ArchitectureConfig& base, const ArchitectureConfig& want) {
  std::vector<std::string> diffs;
  const auto cmp = [&](const char* what, std::size_t a, std::size_t b) {
    if (a != b) {
      diffs.push_back(std::string(what) + " " + std::to_string(a) + " vs configured " +
                      std::to_string(b));
    }
  };
  cmp("channels", base.channels, want.channels);
  cmp("hidden", base.hidden, want.hidden);
  cmp("layers", base.layers, want.layers);
  cmp("bidirectional", base.bidirectional, want.bidirectional);
  cmp("embedding_width", base.embedding_width, want.embedding_width);
  cmp("gestures", base.gestures, want.gestures);
  if (base.dilations != want.dilations) diffs.push_back("dilation schedule differs");
  if (!diffs.empty()) {
    std::string msg = "dimension mismatch between base weights and configuration:";
    for (const auto& d : diffs) msg += " " + d + ";";
    throw DimensionError(msg);
  }
}

int CmdRetrain(const GlobalFlags& flags, const std::string& base_path, const std::string& resume) {
  const ExperimentConfig cfg = Resolve(flags);
  if (base_path.empty()) throw ParseError("retrain needs --base <weights>");
  const TrainedModel base = LoadWeights(base_path);
  const DatasetManifest manifest = Manifest(cfg);
  const std::string& subject = RequireSubject(cfg, manifest);
  const int g = GestureCount(cfg, manifest);
  ArchitectureConfig want = cfg.arch;
  want.gestures = static_cast<std::size_t>(g);
  CheckBaseMatches(base.arch, want);

  const SplitPlan plan = SubjectSplit(cfg, subject);
  WriteSplit(cfg, plan);
  const Split split = MakeSplit(manifest, plan, SplitFilter{{subject}, g}, {}, false);
  TrainedModel m;
  if (base.arch.use_embedding) {
    if (cfg.regime != ProtocolRegime::kGeneralized) {
      throw DimensionError("base weights carry a subject embedding; experiment.regime must be generalized");
    }
    std::vector<std::string> subjects = base.subjects;
    subjects.push_back(subject);
    auto policy = MakeCheckpointPolicy(cfg, resume, subjects);
    m = RetrainOnNewSubject(base, subject, split.train, cfg.data,
                            cfg.Plan(Regime::kRetrainGeneralized, DeriveSeed(cfg.seed, "retrain")),
                            policy.Hooks());
  } else {
    if (cfg.regime != ProtocolRegime::kTraditionalTl) {
      throw DimensionError("base weights have no subject embedding; experiment.regime must be traditional_tl");
    }
    auto policy = MakeCheckpointPolicy(cfg, resume, {});
    m = TraditionalTl(base, split.train, cfg.data,
                      cfg.Plan(Regime::kTraditionalTlRetrain, DeriveSeed(cfg.seed, "retrain")),
                      policy.Hooks());
  }
  WriteModelOutputs(cfg, m);
  return kExitOk;
}

int CmdTrain(const GlobalFlags& flags, const std::string& resume) {
  const ExperimentConfig cfg = Resolve(flags);
  const DatasetManifest manifest = Manifest(cfg);
  const std::string& subject = RequireSubject(cfg, manifest);
  const int g = GestureCount(cfg, manifest);
  ArchitectureConfig arch = cfg.arch;
  arch.gestures = static_cast<std::size_t>(g);
  const SplitPlan plan = SubjectSplit(cfg, subject);
  WriteSplit(cfg, plan);
  const Split split = MakeSplit(manifest, plan, SplitFilter{{subject}, g}, {}, false);
  auto policy = MakeCheckpointPolicy(cfg, resume, {});
  const TrainedModel m =
      TrainSubjectSpecific(split.train, arch, cfg.data,
                           cfg.Plan(Regime::kSubjectSpecific, DeriveSeed(cfg.seed, "scratch")),
                           policy.Hooks());
  WriteModelOutputs(cfg, m);
  return kExitOk;
}

int CmdEval(const GlobalFlags& flags, const std::string& weights) {
  const ExperimentConfig cfg = Resolve(flags);
  if (weights.empty()) throw ParseError("eval needs --weights <file>");
  const TrainedModel model = LoadWeights(weights);
  const DatasetManifest manifest = Manifest(cfg);
  const std::string& subject = RequireSubject(cfg, manifest);
  if (model.stats.mu.empty()) throw LoadError(weights + ": weights carry no normalization statistics");
  if (static_cast<int>(model.arch.gestures) > manifest.gestures) {
    throw DimensionError("model has more gesture classes than the dataset");
  }
  const Split split = MakeSplit(manifest, SplitPlan{},
                                SplitFilter{{subject}, static_cast<int>(model.arch.gestures)});
  const EvalResult r = EvaluateModel(model, split.test, cfg.data, subject);
  json per = json::object();
  for (const auto& [g, t] : r.per_gesture) {
    per[std::to_string(g)] = {{"n_windows", t.n_windows}, {"n_correct", t.n_correct}};
  }
  WriteText(cfg.output_dir / "eval.json", json{{"subject", subject},
                                               {"n_windows", r.n_windows},
                                               {"n_correct", r.n_correct},
                                               {"accuracy", r.accuracy},
                                               {"per_gesture", per}}
                                                  .dump(2) +
                                              "\n");
  std::ostringstream csv;
  csv.precision(17);
  csv << "subject,n_windows,n_correct,accuracy\n"
      << subject << ',' << r.n_windows << ',' << r.n_correct << ',' << r.accuracy << '\n';
  WriteText(cfg.output_dir / "accuracy.csv", csv.str());
  std::cout << "accuracy " << r.accuracy << " (" << r.n_correct << "/" << r.n_windows << ")\n";
  return kExitOk;
}

int CmdProtocol(const GlobalFlags& flags) {
  const ExperimentConfig cfg = Resolve(flags);
  const DatasetManifest manifest = Manifest(cfg);
  const ComparisonTable table =
      RunProtocol(manifest, cfg.Protocol(), [](const std::string& m) { std::cout << m << '\n'; });
  WriteText(cfg.output_dir / "results.csv", table.ResultsCsv());
  WriteText(cfg.output_dir / "table.csv", table.TableCsv());
  const std::string summary = table.Summary();
  WriteText(cfg.output_dir / "summary.txt", summary);
  table.WritePlotData(cfg.output_dir / "plots");
  std::cout << summary;
  return kExitOk;
}

}  // namespace

int RunCli(int argc, char** argv) {
  CLI::App app{"hdemg: dilated biLSTM hand-gesture recognition with subject-embedded transfer"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  app.add_option("--config", flags.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "output directory (overrides output.dir)");
  app.add_option("--seed", flags.seed, "seed for every seeded component");
  app.add_option("--threads", flags.threads, "OpenMP threads (default: runtime default)")
      ->check(CLI::PositiveNumber);

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "CSV signal to canonical repetition file");
  convert->add_option("src", conv.src, "CSV with one sample per line (or volar grid CSV)")->required();
  convert->add_option("dst", conv.dst, "output .emgr file")->required();
  convert->add_option("--dorsal", conv.dorsal, "dorsal grid CSV; src is then the volar grid");
  convert->add_option("--fs", conv.fs, "sample rate in Hz");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset into --out");
  std::string resume, base, weights;
  auto* pretrain = app.add_subcommand("pretrain", "pre-train a generalized or traditional base");
  pretrain->add_option("--resume", resume, "checkpoint to continue from");
  auto* retrain = app.add_subcommand("retrain", "retrain a base model on a new subject");
  retrain->add_option("--base", base, "base weights")->required();
  retrain->add_option("--resume", resume, "checkpoint to continue from");
  auto* train = app.add_subcommand("train", "subject-specific training from scratch");
  train->add_option("--resume", resume, "checkpoint to continue from");
  auto* eval = app.add_subcommand("eval", "evaluate weights on repetitions {2, 4}");
  eval->add_option("--weights", weights, "weights file")->required();
  auto* protocol = app.add_subcommand("protocol", "comparison sweep over regimes and fractions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << FormatError("usage", e.what()) << '\n';
    return kExitConfig;
  }

  try {
    if (*convert) return CmdConvert(conv);
    if (*synth) return CmdSynth(flags);
    if (*pretrain) return CmdPretrain(flags, resume);
    if (*retrain) return CmdRetrain(flags, base, resume);
    if (*train) return CmdTrain(flags, resume);
    if (*eval) return CmdEval(flags, weights);
    if (*protocol) return CmdProtocol(flags);
  } catch (const Error& e) {
    std::cerr << FormatError(e.category(), e.what()) << '\n';
    return ExitCodeFor(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << FormatError("io", e.what()) << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << FormatError("internal", e.what()) << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace hdemg
