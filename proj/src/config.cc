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

#include "hdemg/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hdemg/errors.h"
#include "hdemg/rng.h"

extern char** environ;

namespace hdemg {

using json = nlohmann::ordered_json;

namespace {

json Patience(const std::optional<std::size_t>& p) { return p ? json(*p) : json(nullptr); }

json ToDoc(const ExperimentConfig& c, bool with_output) {
  json d;
  d["dataset"] = {{"manifest", c.manifest.empty() ? std::string() : c.manifest.string()}};
  const WindowConfig& w = c.data.window;
  d["window"] = {{"window_ms", w.window_ms},
                 {"stride_ms", w.stride_ms},
                 {"phase", PhaseName(w.phase)},
                 {"transient_s", w.transient_s},
                 {"plateau_offset_s", w.plateau_offset_s},
                 {"plateau_len_s", w.plateau_len_s},
                 {"stats_scope", c.data.stats_on_phase ? "phase" : "full"}};
  const ArchitectureConfig& a = c.arch;
  d["model"] = {{"variant", c.variant},
                {"channels", a.channels},
                {"hidden", a.hidden},
                {"layers", a.layers},
                {"bidirectional", a.bidirectional},
                {"dilations", a.dilations},
                {"dropout", a.dropout_rate},
                {"embedding_width", a.embedding_width}};
  const TrainSettings& t = c.train;
  d["train"] = {{"batch_size", t.batch_size},
                {"validation_fraction", t.validation_fraction},
                {"shard_size", t.shard_size},
                {"lr", t.adam.lr},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"epsilon", t.adam.epsilon},
                {"pretrain_epochs", t.pretrain_epochs},
                {"pretrain_patience", Patience(t.pretrain_patience)},
                {"retrain_epochs", t.retrain_epochs},
                {"retrain_patience", Patience(t.retrain_patience)},
                {"scratch_epochs", t.scratch_epochs},
                {"scratch_patience", Patience(t.scratch_patience)},
                {"checkpoint_every", t.checkpoint_every}};
  json regimes = json::array();
  for (auto r : c.regimes) regimes.push_back(ProtocolRegimeName(r));
  d["experiment"] = {{"regime", ProtocolRegimeName(c.regime)},
                     {"pretrain_subjects", c.pretrain_subjects},
                     {"subject", c.subject},
                     {"fraction", c.fraction},
                     {"gesture_count", c.gesture_count},
                     {"seed", c.seed},
                     {"fractions", c.fractions},
                     {"gesture_counts", c.gesture_counts},
                     {"pretrain_counts", c.pretrain_counts},
                     {"eval_subjects", c.eval_subjects},
                     {"regimes", regimes},
                     {"seeds", c.seeds}};
  const SyntheticSpec& s = c.synthetic;
  d["synthetic"] = {{"n_subjects", s.n_subjects},
                    {"n_gestures", s.n_gestures},
                    {"reps_per_gesture", s.reps_per_gesture},
                    {"fs", s.fs},
                    {"rep_seconds", s.rep_seconds},
                    {"channels", s.channels},
                    {"latent_sources", s.latent_sources},
                    {"subject_mixing_scale", s.subject_mixing_scale},
                    {"noise_sigma", s.noise_sigma},
                    {"amplitude_jitter", s.amplitude_jitter},
                    {"envelope_min_hz", s.envelope_min_hz},
                    {"envelope_max_hz", s.envelope_max_hz},
                    {"seed", s.seed}};
  if (with_output) d["output"] = {{"dir", c.output_dir.string()}};
  return d;
}

// Typed reads with "section.key" error messages.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) sec_ = &doc.at(name_);
  }

  bool has(const char* key) const { return sec_ && sec_->contains(key); }

  void UInt(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    out = ToUInt(key, sec_->at(key));
  }
  void U64(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const json& v = sec_->at(key);
    if (!v.is_number_unsigned()) Fail(key, "a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void Int(const char* key, int& out) const {
    if (!has(key)) return;
    out = ToInt(key, sec_->at(key));
  }
  void Real(const char* key, double& out) const {
    if (!has(key)) return;
    const json& v = sec_->at(key);
    if (!v.is_number()) Fail(key, "a number");
    out = v.get<double>();
  }
  void Bool(const char* key, bool& out) const {
    if (!has(key)) return;
    const json& v = sec_->at(key);
    if (!v.is_boolean()) Fail(key, "a boolean");
    out = v.get<bool>();
  }
  void Str(const char* key, std::string& out) const {
    if (!has(key)) return;
    const json& v = sec_->at(key);
    if (!v.is_string()) Fail(key, "a string");
    out = v.get<std::string>();
  }
  void OptUInt(const char* key, std::optional<std::size_t>& out) const {
    if (!has(key)) return;
    const json& v = sec_->at(key);
    out = v.is_null() ? std::nullopt : std::optional<std::size_t>(ToUInt(key, v));
  }
  void UIntList(const char* key, std::vector<std::size_t>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const json& v : Array(key)) out.push_back(ToUInt(key, v));
  }
  void U64List(const char* key, std::vector<std::uint64_t>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const json& v : Array(key)) {
      if (!v.is_number_unsigned()) Fail(key, "a list of non-negative integers");
      out.push_back(v.get<std::uint64_t>());
    }
  }
  void IntList(const char* key, std::vector<int>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const json& v : Array(key)) out.push_back(ToInt(key, v));
  }
  void StrList(const char* key, std::vector<std::string>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const json& v : Array(key)) {
      if (!v.is_string()) Fail(key, "a list of strings");
      out.push_back(v.get<std::string>());
    }
  }

  [[noreturn]] void Fail(const char* key, const std::string& expected) const {
    throw ParseError(name_ + "." + key + ": expected " + expected);
  }

 private:
  const json& Array(const char* key) const {
    const json& v = sec_->at(key);
    if (!v.is_array()) Fail(key, "a list");
    return v;
  }
  std::size_t ToUInt(const char* key, const json& v) const {
    if (!v.is_number_unsigned()) Fail(key, "a non-negative integer");
    return v.get<std::size_t>();
  }
  int ToInt(const char* key, const json& v) const {
    if (!v.is_number_integer()) Fail(key, "an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) Fail(key, "a 32-bit integer");
    return static_cast<int>(x);
  }

  std::string name_;
  const json* sec_ = nullptr;
};

void CheckKeys(const json& doc, const json& schema) {
  if (!doc.is_object()) throw ParseError("config root must be an object");
  for (const auto& [section, body] : doc.items()) {
    if (!schema.contains(section)) throw ParseError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ParseError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (!schema.at(section).contains(key)) {
        throw ParseError("unknown config key '" + section + "." + key + "'");
      }
    }
  }
}

std::filesystem::path Resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

ArchitectureConfig VariantBase(const std::string& v) {
  if (v == "d_bilstm") return ArchitectureConfig{};
  if (v == "regular_lstm") return ArchitectureConfig::RegularLstm();
  if (v == "d_lstm") return ArchitectureConfig::DilatedLstm();
  if (v == "regular_bilstm") return ArchitectureConfig::RegularBiLstm();
  throw ParseError("model.variant: unknown variant '" + v +
                   "' (d_bilstm, regular_lstm, d_lstm, regular_bilstm)");
}

ExperimentConfig FromDoc(const json& doc, const std::filesystem::path& base) {
  ExperimentConfig c;
  {
    Section s(doc, "dataset");
    std::string m;
    s.Str("manifest", m);
    c.manifest = Resolve(m, base);
  }
  {
    Section s(doc, "window");
    WindowConfig& w = c.data.window;
    s.Real("window_ms", w.window_ms);
    s.Real("stride_ms", w.stride_ms);
    std::string phase = PhaseName(w.phase);
    s.Str("phase", phase);
    w.phase = ParsePhase(phase);
    s.Real("transient_s", w.transient_s);
    s.Real("plateau_offset_s", w.plateau_offset_s);
    s.Real("plateau_len_s", w.plateau_len_s);
    std::string scope = "phase";
    s.Str("stats_scope", scope);
    if (scope != "phase" && scope != "full") s.Fail("stats_scope", "\"phase\" or \"full\"");
    c.data.stats_on_phase = scope == "phase";
    try {
      w.Validate();
    } catch (const ContractError& e) {
      throw ParseError(std::string("window: ") + e.what());
    }
  }
  {
    Section s(doc, "model");
    s.Str("variant", c.variant);
    c.arch = VariantBase(c.variant);
    s.UInt("channels", c.arch.channels);
    s.UInt("hidden", c.arch.hidden);
    s.UInt("layers", c.arch.layers);
    s.Bool("bidirectional", c.arch.bidirectional);
    s.UIntList("dilations", c.arch.dilations);
    s.Real("dropout", c.arch.dropout_rate);
    s.UInt("embedding_width", c.arch.embedding_width);
    try {
      c.arch.Validate();
    } catch (const Error& e) {
      throw ParseError(std::string("model: ") + e.what());
    }
  }
  {
    Section s(doc, "train");
    TrainSettings& t = c.train;
    s.UInt("batch_size", t.batch_size);
    s.Real("validation_fraction", t.validation_fraction);
    s.UInt("shard_size", t.shard_size);
    s.Real("lr", t.adam.lr);
    s.Real("beta1", t.adam.beta1);
    s.Real("beta2", t.adam.beta2);
    s.Real("epsilon", t.adam.epsilon);
    s.UInt("pretrain_epochs", t.pretrain_epochs);
    s.OptUInt("pretrain_patience", t.pretrain_patience);
    s.UInt("retrain_epochs", t.retrain_epochs);
    s.OptUInt("retrain_patience", t.retrain_patience);
    s.UInt("scratch_epochs", t.scratch_epochs);
    s.OptUInt("scratch_patience", t.scratch_patience);
    s.UInt("checkpoint_every", t.checkpoint_every);
    try {
      c.Plan(Regime::kSubjectSpecific, 0).Validate();
      c.Plan(Regime::kRetrainGeneralized, 0).Validate();
      c.Plan(Regime::kPretrainGeneralized, 0).Validate();
    } catch (const ContractError& e) {
      throw ParseError(std::string("train: ") + e.what());
    }
  }
  {
    Section s(doc, "experiment");
    std::string regime = ProtocolRegimeName(c.regime);
    s.Str("regime", regime);
    c.regime = ParseProtocolRegime(regime);
    s.StrList("pretrain_subjects", c.pretrain_subjects);
    s.Str("subject", c.subject);
    s.Int("fraction", c.fraction);
    if (c.fraction != 33 && c.fraction != 67 && c.fraction != 100) {
      s.Fail("fraction", "33, 67 or 100");
    }
    s.Int("gesture_count", c.gesture_count);
    if (c.gesture_count < 0) s.Fail("gesture_count", "a non-negative integer");
    s.U64("seed", c.seed);
    s.IntList("fractions", c.fractions);
    s.IntList("gesture_counts", c.gesture_counts);
    s.UIntList("pretrain_counts", c.pretrain_counts);
    s.StrList("eval_subjects", c.eval_subjects);
    std::vector<std::string> regimes;
    if (s.has("regimes")) {
      s.StrList("regimes", regimes);
      c.regimes.clear();
      for (const auto& r : regimes) c.regimes.push_back(ParseProtocolRegime(r));
    }
    s.U64List("seeds", c.seeds);
  }
  {
    Section s(doc, "synthetic");
    SyntheticSpec& p = c.synthetic;
    s.UInt("n_subjects", p.n_subjects);
    s.UInt("n_gestures", p.n_gestures);
    s.Int("reps_per_gesture", p.reps_per_gesture);
    s.Real("fs", p.fs);
    s.Real("rep_seconds", p.rep_seconds);
    s.UInt("channels", p.channels);
    s.UInt("latent_sources", p.latent_sources);
    s.Real("subject_mixing_scale", p.subject_mixing_scale);
    s.Real("noise_sigma", p.noise_sigma);
    s.Real("amplitude_jitter", p.amplitude_jitter);
    s.Real("envelope_min_hz", p.envelope_min_hz);
    s.Real("envelope_max_hz", p.envelope_max_hz);
    s.U64("seed", p.seed);
    try {
      p.Validate();
    } catch (const ContractError& e) {
      throw ParseError(std::string("synthetic: ") + e.what());
    }
  }
  {
    Section s(doc, "output");
    std::string dir = c.output_dir.string();
    s.Str("dir", dir);
    c.output_dir = Resolve(dir, base);
  }
  return c;
}

}  // namespace

TrainPlan ExperimentConfig::Plan(Regime r, std::uint64_t plan_seed) const {
  TrainPlan p = TrainPlan::ForRegime(r, plan_seed);
  p.batch_size = train.batch_size;
  p.validation_fraction = train.validation_fraction;
  p.shard_size = train.shard_size;
  p.adam = train.adam;
  switch (r) {
    case Regime::kPretrainGeneralized:
    case Regime::kTraditionalTlPretrain:
      p.max_epochs = train.pretrain_epochs;
      p.patience = train.pretrain_patience;
      break;
    case Regime::kRetrainGeneralized:
    case Regime::kTraditionalTlRetrain:
      p.max_epochs = train.retrain_epochs;
      p.patience = train.retrain_patience;
      break;
    case Regime::kSubjectSpecific:
      p.max_epochs = train.scratch_epochs;
      p.patience = train.scratch_patience;
      break;
  }
  return p;
}

ProtocolConfig ExperimentConfig::Protocol() const {
  ProtocolConfig p;
  p.pretrain_subjects = pretrain_subjects;
  p.pretrain_counts = pretrain_counts;
  p.eval_subjects = eval_subjects;
  p.gesture_counts = gesture_counts;
  if (p.gesture_counts.empty() && gesture_count > 0) p.gesture_counts = {gesture_count};
  p.fractions = fractions;
  p.regimes = regimes;
  p.seeds = seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
  p.arch = arch;
  p.data = data;
  p.pretrain_plan = Plan(Regime::kPretrainGeneralized, 0);
  p.retrain_plan = Plan(Regime::kRetrainGeneralized, 0);
  p.scratch_plan = Plan(Regime::kSubjectSpecific, 0);
  return p;
}

void ExperimentConfig::OverrideSeed(std::uint64_t s) {
  seed = s;
  seeds = {s};
  synthetic.seed = s;
}

ExperimentConfig ParseConfig(std::string_view text, const std::filesystem::path& base_dir,
                             const std::map<std::string, std::string>& overrides) {
  json doc;
  try {
    doc = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("config root must be an object");
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) throw ParseError("override '" + path + "' lacks a section");
    json v;
    try {
      v = json::parse(value);
    } catch (const json::exception&) {
      // Bare words are accepted as strings.
      v = value;
    }
    doc[path.substr(0, dot)][path.substr(dot + 1)] = std::move(v);
  }
  CheckKeys(doc, ToDoc(ExperimentConfig{}, true));
  return FromDoc(doc, base_dir);
}

ExperimentConfig LoadConfig(const std::filesystem::path& path,
                            const std::map<std::string, std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ParseConfig(ss.str(), std::filesystem::absolute(path).parent_path(), overrides);
}

std::string ConfigToJson(const ExperimentConfig& cfg) { return ToDoc(cfg, true).dump(2) + "\n"; }

std::uint64_t ConfigHash(const ExperimentConfig& cfg) { return Fnv1a(ToDoc(cfg, false).dump()); }

std::map<std::string, std::string> EnvOverrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (!entry.starts_with(kEnvOverridePrefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string name(entry.substr(kEnvOverridePrefix.size(), eq - kEnvOverridePrefix.size()));
    const auto sep = name.find("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= name.size()) {
      throw ParseError("environment override " + std::string(entry.substr(0, eq)) +
                       " must look like " + std::string(kEnvOverridePrefix) + "<section>__<key>");
    }
    out[name.substr(0, sep) + "." + name.substr(sep + 2)] = std::string(entry.substr(eq + 1));
  }
  return out;
}

}  // namespace hdemg
