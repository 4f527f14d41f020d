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

#include "hdemg/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "binary_io.h"
#include "hdemg/errors.h"
#include "hdemg/rng.h"

namespace hdemg {

namespace fs = std::filesystem;
using nlohmann::json;

const RepetitionRef* DatasetManifest::Find(const std::string& subject, int gesture,
                                           int rep) const {
  for (const auto& f : files) {
    if (f.subject == subject && f.gesture == gesture && f.rep == rep) return &f;
  }
  return nullptr;
}

namespace {

void RejectUnknownKeys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T Require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

DatasetManifest LoadManifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const std::string where = path.string();
  if (!doc.is_object()) throw ParseError(where + ": manifest must be an object");
  RejectUnknownKeys(doc, {"subjects", "gestures", "sample_rate_hz", "files"}, where);

  DatasetManifest m;
  m.subjects = Require<std::vector<std::string>>(doc, "subjects", where);
  m.gestures = Require<int>(doc, "gestures", where);
  m.sample_rate_hz = doc.contains("sample_rate_hz") ? Require<double>(doc, "sample_rate_hz", where)
                                                    : kDefaultSampleRateHz;
  if (m.subjects.empty()) throw ParseError(where + ": empty subject list");
  std::sort(m.subjects.begin(), m.subjects.end());
  if (std::adjacent_find(m.subjects.begin(), m.subjects.end()) != m.subjects.end()) {
    throw ParseError(where + ": duplicate subject id");
  }
  if (m.gestures <= 0) throw ParseError(where + ": gestures must be positive");
  if (!(m.sample_rate_hz > 0.0)) throw ParseError(where + ": sample_rate_hz must be positive");

  if (!doc.contains("files") || !doc["files"].is_array()) {
    throw ParseError(where + ": 'files' must be an array");
  }
  const fs::path base = path.parent_path();
  std::set<std::tuple<std::string, int, int>> seen;
  for (std::size_t i = 0; i < doc["files"].size(); ++i) {
    const json& e = doc["files"][i];
    const std::string ew = where + ": files[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ParseError(ew + " must be an object");
    RejectUnknownKeys(e, {"subject", "gesture", "rep", "path"}, ew);
    RepetitionRef r;
    r.subject = Require<std::string>(e, "subject", ew);
    r.gesture = Require<int>(e, "gesture", ew);
    r.rep = Require<int>(e, "rep", ew);
    fs::path p = Require<std::string>(e, "path", ew);
    r.path = p.is_absolute() ? p : base / p;
    if (!std::binary_search(m.subjects.begin(), m.subjects.end(), r.subject)) {
      throw ParseError(ew + ": subject '" + r.subject + "' not in subject list");
    }
    if (r.gesture < 0 || r.gesture >= m.gestures) throw ParseError(ew + ": gesture out of range");
    if (r.rep < 1 || r.rep > kRepetitionsPerGesture) throw ParseError(ew + ": rep must be in 1..5");
    if (!seen.emplace(r.subject, r.gesture, r.rep).second) {
      throw ParseError(ew + ": duplicate repetition (" + r.subject + ", " +
                       std::to_string(r.gesture) + ", " + std::to_string(r.rep) + ")");
    }
    if (!fs::exists(r.path)) throw ParseError(ew + ": file does not exist: " + r.path.string());
    m.files.push_back(std::move(r));
  }
  return m;
}

void SaveManifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = path.parent_path();
  json doc;
  doc["subjects"] = m.subjects;
  doc["gestures"] = m.gestures;
  doc["sample_rate_hz"] = m.sample_rate_hz;
  json files = json::array();
  for (const auto& f : m.files) {
    fs::path rel = f.path;
    if (!base.empty() && f.path.is_absolute()) rel = fs::relative(f.path, fs::absolute(base));
    files.push_back({{"subject", f.subject}, {"gesture", f.gesture}, {"rep", f.rep},
                     {"path", rel.generic_string()}});
  }
  doc["files"] = files;
  if (!base.empty()) fs::create_directories(base);
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path.string());
  os << doc.dump(1) << "\n";
}

void SaveRepetition(const Repetition& rep, const fs::path& path) {
  io::Writer w;
  w.Bytes("EMGR");
  w.U32(kRepetitionFormatVersion);
  w.U32(static_cast<std::uint32_t>(rep.channels()));
  w.U32(static_cast<std::uint32_t>(rep.samples()));
  w.F64(rep.sample_rate_hz);
  for (double v : rep.signal.values()) w.F32(static_cast<float>(v));
  w.Save(path);
}

Repetition LoadRepetition(const fs::path& path) {
  io::Reader r = io::Reader::FromFile(path);
  if (r.remaining() < 4 || r.Bytes(4) != "EMGR") throw LoadError(path.string() + ": magic mismatch");
  const std::uint32_t version = r.U32();
  if (version != kRepetitionFormatVersion) {
    throw LoadError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::uint32_t channels = r.U32();
  const std::uint32_t samples = r.U32();
  const double fs_hz = r.F64();
  if (channels == 0 || samples == 0) throw LoadError(path.string() + ": empty signal");
  if (!(fs_hz > 0.0) || !std::isfinite(fs_hz)) throw LoadError(path.string() + ": bad sample rate");
  const std::size_t n = std::size_t{channels} * samples;
  r.Need(n * 4);
  Repetition rep;
  rep.sample_rate_hz = fs_hz;
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = r.F32();
    if (!std::isfinite(v)) throw LoadError(path.string() + ": non-finite value in payload");
    data[i] = v;
  }
  rep.signal = Tensor({samples, channels}, std::move(data));
  return rep;
}

Repetition LoadRepetition(const RepetitionRef& ref) {
  Repetition rep = LoadRepetition(ref.path);
  rep.subject_id = ref.subject;
  rep.gesture_id = ref.gesture;
  rep.rep_index = ref.rep;
  return rep;
}

SignalTensor FlattenGrids(const SignalTensor& volar, const SignalTensor& dorsal) {
  auto check = [](const SignalTensor& g, const char* name) {
    if (g.rank() != 3 || g.dim(1) != 8 || g.dim(2) != 8) {
      throw DimensionError(std::string(name) + " grid must be T x 8 x 8, got " +
                           ShapeString(g.shape()));
    }
  };
  check(volar, "volar");
  check(dorsal, "dorsal");
  if (volar.dim(0) != dorsal.dim(0)) {
    throw DimensionError("grid lengths differ: " + std::to_string(volar.dim(0)) + " vs " +
                         std::to_string(dorsal.dim(0)));
  }
  const std::size_t steps = volar.dim(0);
  SignalTensor out({steps, 128});
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(volar.data() + t * 64, 64, out.data() + t * 128);
    std::copy_n(dorsal.data() + t * 64, 64, out.data() + t * 128 + 64);
  }
  return out;
}

void SplitPlan::Validate() const {
  std::set<int> tr(train_reps.begin(), train_reps.end());
  std::set<int> te(test_reps.begin(), test_reps.end());
  if (tr.size() != train_reps.size() || te.size() != test_reps.size()) {
    throw ContractError("split plan repeats a repetition");
  }
  for (int r : tr) {
    if (r != 1 && r != 3 && r != 5) throw ContractError("training repetitions must come from {1,3,5}");
    if (te.count(r)) throw ContractError("train and test repetitions overlap");
  }
  if (te != std::set<int>{2, 4}) throw ContractError("test repetitions must be {2,4}");
  const std::size_t want = retrain_fraction == 33 ? 1 : retrain_fraction == 67 ? 2
                         : retrain_fraction == 100 ? 3 : 0;
  if (want == 0) throw ContractError("retrain fraction must be 33, 67 or 100");
  if (tr.size() != want) throw ContractError("retrain fraction inconsistent with training repetitions");
}

SplitPlan DrawSplitPlan(int retrain_fraction, std::uint64_t seed) {
  SplitPlan plan;
  plan.retrain_fraction = retrain_fraction;
  const std::size_t keep = retrain_fraction == 33 ? 1 : retrain_fraction == 67 ? 2
                         : retrain_fraction == 100 ? 3 : 0;
  if (keep == 0) throw ContractError("retrain fraction must be 33, 67 or 100");
  std::vector<int> pool{1, 3, 5};
  Rng rng(DeriveSeed(seed, "split"));
  rng.Shuffle(pool);
  plan.train_reps.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(plan.train_reps.begin(), plan.train_reps.end());
  return plan;
}

Split MakeSplit(const DatasetManifest& manifest, const SplitPlan& plan, const SplitFilter& filter,
                const RepetitionTransform& on_load, bool load_test) {
  plan.Validate();
  std::vector<std::string> subjects = filter.subjects.empty() ? manifest.subjects : filter.subjects;
  std::sort(subjects.begin(), subjects.end());
  for (const auto& s : subjects) {
    if (!std::binary_search(manifest.subjects.begin(), manifest.subjects.end(), s)) {
      throw DataError("subject '" + s + "' is not in the manifest");
    }
  }
  const int gestures = filter.gesture_count > 0 ? filter.gesture_count : manifest.gestures;
  if (gestures > manifest.gestures) {
    throw DataError("requested " + std::to_string(gestures) + " gestures, manifest has " +
                    std::to_string(manifest.gestures));
  }
  Split split;
  split.plan = plan;
  auto load = [&](const std::string& s, int g, int r, Provenance p, std::vector<Repetition>& out) {
    const RepetitionRef* ref = manifest.Find(s, g, r);
    if (ref == nullptr) {
      throw LoadError("missing repetition: subject " + s + " gesture " + std::to_string(g) +
                      " rep " + std::to_string(r));
    }
    Repetition rep = LoadRepetition(*ref);
    rep.provenance = p;
    out.push_back(on_load ? on_load(std::move(rep)) : std::move(rep));
  };
  for (const auto& s : subjects) {
    for (int g = 0; g < gestures; ++g) {
      for (int r : plan.train_reps) load(s, g, r, Provenance::kTrain, split.train);
      if (load_test) {
        for (int r : plan.test_reps) load(s, g, r, Provenance::kTest, split.test);
      }
    }
  }
  return split;
}

}  // namespace hdemg
