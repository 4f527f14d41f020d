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

#include "hdemg/persistence.h"

#include <cmath>

#include "binary_io.h"
#include "hdemg/errors.h"

namespace hdemg {

namespace {

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxCount = 1u << 20;

void WriteArch(io::Writer& w, const ArchitectureConfig& a) {
  w.U32(static_cast<std::uint32_t>(a.channels));
  w.U32(static_cast<std::uint32_t>(a.hidden));
  w.U32(static_cast<std::uint32_t>(a.layers));
  w.U32(a.bidirectional ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(a.dilations.size()));
  for (std::size_t d : a.dilations) w.U32(static_cast<std::uint32_t>(d));
  w.U32(static_cast<std::uint32_t>(a.gestures));
  w.F64(a.dropout_rate);
  w.U32(static_cast<std::uint32_t>(a.embedding_width));
  w.U32(a.use_embedding ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(a.embedding_rows));
}

std::uint32_t Count(io::Reader& r, const char* what) {
  const std::uint32_t n = r.U32();
  if (n > kMaxCount) throw LoadError(r.origin() + ": implausible " + what + " count");
  return n;
}

bool Flag(io::Reader& r) {
  const std::uint32_t v = r.U32();
  if (v > 1) throw LoadError(r.origin() + ": invalid flag value");
  return v == 1;
}

ArchitectureConfig ReadArch(io::Reader& r) {
  ArchitectureConfig a;
  a.channels = r.U32();
  a.hidden = r.U32();
  a.layers = r.U32();
  a.bidirectional = Flag(r);
  a.dilations.resize(Count(r, "dilation"));
  for (auto& d : a.dilations) d = r.U32();
  a.gestures = r.U32();
  a.dropout_rate = r.F64();
  a.embedding_width = r.U32();
  a.use_embedding = Flag(r);
  a.embedding_rows = r.U32();
  try {
    a.Validate();
  } catch (const Error& e) {
    throw LoadError(r.origin() + ": invalid architecture: " + e.what());
  }
  return a;
}

void WriteSubjects(io::Writer& w, const std::vector<std::string>& subjects) {
  w.U32(static_cast<std::uint32_t>(subjects.size()));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    w.Str(subjects[i]);
    w.U32(static_cast<std::uint32_t>(i));
  }
}

std::vector<std::string> ReadSubjects(io::Reader& r) {
  std::vector<std::string> out(Count(r, "subject"));
  std::vector<bool> seen(out.size(), false);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::string s = r.Str();
    const std::uint32_t row = r.U32();
    if (row >= out.size() || seen[row]) throw LoadError(r.origin() + ": invalid subject table");
    seen[row] = true;
    out[row] = std::move(s);
  }
  return out;
}

template <bool kDouble>
void WriteTensor(io::Writer& w, const std::string& name, const Tensor& t) {
  w.Str(name);
  w.U32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.U32(static_cast<std::uint32_t>(e));
  for (double v : t.values()) {
    if constexpr (kDouble) {
      w.F64(v);
    } else {
      w.F32(static_cast<float>(v));
    }
  }
}

template <bool kDouble>
std::pair<std::string, Tensor> ReadTensor(io::Reader& r) {
  std::string name = r.Str();
  const std::uint32_t rank = r.U32();
  if (rank == 0 || rank > kMaxRank) throw LoadError(r.origin() + ": invalid rank for " + name);
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& e : shape) {
    e = r.U32();
    if (e == 0) throw LoadError(r.origin() + ": zero extent in " + name);
    n *= e;
  }
  r.Need(n * (kDouble ? 8 : 4));
  std::vector<double> values(n);
  for (double& v : values) {
    v = kDouble ? r.F64() : static_cast<double>(r.F32());
    if (!std::isfinite(v)) throw LoadError(r.origin() + ": non-finite value in " + name);
  }
  return {std::move(name), Tensor(std::move(shape), std::move(values))};
}

void ExpectHeader(io::Reader& r, std::string_view magic, std::uint32_t version) {
  if (r.remaining() < 4 || r.Bytes(4) != magic) {
    throw LoadError(r.origin() + ": bad magic (expected " + std::string(magic) + ")");
  }
  const std::uint32_t v = r.U32();
  if (v != version) {
    throw LoadError(r.origin() + ": unsupported version " + std::to_string(v) + " (expected " +
                    std::to_string(version) + ")");
  }
}

void ExpectEnd(const io::Reader& r) {
  if (r.remaining() != 0) throw LoadError(r.origin() + ": trailing bytes");
}

Tensor StatsTensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

template <bool kDouble>
void WriteParams(io::Writer& w, const ModelParameters& p) {
  w.U32(static_cast<std::uint32_t>(p.size()));
  for (const auto& t : p) WriteTensor<kDouble>(w, t.name, t.value);
}

template <bool kDouble>
ModelParameters ReadParams(io::Reader& r, const ArchitectureConfig& arch) {
  ModelParameters p;
  const std::uint32_t n = Count(r, "tensor");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, value] = ReadTensor<kDouble>(r);
    p.Add(std::move(name), std::move(value));
  }
  try {
    CheckParamsMatch(p, arch);
  } catch (const Error& e) {
    throw LoadError(r.origin() + ": " + e.what());
  }
  return p;
}

void CheckStats(const io::Reader& r, const ChannelStats& s, const ArchitectureConfig& arch) {
  if (s.mu.size() != arch.channels || s.sigma.size() != arch.channels) {
    throw LoadError(r.origin() + ": statistics do not match the channel count");
  }
}

}  // namespace

void SaveWeights(const TrainedModel& model, const std::filesystem::path& path) {
  CheckParamsMatch(model.params, model.arch);
  io::Writer w;
  w.Bytes("DBLW");
  w.U32(kWeightsFormatVersion);
  WriteArch(w, model.arch);
  WriteSubjects(w, model.subjects);
  const bool has_stats = !model.stats.mu.empty();
  w.U32(static_cast<std::uint32_t>(model.params.size() + (has_stats ? 2 : 0)));
  for (const auto& t : model.params) WriteTensor<false>(w, t.name, t.value);
  if (has_stats) {
    WriteTensor<false>(w, "stats.mu", StatsTensor(model.stats.mu));
    WriteTensor<false>(w, "stats.sigma", StatsTensor(model.stats.sigma));
  }
  w.Save(path);
}

TrainedModel LoadWeights(const std::filesystem::path& path) {
  io::Reader r = io::Reader::FromFile(path);
  ExpectHeader(r, "DBLW", kWeightsFormatVersion);
  TrainedModel m;
  m.arch = ReadArch(r);
  m.subjects = ReadSubjects(r);
  const std::uint32_t n = Count(r, "tensor");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, value] = ReadTensor<false>(r);
    if (name == "stats.mu") {
      m.stats.mu.assign(value.values().begin(), value.values().end());
    } else if (name == "stats.sigma") {
      m.stats.sigma.assign(value.values().begin(), value.values().end());
    } else {
      m.params.Add(std::move(name), std::move(value));
    }
  }
  ExpectEnd(r);
  try {
    CheckParamsMatch(m.params, m.arch);
  } catch (const Error& e) {
    throw LoadError(r.origin() + ": " + e.what());
  }
  if (!m.stats.mu.empty() || !m.stats.sigma.empty()) CheckStats(r, m.stats, m.arch);
  if (m.arch.use_embedding && m.subjects.size() != m.arch.embedding_rows) {
    throw LoadError(r.origin() + ": subject table does not match the embedding");
  }
  return m;
}

void SaveCheckpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const TrainerState& s = c.state;
  io::Writer w;
  w.Bytes("DBCK");
  w.U32(kCheckpointFormatVersion);
  w.U64(c.config_hash);
  WriteArch(w, c.arch);
  WriteSubjects(w, c.subjects);
  w.U32(static_cast<std::uint32_t>(c.stats.mu.size()));
  for (double v : c.stats.mu) w.F64(v);
  for (double v : c.stats.sigma) w.F64(v);
  w.U64(c.stats.n_values);
  WriteParams<true>(w, s.params);
  WriteParams<true>(w, s.best_params);
  w.U64(s.adam.step());
  w.U32(static_cast<std::uint32_t>(s.adam.first_moments().size()));
  for (std::size_t i = 0; i < s.adam.first_moments().size(); ++i) {
    WriteTensor<true>(w, "m", s.adam.first_moments()[i]);
    WriteTensor<true>(w, "v", s.adam.second_moments()[i]);
  }
  w.U64(s.epoch);
  w.Str(s.rng_state);
  w.F64(s.best_val_acc);
  w.U64(s.best_epoch);
  w.U64(s.since_best);
  w.U32(s.stopped ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(s.stop_reason));
  w.U32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& e : s.history) {
    w.U64(e.epoch);
    w.F64(e.train_loss);
    w.F64(e.val_acc);
  }
  w.Save(path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          std::optional<std::uint64_t> expected_hash) {
  io::Reader r = io::Reader::FromFile(path);
  ExpectHeader(r, "DBCK", kCheckpointFormatVersion);
  Checkpoint c;
  c.config_hash = r.U64();
  if (expected_hash && *expected_hash != c.config_hash) {
    throw LoadError(r.origin() + ": checkpoint was written for a different configuration (hash " +
                    std::to_string(c.config_hash) + ", expected " + std::to_string(*expected_hash) +
                    ")");
  }
  c.arch = ReadArch(r);
  c.subjects = ReadSubjects(r);
  const std::uint32_t ch = Count(r, "channel");
  c.stats.mu.resize(ch);
  c.stats.sigma.resize(ch);
  for (double& v : c.stats.mu) v = r.F64();
  for (double& v : c.stats.sigma) v = r.F64();
  c.stats.n_values = r.U64();
  if (ch != 0) CheckStats(r, c.stats, c.arch);

  TrainerState& s = c.state;
  s.params = ReadParams<true>(r, c.arch);
  s.best_params = ReadParams<true>(r, c.arch);
  s.adam.set_step(r.U64());
  const std::uint32_t nm = Count(r, "moment");
  if (nm != s.params.size()) throw LoadError(r.origin() + ": moment count mismatch");
  for (std::uint32_t i = 0; i < nm; ++i) {
    Tensor m = ReadTensor<true>(r).second;
    Tensor v = ReadTensor<true>(r).second;
    if (m.shape() != s.params[i].value.shape() || v.shape() != m.shape()) {
      throw LoadError(r.origin() + ": moment shape mismatch");
    }
    s.adam.first_moments().push_back(std::move(m));
    s.adam.second_moments().push_back(std::move(v));
  }
  s.epoch = r.U64();
  s.rng_state = r.Str();
  s.best_val_acc = r.F64();
  s.best_epoch = r.U64();
  s.since_best = r.U64();
  s.stopped = Flag(r);
  const std::uint32_t reason = r.U32();
  if (reason > static_cast<std::uint32_t>(StopReason::kNoEpochs)) {
    throw LoadError(r.origin() + ": invalid stop reason");
  }
  s.stop_reason = static_cast<StopReason>(reason);
  s.history.resize(Count(r, "epoch"));
  for (auto& e : s.history) {
    e.epoch = r.U64();
    e.train_loss = r.F64();
    e.val_acc = r.F64();
  }
  ExpectEnd(r);
  return c;
}

}  // namespace hdemg
