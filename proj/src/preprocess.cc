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

#include "hdemg/preprocess.h"

#include <algorithm>
#include <cmath>

#include "hdemg/errors.h"

namespace hdemg {

namespace {

// floor with a tolerance for products like 0.2 * 2048 that land a hair below
// an integer.
std::size_t FloorSamples(double seconds, double fs_hz) {
  const double x = seconds * fs_hz;
  if (!(x >= 0.0) || !std::isfinite(x)) throw ContractError("invalid duration");
  return static_cast<std::size_t>(std::floor(x + 1e-9));
}

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void Add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

std::size_t WindowConfig::WindowSamples(double fs_hz) const {
  const std::size_t n = FloorSamples(window_ms / 1000.0, fs_hz);
  if (n == 0) throw ContractError("window shorter than one sample");
  return n;
}

std::size_t WindowConfig::StrideSamples(double fs_hz) const {
  const std::size_t n = FloorSamples(stride_ms / 1000.0, fs_hz);
  if (n == 0) throw ContractError("stride shorter than one sample");
  return n;
}

void WindowConfig::Validate() const {
  if (!(window_ms > 0.0) || !(stride_ms > 0.0)) throw ContractError("window and stride must be positive");
  if (!(transient_s > 0.0) || !(plateau_len_s > 0.0) || !(plateau_offset_s >= 0.0)) {
    throw ContractError("phase durations must be positive");
  }
}

std::string PhaseName(Phase p) { return p == Phase::kTransient ? "transient" : "plateau"; }

Phase ParsePhase(const std::string& s) {
  if (s == "transient") return Phase::kTransient;
  if (s == "plateau") return Phase::kPlateau;
  throw ParseError("unknown phase '" + s + "' (expected transient or plateau)");
}

ChannelStats ComputeStats(std::span<const Repetition> train) {
  if (train.empty()) throw ContractError("cannot compute statistics of an empty training set");
  const std::size_t ch = train.front().channels();
  std::vector<CompensatedSum> sums(ch);
  std::size_t n = 0;
  for (const Repetition& r : train) {
    if (r.provenance == Provenance::kTest) {
      throw ContractError("test repetition (" + r.subject_id + ", gesture " +
                          std::to_string(r.gesture_id) + ", rep " + std::to_string(r.rep_index) +
                          ") passed to normalization statistics");
    }
    if (r.channels() != ch) throw DimensionError("channel count differs across repetitions");
    const double* x = r.signal.data();
    for (std::size_t t = 0; t < r.samples(); ++t)
      for (std::size_t i = 0; i < ch; ++i) sums[i].Add(x[t * ch + i]);
    n += r.samples();
  }
  ChannelStats stats;
  stats.n_values = n;
  stats.mu.resize(ch);
  for (std::size_t i = 0; i < ch; ++i) stats.mu[i] = sums[i].value() / static_cast<double>(n);

  std::vector<CompensatedSum> sq(ch);
  for (const Repetition& r : train) {
    const double* x = r.signal.data();
    for (std::size_t t = 0; t < r.samples(); ++t) {
      for (std::size_t i = 0; i < ch; ++i) {
        const double d = x[t * ch + i] - stats.mu[i];
        sq[i].Add(d * d);
      }
    }
  }
  stats.sigma.resize(ch);
  for (std::size_t i = 0; i < ch; ++i) {
    stats.sigma[i] = std::sqrt(sq[i].value() / static_cast<double>(n));
  }
  return stats;
}

Repetition ZScore(const Repetition& rep, const ChannelStats& stats) {
  if (stats.channels() != rep.channels()) {
    throw DimensionError("statistics for " + std::to_string(stats.channels()) +
                         " channels applied to " + std::to_string(rep.channels()));
  }
  Repetition out = rep;
  const std::size_t ch = rep.channels();
  std::vector<double> denom(ch);
  for (std::size_t i = 0; i < ch; ++i) denom[i] = std::max(stats.sigma[i], kSigmaFloor);
  double* x = out.signal.data();
  for (std::size_t t = 0; t < rep.samples(); ++t) {
    for (std::size_t i = 0; i < ch; ++i) {
      // A zero-variance channel carries no information; rounding in mu must
      // not be amplified by the floor.
      x[t * ch + i] = stats.sigma[i] == 0.0 ? 0.0 : (x[t * ch + i] - stats.mu[i]) / denom[i];
    }
  }
  return out;
}

Repetition ExtractPhase(const Repetition& rep, const WindowConfig& cfg) {
  const double fs = rep.sample_rate_hz;
  std::size_t begin = 0, len = 0;
  if (cfg.phase == Phase::kTransient) {
    len = FloorSamples(cfg.transient_s, fs);
  } else {
    begin = FloorSamples(cfg.plateau_offset_s, fs);
    len = FloorSamples(cfg.plateau_len_s, fs);
  }
  if (len == 0) throw ContractError("phase shorter than one sample");
  if (begin + len > rep.samples()) {
    throw ContractError("repetition of " + std::to_string(rep.samples()) + " samples too short for " +
                        PhaseName(cfg.phase) + " phase [" + std::to_string(begin) + ", " +
                        std::to_string(begin + len) + ")");
  }
  Repetition out;
  out.subject_id = rep.subject_id;
  out.gesture_id = rep.gesture_id;
  out.rep_index = rep.rep_index;
  out.sample_rate_hz = rep.sample_rate_hz;
  out.provenance = rep.provenance;
  const std::size_t ch = rep.channels();
  out.signal = Tensor({len, ch}, std::vector<double>(rep.signal.data() + begin * ch,
                                                     rep.signal.data() + (begin + len) * ch));
  return out;
}

std::size_t WindowCount(std::size_t samples, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ContractError("window and stride must be >= 1");
  if (samples < window) {
    throw ContractError("sequence of " + std::to_string(samples) + " samples shorter than window " +
                        std::to_string(window));
  }
  return (samples - window) / stride + 1;
}

std::vector<SignalTensor> Window(const Repetition& rep, const WindowConfig& cfg) {
  const std::size_t w = cfg.WindowSamples(rep.sample_rate_hz);
  const std::size_t s = cfg.StrideSamples(rep.sample_rate_hz);
  const std::size_t count = WindowCount(rep.samples(), w, s);
  const std::size_t ch = rep.channels();
  std::vector<SignalTensor> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double* src = rep.signal.data() + k * s * ch;
    out.emplace_back(Shape{w, ch}, std::vector<double>(src, src + w * ch));
  }
  return out;
}

std::size_t WindowedDataset::AddRepetition(Repetition rep, std::size_t stride,
                                           std::size_t subject_row) {
  if (channels_ == 0) channels_ = rep.channels();
  if (rep.channels() != channels_) throw DimensionError("channel count differs across repetitions");
  if (rep.gesture_id < 0) throw IndexError("negative gesture id");
  const std::size_t count = WindowCount(rep.samples(), window_len_, stride);
  if (sources_.use_count() > 1) sources_ = std::make_shared<std::vector<Repetition>>(*sources_);
  const std::size_t src = sources_->size();
  const std::size_t label = static_cast<std::size_t>(rep.gesture_id);
  sources_->push_back(std::move(rep));
  for (std::size_t k = 0; k < count; ++k) {
    refs_.push_back({src, k * stride});
    labels_.push_back(label);
    subject_rows_.push_back(subject_row);
  }
  return count;
}

SignalTensor WindowedDataset::WindowAt(std::size_t i) const {
  const Ref& r = refs_.at(i);
  const double* src = (*sources_)[r.source].signal.data() + r.start * channels_;
  return SignalTensor({window_len_, channels_},
                      std::vector<double>(src, src + window_len_ * channels_));
}

SignalTensor WindowedDataset::Materialize() const {
  if (refs_.empty()) throw ContractError("empty windowed dataset");
  SignalTensor out({refs_.size(), window_len_, channels_});
  const std::size_t block = window_len_ * channels_;
  for (std::size_t i = 0; i < refs_.size(); ++i) {
    const Ref& r = refs_[i];
    std::copy_n((*sources_)[r.source].signal.data() + r.start * channels_, block,
                out.data() + i * block);
  }
  return out;
}

Tensor WindowedDataset::AssembleTimeMajor(std::span<const std::size_t> indices) const {
  const std::size_t batch = indices.size();
  Tensor out({window_len_ * batch, channels_});
  for (std::size_t b = 0; b < batch; ++b) {
    const Ref& r = refs_.at(indices[b]);
    const double* src = (*sources_)[r.source].signal.data() + r.start * channels_;
    for (std::size_t t = 0; t < window_len_; ++t) {
      std::copy_n(src + t * channels_, channels_, out.data() + (t * batch + b) * channels_);
    }
  }
  return out;
}

WindowedDataset WindowedDataset::Select(std::span<const std::size_t> indices) const {
  WindowedDataset out(window_len_, channels_);
  out.sources_ = sources_;
  for (std::size_t i : indices) {
    out.refs_.push_back(refs_.at(i));
    out.labels_.push_back(labels_[i]);
    out.subject_rows_.push_back(subject_rows_[i]);
  }
  return out;
}

WindowedDataset BuildWindows(std::span<const Repetition> reps, const ChannelStats& stats,
                             const WindowConfig& cfg, const SubjectRowFn& subject_row) {
  if (reps.empty()) throw ContractError("no repetitions to window");
  const double fs = reps.front().sample_rate_hz;
  WindowedDataset ds(cfg.WindowSamples(fs), reps.front().channels());
  const std::size_t stride = cfg.StrideSamples(fs);
  for (const Repetition& r : reps) {
    if (r.sample_rate_hz != fs) throw DataError("sample rate differs across repetitions");
    ds.AddRepetition(ZScore(r, stats), stride, subject_row ? subject_row(r.subject_id) : 0);
  }
  return ds;
}

}  // namespace hdemg
