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

#include "oracles.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>
#include <stdexcept>

#include "hdemg/graph.h"

namespace hdemg::oracle {

std::size_t ClosedFormParamCount(std::size_t channels, std::size_t hidden, std::size_t layers,
                                 bool bidirectional, std::size_t gestures,
                                 std::size_t embedding_rows, std::size_t embedding_width) {
  const std::size_t dirs = bidirectional ? 2 : 1;
  std::size_t lstm = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? channels : hidden;
    lstm += 4 * (hidden * in + hidden * hidden + hidden);
  }
  const std::size_t e = embedding_width;
  return dirs * lstm + (dirs * hidden * e + e) + (e * gestures + gestures) + embedding_rows * e;
}

namespace {

double Sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor LoopLstm(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b,
                std::size_t dilation, bool backward) {
  const std::size_t steps = x.dim(0), in = x.dim(1), h = u.dim(1);
  Tensor hs({steps, h}), cs({steps, h});
  std::vector<double> z(4 * h);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = backward ? steps - 1 - s : s;
    const bool has_prev = backward ? t + dilation < steps : t >= dilation;
    const std::size_t prev = backward ? t + dilation : t - dilation;
    for (std::size_t r = 0; r < 4 * h; ++r) {
      double acc = b[r];
      for (std::size_t j = 0; j < in; ++j) acc += w.at(r, j) * x.at(t, j);
      if (has_prev) {
        for (std::size_t j = 0; j < h; ++j) acc += u.at(r, j) * hs.at(prev, j);
      }
      z[r] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double i = Sig(z[j]);
      const double f = Sig(z[h + j]);
      const double g = std::tanh(z[2 * h + j]);
      const double o = Sig(z[3 * h + j]);
      const double c_prev = has_prev ? cs.at(prev, j) : 0.0;
      const double c = f * c_prev + i * g;
      cs.at(t, j) = c;
      hs.at(t, j) = o * std::tanh(c);
    }
  }
  return hs;
}

Tensor LoopEncoder(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg) {
  const std::size_t batch = x.dim(0), steps = x.dim(1), ch = x.dim(2), h = cfg.hidden;
  Tensor out({batch, cfg.encoder_width()});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    Tensor seq({steps, ch});
    std::copy_n(x.data() + bi * steps * ch, steps * ch, seq.data());
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const auto& p = [&](bool bwd, const char* which) -> const Tensor& {
        return params.at(LstmTensorName(l, bwd, which)).value;
      };
      const std::size_t d = cfg.dilations[l];
      const Tensor fwd = LoopLstm(seq, p(false, "W"), p(false, "U"), p(false, "b"), d, false);
      if (!cfg.bidirectional) {
        if (l + 1 == cfg.layers) {
          for (std::size_t j = 0; j < h; ++j) out.at(bi, j) = fwd.at(steps - 1, j);
        }
        seq = fwd;
        continue;
      }
      const Tensor bwd = LoopLstm(seq, p(true, "W"), p(true, "U"), p(true, "b"), d, true);
      if (l + 1 == cfg.layers) {
        for (std::size_t j = 0; j < h; ++j) {
          out.at(bi, j) = fwd.at(steps - 1, j);
          out.at(bi, h + j) = bwd.at(0, j);
        }
      }
      seq = Tensor({steps, h});
      for (std::size_t k = 0; k < seq.size(); ++k) seq[k] = fwd[k] + bwd[k];
    }
  }
  return out;
}

Tensor LoopLogits(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg,
                  std::span<const std::size_t> subject_rows) {
  const Tensor enc = LoopEncoder(x, params, cfg);
  const Tensor& w1 = params.at("fc1.W").value;
  const Tensor& b1 = params.at("fc1.b").value;
  const Tensor& w2 = params.at("fc2.W").value;
  const Tensor& b2 = params.at("fc2.b").value;
  const std::size_t batch = enc.dim(0), e = w1.dim(0), g = w2.dim(0);
  Tensor logits({batch, g});
  std::vector<double> z(e);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t r = 0; r < e; ++r) {
      double acc = b1[r];
      for (std::size_t j = 0; j < enc.dim(1); ++j) acc += w1.at(r, j) * enc.at(bi, j);
      z[r] = std::tanh(acc);
      if (cfg.use_embedding) {
        const std::size_t row = subject_rows.size() == 1 ? subject_rows[0] : subject_rows[bi];
        z[r] *= params.at("embedding").value.at(row, r);
      }
    }
    for (std::size_t k = 0; k < g; ++k) {
      double acc = b2[k];
      for (std::size_t r = 0; r < e; ++r) acc += w2.at(k, r) * z[r];
      logits.at(bi, k) = acc;
    }
  }
  return logits;
}

double ModelLoss(const ModelParameters& params, const ArchitectureConfig& cfg, const Tensor& x,
                 std::span<const std::size_t> labels, std::span<const std::size_t> subject_rows,
                 std::uint64_t dropout_seed) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  Rng rng(dropout_seed);
  ForwardMode mode;
  mode.training = dropout_seed != 0;
  mode.dropout_rng = &rng;
  mode.subject_rows.assign(subject_rows.begin(), subject_rows.end());
  const Var logits = BuildLogits(g, model, cfg, g.Constant(ToTimeMajor(x)), x.dim(1), x.dim(0), mode);
  const Var loss =
      g.SoftmaxCrossEntropy(logits, std::vector<std::size_t>(labels.begin(), labels.end()));
  return g.value(loss)[0];
}

GradCheckResult ModelGradCheck(const ModelParameters& params, const ArchitectureConfig& cfg,
                               const Tensor& x, std::span<const std::size_t> labels,
                               std::span<const std::size_t> subject_rows,
                               std::uint64_t dropout_seed, double h, double floor) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    const BoundModel model = BoundModel::Bind(g, params);
    Rng rng(dropout_seed);
    ForwardMode mode;
    mode.training = dropout_seed != 0;
    mode.dropout_rng = &rng;
    mode.subject_rows.assign(subject_rows.begin(), subject_rows.end());
    const Var logits =
        BuildLogits(g, model, cfg, g.Constant(ToTimeMajor(x)), x.dim(1), x.dim(0), mode);
    const Var loss =
        g.SoftmaxCrossEntropy(logits, std::vector<std::size_t>(labels.begin(), labels.end()));
    g.Backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(g.grad(model[i]));
  }
  GradCheckResult res;
  ModelParameters probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    for (std::size_t k = 0; k < params[i].value.size(); ++k) {
      const double orig = probe[i].value[k];
      probe[i].value[k] = orig + h;
      const double up = ModelLoss(probe, cfg, x, labels, subject_rows, dropout_seed);
      probe[i].value[k] = orig - h;
      const double down = ModelLoss(probe, cfg, x, labels, subject_rows, dropout_seed);
      probe[i].value[k] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[i][k];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = params[i].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return res;
}

std::size_t EnumerateWindows(std::size_t samples, std::size_t window, std::size_t stride) {
  std::size_t n = 0;
  for (std::size_t s = 0; s + window <= samples; s += stride) ++n;
  return n;
}

std::vector<double> AverageRanks(std::span<const double> magnitudes) {
  const std::size_t n = magnitudes.size();
  std::vector<double> ranks(n);
  // O(n^2): rank = (number strictly smaller) + (ties + 1) / 2.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t smaller = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (magnitudes[j] < magnitudes[i]) ++smaller;
      if (magnitudes[j] == magnitudes[i]) ++equal;
    }
    ranks[i] = static_cast<double>(smaller) + (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return ranks;
}

double BruteForceSignedRankP(std::span<const double> differences) {
  std::vector<double> mags;
  std::vector<bool> positive;
  for (double d : differences) {
    if (d == 0.0) continue;
    mags.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  const std::size_t n = mags.size();
  if (n > 24) throw std::invalid_argument("brute force limited to 24 pairs");
  const std::vector<double> ranks = AverageRanks(mags);
  double w_plus = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += ranks[i];
    if (positive[i]) w_plus += ranks[i];
  }
  const double w = std::min(w_plus, total - w_plus);
  std::uint64_t at_most = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) s += ranks[i];
    }
    if (s <= w + 1e-9) ++at_most;
  }
  return std::min(1.0, 2.0 * static_cast<double>(at_most) / static_cast<double>(patterns));
}

Tensor RandomTensor(const Shape& shape, Rng& rng, double scale) {
  Tensor t(shape);
  for (double& v : t.values()) v = scale * rng.Uniform(-1.0, 1.0);
  return t;
}

std::filesystem::path ScratchDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("hdemg_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hdemg::oracle
