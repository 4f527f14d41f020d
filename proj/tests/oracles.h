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

// Reference implementations for tests. None of these call into the graph or
// the kernels, except ModelLoss, which is the function under test for the
// finite-difference check.

#ifndef HDEMG_TESTS_ORACLES_H_
#define HDEMG_TESTS_ORACLES_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hdemg/model.h"
#include "hdemg/rng.h"
#include "hdemg/tensor.h"

namespace hdemg::oracle {

// 2 * sum_l 4(H in_l + H^2 + H) + (2H E + E) + (E G + G) + S E for the
// bidirectional network; the unidirectional one has a single direction and
// an H-wide encoder.
std::size_t ClosedFormParamCount(std::size_t channels, std::size_t hidden, std::size_t layers,
                                 bool bidirectional, std::size_t gestures,
                                 std::size_t embedding_rows, std::size_t embedding_width = 32);

// Plain loops over one sample. x is T x in; returns T x H hidden states.
// The state at t reads t - dilation (t + dilation backwards), zeros outside.
Tensor LoopLstm(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b,
                std::size_t dilation, bool backward);

// Encoder built from LoopLstm; x is B x T x C, result B x encoder_width.
Tensor LoopEncoder(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg);

// Inference logits (no dropout) from LoopEncoder and plain dense layers.
Tensor LoopLogits(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg,
                  std::span<const std::size_t> subject_rows);

// Mean cross-entropy of the model on a batch. When dropout_seed is nonzero
// the forward pass runs in training mode with a generator seeded by it, so
// repeated calls draw the same masks.
double ModelLoss(const ModelParameters& params, const ArchitectureConfig& cfg, const Tensor& x,
                 std::span<const std::size_t> labels, std::span<const std::size_t> subject_rows,
                 std::uint64_t dropout_seed);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // tensor[index] of the largest error
};

// Central differences on every trainable scalar against the reverse-mode
// gradient. Error per coordinate is |fd - an| / max(|fd|, |an|, floor).
GradCheckResult ModelGradCheck(const ModelParameters& params, const ArchitectureConfig& cfg,
                               const Tensor& x, std::span<const std::size_t> labels,
                               std::span<const std::size_t> subject_rows,
                               std::uint64_t dropout_seed, double h = 1e-5, double floor = 1e-6);

// Windows [s, s + w) with s = 0, stride, 2 * stride, ... that fit in T.
std::size_t EnumerateWindows(std::size_t samples, std::size_t window, std::size_t stride);

// Two-sided signed-rank p-value by enumerating all 2^n sign patterns of the
// nonzero differences. Tied magnitudes get average ranks.
double BruteForceSignedRankP(std::span<const double> differences);

// Average ranks (1-based) of |d| for the nonzero d, in input order.
std::vector<double> AverageRanks(std::span<const double> magnitudes);

Tensor RandomTensor(const Shape& shape, Rng& rng, double scale = 1.0);

// Fresh empty directory under the system temp dir.
std::filesystem::path ScratchDir(const std::string& tag);

}  // namespace hdemg::oracle

#endif  // HDEMG_TESTS_ORACLES_H_
