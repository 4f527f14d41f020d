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

#ifndef HDEMG_MODEL_H_
#define HDEMG_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hdemg/graph.h"
#include "hdemg/rng.h"
#include "hdemg/tensor.h"

namespace hdemg {

// Shape of the dilated (bi)LSTM gesture classifier.
//
// Network: `layers` recurrent layers of `hidden` units; layer l uses skip
// recurrence with step dilations[l]. In bidirectional mode each layer feeds
// the elementwise sum of its forward and backward outputs to the next layer,
// and the encoder emits [forward state at t = T-1, backward state at t = 0].
// Classifier: tanh(FC1) to `embedding_width` units, dropout, optional
// elementwise product with a per-subject embedding row, FC2 to `gestures`
// logits.
struct ArchitectureConfig {
  std::size_t channels = 128;
  std::size_t hidden = 32;
  std::size_t layers = 3;
  bool bidirectional = true;
  std::vector<std::size_t> dilations{1, 8, 64};
  std::size_t gestures = 65;
  double dropout_rate = 0.2;
  // Embedding row width; also the output width of FC1.
  std::size_t embedding_width = 32;
  bool use_embedding = false;
  std::size_t embedding_rows = 0;

  void Validate() const;
  std::size_t encoder_width() const { return bidirectional ? 2 * hidden : hidden; }
  std::size_t max_dilation() const;

  // Comparison variants; everything except the recurrent block keeps the
  // defaults above.
  static ArchitectureConfig RegularLstm();
  static ArchitectureConfig DilatedLstm();
  static ArchitectureConfig RegularBiLstm();

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

// One named trainable tensor. row_trainable, when non-empty, overrides
// `trainable` per row of a rank-2 tensor (used for the embedding matrix).
struct ParameterTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
  std::vector<bool> row_trainable;

  bool RowTrainable(std::size_t row) const {
    return row_trainable.empty() ? trainable : row_trainable[row];
  }
  std::size_t TrainableCount() const;
};

// Gate blocks inside the 4H rows of every LSTM W, U and b, in this order.
enum class Gate : std::size_t { kInput = 0, kForget = 1, kCandidate = 2, kOutput = 3 };

// Ordered collection of all model tensors.
//
// Names: "lstm.<l>.<fwd|bwd>.{W,U,b}" with W: 4H x in, U: 4H x H, b: 4H;
// "fc1.W" (E x encoder), "fc1.b", "fc2.W" (G x E), "fc2.b", and "embedding"
// (S x E) when enabled.
class ModelParameters {
 public:
  ParameterTensor& Add(std::string name, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  ParameterTensor& operator[](std::size_t i) { return tensors_[i]; }
  const ParameterTensor& operator[](std::size_t i) const { return tensors_[i]; }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  bool contains(std::string_view name) const;
  std::size_t IndexOf(std::string_view name) const;
  ParameterTensor& at(std::string_view name) { return tensors_[IndexOf(name)]; }
  const ParameterTensor& at(std::string_view name) const { return tensors_[IndexOf(name)]; }

  void SetAllTrainable(bool trainable);

  friend bool operator==(const ModelParameters& a, const ModelParameters& b);

 private:
  std::vector<ParameterTensor> tensors_;
};

std::string LstmTensorName(std::size_t layer, bool backward, std::string_view which);

// Exact number of scalars, optionally only those marked trainable.
std::size_t CountParams(const ModelParameters& params, bool trainable_only);

// Uniform(-k, k) weights with k = 1/sqrt(hidden), zero biases except the LSTM
// forget-gate block at 1. Deterministic in seed.
ModelParameters InitModel(const ArchitectureConfig& cfg, std::uint64_t seed);

// Throws DimensionError if params do not have exactly the tensors and shapes
// cfg implies.
void CheckParamsMatch(const ModelParameters& params, const ArchitectureConfig& cfg);

struct ForwardMode {
  // Enables dropout; requires dropout_rng when the rate is positive.
  bool training = false;
  // Embedding row per batch element. Must be set iff the model has an
  // embedding; a single entry is broadcast over the batch.
  std::vector<std::size_t> subject_rows;
  Rng* dropout_rng = nullptr;
};

// Inverted-dropout mask: 0 with probability rate, else 1/(1 - rate).
Tensor DropoutMask(const Shape& shape, double rate, Rng& rng);

// Graph handles for every model tensor, in ModelParameters order.
class BoundModel {
 public:
  // Registers each tensor as a graph parameter; frozen tensors do not
  // require gradients.
  static BoundModel Bind(Graph& g, const ModelParameters& params);
  Var operator[](std::size_t i) const { return vars_[i]; }
  Var at(std::string_view name) const { return vars_[names_->IndexOf(name)]; }
  std::size_t size() const { return vars_.size(); }
  // Replaces one binding, e.g. with a grad-check probe.
  void Rebind(std::size_t i, Var v) { vars_[i] = v; }

 private:
  const ModelParameters* names_ = nullptr;
  std::vector<Var> vars_;
};

struct LayerOutput {
  Var sequence;  // (T*B) x H, time-major; only set when requested
  Var last_forward;    // B x H, forward state at t = T-1
  Var first_backward;  // B x H, backward state at t = 0 (bidirectional only)
};

// Converts a B x T x C batch to the time-major (T*B) x C layout used by the
// graph builders (row t*B + b).
Tensor ToTimeMajor(const Tensor& batch_major);
Tensor FromTimeMajor(const Tensor& time_major, std::size_t batch, std::size_t steps);

// One dilated (bi)directional LSTM layer on a time-major input. The forward
// state at t reads the state at t - dilation (zeros before the start); the
// backward direction mirrors this with t + dilation.
LayerOutput BuildDilatedLayer(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                              std::size_t layer, Var x_time_major, std::size_t steps,
                              std::size_t batch, bool need_sequence);

// Full encoder: B x encoder_width.
Var BuildEncoder(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                 Var x_time_major, std::size_t steps, std::size_t batch);

struct ClassifierVars {
  Var fc2_input;  // after tanh, dropout and embedding product
  Var logits;
};
ClassifierVars BuildClassifier(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                               Var encoded, const ForwardMode& mode);

// Encoder plus classifier on a time-major batch.
Var BuildLogits(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                Var x_time_major, std::size_t steps, std::size_t batch, const ForwardMode& mode);

// Tensor-level conveniences (each builds and discards a graph). Inputs are
// batch-major B x T x C.
Tensor DilatedBiLstmLayer(const Tensor& x, const ModelParameters& params,
                          const ArchitectureConfig& cfg, std::size_t layer);
Tensor EncoderForward(const Tensor& x, const ModelParameters& params,
                      const ArchitectureConfig& cfg);
Tensor Classify(const Tensor& encoded, const ModelParameters& params,
                const ArchitectureConfig& cfg, const ForwardMode& mode);
// Input of FC2 for the same arguments as Classify.
Tensor ClassifierHidden(const Tensor& encoded, const ModelParameters& params,
                        const ArchitectureConfig& cfg, const ForwardMode& mode);
Tensor Logits(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg,
              const ForwardMode& mode);

}  // namespace hdemg

#endif  // HDEMG_MODEL_H_
