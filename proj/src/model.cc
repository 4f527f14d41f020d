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

#include "hdemg/model.h"

#include <algorithm>
#include <cmath>

#include "hdemg/errors.h"

namespace hdemg {

void ArchitectureConfig::Validate() const {
  if (channels == 0 || hidden == 0 || layers == 0 || gestures == 0 || embedding_width == 0) {
    throw ContractError("architecture extents must be positive");
  }
  if (dilations.size() != layers) {
    throw ContractError("dilation schedule has " + std::to_string(dilations.size()) +
                        " entries for " + std::to_string(layers) + " layers");
  }
  for (std::size_t d : dilations) {
    if (d == 0) throw ContractError("dilations must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("dropout rate must be in [0, 1)");
  }
  if (use_embedding && embedding_rows == 0) {
    throw ContractError("embedding enabled with zero rows");
  }
}

std::size_t ArchitectureConfig::max_dilation() const {
  return dilations.empty() ? 1 : *std::max_element(dilations.begin(), dilations.end());
}

ArchitectureConfig ArchitectureConfig::RegularLstm() {
  ArchitectureConfig c;
  c.bidirectional = false;
  c.hidden = 64;
  c.dilations = {1, 1, 1};
  return c;
}

ArchitectureConfig ArchitectureConfig::DilatedLstm() {
  ArchitectureConfig c;
  c.bidirectional = false;
  c.hidden = 64;
  return c;
}

ArchitectureConfig ArchitectureConfig::RegularBiLstm() {
  ArchitectureConfig c;
  c.dilations = {1, 1, 1};
  return c;
}

std::size_t ParameterTensor::TrainableCount() const {
  if (row_trainable.empty()) return trainable ? value.size() : 0;
  const std::size_t cols = value.size() / value.dim(0);
  std::size_t n = 0;
  for (bool r : row_trainable) n += r ? cols : 0;
  return n;
}

ParameterTensor& ModelParameters::Add(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter tensor " + name);
  tensors_.push_back(ParameterTensor{std::move(name), std::move(value), true, {}});
  return tensors_.back();
}

bool ModelParameters::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const ParameterTensor& t) { return t.name == name; });
}

std::size_t ModelParameters::IndexOf(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw IndexError("no parameter tensor named " + std::string(name));
}

void ModelParameters::SetAllTrainable(bool trainable) {
  for (auto& t : tensors_) {
    t.trainable = trainable;
    t.row_trainable.clear();
  }
}

bool operator==(const ModelParameters& a, const ModelParameters& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

std::string LstmTensorName(std::size_t layer, bool backward, std::string_view which) {
  return "lstm." + std::to_string(layer) + (backward ? ".bwd." : ".fwd.") + std::string(which);
}

std::size_t CountParams(const ModelParameters& params, bool trainable_only) {
  std::size_t n = 0;
  for (const auto& t : params) n += trainable_only ? t.TrainableCount() : t.value.size();
  return n;
}

namespace {

struct ExpectedTensor {
  std::string name;
  Shape shape;
};

std::vector<ExpectedTensor> ExpectedLayout(const ArchitectureConfig& cfg) {
  std::vector<ExpectedTensor> out;
  const std::size_t h = cfg.hidden;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t in = l == 0 ? cfg.channels : h;
    for (int dir = 0; dir < (cfg.bidirectional ? 2 : 1); ++dir) {
      out.push_back({LstmTensorName(l, dir == 1, "W"), {4 * h, in}});
      out.push_back({LstmTensorName(l, dir == 1, "U"), {4 * h, h}});
      out.push_back({LstmTensorName(l, dir == 1, "b"), {4 * h}});
    }
  }
  out.push_back({"fc1.W", {cfg.embedding_width, cfg.encoder_width()}});
  out.push_back({"fc1.b", {cfg.embedding_width}});
  out.push_back({"fc2.W", {cfg.gestures, cfg.embedding_width}});
  out.push_back({"fc2.b", {cfg.gestures}});
  if (cfg.use_embedding) out.push_back({"embedding", {cfg.embedding_rows, cfg.embedding_width}});
  return out;
}

}  // namespace

ModelParameters InitModel(const ArchitectureConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  Rng rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  ModelParameters params;
  for (const auto& [name, shape] : ExpectedLayout(cfg)) {
    Tensor t(shape);
    const bool is_bias = shape.size() == 1;
    if (!is_bias) {
      for (double& v : t.values()) v = rng.Uniform(-k, k);
    } else if (name.starts_with("lstm.")) {
      const std::size_t h = cfg.hidden;
      const std::size_t f = static_cast<std::size_t>(Gate::kForget);
      for (std::size_t i = f * h; i < (f + 1) * h; ++i) t[i] = 1.0;
    }
    params.Add(name, std::move(t));
  }
  return params;
}

void CheckParamsMatch(const ModelParameters& params, const ArchitectureConfig& cfg) {
  const auto layout = ExpectedLayout(cfg);
  if (layout.size() != params.size()) {
    throw DimensionError("model has " + std::to_string(params.size()) + " tensors, architecture expects " +
                         std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params[i].name != layout[i].name || params[i].value.shape() != layout[i].shape) {
      throw DimensionError("tensor " + params[i].name + ShapeString(params[i].value.shape()) +
                           " does not match expected " + layout[i].name +
                           ShapeString(layout[i].shape));
    }
  }
}

Tensor DropoutMask(const Shape& shape, double rate, Rng& rng) {
  Tensor mask(shape, 1.0);
  if (rate <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = rng.Uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

BoundModel BoundModel::Bind(Graph& g, const ModelParameters& params) {
  BoundModel b;
  b.names_ = &params;
  b.vars_.reserve(params.size());
  for (const auto& t : params) {
    const bool any_row = t.row_trainable.empty()
                             ? t.trainable
                             : std::find(t.row_trainable.begin(), t.row_trainable.end(), true) !=
                                   t.row_trainable.end();
    b.vars_.push_back(g.Parameter(t.value, any_row));
  }
  return b;
}

Tensor ToTimeMajor(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("expected B x T x C input, got " + ShapeString(x.shape()));
  const std::size_t batch = x.dim(0), steps = x.dim(1), ch = x.dim(2);
  Tensor out({steps * batch, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t)
      std::copy_n(x.data() + (b * steps + t) * ch, ch, out.data() + (t * batch + b) * ch);
  return out;
}

Tensor FromTimeMajor(const Tensor& x, std::size_t batch, std::size_t steps) {
  const std::size_t ch = x.cols();
  if (x.rows() != batch * steps) throw DimensionError("time-major rows do not match B*T");
  Tensor out({batch, steps, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t)
      std::copy_n(x.data() + (t * batch + b) * ch, ch, out.data() + (b * steps + t) * ch);
  return out;
}

namespace {

struct Direction {
  std::vector<Var> h;
  std::vector<Var> c;
};

// Runs one direction of a dilated LSTM. Chains never mix: the state at t only
// ever reads the state at t -/+ dilation.
Direction RunDirection(Graph& g, Var x_tm, Var w, Var u, Var bias, std::size_t steps,
                       std::size_t batch, std::size_t hidden, std::size_t dilation, bool backward) {
  const std::size_t h = hidden;
  const Var xp = g.AddRow(g.MatMulT(x_tm, w), bias);
  Direction dir{std::vector<Var>(steps), std::vector<Var>(steps)};
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = backward ? steps - 1 - s : s;
    const bool has_prev = backward ? t + dilation < steps : t >= dilation;
    const std::size_t prev = backward ? t + dilation : t - dilation;

    Var z = g.SliceRows(xp, t * batch, (t + 1) * batch);
    if (has_prev) z = g.Add(z, g.MatMulT(dir.h[prev], u));
    const Var in_gate = g.Sigmoid(g.SliceCols(z, 0, h));
    const Var cand = g.Tanh(g.SliceCols(z, 2 * h, 3 * h));
    const Var out_gate = g.Sigmoid(g.SliceCols(z, 3 * h, 4 * h));
    Var c = g.Mul(in_gate, cand);
    if (has_prev) {
      // With a zero previous cell state the forget gate has no effect.
      const Var forget = g.Sigmoid(g.SliceCols(z, h, 2 * h));
      c = g.Add(g.Mul(forget, dir.c[prev]), c);
    }
    dir.c[t] = c;
    dir.h[t] = g.Mul(out_gate, g.Tanh(c));
  }
  return dir;
}

}  // namespace

LayerOutput BuildDilatedLayer(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                              std::size_t layer, Var x_tm, std::size_t steps, std::size_t batch,
                              bool need_sequence) {
  if (layer >= cfg.layers) throw IndexError("layer " + std::to_string(layer) + " out of range");
  const std::size_t d = cfg.dilations[layer];
  if (d == 0) throw ContractError("dilation must be >= 1");
  if (d >= steps) {
    throw ContractError("dilation " + std::to_string(d) + " leaves no recurrence over " +
                        std::to_string(steps) + " steps");
  }
  const Direction fwd =
      RunDirection(g, x_tm, model.at(LstmTensorName(layer, false, "W")),
                   model.at(LstmTensorName(layer, false, "U")),
                   model.at(LstmTensorName(layer, false, "b")), steps, batch, cfg.hidden, d, false);
  LayerOutput out;
  out.last_forward = fwd.h[steps - 1];
  if (!cfg.bidirectional) {
    if (need_sequence) out.sequence = g.ConcatRows(fwd.h);
    return out;
  }
  const Direction bwd =
      RunDirection(g, x_tm, model.at(LstmTensorName(layer, true, "W")),
                   model.at(LstmTensorName(layer, true, "U")),
                   model.at(LstmTensorName(layer, true, "b")), steps, batch, cfg.hidden, d, true);
  out.first_backward = bwd.h[0];
  if (need_sequence) out.sequence = g.Add(g.ConcatRows(fwd.h), g.ConcatRows(bwd.h));
  return out;
}

Var BuildEncoder(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg, Var x_tm,
                 std::size_t steps, std::size_t batch) {
  if (g.value(x_tm).rows() != steps * batch || g.value(x_tm).cols() != cfg.channels) {
    throw DimensionError("encoder input " + ShapeString(g.value(x_tm).shape()) + " expected [" +
                         std::to_string(steps * batch) + "x" + std::to_string(cfg.channels) + "]");
  }
  Var x = x_tm;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const bool last = l + 1 == cfg.layers;
    LayerOutput out = BuildDilatedLayer(g, model, cfg, l, x, steps, batch, !last);
    if (!last) {
      x = out.sequence;
      continue;
    }
    if (!cfg.bidirectional) return out.last_forward;
    const Var parts[] = {out.last_forward, out.first_backward};
    return g.ConcatCols(parts);
  }
  return x;  // unreachable: layers >= 1
}

ClassifierVars BuildClassifier(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg,
                               Var encoded, const ForwardMode& mode) {
  const std::size_t batch = g.value(encoded).rows();
  if (cfg.use_embedding == mode.subject_rows.empty()) {
    throw ContractError(cfg.use_embedding ? "subject row required for an embedding model"
                                          : "subject row given for a model without embedding");
  }
  Var z = g.Tanh(g.AddRow(g.MatMulT(encoded, model.at("fc1.W")), model.at("fc1.b")));
  if (mode.training && cfg.dropout_rate > 0.0) {
    if (mode.dropout_rng == nullptr) throw ContractError("training mode needs a dropout generator");
    z = g.Dropout(z, DropoutMask(g.value(z).shape(), cfg.dropout_rate, *mode.dropout_rng));
  }
  if (cfg.use_embedding) {
    std::vector<std::size_t> rows = mode.subject_rows;
    if (rows.size() == 1 && batch > 1) rows.assign(batch, rows[0]);
    if (rows.size() != batch) throw DimensionError("one subject row per batch element required");
    z = g.Mul(z, g.GatherRows(model.at("embedding"), std::move(rows)));
  }
  return {z, g.AddRow(g.MatMulT(z, model.at("fc2.W")), model.at("fc2.b"))};
}

Var BuildLogits(Graph& g, const BoundModel& model, const ArchitectureConfig& cfg, Var x_tm,
                std::size_t steps, std::size_t batch, const ForwardMode& mode) {
  return BuildClassifier(g, model, cfg, BuildEncoder(g, model, cfg, x_tm, steps, batch), mode)
      .logits;
}

Tensor DilatedBiLstmLayer(const Tensor& x, const ModelParameters& params,
                          const ArchitectureConfig& cfg, std::size_t layer) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  const Var out = BuildDilatedLayer(g, model, cfg, layer, g.Constant(ToTimeMajor(x)), steps,
                                    batch, true)
                      .sequence;
  return FromTimeMajor(g.value(out), batch, steps);
}

Tensor EncoderForward(const Tensor& x, const ModelParameters& params,
                      const ArchitectureConfig& cfg) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  return g.value(BuildEncoder(g, model, cfg, g.Constant(ToTimeMajor(x)), x.dim(1), x.dim(0)));
}

Tensor Classify(const Tensor& encoded, const ModelParameters& params,
                const ArchitectureConfig& cfg, const ForwardMode& mode) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  return g.value(BuildClassifier(g, model, cfg, g.Constant(encoded), mode).logits);
}

Tensor ClassifierHidden(const Tensor& encoded, const ModelParameters& params,
                        const ArchitectureConfig& cfg, const ForwardMode& mode) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  return g.value(BuildClassifier(g, model, cfg, g.Constant(encoded), mode).fc2_input);
}

Tensor Logits(const Tensor& x, const ModelParameters& params, const ArchitectureConfig& cfg,
              const ForwardMode& mode) {
  Graph g;
  const BoundModel model = BoundModel::Bind(g, params);
  return g.value(
      BuildLogits(g, model, cfg, g.Constant(ToTimeMajor(x)), x.dim(1), x.dim(0), mode));
}

}  // namespace hdemg
