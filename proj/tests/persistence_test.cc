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


#include <cmath>
#include <fstream>

#include "doctest.h"
#include "hdemg/errors.h"
#include "hdemg/persistence.h"
#include "oracles.h"

namespace hdemg {
namespace {

namespace fs = std::filesystem;

ArchitectureConfig Arch() {
  ArchitectureConfig a;
  a.channels = 4;
  a.hidden = 5;
  a.layers = 2;
  a.dilations = {1, 3};
  a.gestures = 3;
  a.embedding_width = 6;
  a.embedding_rows = 2;
  return a;
}

TrainedModel Model() {
  TrainedModel m;
  m.arch = Arch();
  m.params = InitModel(m.arch, 4);
  m.subjects = {"s07", "s02"};
  m.stats.mu = {0.1, -0.2, 0.3, 1e-3};
  m.stats.sigma = {1.0, 2.5, 0.5, 1e-12};
  m.stats.n_values = 100;
  return m;
}

WindowedDataset Toy(std::uint64_t seed) {
  Rng rng(seed);
  WindowedDataset ds(6, 4);
  for (std::size_t k = 0; k < 3; ++k) {
    Repetition r;
    r.gesture_id = static_cast<int>(k);
    r.signal = Tensor({60, 4});
    for (std::size_t t = 0; t < 60; ++t)
      for (std::size_t c = 0; c < 4; ++c) r.signal.at(t, c) = rng.Normal() + (c == k ? 1.5 : 0.0);
    ds.AddRepetition(std::move(r), 6, k % 2);
  }
  return ds;
}

TrainPlan Plan(std::size_t epochs) {
  TrainPlan p;
  p.max_epochs = epochs;
  p.patience.reset();
  p.batch_size = 8;
  p.shard_size = 4;
  p.validation_fraction = 0.2;
  p.seed = 9;
  p.adam.lr = 1e-2;
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void Dump(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << bytes;
}

}  // namespace

TEST_SUITE("persistence") {

TEST_CASE("weights round trip at f32 precision") {
  const auto dir = oracle::ScratchDir("weights");
  const TrainedModel m = Model();
  SaveWeights(m, dir / "m.dblw");
  const TrainedModel back = LoadWeights(dir / "m.dblw");
  CHECK(back.arch == m.arch);
  CHECK(back.subjects == m.subjects);
  CHECK(back.RowOf("s02") == 1);
  REQUIRE(back.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params[i].name == m.params[i].name);
    REQUIRE(back.params[i].value.shape() == m.params[i].value.shape());
    for (std::size_t k = 0; k < m.params[i].value.size(); ++k) {
      CHECK(back.params[i].value[k] == static_cast<double>(static_cast<float>(m.params[i].value[k])));
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(back.stats.mu[c] == static_cast<double>(static_cast<float>(m.stats.mu[c])));
    CHECK(back.stats.sigma[c] == static_cast<double>(static_cast<float>(m.stats.sigma[c])));
  }
  // A second trip is exact.
  SaveWeights(back, dir / "m2.dblw");
  CHECK(Slurp(dir / "m.dblw") == Slurp(dir / "m2.dblw"));
  fs::remove_all(dir);
}

TEST_CASE("corrupt weight files are load errors") {
  const auto dir = oracle::ScratchDir("weights_bad");
  SaveWeights(Model(), dir / "m.dblw");
  const std::string good = Slurp(dir / "m.dblw");
  const fs::path p = dir / "bad.dblw";

  std::string bytes = good;
  bytes[0] = 'X';
  Dump(p, bytes);
  CHECK_THROWS_AS(LoadWeights(p), LoadError);

  bytes = good;
  bytes[4] = 9;
  Dump(p, bytes);
  CHECK_THROWS_AS(LoadWeights(p), LoadError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    Dump(p, good.substr(0, cut));
    CHECK_THROWS_AS(LoadWeights(p), LoadError);
  }
  Dump(p, good + "x");
  CHECK_THROWS_AS(LoadWeights(p), LoadError);
  CHECK_THROWS_AS(LoadWeights(dir / "missing.dblw"), LoadError);

  // A checkpoint is not a weights file.
  Checkpoint c;
  c.arch = Arch();
  c.subjects = {"a", "b"};
  c.stats = Model().stats;
  c.state.params = InitModel(c.arch, 1);
  c.state.best_params = c.state.params;
  c.state.adam = AdamState(c.state.params);
  SaveCheckpoint(c, dir / "c.dbck");
  CHECK_THROWS_AS(LoadWeights(dir / "c.dbck"), LoadError);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "m.dblw"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const auto dir = oracle::ScratchDir("ckpt");
  ArchitectureConfig a = Arch();
  const WindowedDataset data = Toy(3);
  const ModelParameters init = InitModel(a, 8);

  Trainer straight(a, init, data, Plan(6));
  straight.Run();

  Trainer first(a, init, data, Plan(6));
  first.Run(3);
  Checkpoint c;
  c.config_hash = 0xfeedULL;
  c.arch = a;
  c.subjects = {"x", "y"};
  c.stats = Model().stats;
  c.state = first.state();
  SaveCheckpoint(c, dir / "c.dbck");

  const Checkpoint back = LoadCheckpoint(dir / "c.dbck", 0xfeedULL);
  CHECK(back.arch == a);
  CHECK(back.subjects == c.subjects);
  CHECK(back.stats.mu == c.stats.mu);
  CHECK(back.stats.sigma == c.stats.sigma);
  CHECK(back.state.params == c.state.params);
  CHECK(back.state.best_params == c.state.best_params);
  CHECK(back.state.adam == c.state.adam);
  CHECK(back.state.rng_state == c.state.rng_state);
  CHECK(back.state.history == c.state.history);
  CHECK(back.state.epoch == 3);

  Trainer resumed(a, InitModel(a, 99), data, Plan(6));
  resumed.Restore(back.state);
  resumed.Run();
  const TrainerState& s1 = straight.state();
  const TrainerState& s2 = resumed.state();
  CHECK(s2.epoch == 6);
  CHECK(s1.params == s2.params);
  CHECK(s1.best_params == s2.best_params);
  CHECK(s1.adam == s2.adam);
  CHECK(s1.history == s2.history);
  CHECK(s1.best_epoch == s2.best_epoch);
  CHECK(s1.rng_state == s2.rng_state);

  CHECK_THROWS_AS(LoadCheckpoint(dir / "c.dbck", 0xbeefULL), LoadError);
  const std::string good = Slurp(dir / "c.dbck");
  Dump(dir / "t.dbck", good.substr(0, good.size() - 5));
  CHECK_THROWS_AS(LoadCheckpoint(dir / "t.dbck"), LoadError);
  fs::remove_all(dir);
}

}  // TEST_SUITE

}  // namespace hdemg
