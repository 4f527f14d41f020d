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

#ifndef HDEMG_RNG_H_
#define HDEMG_RNG_H_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hdemg {

// Seedable generator on top of std::mt19937_64. The distributions are
// implemented here rather than with <random> distributions, whose output is
// implementation-defined, so sequences are identical across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Standard normal via Box-Muller; the spare deviate is cached.
  double Normal();
  // Unbiased integer in [0, n).
  std::uint64_t Below(std::uint64_t n);

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(Below(i))]);
    }
  }

  // Full generator state as text, including the cached normal deviate.
  std::string SaveState() const;
  void LoadState(std::string_view state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit mixing of a base seed with a string key (FNV-1a followed by
// a splitmix finalizer).
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view key);

// FNV-1a over bytes.
std::uint64_t Fnv1a(std::string_view bytes);

}  // namespace hdemg

#endif  // HDEMG_RNG_H_
