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

#include "hdemg/synthetic.h"

#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>

#include "hdemg/errors.h"
#include "hdemg/rng.h"

namespace hdemg {

std::size_t SyntheticSpec::samples() const {
  return static_cast<std::size_t>(std::floor(rep_seconds * fs + 1e-9));
}

void SyntheticSpec::Validate() const {
  if (n_subjects == 0 || n_gestures == 0 || reps_per_gesture <= 0) {
    throw ContractError("synthetic spec needs subjects, gestures and repetitions");
  }
  if (channels == 0 || latent_sources == 0) throw ContractError("synthetic spec needs channels and sources");
  if (!(fs > 0.0) || !(rep_seconds > 0.0) || samples() == 0) {
    throw ContractError("synthetic repetitions must contain samples");
  }
  if (!(subject_mixing_scale >= 0.0) || !(noise_sigma >= 0.0)) {
    throw ContractError("mixing scale and noise must be non-negative");
  }
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) {
    throw ContractError("amplitude jitter must be in [0, 1)");
  }
  if (!(envelope_min_hz > 0.0 && envelope_max_hz >= envelope_min_hz)) {
    throw ContractError("invalid envelope frequency band");
  }
}

std::string SyntheticSubjectId(std::size_t subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02zu", subject + 1);
  return buf;
}

namespace {

Tensor GaussianMatrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Tensor m({rows, cols});
  for (double& v : m.values()) v = scale * rng.Normal();
  return m;
}

}  // namespace

Tensor MixingMatrix(const SyntheticSpec& spec, std::size_t subject) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_sources));
  Tensor a = GaussianMatrix(spec.channels, spec.latent_sources, DeriveSeed(spec.seed, "mixing/base"),
                            scale);
  if (spec.subject_mixing_scale > 0.0) {
    const Tensor p = GaussianMatrix(spec.channels, spec.latent_sources,
                                    DeriveSeed(spec.seed, "mixing/" + SyntheticSubjectId(subject)),
                                    scale);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += spec.subject_mixing_scale * p[i];
  }
  return a;
}

Repetition GenerateRepetition(const SyntheticSpec& spec, std::size_t subject, int gesture, int rep) {
  spec.Validate();
  if (subject >= spec.n_subjects) throw IndexError("synthetic subject out of range");
  if (gesture < 0 || static_cast<std::size_t>(gesture) >= spec.n_gestures) {
    throw IndexError("synthetic gesture out of range");
  }
  if (rep < 1 || rep > spec.reps_per_gesture) throw IndexError("synthetic repetition out of range");

  const std::size_t T = spec.samples(), C = spec.channels, L = spec.latent_sources;
  const std::string tag = "/" + SyntheticSubjectId(subject) + "/g" + std::to_string(gesture) + "/r" +
                          std::to_string(rep);

  // Gesture envelopes: per source, three sinusoids with seeded amplitude,
  // frequency and phase, kept positive.
  struct Component {
    double amp, hz, phase;
  };
  Rng env_rng(DeriveSeed(spec.seed, "envelope/g" + std::to_string(gesture)));
  std::vector<Component> comps(L * 3);
  for (auto& c : comps) {
    c.amp = env_rng.Uniform();
    c.hz = env_rng.Uniform(spec.envelope_min_hz, spec.envelope_max_hz);
    c.phase = env_rng.Uniform(0.0, 2.0 * std::numbers::pi);
  }

  Rng rng(DeriveSeed(spec.seed, "carrier" + tag));
  const double jitter = 1.0 + spec.amplitude_jitter * rng.Uniform(-1.0, 1.0);
  Tensor sources({T, L});
  for (std::size_t t = 0; t < T; ++t) {
    const double time = static_cast<double>(t) / spec.fs;
    for (std::size_t l = 0; l < L; ++l) {
      double e = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const Component& c = comps[l * 3 + k];
        e += c.amp * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * c.hz * time + c.phase));
      }
      sources.at(t, l) = e * rng.Normal();
    }
  }

  const Tensor a = MixingMatrix(spec, subject);
  Repetition out;
  out.subject_id = SyntheticSubjectId(subject);
  out.gesture_id = gesture;
  out.rep_index = rep;
  out.sample_rate_hz = spec.fs;
  out.signal = Tensor({T, C});
  Rng noise(DeriveSeed(spec.seed, "noise" + tag));
  for (std::size_t t = 0; t < T; ++t) {
    const double* s = sources.data() + t * L;
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = a.data() + c * L;
      double v = 0.0;
      for (std::size_t l = 0; l < L; ++l) v += row[l] * s[l];
      v = jitter * v + spec.noise_sigma * noise.Normal();
      out.signal.at(t, c) = static_cast<double>(static_cast<float>(v));
    }
  }
  return out;
}

DatasetManifest GenerateDataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.Validate();
  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.gestures = static_cast<int>(spec.n_gestures);
  m.sample_rate_hz = spec.fs;
  for (std::size_t u = 0; u < spec.n_subjects; ++u) {
    m.subjects.push_back(SyntheticSubjectId(u));
    std::filesystem::create_directories(out_dir / m.subjects.back());
  }
  for (std::size_t u = 0; u < spec.n_subjects; ++u) {
    for (std::size_t g = 0; g < spec.n_gestures; ++g) {
      for (int r = 1; r <= spec.reps_per_gesture; ++r) {
        char name[48];
        std::snprintf(name, sizeof name, "g%02zu_r%d.emgr", g, r);
        m.files.push_back({SyntheticSubjectId(u), static_cast<int>(g), r,
                           out_dir / SyntheticSubjectId(u) / name});
      }
    }
  }

  std::exception_ptr error;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m.files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const RepetitionRef& ref = m.files[static_cast<std::size_t>(i)];
      const std::size_t u = static_cast<std::size_t>(std::stoul(ref.subject.substr(1))) - 1;
      SaveRepetition(GenerateRepetition(spec, u, ref.gesture, ref.rep), ref.path);
    } catch (...) {
#pragma omp critical(hdemg_synth_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  SaveManifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace hdemg
