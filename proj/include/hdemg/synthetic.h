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

#ifndef HDEMG_SYNTHETIC_H_
#define HDEMG_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "hdemg/dataset.h"
#include "hdemg/tensor.h"

namespace hdemg {

// Linear-mixing generator. Gesture g drives each latent source l with a
// positive envelope (three seeded low-frequency sinusoids) times a white
// carrier that is redrawn per repetition. Subject u observes the sources
// through A_u = base + subject_mixing_scale * perturbation_u (channels x
// latent), plus Gaussian sensor noise. Each repetition scales the mixed
// signal by a factor drawn from [1 - amplitude_jitter, 1 + amplitude_jitter].
struct SyntheticSpec {
  std::size_t n_subjects = 4;
  std::size_t n_gestures = 8;
  int reps_per_gesture = kRepetitionsPerGesture;
  double fs = kDefaultSampleRateHz;
  double rep_seconds = 1.0;
  std::size_t channels = kDefaultChannels;
  std::size_t latent_sources = 8;
  double subject_mixing_scale = 0.5;
  double noise_sigma = 0.1;
  double amplitude_jitter = 0.1;
  double envelope_min_hz = 0.5;
  double envelope_max_hz = 4.0;
  std::uint64_t seed = 0;

  std::size_t samples() const;
  void Validate() const;
};

// "s01", "s02", ...
std::string SyntheticSubjectId(std::size_t subject);

// channels x latent mixing matrix of a subject.
Tensor MixingMatrix(const SyntheticSpec& spec, std::size_t subject);

// One repetition in memory (values rounded to f32 so they survive a file
// round trip unchanged).
Repetition GenerateRepetition(const SyntheticSpec& spec, std::size_t subject, int gesture, int rep);

// Writes every repetition under out_dir/<subject>/g<gesture>_r<rep>.emgr and
// out_dir/manifest.json; returns the manifest.
DatasetManifest GenerateDataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace hdemg

#endif  // HDEMG_SYNTHETIC_H_
