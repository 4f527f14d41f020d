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

#ifndef HDEMG_DATASET_H_
#define HDEMG_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hdemg/tensor.h"

namespace hdemg {

inline constexpr std::size_t kDefaultChannels = 128;
inline constexpr double kDefaultSampleRateHz = 2048.0;
inline constexpr int kRepetitionsPerGesture = 5;

// Where a repetition sits relative to normalization statistics.
enum class Provenance { kUnassigned, kTrain, kTest };

// One performance of one gesture: a T x C time-major signal.
struct Repetition {
  std::string subject_id;
  int gesture_id = 0;
  int rep_index = 1;
  double sample_rate_hz = kDefaultSampleRateHz;
  Provenance provenance = Provenance::kUnassigned;
  SignalTensor signal;

  std::size_t samples() const { return signal.dim(0); }
  std::size_t channels() const { return signal.dim(1); }
};

struct RepetitionRef {
  std::string subject;
  int gesture = 0;
  int rep = 1;
  std::filesystem::path path;  // absolute, resolved against the manifest
};

// Index of a dataset. Manifest text (JSON):
//
//   {"subjects": ["s01", ...], "gestures": 65, "sample_rate_hz": 2048,
//    "files": [{"subject": "s01", "gesture": 0, "rep": 1,
//               "path": "s01/g00_r1.emgr"}, ...]}
//
// Relative paths resolve against the manifest's directory. Subjects are kept
// in lexicographic order.
struct DatasetManifest {
  std::vector<std::string> subjects;
  int gestures = 0;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<RepetitionRef> files;

  // nullptr if absent.
  const RepetitionRef* Find(const std::string& subject, int gesture, int rep) const;
};

DatasetManifest LoadManifest(const std::filesystem::path& path);
// Paths are written relative to the manifest's directory when possible.
void SaveManifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Canonical repetition file, little-endian: "EMGR", u32 version (1),
// u32 channels, u32 samples, f64 sample rate, samples*channels f32 values
// time-major.
inline constexpr std::uint32_t kRepetitionFormatVersion = 1;
void SaveRepetition(const Repetition& rep, const std::filesystem::path& path);
// Signal and sample rate come from the file; identity from the ref.
Repetition LoadRepetition(const RepetitionRef& ref);
Repetition LoadRepetition(const std::filesystem::path& path);

// Two T x 8 x 8 electrode grids to T x 128: volar grid row-major into
// channels 0-63, dorsal into 64-127.
SignalTensor FlattenGrids(const SignalTensor& volar, const SignalTensor& dorsal);

// Which repetitions train and test. Test repetitions are always {2, 4};
// training uses one, two or all three of {1, 3, 5} for fractions 33/67/100.
struct SplitPlan {
  std::vector<int> train_reps{1, 3, 5};
  std::vector<int> test_reps{2, 4};
  int retrain_fraction = 100;

  void Validate() const;
};

// Seeded uniform choice of the training subset for a fraction in
// {33, 67, 100}. Returned train_reps are sorted.
SplitPlan DrawSplitPlan(int retrain_fraction, std::uint64_t seed);

struct SplitFilter {
  std::vector<std::string> subjects;  // empty = all manifest subjects
  int gesture_count = 0;              // first N gesture ids; 0 = all
};

struct Split {
  SplitPlan plan;
  std::vector<Repetition> train;
  std::vector<Repetition> test;
};

// Hook applied to each repetition right after loading (e.g. phase trimming
// to bound memory).
using RepetitionTransform = std::function<Repetition(Repetition)>;

// Loads train/test repetitions of the filtered subjects and gestures, tagged
// with their provenance. A missing repetition is a LoadError.
Split MakeSplit(const DatasetManifest& manifest, const SplitPlan& plan, const SplitFilter& filter,
                const RepetitionTransform& on_load = {}, bool load_test = true);

}  // namespace hdemg

#endif  // HDEMG_DATASET_H_
