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

#ifndef HDEMG_CLI_H_
#define HDEMG_CLI_H_

#include <string>

#include "hdemg/errors.h"

namespace hdemg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

// Exit code for an error category.
int ExitCodeFor(const Error& e);

// "error: category=<category> message=<text>" on one line.
std::string FormatError(const std::string& category, const std::string& message);

// Entry point of the hdemg tool. Subcommands: convert, synth, pretrain,
// retrain, train, eval, protocol. Errors are reported on stderr as one
// FormatError line.
int RunCli(int argc, char** argv);

}  // namespace hdemg

#endif  // HDEMG_CLI_H_
