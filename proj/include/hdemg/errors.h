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

#ifndef HDEMG_ERRORS_H_
#define HDEMG_ERRORS_H_

#include <stdexcept>
#include <string>

namespace hdemg {

// Base of every error thrown by the library. category() is a stable,
// machine-parsable token used by the CLI error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

// Shape disagreement between operands (matmul inner extents, grid sizes).
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "dimension"; }
};

// Class label or embedding row out of range.
class IndexError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "index"; }
};

// Violated precondition of an operation.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "contract"; }
};

// Binary file could not be read (magic, version, truncation, NaN payload).
class LoadError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "load"; }
};

// Structured text (manifest, config) is malformed.
class ParseError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "parse"; }
};

// Dataset content does not satisfy what a workflow needs.
class DataError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "data"; }
};

// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "divergence"; }
};

// Wilcoxon test with every paired difference equal to zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "degenerate"; }
};

}  // namespace hdemg

#endif  // HDEMG_ERRORS_H_
