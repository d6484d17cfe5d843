// Copyright 2026 The adaptlab Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace adaptlab {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of a public function was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (bad sizes, duplicate LHN site, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or empty data where data is required.
class DataError : public Error {
 public:
  using Error::Error;
};

// Token id outside the vocabulary.
class TokenError : public Error {
 public:
  using Error::Error;
};

// Feature sequence too short for the encoder's decimation.
class InputLengthError : public Error {
 public:
  using Error::Error;
};

// Loss became NaN or infinite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace adaptlab
