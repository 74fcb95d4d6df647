// Copyright 2026 The mbrec Authors.
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

namespace mbrec {

// Error taxonomy. The CLI maps each family onto its own exit code.

/// Invalid configuration or shape mismatch between operands.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of an API (e.g. backward on a non-scalar node, unknown variant).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with input data: unreadable files, malformed records, empty
/// target behavior, unusable splits.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestionError : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values in losses or gradients.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verification routine could not produce a trustworthy answer.
class VerificationError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace mbrec
