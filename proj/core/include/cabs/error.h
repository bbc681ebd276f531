// Copyright 2026 The CABS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CABS_ERROR_H_
#define CABS_ERROR_H_

#include <stdexcept>
#include <string>

namespace cabs {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad index, width mismatch,
// rendering a malformed span, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid attribute schema: empty domain, dangling dependency, bad weights.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Conditional probability table rows that do not sum to one, or lookups of
// contexts with no row and no default.
class TableError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Precision/recall requested for a prediction set with no positive labels.
class UndefinedRecallError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (JSON, JSONL, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was asked to run before its upstream stage.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& what, std::string upstream)
      : Error(what), upstream_(std::move(upstream)) {}
  const std::string& upstream_stage() const { return upstream_; }

 private:
  std::string upstream_;
};

// An upstream artifact was produced under a different configuration.
class StaleArtifactError : public Error {
 public:
  StaleArtifactError(const std::string& what, std::string upstream)
      : Error(what), upstream_(std::move(upstream)) {}
  const std::string& upstream_stage() const { return upstream_; }

 private:
  std::string upstream_;
};

}  // namespace cabs

#endif  // CABS_ERROR_H_
