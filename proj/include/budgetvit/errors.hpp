// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace budgetvit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its admissible range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Token sequences that cannot be laid out on a square grid, or images that
// cannot be tiled by whole patches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// The model is not in the state an operation requires (e.g. the positional
// embedding grid does not match the input resolution).
class StateError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& what, std::string diagnostic_checkpoint)
      : Error(what), checkpoint_(std::move(diagnostic_checkpoint)) {}
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace budgetvit
