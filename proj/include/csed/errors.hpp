// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csed {

/// Operand shapes do not agree.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A value is outside the domain an operation accepts.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An API was called out of its contract (wrong tape, bad chain order, ...).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string file, std::size_t row = 0,
             std::size_t column = 0)
      : std::runtime_error(what), file_(std::move(file)), row_(row),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t row_;
  std::size_t column_;
};

/// Feature and label files disagree on the number of frames.
struct RowCountError : ParseError {
  using ParseError::ParseError;
};
/// A row's width differs from the feature width or the vocabulary size.
struct ColumnCountError : ParseError {
  using ParseError::ParseError;
};
/// A label cell is not exactly "0" or "1".
struct LabelValueError : ParseError {
  using ParseError::ParseError;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointTruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointChecksumError : CheckpointError {
  using CheckpointError::CheckpointError;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace csed
