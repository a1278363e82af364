// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tdz {

/// Dimension, arity, or index mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside its admissible range (non-finite data, ratio <= 0, ...).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative kernel exhausted its iteration budget.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CP-ALS normal equations could not be solved.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(std::size_t sweep, std::size_t mode)
      : std::runtime_error("singular ALS normal equations at sweep " + std::to_string(sweep) +
                           ", mode " + std::to_string(mode)),
        sweep_(sweep),
        mode_(mode) {}

  std::size_t sweep() const noexcept { return sweep_; }
  std::size_t mode() const noexcept { return mode_; }

 private:
  std::size_t sweep_;
  std::size_t mode_;
};

enum class FormatErrorCode {
  kIo,
  kBadMagic,
  kTruncated,
  kMalformedHeader,
  kVersionMismatch,
  kChecksumMismatch,
  kInconsistent,
};

inline const char* to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::kIo: return "io";
    case FormatErrorCode::kBadMagic: return "bad_magic";
    case FormatErrorCode::kTruncated: return "truncated";
    case FormatErrorCode::kMalformedHeader: return "malformed_header";
    case FormatErrorCode::kVersionMismatch: return "version_mismatch";
    case FormatErrorCode::kChecksumMismatch: return "checksum_mismatch";
    case FormatErrorCode::kInconsistent: return "inconsistent";
  }
  return "unknown";
}

/// Failure reading or writing a TDZ1 container.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  FormatErrorCode code() const noexcept { return code_; }

 private:
  FormatErrorCode code_;
};

/// A decomposition failed while compressing the named tensor.
class CompressionError : public std::runtime_error {
 public:
  CompressionError(std::string tensor_name, const std::string& what)
      : std::runtime_error("tensor '" + tensor_name + "': " + what),
        tensor_name_(std::move(tensor_name)) {}

  const std::string& tensor_name() const noexcept { return tensor_name_; }

 private:
  std::string tensor_name_;
};

}  // namespace tdz
