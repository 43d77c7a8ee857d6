// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mvx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text or file (segment CSV, WAV, checkpoint, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor or array shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvx
