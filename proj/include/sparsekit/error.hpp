// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sparsekit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (matmul inner dims, permutation length, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents or an invariant-violating CSR triple.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class FileError : public Error {
 public:
  using Error::Error;
};

/// Invalid microkernel configuration, tuning space or suite description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Lowering requested for a backend id that is not registered.
class UnknownBackendError : public Error {
 public:
  using Error::Error;
};

/// Layer graph is structurally invalid (dangling activation, shape mismatch).
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsekit
