// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sparsekit {

/// Process exit codes of the `sparsekit` tool. Each failure class is distinct.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,           // unknown flag, bad option value
  kExitFile = 3,            // missing or unwritable file
  kExitFormat = 4,          // malformed file contents
  kExitDimension = 5,       // operand shapes disagree
  kExitConfig = 6,          // invalid kernel config or suite
  kExitGraph = 7,           // invalid layer graph
  kExitVerify = 8,          // result failed the oracle check
  kExitUnknownBackend = 9,
};

/// Entry point of the command-line tool. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace sparsekit
