// Copyright 2026 The SparseKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparsekit/cli.hpp"

int main(int argc, char** argv) { return sparsekit::cli_main(argc, argv); }
