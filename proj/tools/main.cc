// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

int main(int argc, char** argv) { return repsup::cli::cli_main(argc, argv); }
