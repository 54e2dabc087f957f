// SPDX-License-Identifier: Apache-2.0
#include "lorascope/cli.hpp"

int main(int argc, char** argv) { return lorascope::cli::run(argc, argv); }
