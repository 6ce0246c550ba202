// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/cli.hpp"

int main(int argc, char** argv) { return gdistil::run_cli(argc, argv); }
