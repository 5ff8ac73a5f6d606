#pragma once

#include <string>
#include <vector>

namespace infkit::cli {

// Runs one subcommand (train, select, influence, remove, perturb, score,
// backdoor, spectrum, report) and writes its artifacts into the --out
// directory: result.json always; steps.csv/histogram.csv for walk protocols;
// a GIFC checkpoint whenever parameters were produced. Failures write
// error.json with a machine-readable record and return a nonzero code.
//
// `args` are the command-line tokens after the program name.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

}  // namespace infkit::cli
