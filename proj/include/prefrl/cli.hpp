#pragma once

namespace prefrl {

/// Entry point of the prefrl command-line tool. Subcommands: sweep,
/// risk-table, identifiability, human-eval, generalize, likelihood, gen-data,
/// learn, score, serve. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace prefrl
