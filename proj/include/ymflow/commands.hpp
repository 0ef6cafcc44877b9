#pragma once

#include <ostream>

#include "ymflow/config.hpp"

namespace ymflow {

enum ExitCode { kSuccess = 0, kCriterionFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

// Runs one subcommand. Progress goes to `log`; artifacts go under the --out root only.
// Library errors propagate; see exit_code_of.
int run_command(const RunConfig& c, std::ostream& log, int threads = 1);

// Exit code for an exception escaping run_command.
int exit_code_of(const std::exception& e);

// YMFLOW_THREADS, default 1; throws config_error on a malformed value.
int threads_from_env();

}  // namespace ymflow
