#pragma once

#include "run_config.hpp"

namespace sincon::cli {

// Executes the configured pipeline and writes artifacts into output_dir.
// Exit status: 0 = success / all checks passed, 2 = a selected check failed,
// 1 = configuration or runtime error (thrown as exceptions; main maps them).
int run(const RunConfig& config);

}  // namespace sincon::cli
