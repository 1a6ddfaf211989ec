#pragma once

#include "csrb/runconfig.hpp"

namespace csrb {

int cmd_train(const RunConfig& cfg, std::size_t threads);
int cmd_certify(const RunConfig& cfg, std::size_t threads);
int cmd_heatmap(const RunConfig& cfg, std::size_t threads);
int cmd_tune_alpha(const RunConfig& cfg, std::size_t threads);
int cmd_sweep_eps(const RunConfig& cfg, std::size_t threads);

/// Full command-line entry point. Parses arguments and a JSON config,
/// dispatches, and maps failures to exit codes: 2 for configuration or
/// usage errors, 3 for data errors, 4 for numeric failures. Errors are
/// reported on stderr as a single JSON object.
int run_cli(int argc, const char* const* argv);

}  // namespace csrb
