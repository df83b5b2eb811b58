#pragma once

#include "gjekit/json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gjekit {

/// Commands accepted by `run`.
std::vector<std::string> command_names();

struct RunOptions {
    std::string out_dir;                // overrides output.directory
    std::optional<std::uint64_t> seed;  // overrides the config seed
    int threads = 0;                    // 0 keeps GJEKIT_THREADS / hardware default
};

struct RunOutcome {
    Json report;
    Json metadata;
    bool pass = false;
    int exit_code = 1;  // 0 pass, 2 check failure, 1 error
    std::vector<std::string> files;
};

/// Executes one command on a validated config and writes report.json,
/// metadata.json and the requested csv/svg artifacts to the output directory.
RunOutcome run_command(const std::string& command, const Json& cfg, const RunOptions& opt = {});
/// Loads the config file first; configuration and module errors become a
/// structured error report with exit code 1.
RunOutcome run_file(const std::string& command, const std::string& config_path, const RunOptions& opt = {});

/// {"error": {kind, module, message, pointer}}
Json error_json(const std::exception& e, const std::string& pointer);

/// Generator ids, parameter schemas, default boxes and certification status.
Json list_builtins(std::size_t samples = 2000, std::uint64_t seed = 1);

}  // namespace gjekit
