#pragma once

#include "fcurve/report.hpp"

#include <json.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace fcurve {

/// Runs the `fcurve` command line; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Executes a recorded run. `out_override`, when non-empty, redirects every
/// output into that directory. Returns the manifest written for the run.
RunManifest execute(const std::string& command, const nlohmann::json& config, std::ostream& log,
                    const std::filesystem::path& out_override = {});

/// Re-runs a manifest after checking that every input still has its recorded hash.
RunManifest replay(const RunManifest& manifest, const std::filesystem::path& out_dir, std::ostream& log);

/// "2..9", "3", or "2,5,7".
std::vector<int> parse_int_list(const std::string& text);

/// "lo:hi:count" for a log-spaced grid, or a comma list.
std::vector<double> parse_lambda_grid(const std::string& text);

}  // namespace fcurve
