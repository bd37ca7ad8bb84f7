#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace facstat::cli {

inline constexpr std::string_view kToolName = "facstat";
inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

// A flag combination the parser accepted but the command cannot use.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs one invocation. `args` excludes the program name. Reports go to `out`
// unless --output is given; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// The run manifest embedded in a json, md or csv report.
nlohmann::json extract_manifest(const std::string& report);

// Argument list that reproduces the run described by `manifest`.
std::vector<std::string> manifest_arguments(const nlohmann::json& manifest);

// 64-bit FNV-1a of a file's bytes, as "fnv1a64:<hex>".
std::string file_digest(const std::string& path);

} // namespace facstat::cli
