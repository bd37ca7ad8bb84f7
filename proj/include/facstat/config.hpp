#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "facstat/dataset.hpp"

namespace facstat {

// Line-oriented key = value configuration. Blank lines and lines starting with
// '#' are ignored. Recognized keys:
//
//   cohort.<tag> = Univ A, Univ B, ...          adds or replaces a cohort tag
//   profile.<Univ>.weight = 58                  share of generated records
//   profile.<Univ>.<field> = mean, deviation    field is a CSV column key
//
// Any profile.* key replaces the built-in generator profile; every listed
// institution must then give all six fields.
struct Config {
    CohortTable cohorts = CohortTable::builtin();
    SynthProfile profile = SynthProfile::builtin();
};

// Environment variable consulted when no --config flag is given.
inline constexpr const char* kConfigEnvVar = "FACSTAT_CONFIG";

Config parse_config(std::istream& in);
Config load_config(const std::filesystem::path& path);

} // namespace facstat
