#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mesoed {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kScenarioSchemaVersion = 1;

struct RunOptions {
    std::optional<std::uint64_t> reps_override;
    std::optional<std::uint64_t> seed_override;
    int threads = 0; ///< <= 0: OpenMP default
};

/// Exit codes: 0 success, 2 validation error, 3 audit failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitAuditFailure = 3;

/// Loads, validates and runs a scenario, writing results.csv, meta.json and
/// (for audit experiments) verdicts.csv into out_dir. Returns the exit code;
/// diagnostics go to `log`.
int run_scenario(const std::string& scenario_path, const std::string& out_dir,
                 const RunOptions& options, std::ostream& log);

/// Schema validation only. Returns 0 or 2.
int validate_scenario(const std::string& scenario_path, std::ostream& log);

/// Names of the supported experiment kinds.
std::vector<std::string> list_experiments();

} // namespace mesoed
