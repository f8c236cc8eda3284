#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bpe/geometry.hpp"

namespace bpe {

inline constexpr int kReportSchemaVersion = 1;

/// Exit statuses of `run`.
enum ExitStatus : int { kExitOk = 0, kExitNumerical = 1, kExitConfig = 2 };

/// Command-line settings layered over the config file.
struct RunOptions {
  std::filesystem::path out = ".";
  /// Defaults to <out>/cache.
  std::optional<std::filesystem::path> cache_dir;
  bool no_cache = false;
  std::optional<int> max_n;
  /// Multiplies every grid spacing in the config.
  double resolution_scale = 1.0;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

struct RunOutput {
  nlohmann::json report;
  /// CSV tables as (file name, contents).
  std::vector<std::pair<std::string, std::string>> tables;
};

/// Geometry JSON, where any node may also be
/// {"type": "swiss_cheese", "x": [...], "n_min": a, "n_max": b, "radii": ...}
/// with radii either a list (one per shell) or {"scale": s, "base": b, "exponent": e}
/// meaning s * b^(e n).
ImplicitSet domain_from_json(const nlohmann::json& j);

/// Runs one mode on a parsed config. Throws ConfigError on invalid input.
RunOutput execute(const nlohmann::json& config, const RunOptions& options, std::ostream& log);

/// Reads and runs the config file, writing report.json and the tables into
/// options.out. Failures are printed to `err` as a single JSON record.
int run(const std::filesystem::path& config_path, const RunOptions& options, std::ostream& log,
        std::ostream& err);

/// Writes a temporary file beside `path` and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& body);

}  // namespace bpe
