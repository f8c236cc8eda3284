#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bpe/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Capacity-series test for bounded point evaluations"};
  std::string config;
  bpe::RunOptions options;
  std::string out = ".";
  std::string cache_dir;
  std::optional<int> max_n;
  std::optional<std::uint64_t> seed;

  app.add_option("--config", config, "Run configuration (JSON)")->required();
  app.add_option("--out", out, "Directory for report.json and CSV tables");
  app.add_option("--cache-dir", cache_dir, "Capacity cache directory (default <out>/cache)");
  app.add_option("--max-n", max_n, "Override the last shell index");
  app.add_option("--resolution-scale", options.resolution_scale, "Multiply every grid spacing")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for randomized checks");
  app.add_flag("--no-cache", options.no_cache, "Neither read nor write the cache");
  app.add_option("--jobs", options.jobs, "Worker threads for shell evaluations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bpe::kExitConfig;
  }
  options.out = out;
  if (!cache_dir.empty()) options.cache_dir = cache_dir;
  options.max_n = max_n;
  options.seed = seed;
  return bpe::run(config, options, std::clog, std::cout);
}
