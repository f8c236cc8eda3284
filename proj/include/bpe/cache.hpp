#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpe/capacity.hpp"

namespace bpe {

/// Flat directory of capacity records named <sha256 of canonical key>.json.
/// Stores are atomic: a temporary file is written and renamed into place.
/// Safe to share between threads; concurrent misses on one key may both solve.
class CapacityCache {
 public:
  explicit CapacityCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  static std::string key_digest(const nlohmann::json& key);
  std::filesystem::path entry_path(const nlohmann::json& key) const;

  /// Cached record for `key`, or nothing when absent, unreadable or keyed differently.
  std::optional<CapacityEstimate> load(const nlohmann::json& key, std::vector<std::string>* warnings = nullptr) const;
  void store(const nlohmann::json& key, const CapacityEstimate& value) const;

  /// Returns the cached record or computes, stores and returns it.
  CapacityEstimate get_or_compute(const nlohmann::json& key, const std::function<CapacityEstimate()>& compute,
                                  std::vector<std::string>* warnings = nullptr);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Key of a capacity solve: set, exponent, ladder, support and solver identity.
nlohmann::json capacity_key(const ImplicitSet& set, double q, std::span<const double> ladder,
                            const ImplicitSet& support, const SolverSettings& settings);

}  // namespace bpe
