#include "bpe/cache.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace bpe {

namespace fs = std::filesystem;

CapacityCache::CapacityCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string CapacityCache::key_digest(const nlohmann::json& key) { return sha256_hex(key.dump()); }

fs::path CapacityCache::entry_path(const nlohmann::json& key) const { return dir_ / (key_digest(key) + ".json"); }

std::optional<CapacityEstimate> CapacityCache::load(const nlohmann::json& key, std::vector<std::string>* warnings) const {
  const fs::path path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("key") != key) {
      if (warnings) warnings->push_back("cache entry " + path.filename().string() + " has a different key; recomputing");
      return std::nullopt;
    }
    return CapacityEstimate::from_json(j.at("estimate"));
  } catch (const std::exception& e) {
    if (warnings)
      warnings->push_back("cache entry " + path.filename().string() + " is unreadable (" + e.what() + "); recomputing");
    return std::nullopt;
  }
}

void CapacityCache::store(const nlohmann::json& key, const CapacityEstimate& value) const {
  static std::atomic<unsigned long> counter{0};
  const fs::path target = entry_path(key);
  std::ostringstream tmp_name;
  tmp_name << "." << target.filename().string() << "." << ::getpid() << "." << counter++ << ".tmp";
  const fs::path tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp.string());
    out << nlohmann::json{{"key", key}, {"estimate", value.to_json()}}.dump(1) << '\n';
    if (!out) throw std::runtime_error("cannot write cache file " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot move cache file into place: " + target.string());
  }
}

CapacityEstimate CapacityCache::get_or_compute(const nlohmann::json& key,
                                               const std::function<CapacityEstimate()>& compute,
                                               std::vector<std::string>* warnings) {
  if (auto hit = load(key, warnings)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  CapacityEstimate value = compute();
  value.field.reset();
  store(key, value);
  return value;
}

nlohmann::json capacity_key(const ImplicitSet& set, double q, std::span<const double> ladder,
                            const ImplicitSet& support, const SolverSettings& settings) {
  return {{"set", nlohmann::json::parse(set.canonical_json())},
          {"q", q},
          {"ladder", std::vector<double>(ladder.begin(), ladder.end())},
          {"support", nlohmann::json::parse(support.canonical_json())},
          {"solver", settings.to_json()},
          {"solver_version", kSolverVersion}};
}

}  // namespace bpe
