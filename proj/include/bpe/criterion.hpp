#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpe/capacity.hpp"
#include "bpe/geometry.hpp"
#include "bpe/grid.hpp"
#include "bpe/martinelli.hpp"

namespace bpe {

class CapacityCache;

/// Invalid criterion or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// q = p / (p - 1).
double holder_conjugate(double p);

/// log2 of the shell weight 2^(n (2d-1) q).
double weight_log2(int n, double q, int d);

/// 2^(n (2d-1) q) * gamma, formed in log space.
double weighted_term(int n, double gamma, double q, int d);

struct VerdictRules {
  int window = 5;
  double converge_ratio = 0.7;
  double diverge_factor = 10.0;

  nlohmann::json to_json() const;
};

struct CriterionConfig {
  int d = 1;
  PointCd x = PointCd::zero(1);
  double p = 3.0;
  int n_min = 1;
  int n_max = 6;
  /// Grid spacings for each piece of A_n \ U, in units of the piece's half-diagonal.
  std::vector<double> ladder{1.0 / 8, 1.0 / 16, 1.0 / 32};
  /// Solves are supported in the triple shell intersected with the ball of
  /// this many half-diagonals about the piece.
  double support_factor = 4.0;
  SolverSettings solver;
  VerdictRules rules;

  double q() const { return holder_conjugate(p); }
  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

struct ShellRecord {
  int n = 0;
  double capacity = 0.0;
  double weight_log2 = 0.0;
  double term = 0.0;
  double partial_sum = 0.0;
  bool resolved = true;
  bool converged = true;
  /// A_n \ U split into no pieces at all: the term is exactly zero.
  bool exactly_empty = false;
  std::size_t pieces = 0;
  /// Finest grid spacing used, in absolute units (0 when nothing was solved).
  double resolution = 0.0;
  long iterations = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

enum class Verdict { converges, diverges, inconclusive };
std::string to_string(Verdict v);

struct CriterionReport {
  CriterionConfig config;
  std::vector<ShellRecord> shells;
  Verdict verdict = Verdict::inconclusive;
  std::optional<double> fitted_ratio;
  std::optional<double> tail_estimate;
  std::string conclusion;
  std::vector<std::string> notes;

  double partial_sum() const { return shells.empty() ? 0.0 : shells.back().partial_sum; }
  nlohmann::json to_json() const;
  /// Header n,capacity,weight_log2,term,partial_sum,resolved.
  std::string to_csv() const;
};

/// Capacity of A_n(x) \ U as the sum over its pieces, each solved on a grid
/// scaled to the piece.
ShellRecord shell_capacity(const ImplicitSet& domain, const CriterionConfig& config, int n,
                           CapacityCache* cache = nullptr);

/// Applies the verdict rules to finished shell records.
void apply_verdict(CriterionReport& report);

/// Called once per finished shell, possibly out of order, never concurrently.
using ShellProgress = std::function<void(const ShellRecord&)>;

/// Shells are evaluated by `jobs` worker threads and assembled in order of n.
CriterionReport evaluate_criterion(const ImplicitSet& domain, const CriterionConfig& config,
                                   CapacityCache* cache = nullptr, int jobs = 1,
                                   const ShellProgress& progress = {});

/// Least-squares geometric ratio exp(slope of log t_k against k).
double fit_geometric_ratio(std::span<const double> terms);

/// Raised when a probe function is singular at a node of U.
class ProbeRejected : public std::invalid_argument {
 public:
  ProbeRejected(std::size_t index, const std::string& what);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct ProbeResult {
  double value = 0.0;
  std::size_t best_index = 0;
  std::vector<double> ratios;
  std::size_t nodes_in_domain = 0;
};

/// max over the family of |f(x)| / (sum over grid nodes in U of |f|^p h^D)^(1/p).
ProbeResult evaluation_norm_probe(const ImplicitSet& domain, const PointCd& x, double p,
                                  std::span<const TestFunction> family, const Grid& grid);

/// Monomials in zeta_1..zeta_d of total degree <= degree, constant first.
std::vector<TestFunction> polynomial_family(int d, int degree);

/// 1 / (zeta_1 - a)^k for each pole a (first coordinate) and k = 1..max_power,
/// ordered by power then pole.
std::vector<TestFunction> pole_family(std::span<const Complex> poles, int d, int max_power);

}  // namespace bpe
