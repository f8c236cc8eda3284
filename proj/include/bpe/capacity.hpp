#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpe/geometry.hpp"
#include "bpe/grid.hpp"

namespace bpe {

/// Bumped whenever a change could alter a stored capacity value.
inline constexpr const char* kSolverVersion = "spg-1";

/// Thrown when an exponent lies outside 1 < q < 2d.
class ExponentOutOfRange : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_exponent(double q, std::size_t real_dim);

/// Per-cell gradient magnitude from the corner values: |G|^2 is, summed over
/// axes, the mean of the squared edge differences along that axis over h^2.
/// On fields that vary along one axis this is the plain one-sided difference.
///
/// Returns sum over cells of |G(u)|^q h^D. Requires u = 0 on the outer layer.
double q_energy(const ScalarField& u, double q);

/// Sum over cells of |G(u)|^p h^D for any p >= 1, without the outer-layer or
/// exponent-range requirements of q_energy.
double gradient_power_sum(const ScalarField& u, double p);

/// Same sum with (|G|^2 + delta^2)^(q/2); no outer-layer requirement.
double smoothed_q_energy(const ScalarField& u, double q, double delta);

struct SolverSettings {
  double rel_tol = 1e-6;
  int window = 25;
  /// Defaults to 50 * sqrt(node count) when unset.
  std::optional<long> max_iterations;
  /// delta = factor / h for each continuation stage. Ignored for q >= 2.
  std::vector<double> delta_factors{1e-1, 1e-2, 1e-3};
  int jacobi_sweeps = 50;
  int nonmonotone_memory = 10;

  nlohmann::json to_json() const;
};

struct SolveResult {
  ScalarField field;
  double energy = 0.0;
  long iterations = 0;
  double final_rel_decrease = 0.0;
  double delta = 0.0;
  bool converged = true;
  /// Best true energy after each continuation stage; non-increasing.
  std::vector<double> stage_energies;
  /// Slack for comparisons between solves: rel_tol * window * energy.
  double abs_tolerance = 0.0;
};

/// Minimizes the smoothed q-energy over fields with u >= 1 on `target`, u >= 0
/// elsewhere inside `support` and u = 0 outside it. Without a support mask the
/// whole grid except its outer layer is free. `warm_start` replaces the Jacobi
/// initialization.
SolveResult minimize_q_energy(const NodeMask& target, double q, const SolverSettings& settings = {},
                              const NodeMask* support = nullptr,
                              const ScalarField* warm_start = nullptr);

struct LevelResult {
  double h = 0.0;
  double value = 0.0;
  long iterations = 0;
  bool converged = true;
  std::size_t mask_nodes = 0;
  double final_rel_decrease = 0.0;
};

struct CapacityEstimate {
  double value = 0.0;
  long iterations = 0;
  double final_rel_decrease = 0.0;
  double resolution = 0.0;
  double support_radius = 0.0;
  double delta = 0.0;
  bool feasible = true;
  bool converged = true;
  double abs_tolerance = 0.0;
  std::vector<LevelResult> trend;
  std::vector<std::string> warnings;
  /// Minimizer at the finest level; absent for empty masks and cache hits.
  std::optional<ScalarField> field;

  nlohmann::json to_json() const;
  static CapacityEstimate from_json(const nlohmann::json& j);
};

/// Capacity of `set` with test functions supported in the open ball of radius
/// `support_radius` about the centre of the set's bounding box. `ladder` lists
/// grid spacings; levels run coarse to fine and each warm-starts the next.
CapacityEstimate estimate_capacity(const ImplicitSet& set, double q, std::span<const double> ladder,
                                   double support_radius, const SolverSettings& settings = {});

/// As above with an arbitrary open support region.
CapacityEstimate estimate_capacity(const ImplicitSet& set, double q, std::span<const double> ladder,
                                   const ImplicitSet& support, const SolverSettings& settings = {});

/// Condenser capacity of the ball B_r inside B_R in R^n for 1 < q < n:
/// omega_{n-1} beta^(q-1) (r^-beta - R^-beta)^(1-q), beta = (n-q)/(q-1).
/// Pass R = infinity for the whole-space value.
double radial_capacity_oracle(double r, double R, double q, int n);

/// Surface area of the unit sphere in R^n.
double unit_sphere_area(int n);

}  // namespace bpe
