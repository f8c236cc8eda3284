#pragma once

#include <span>
#include <vector>

#include "bpe/grid.hpp"
#include "bpe/point.hpp"

namespace bpe {

/// Piecewise-linear radial profile about x: 0 inside radius 2^-(n+2), rising
/// to 1 at 2^-(n+1), flat to 2^-n, falling to 0 at 2^-(n-1).
struct RadialBump {
  PointCd center;
  int index = 1;
  double r0 = 0.0, r1 = 0.0, r2 = 0.0, r3 = 0.0;

  RadialBump(const PointCd& x, int n);

  double value(double r) const;
  /// d psi / dr; at a kink the one-sided value of larger magnitude.
  double slope(double r) const;
  double max_slope() const { return 1.0 / (r1 - r0); }
};

struct BumpSample {
  double value;
  double slope;
};

BumpSample psi(int n, const PointCd& x, const PointCd& z);

/// psi_n sampled at the grid nodes.
ScalarField sample_psi(const Grid& grid, int n, const PointCd& x);

/// Nodewise g * psi_n. The grid must cover the ball of radius 2^-(n-1) about x.
ScalarField build_phi(const ScalarField& g, int n, const PointCd& x);

/// Nodewise maximum of fields on one grid.
ScalarField sup_combine(std::span<const ScalarField> fields);

/// Sum over cells of (cell mean of weight)^q |G(field)|^q h^D.
double weighted_gradient_energy(const ScalarField& weight, const ScalarField& field, double q);

/// (sum g^(Dq/(D-q)) h^D)^((D-q)/D) / (sum |G(g)|^q h^D) with D = 2d.
double gns_ratio(const ScalarField& g, double q);

/// Terms of the product-rule bound for phi_n = g psi_n.
struct ProductRuleCheck {
  double phi_energy = 0.0;
  double g_weighted_psi = 0.0;   // sum g^q |G psi|^q h^D
  double psi_weighted_g = 0.0;   // sum psi^q |G g|^q h^D
  double bound = 0.0;            // 2^(q-1) * (g_weighted_psi + psi_weighted_g)
  bool holds(double slack) const { return phi_energy <= (1.0 + slack) * bound; }
};

ProductRuleCheck product_rule_check(const ScalarField& g, int n, const PointCd& x, double q);

/// Exact value of the integral of |grad psi_n|^p over C^d; independent of n when p = 2d.
double psi_gradient_integral(int n, int d, double p);

}  // namespace bpe
