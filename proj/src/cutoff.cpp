#include "bpe/cutoff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bpe/capacity.hpp"

namespace bpe {

RadialBump::RadialBump(const PointCd& x, int n)
    : center(x),
      index(n),
      r0(std::ldexp(1.0, -(n + 2))),
      r1(std::ldexp(1.0, -(n + 1))),
      r2(std::ldexp(1.0, -n)),
      r3(std::ldexp(1.0, -(n - 1))) {
  if (n < 1) throw std::invalid_argument("bump index must be >= 1");
}

double RadialBump::value(double r) const {
  if (r <= r0 || r >= r3) return 0.0;
  if (r < r1) return (r - r0) / (r1 - r0);
  if (r <= r2) return 1.0;
  return (r3 - r) / (r3 - r2);
}

double RadialBump::slope(double r) const {
  const double inner = 1.0 / (r1 - r0);
  const double outer = -1.0 / (r3 - r2);
  if (r < r0 || r > r3) return 0.0;
  if (r <= r1) return inner;
  if (r < r2) return 0.0;
  return outer;
}

BumpSample psi(int n, const PointCd& x, const PointCd& z) {
  const RadialBump b(x, n);
  const double r = x.distance(z);
  return {b.value(r), b.slope(r)};
}

ScalarField sample_psi(const Grid& grid, int n, const PointCd& x) {
  if (grid.dim() != x.real_dim()) throw DimensionMismatch("bump centre and grid dimension differ");
  const RadialBump b(x, n);
  ScalarField out(grid);
  std::vector<double> p(grid.dim());
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_coords(i, p);
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - x[k]) * (p[k] - x[k]);
    out[i] = b.value(std::sqrt(s));
  }
  return out;
}

ScalarField build_phi(const ScalarField& g, int n, const PointCd& x) {
  const RadialBump b(x, n);
  Box need{std::vector<double>(x.coords().begin(), x.coords().end()), {}};
  need.hi = need.lo;
  for (std::size_t k = 0; k < need.lo.size(); ++k) {
    need.lo[k] -= b.r3;
    need.hi[k] += b.r3;
  }
  if (!g.grid.box().contains(need)) throw std::invalid_argument("grid does not cover the triple shell");
  ScalarField phi = sample_psi(g.grid, n, x);
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= g[i];
  return phi;
}

ScalarField sup_combine(std::span<const ScalarField> fields) {
  if (fields.empty()) throw std::invalid_argument("sup_combine needs at least one field");
  ScalarField out = fields.front();
  for (const ScalarField& f : fields.subspan(1)) {
    if (!(f.grid == out.grid)) throw DimensionMismatch("sup_combine: fields live on different grids");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], f[i]);
  }
  return out;
}

namespace {

// Calls f(mean of weight over the cell corners, |G(field)|) for every cell.
template <class F>
void for_each_cell(const ScalarField& weight, const ScalarField& field, F&& f) {
  const Grid& grid = field.grid;
  const std::size_t D = grid.dim();
  const std::size_t corners = std::size_t{1} << D;
  std::vector<std::size_t> offset(corners, 0);
  for (std::size_t c = 0; c < corners; ++c)
    for (std::size_t k = 0; k < D; ++k)
      if ((c >> k) & 1u) offset[c] += grid.strides()[k];
  const double edges = static_cast<double>(corners / 2);
  const double h2 = grid.spacing() * grid.spacing();

  std::vector<int> idx(D, 0);
  while (true) {
    const std::size_t base = grid.multi_to_index(idx);
    double wsum = 0.0;
    for (std::size_t c = 0; c < corners; ++c) wsum += weight[base + offset[c]];
    double g2 = 0.0;
    for (std::size_t k = 0; k < D; ++k)
      for (std::size_t c = 0; c < corners; ++c)
        if (!((c >> k) & 1u)) {
          const double d = field[base + offset[c | (std::size_t{1} << k)]] - field[base + offset[c]];
          g2 += d * d;
        }
    f(wsum / static_cast<double>(corners), std::sqrt(g2 / (edges * h2)));

    std::size_t k = D;
    while (k > 0) {
      --k;
      if (idx[k] + 2 < grid.counts()[k]) {
        ++idx[k];
        break;
      }
      idx[k] = 0;
      if (k == 0) return;
    }
  }
}

}  // namespace

double weighted_gradient_energy(const ScalarField& weight, const ScalarField& field, double q) {
  if (!(weight.grid == field.grid)) throw DimensionMismatch("weight and field live on different grids");
  double acc = 0.0;
  for_each_cell(weight, field, [&](double w, double g) {
    if (w != 0.0 && g != 0.0) acc += std::pow(w * g, q);
  });
  return acc * field.grid.volume_element();
}

double gns_ratio(const ScalarField& g, double q) {
  const double D = static_cast<double>(g.grid.dim());
  require_exponent(q, g.grid.dim());
  const double grad = gradient_power_sum(g, q);
  if (!(grad > 0.0)) throw std::domain_error("gns_ratio: field has zero gradient");
  const double star = D * q / (D - q);
  double mass = 0.0;
  for (double v : g.values) mass += std::pow(std::abs(v), star);
  mass *= g.grid.volume_element();
  return std::pow(mass, (D - q) / D) / grad;
}

ProductRuleCheck product_rule_check(const ScalarField& g, int n, const PointCd& x, double q) {
  ProductRuleCheck out;
  const ScalarField bump = sample_psi(g.grid, n, x);
  const ScalarField phi = build_phi(g, n, x);
  out.phi_energy = gradient_power_sum(phi, q);
  out.g_weighted_psi = weighted_gradient_energy(g, bump, q);
  out.psi_weighted_g = weighted_gradient_energy(bump, g, q);
  out.bound = std::pow(2.0, q - 1.0) * (out.g_weighted_psi + out.psi_weighted_g);
  return out;
}

double psi_gradient_integral(int n, int d, double p) {
  if (d < 1) throw std::invalid_argument("complex dimension must be >= 1");
  if (!(p >= 1.0)) throw std::invalid_argument("exponent must be >= 1");
  const RadialBump b(PointCd::zero(d), n);
  const double m = 2.0 * d;
  const auto shell = [&](double lo, double hi, double slope) {
    return std::pow(slope, p) * (std::pow(hi, m) - std::pow(lo, m)) / m;
  };
  return unit_sphere_area(2 * d) * (shell(b.r0, b.r1, 1.0 / (b.r1 - b.r0)) + shell(b.r2, b.r3, 1.0 / (b.r3 - b.r2)));
}

}  // namespace bpe
