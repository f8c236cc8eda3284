#include "bpe/capacity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bpe {

namespace {

enum class PowKind { quadratic, three_halves, generic };

PowKind pow_kind(double q) {
  if (q == 2.0) return PowKind::quadratic;
  if (q == 1.5) return PowKind::three_halves;
  return PowKind::generic;
}

// e = s^(q/2), w = s^(q/2 - 1)
template <PowKind K>
inline void powers(double s, double q, double& e, double& w) {
  if constexpr (K == PowKind::quadratic) {
    e = s;
    w = 1.0;
  } else if constexpr (K == PowKind::three_halves) {
    const double t = std::sqrt(s);
    const double r = std::sqrt(t);
    e = t * r;
    w = r > 0.0 ? 1.0 / r : 0.0;
  } else {
    e = std::pow(s, 0.5 * q);
    w = s > 0.0 ? e / s : 0.0;
  }
}

// Node roles in a solve.
enum : std::uint8_t { kFixedZero = 0, kFree = 1, kTarget = 2 };

// Cell data in node layout: the cell with lower corner i is stored at index i.
struct Lattice {
  const Grid* grid;
  /// 1 for cells that exist and touch a non-fixed node, else 0.
  std::vector<std::uint8_t> cell_on;
  /// Per-cell gradient coefficient, rebuilt on every evaluation.
  mutable std::vector<double> coef;
};

// Visits every row along the last axis: f(first index, length) for rows whose
// leading indices lie in [lo, count - hi_trim) on every axis but the last.
template <class F>
void for_rows(const Grid& g, int lo, int hi_trim, F&& f) {
  const std::size_t D = g.dim();
  const int len = g.counts()[D - 1] - lo - hi_trim;
  if (len <= 0) return;
  std::vector<int> idx(D, lo);
  while (true) {
    f(g.multi_to_index(idx), static_cast<std::size_t>(len));
    std::size_t k = D - 1;
    bool done = true;
    while (k > 0) {
      --k;
      if (idx[k] + 1 < g.counts()[k] - hi_trim) {
        ++idx[k];
        done = false;
        break;
      }
      idx[k] = lo;
    }
    if (done) return;
  }
}

// Cells that exist, optionally only those touching a non-fixed node.
Lattice make_lattice(const Grid& g, const std::vector<std::uint8_t>* role) {
  Lattice lat{&g, std::vector<std::uint8_t>(g.node_count(), 0), std::vector<double>(g.node_count(), 0.0)};
  const std::size_t D = g.dim();
  std::vector<std::size_t> corner(std::size_t{1} << D, 0);
  for (std::size_t c = 0; c < corner.size(); ++c)
    for (std::size_t k = 0; k < D; ++k)
      if ((c >> k) & 1u) corner[c] += g.strides()[k];
  for_rows(g, 0, 1, [&](std::size_t first, std::size_t len) {
    for (std::size_t base = first; base < first + len; ++base) {
      bool keep = role == nullptr;
      if (!keep)
        for (std::size_t off : corner)
          if ((*role)[base + off] != kFixedZero) {
            keep = true;
            break;
          }
      lat.cell_on[base] = keep ? 1 : 0;
    }
  });
  return lat;
}

// Energy sum over cells; fills lat.coef with q |G|^(q-2) h^D / (h^2 2^(D-1)).
template <int D, PowKind K>
double cell_pass(const Lattice& lat, const double* u, double q, double delta, bool want_coef) {
  constexpr int C = 1 << D;
  const Grid& g = *lat.grid;
  const double h = g.spacing();
  const double inv_h2 = 1.0 / (h * h * (C / 2));
  double vol = 1.0;
  for (int k = 0; k < D; ++k) vol *= h;
  const double d2 = delta * delta;
  std::array<std::ptrdiff_t, C> off{};
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < D; ++k)
      if ((c >> k) & 1) off[c] += static_cast<std::ptrdiff_t>(g.strides()[k]);
  const std::uint8_t* on = lat.cell_on.data();
  double* coef = lat.coef.data();
  const double scale = q * vol * inv_h2;

  double total = 0.0;
  for_rows(g, 0, 1, [&](std::size_t first, std::size_t len) {
    double row_total = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t base = first + t;
      double sum = 0.0;
      for (int k = 0; k < D; ++k)
        for (int c = 0; c < C; ++c)
          if (!((c >> k) & 1)) {
            const double diff = u[base + off[c | (1 << k)]] - u[base + off[c]];
            sum += diff * diff;
          }
      const double s = d2 + sum * inv_h2;
      double en, w;
      powers<K>(s, q, en, w);
      const double keep = on[base];
      row_total += keep * en;
      if (want_coef) coef[base] = keep * scale * w;
    }
    total += row_total;
  });
  return total * vol;
}

// grad_i = sum over edges (i, j) of W_ij (u_i - u_j), W_ij the sum of the
// coefficients of the cells sharing the edge. Written for nodes off the outer layer.
template <int D>
void gradient_pass(const Lattice& lat, const double* u, double* grad) {
  constexpr int S = 1 << (D - 1);
  const Grid& g = *lat.grid;
  std::array<std::ptrdiff_t, D> stride{};
  for (int k = 0; k < D; ++k) stride[k] = static_cast<std::ptrdiff_t>(g.strides()[k]);
  // For each axis, offsets of the cells sharing an edge along it, relative to the edge's lower node.
  std::array<std::array<std::ptrdiff_t, S>, D> share{};
  for (int k = 0; k < D; ++k)
    for (int m = 0; m < S; ++m) {
      std::ptrdiff_t o = 0;
      int bit = 0;
      for (int j = 0; j < D; ++j) {
        if (j == k) continue;
        if ((m >> bit) & 1) o -= stride[j];
        ++bit;
      }
      share[k][m] = o;
    }
  const double* coef = lat.coef.data();
  for_rows(g, 1, 1, [&](std::size_t first, std::size_t len) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t i = first + t;
      const double ui = u[i];
      double acc = 0.0;
      for (int k = 0; k < D; ++k) {
        double up = 0.0, down = 0.0;
        for (int m = 0; m < S; ++m) {
          up += coef[i + share[k][m]];
          down += coef[i - stride[k] + share[k][m]];
        }
        acc += up * (ui - u[i + stride[k]]) + down * (ui - u[i - stride[k]]);
      }
      grad[i] = acc;
    }
  });
}

template <int D, PowKind K>
double energy_kernel(const Lattice& lat, const double* u, double* grad, double q, double delta) {
  const double e = cell_pass<D, K>(lat, u, q, delta, grad != nullptr);
  if (grad != nullptr) gradient_pass<D>(lat, u, grad);
  return e;
}

template <int D>
double energy_dispatch_pow(const Lattice& lat, const double* u, double* grad, double q, double delta) {
  switch (pow_kind(q)) {
    case PowKind::quadratic: return energy_kernel<D, PowKind::quadratic>(lat, u, grad, q, delta);
    case PowKind::three_halves: return energy_kernel<D, PowKind::three_halves>(lat, u, grad, q, delta);
    default: return energy_kernel<D, PowKind::generic>(lat, u, grad, q, delta);
  }
}

double energy(const Lattice& lat, const double* u, double* grad, double q, double delta) {
  switch (lat.grid->dim()) {
    case 2: return energy_dispatch_pow<2>(lat, u, grad, q, delta);
    case 4: return energy_dispatch_pow<4>(lat, u, grad, q, delta);
    default:
      throw DimensionMismatch("numeric q-energy supports real dimension 2 or 4, got " +
                              std::to_string(lat.grid->dim()));
  }
}

void require_solver_dim(std::size_t D) {
  if (D != 2 && D != 4)
    throw DimensionMismatch("numeric capacity supports d = 1 or d = 2 (real dimension 2 or 4), got " +
                            std::to_string(D));
}

void project(std::vector<double>& x, const std::vector<std::uint8_t>& role) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (role[i]) {
      case kFixedZero: x[i] = 0.0; break;
      case kFree: x[i] = std::max(x[i], 0.0); break;
      default: x[i] = std::max(x[i], 1.0); break;
    }
  }
}

void jacobi_init(std::vector<double>& x, const std::vector<std::uint8_t>& role, const Grid& g, int sweeps) {
  const std::size_t D = g.dim();
  std::vector<double> next = x;
  const double inv = 1.0 / (2.0 * static_cast<double>(D));
  for (int s = 0; s < sweeps; ++s) {
    for_rows(g, 1, 1, [&](std::size_t first, std::size_t len) {
      for (std::size_t i = first; i < first + len; ++i) {
        if (role[i] != kFree) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < D; ++k) acc += x[i - g.strides()[k]] + x[i + g.strides()[k]];
        next[i] = acc * inv;
      }
    });
    x.swap(next);
  }
}

struct StageOutcome {
  long iterations = 0;
  double rel_decrease = 0.0;
  bool converged = false;
};

// Spectral projected gradient with a nonmonotone Armijo search.
StageOutcome spg(const Lattice& lat, const std::vector<std::uint8_t>& role, std::vector<double>& x,
                 double q, double delta, const SolverSettings& st, long budget) {
  const std::size_t n = x.size();
  std::vector<double> g(n, 0.0), xt(n, 0.0), gt(n, 0.0), d(n, 0.0);

  // The gradient pass writes every node off the outer layer, where g and gt stay zero.
  auto eval = [&](const std::vector<double>& at, std::vector<double>& grad) {
    return energy(lat, at.data(), grad.data(), q, delta);
  };
  static constexpr double kLower[3] = {0.0, 0.0, 1.0};
  static constexpr double kMovable[3] = {0.0, 1.0, 1.0};

  double f = eval(x, g);
  std::deque<double> recent{f};
  std::vector<double> best_track{f};
  double best = f;

  double pg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    pg = std::max(pg, kMovable[role[i]] * std::abs(std::max(x[i] - g[i], kLower[role[i]]) - x[i]));
  StageOutcome out;
  if (pg == 0.0) {
    out.converged = true;
    return out;
  }
  constexpr double kAlphaMin = 1e-30, kAlphaMax = 1e30;
  // Alternating two-point steps: the long step ss/sy unless the short step sy/yy
  // is much smaller, in which case the smallest recent short step.
  constexpr std::size_t kShortMemory = 5;
  constexpr double kSwitch = 0.8;
  double alpha = std::clamp(1.0 / pg, kAlphaMin, kAlphaMax);
  std::deque<double> short_steps;

  for (long it = 0; it < budget; ++it) {
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t r = role[i];
      d[i] = kMovable[r] * (std::max(x[i] - alpha * g[i], kLower[r]) - x[i]);
      xt[i] = x[i] + d[i];
      gd += g[i] * d[i];
    }
    out.iterations = it + 1;
    if (gd >= 0.0) {
      out.converged = true;
      break;
    }
    const double fmax = *std::max_element(recent.begin(), recent.end());
    double lambda = 1.0, ft = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      if (bt > 0)
        for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + lambda * d[i];
      ft = eval(xt, gt);
      if (ft <= fmax + 1e-4 * lambda * gd) break;
      const double denom = ft - f - lambda * gd;
      double next = denom > 0.0 ? -0.5 * lambda * lambda * gd / denom : 0.5 * lambda;
      lambda = std::clamp(next, 0.1 * lambda, 0.5 * lambda);
    }
    double ss = 0.0, sy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = lambda * d[i];
      const double y = kMovable[role[i]] * (gt[i] - g[i]);
      ss += s * s;
      sy += s * y;
      yy += y * y;
    }
    if (sy > 0.0) {
      const double long_step = ss / sy, short_step = sy / yy;
      short_steps.push_back(short_step);
      if (short_steps.size() > kShortMemory) short_steps.pop_front();
      alpha = short_step < kSwitch * long_step ? *std::min_element(short_steps.begin(), short_steps.end())
                                               : long_step;
      alpha = std::clamp(alpha, kAlphaMin, kAlphaMax);
    } else {
      alpha = kAlphaMax;
    }
    x.swap(xt);
    g.swap(gt);
    f = ft;
    recent.push_back(f);
    if (recent.size() > static_cast<std::size_t>(st.nonmonotone_memory)) recent.pop_front();
    best = std::min(best, f);
    best_track.push_back(best);
    if (best_track.size() > static_cast<std::size_t>(st.window)) {
      const double old = best_track[best_track.size() - 1 - st.window];
      out.rel_decrease = best > 0.0 ? (old - best) / best : 0.0;
      if (out.rel_decrease < st.rel_tol) {
        out.converged = true;
        break;
      }
    }
    if (ss == 0.0) {
      out.converged = true;
      break;
    }
  }
  return out;
}

std::vector<std::uint8_t> roles(const NodeMask& target, const NodeMask* support) {
  const Grid& g = target.grid;
  std::vector<std::uint8_t> role(g.node_count(), kFixedZero);
  for (std::size_t i = 0; i < role.size(); ++i) {
    const bool free = !g.on_outer_layer(i) && (support == nullptr || (*support)[i]);
    if (target[i]) {
      if (!free) throw std::invalid_argument("target node lies on the zero boundary or outside the support");
      role[i] = kTarget;
    } else if (free) {
      role[i] = kFree;
    }
  }
  return role;
}

}  // namespace

void require_exponent(double q, std::size_t real_dim) {
  if (!(q > 1.0) || !(q < static_cast<double>(real_dim)))
    throw ExponentOutOfRange("exponent q = " + std::to_string(q) + " must satisfy 1 < q < " +
                             std::to_string(real_dim));
}

double q_energy(const ScalarField& u, double q) {
  require_solver_dim(u.grid.dim());
  require_exponent(q, u.grid.dim());
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] != 0.0 && u.grid.on_outer_layer(i))
      throw std::invalid_argument("q_energy: field must vanish on the outer node layer");
  const Lattice lat = make_lattice(u.grid, nullptr);
  return energy(lat, u.values.data(), nullptr, q, 0.0);
}

double gradient_power_sum(const ScalarField& u, double p) {
  require_solver_dim(u.grid.dim());
  if (!(p >= 1.0)) throw ExponentOutOfRange("gradient power must be >= 1");
  const Lattice lat = make_lattice(u.grid, nullptr);
  return energy(lat, u.values.data(), nullptr, p, 0.0);
}

double smoothed_q_energy(const ScalarField& u, double q, double delta) {
  require_solver_dim(u.grid.dim());
  require_exponent(q, u.grid.dim());
  const Lattice lat = make_lattice(u.grid, nullptr);
  return energy(lat, u.values.data(), nullptr, q, delta);
}

nlohmann::json SolverSettings::to_json() const {
  return {{"rel_tol", rel_tol},
          {"window", window},
          {"max_iterations", max_iterations ? nlohmann::json(*max_iterations) : nlohmann::json("50*sqrt(nodes)")},
          {"delta_factors", delta_factors},
          {"jacobi_sweeps", jacobi_sweeps},
          {"nonmonotone_memory", nonmonotone_memory}};
}

SolveResult minimize_q_energy(const NodeMask& target, double q, const SolverSettings& settings,
                              const NodeMask* support, const ScalarField* warm_start) {
  const Grid& g = target.grid;
  require_solver_dim(g.dim());
  require_exponent(q, g.dim());
  if (support && !(support->grid == g)) throw DimensionMismatch("support mask on a different grid");
  if (warm_start && !(warm_start->grid == g)) throw DimensionMismatch("warm start on a different grid");

  SolveResult res{ScalarField(g), 0.0, 0, 0.0, 0.0, true, {}, 0.0};
  if (target.count == 0) {
    res.stage_energies.push_back(0.0);
    return res;
  }

  const auto role = roles(target, support);
  const Lattice lat = make_lattice(g, &role);

  std::vector<double> x(g.node_count(), 0.0);
  if (warm_start) {
    x = warm_start->values;
  } else {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (role[i] == kTarget) x[i] = 1.0;
    jacobi_init(x, role, g, settings.jacobi_sweeps);
  }
  project(x, role);

  // A warm start already sits near the small-delta minimizer, so it only runs the last stage.
  std::vector<double> deltas;
  if (q < 2.0 && !settings.delta_factors.empty()) {
    if (warm_start) deltas.push_back(settings.delta_factors.back() / g.spacing());
    else
      for (double f : settings.delta_factors) deltas.push_back(f / g.spacing());
  }
  if (deltas.empty()) deltas.push_back(0.0);

  long budget = settings.max_iterations.value_or(
      static_cast<long>(50.0 * std::sqrt(static_cast<double>(g.node_count()))));

  std::vector<double> best = x;
  double best_energy = energy(lat, x.data(), nullptr, q, 0.0);
  for (double delta : deltas) {
    const auto stage = spg(lat, role, x, q, delta, settings, std::max(0L, budget - res.iterations));
    res.iterations += stage.iterations;
    res.final_rel_decrease = stage.rel_decrease;
    res.converged = res.converged && stage.converged;
    res.delta = delta;
    const double e = energy(lat, x.data(), nullptr, q, 0.0);
    if (e < best_energy) {
      best_energy = e;
      best = x;
    }
    res.stage_energies.push_back(best_energy);
  }
  res.field = ScalarField(g, std::move(best));
  res.energy = best_energy;
  res.abs_tolerance = settings.rel_tol * settings.window * best_energy;
  return res;
}

// ---------------------------------------------------------------------------

nlohmann::json CapacityEstimate::to_json() const {
  auto levels = nlohmann::json::array();
  for (const auto& l : trend)
    levels.push_back({{"h", l.h},
                      {"value", l.value},
                      {"iterations", l.iterations},
                      {"converged", l.converged},
                      {"mask_nodes", l.mask_nodes},
                      {"final_rel_decrease", l.final_rel_decrease}});
  return {{"value", value},
          {"iterations", iterations},
          {"final_rel_decrease", final_rel_decrease},
          {"resolution", resolution},
          {"support_radius", support_radius},
          {"delta", delta},
          {"feasible", feasible},
          {"converged", converged},
          {"abs_tolerance", abs_tolerance},
          {"trend", levels},
          {"warnings", warnings}};
}

CapacityEstimate CapacityEstimate::from_json(const nlohmann::json& j) {
  CapacityEstimate e;
  e.value = j.at("value").get<double>();
  e.iterations = j.at("iterations").get<long>();
  e.final_rel_decrease = j.at("final_rel_decrease").get<double>();
  e.resolution = j.at("resolution").get<double>();
  e.support_radius = j.at("support_radius").get<double>();
  e.delta = j.at("delta").get<double>();
  e.feasible = j.at("feasible").get<bool>();
  e.converged = j.at("converged").get<bool>();
  e.abs_tolerance = j.at("abs_tolerance").get<double>();
  for (const auto& l : j.at("trend"))
    e.trend.push_back({l.at("h").get<double>(), l.at("value").get<double>(), l.at("iterations").get<long>(),
                       l.at("converged").get<bool>(), l.at("mask_nodes").get<std::size_t>(),
                       l.at("final_rel_decrease").get<double>()});
  e.warnings = j.at("warnings").get<std::vector<std::string>>();
  return e;
}

CapacityEstimate estimate_capacity(const ImplicitSet& set, double q, std::span<const double> ladder,
                                   double support_radius, const SolverSettings& settings) {
  if (!(support_radius > 0.0)) throw std::invalid_argument("estimate_capacity: support radius must be positive");
  const bool empty = set.is_empty_expression();
  if (!empty && !set.bbox().bounded()) throw std::invalid_argument("estimate_capacity: set must be bounded");
  const auto center = empty ? std::vector<double>(set.real_dim(), 0.0) : set.bbox().center();
  const auto support = ImplicitSet::ball(center, support_radius, Boundary::open);
  if (!empty && !support.bbox().strictly_contains(set.bbox()))
    throw std::invalid_argument("estimate_capacity: support box does not strictly contain the set");
  auto est = estimate_capacity(set, q, ladder, support, settings);
  est.support_radius = support_radius;
  return est;
}

CapacityEstimate estimate_capacity(const ImplicitSet& set, double q, std::span<const double> ladder,
                                   const ImplicitSet& support, const SolverSettings& settings) {
  if (set.real_dim() != support.real_dim()) throw DimensionMismatch("set and support dimension differ");
  require_solver_dim(set.real_dim());
  require_exponent(q, set.real_dim());
  if (!set.bbox().bounded() && !set.is_empty_expression())
    throw std::invalid_argument("estimate_capacity: set must be bounded");
  if (!support.bbox().bounded()) throw std::invalid_argument("estimate_capacity: support must be bounded");
  if (ladder.empty()) throw std::invalid_argument("estimate_capacity: empty resolution ladder");

  std::vector<double> hs(ladder.begin(), ladder.end());
  for (double h : hs)
    if (!(h > 0.0)) throw std::invalid_argument("estimate_capacity: resolutions must be positive");
  std::sort(hs.begin(), hs.end(), std::greater<>());

  CapacityEstimate est;
  est.support_radius = 0.5 * support.bbox().max_width();
  if (set.is_empty_expression()) {
    est.resolution = hs.back();
    for (double h : hs) est.trend.push_back({h, 0.0, 0, true, 0, 0.0});
    return est;
  }

  std::optional<ScalarField> previous;
  bool missed = false;
  for (double h : hs) {
    const Grid grid = Grid::covering(support.bbox(), h, 1);
    const NodeMask target = rasterize(set, grid);
    NodeMask supp = point_mask(support, grid);
    if (target.count > 0 && !target.subset_of(supp))
      throw std::invalid_argument("estimate_capacity: support region too small for the set");

    LevelResult level{h, 0.0, 0, true, target.count, 0.0};
    est.resolution = h;
    if (target.count == 0) {
      missed = target.too_coarse;
      est.field.reset();
      est.iterations = 0;
      est.delta = 0.0;
      est.final_rel_decrease = 0.0;
      est.value = 0.0;
      est.abs_tolerance = 0.0;
      est.converged = true;
      est.trend.push_back(level);
      previous.reset();
      continue;
    }
    missed = false;

    std::optional<ScalarField> warm;
    if (previous) {
      ScalarField w(grid);
      std::vector<double> p(grid.dim());
      for (std::size_t i = 0; i < grid.node_count(); ++i) {
        grid.node_coords(i, p);
        w[i] = previous->sample(p);
      }
      warm = std::move(w);
    }
    SolveResult r = minimize_q_energy(target, q, settings, &supp, warm ? &*warm : nullptr);
    level.value = r.energy;
    level.iterations = r.iterations;
    level.converged = r.converged;
    level.final_rel_decrease = r.final_rel_decrease;
    est.trend.push_back(level);

    est.value = r.energy;
    est.iterations = r.iterations;
    est.final_rel_decrease = r.final_rel_decrease;
    est.delta = r.delta;
    est.converged = r.converged;
    est.abs_tolerance = r.abs_tolerance;
    previous = r.field;
    est.field = std::move(r.field);
  }
  if (!est.converged)
    est.warnings.push_back("solver hit the iteration cap before meeting the relative tolerance");
  if (missed) est.warnings.push_back("possibly-positive-capacity-missed: set has members but no grid cell fits inside it");
  return est;
}

double unit_sphere_area(int n) {
  if (n < 1) throw std::invalid_argument("sphere dimension must be positive");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double radial_capacity_oracle(double r, double R, double q, int n) {
  if (!(r > 0.0) || !(R > r)) throw std::invalid_argument("radial oracle needs 0 < r < R");
  if (!(q > 1.0) || !(q < n)) throw ExponentOutOfRange("radial oracle needs 1 < q < n");
  const double beta = (n - q) / (q - 1.0);
  const double omega = unit_sphere_area(n);
  const double gap = std::isinf(R) ? std::pow(r, -beta) : std::pow(r, -beta) - std::pow(R, -beta);
  return omega * std::pow(beta, q - 1.0) * std::pow(gap, 1.0 - q);
}

}  // namespace bpe
