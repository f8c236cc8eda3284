#include "bpe/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>
#include <string_view>

#include <unistd.h>

#include "bpe/cache.hpp"
#include "bpe/capacity.hpp"
#include "bpe/criterion.hpp"
#include "bpe/cutoff.hpp"
#include "bpe/martinelli.hpp"

namespace bpe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

const json& require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const std::string& key) {
  const json& v = require(j, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

int get_int(const json& j, const std::string& key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) throw ConfigError("key '" + key + "' must be an integer");
  return v.get<int>();
}

int get_int_or(const json& j, const std::string& key, int fallback) {
  return j.contains(key) ? get_int(j, key) : fallback;
}

PointCd get_point(const json& j, const std::string& key, int d) {
  const auto coords = get<std::vector<double>>(j, key);
  if (coords.size() != static_cast<std::size_t>(2 * d))
    throw ConfigError("key '" + key + "' must list 2d = " + std::to_string(2 * d) + " real coordinates");
  return PointCd(coords);
}

int get_d(const json& j) {
  const int d = get_int(j, "d");
  if (d < 1 || d > 3) throw ConfigError("d must be 1, 2 or 3");
  return d;
}

Complex parse_complex(const json& v, const std::string& what) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError(what + " must be a number or [re, im]");
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

std::vector<double> scaled_ladder(const json& j, const RunOptions& options) {
  auto ladder = get<std::vector<double>>(j, "ladder");
  for (double& h : ladder) h *= options.resolution_scale;
  return ladder;
}

double scaled_spacing(const json& j, const std::string& key, const RunOptions& options) {
  const double h = get<double>(j, key) * options.resolution_scale;
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("key '" + key + "' must be a positive spacing");
  return h;
}

SolverSettings parse_solver(const json& config) {
  SolverSettings s;
  if (!config.contains("solver")) return s;
  const json& j = config.at("solver");
  check_keys(j, {"rel_tol", "window", "max_iterations", "delta_factors", "jacobi_sweeps", "nonmonotone_memory"},
             "solver");
  s.rel_tol = get_or(j, "rel_tol", s.rel_tol);
  s.window = get_int_or(j, "window", s.window);
  if (j.contains("max_iterations")) s.max_iterations = get<long>(j, "max_iterations");
  s.delta_factors = get_or(j, "delta_factors", s.delta_factors);
  s.jacobi_sweeps = get_int_or(j, "jacobi_sweeps", s.jacobi_sweeps);
  s.nonmonotone_memory = get_int_or(j, "nonmonotone_memory", s.nonmonotone_memory);
  if (!(s.rel_tol > 0.0) || s.window < 1 || s.jacobi_sweeps < 0 || s.nonmonotone_memory < 1 ||
      (s.max_iterations && *s.max_iterations < 1))
    throw ConfigError("solver settings out of range");
  for (double f : s.delta_factors)
    if (!(f > 0.0)) throw ConfigError("solver delta_factors must be positive");
  return s;
}

json expand_builders(const json& j) {
  if (!j.is_object()) return j;
  if (j.value("type", "") == "swiss_cheese") {
    check_keys(j, {"type", "x", "n_min", "n_max", "radii"}, "swiss_cheese");
    const auto x = get<std::vector<double>>(j, "x");
    if (x.empty() || x.size() % 2 != 0) throw ConfigError("swiss_cheese x must list 2d real coordinates");
    const int n_min = get_int(j, "n_min");
    const int n_max = get_int(j, "n_max");
    if (n_min < 1 || n_max < n_min) throw ConfigError("swiss_cheese needs 1 <= n_min <= n_max");
    const json& radii = require(j, "radii");
    std::function<double(int)> radius;
    if (radii.is_array()) {
      const auto list = get<std::vector<double>>(j, "radii");
      if (list.size() != static_cast<std::size_t>(n_max - n_min + 1))
        throw ConfigError("swiss_cheese radii list must have one entry per shell");
      radius = [list, n_min](int n) { return list[static_cast<std::size_t>(n - n_min)]; };
    } else {
      check_keys(radii, {"scale", "base", "exponent"}, "swiss_cheese radii");
      const double scale = get_or(radii, "scale", 1.0);
      const double base = get<double>(radii, "base");
      const double exponent = get<double>(radii, "exponent");
      if (!(scale >= 0.0) || !(base > 0.0)) throw ConfigError("swiss_cheese radii need scale >= 0 and base > 0");
      radius = [=](int n) { return scale * std::pow(base, exponent * n); };
    }
    for (int n = n_min; n <= n_max; ++n)
      if (!(radius(n) >= 0.0) || !std::isfinite(radius(n)))
        throw ConfigError("swiss_cheese radii must be finite and >= 0");
    return make_swiss_cheese(PointCd(x), radius, n_min, n_max).to_json();
  }
  json out = j;
  for (const char* child : {"left", "right", "operand"})
    if (out.contains(child)) out[child] = expand_builders(out[child]);
  return out;
}

int bm_orientation_sign(int d) {
  const auto surface = sphere_surface(PointCd::zero(d), 1.0, 16);
  return surface.front().orientation;
}

json envelope(const std::string& mode, const json& config, const RunOptions& options, std::uint64_t seed, int d) {
  return {{"schema_version", kReportSchemaVersion},
          {"mode", mode},
          {"solver_version", kSolverVersion},
          {"config", config},
          {"overrides",
           {{"max_n", options.max_n ? json(*options.max_n) : json(nullptr)},
            {"resolution_scale", options.resolution_scale}}},
          {"seed", seed},
          {"bm_orientation_sign", bm_orientation_sign(d)}};
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::unique_ptr<CapacityCache> open_cache(const RunOptions& options) {
  if (options.no_cache) return nullptr;
  return std::make_unique<CapacityCache>(options.cache_dir ? *options.cache_dir : options.out / "cache");
}

void log_line(std::ostream& log, const std::string& line) {
  log << line + "\n" << std::flush;
}

RunOutput run_criterion(const json& config, const RunOptions& options, std::uint64_t seed, std::ostream& log) {
  check_keys(config, {"mode", "seed", "description", "domain", "d", "x", "p", "n_min", "n_max", "ladder",
                      "support_factor", "solver", "verdict_rules"},
             "criterion config");
  CriterionConfig c;
  c.d = get_int(config, "d");
  if (c.d != 1 && c.d != 2) throw ConfigError("criterion mode needs d = 1 or 2");
  c.x = get_point(config, "x", c.d);
  c.p = get<double>(config, "p");
  c.n_min = get_int_or(config, "n_min", c.n_min);
  c.n_max = options.max_n ? *options.max_n : get_int_or(config, "n_max", c.n_max);
  if (config.contains("ladder")) c.ladder = get<std::vector<double>>(config, "ladder");
  for (double& h : c.ladder) h *= options.resolution_scale;
  c.support_factor = get_or(config, "support_factor", c.support_factor);
  c.solver = parse_solver(config);
  if (config.contains("verdict_rules")) {
    const json& r = config.at("verdict_rules");
    check_keys(r, {"window", "converge_ratio", "diverge_factor"}, "verdict_rules");
    c.rules.window = get_int_or(r, "window", c.rules.window);
    c.rules.converge_ratio = get_or(r, "converge_ratio", c.rules.converge_ratio);
    c.rules.diverge_factor = get_or(r, "diverge_factor", c.rules.diverge_factor);
  }
  c.validate();
  const ImplicitSet domain = domain_from_json(require(config, "domain"));

  auto cache = open_cache(options);
  const auto progress = [&](const ShellRecord& s) {
    std::ostringstream os;
    os << "shell n=" << s.n << " capacity=" << number(s.capacity) << " term=" << number(s.term)
       << (s.resolved ? "" : " (unresolved)");
    log_line(log, os.str());
  };
  const CriterionReport report = evaluate_criterion(domain, c, cache.get(), options.jobs, progress);

  RunOutput out;
  out.report = envelope("criterion", config, options, seed, c.d);
  out.report["tolerances"] = {{"solver", c.solver.to_json()}, {"verdict_rules", c.rules.to_json()}};
  out.report["resolutions"] = {{"ladder_in_piece_units", c.ladder}};
  out.report["result"] = report.to_json();
  out.tables.emplace_back("partial_sums.csv", report.to_csv());
  log_line(log, "verdict: " + to_string(report.verdict));
  return out;
}

RunOutput run_capacity(const json& config, const RunOptions& options, std::uint64_t seed, std::ostream& log) {
  check_keys(config, {"mode", "seed", "description", "set", "q", "ladder", "support", "support_radius", "solver",
                      "oracle", "dump_field"},
             "capacity config");
  const ImplicitSet set = domain_from_json(require(config, "set"));
  const std::size_t D = set.real_dim();
  if (D != 2 && D != 4) throw ConfigError("capacity mode needs a set in R^2 or R^4 (d = 1 or 2)");
  const double q = get<double>(config, "q");
  try {
    require_exponent(q, D);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::vector<double> ladder = scaled_ladder(config, options);
  if (ladder.empty()) throw ConfigError("ladder must list at least one spacing");
  for (double h : ladder)
    if (!(h > 0.0)) throw ConfigError("ladder spacings must be positive");
  ImplicitSet support = ImplicitSet::empty(D);
  if (config.contains("support") == config.contains("support_radius"))
    throw ConfigError("give exactly one of 'support' and 'support_radius'");
  if (config.contains("support")) {
    support = domain_from_json(config.at("support"));
  } else {
    const double R = get<double>(config, "support_radius");
    if (!(R > 0.0)) throw ConfigError("support_radius must be positive");
    if (!set.bbox().bounded()) throw ConfigError("set must be bounded");
    support = ImplicitSet::ball(set.bbox().center(), R, Boundary::open);
  }
  if (support.real_dim() != D) throw ConfigError("set and support differ in dimension");
  const SolverSettings solver = parse_solver(config);
  const bool dump = get_or(config, "dump_field", false);

  auto cache = dump ? nullptr : open_cache(options);
  const auto compute = [&] { return estimate_capacity(set, q, ladder, support, solver); };
  std::vector<std::string> cache_warnings;
  const CapacityEstimate est =
      cache ? cache->get_or_compute(capacity_key(set, q, ladder, support, solver), compute, &cache_warnings)
            : compute();
  for (const auto& w : cache_warnings) log_line(log, "warning: " + w);

  RunOutput out;
  out.report = envelope("capacity", config, options, seed, static_cast<int>(D / 2));
  out.report["tolerances"] = {{"solver", solver.to_json()}, {"abs_tolerance", est.abs_tolerance}};
  out.report["resolutions"] = ladder;
  out.report["result"] = est.to_json();
  if (config.contains("oracle")) {
    const json& o = config.at("oracle");
    check_keys(o, {"r", "R"}, "oracle");
    const double oracle = radial_capacity_oracle(get<double>(o, "r"), get<double>(o, "R"), q, static_cast<int>(D));
    out.report["oracle"] = {{"value", oracle}, {"relative_error", (est.value - oracle) / oracle}};
  }

  std::ostringstream levels;
  levels << std::setprecision(17) << "h,value,iterations,converged,mask_nodes,final_rel_decrease\n";
  for (const auto& l : est.trend)
    levels << l.h << ',' << l.value << ',' << l.iterations << ',' << (l.converged ? "true" : "false") << ','
           << l.mask_nodes << ',' << l.final_rel_decrease << '\n';
  out.tables.emplace_back("levels.csv", levels.str());
  if (dump && est.field) {
    std::ostringstream f;
    f << std::setprecision(17);
    for (std::size_t k = 0; k < D; ++k) f << 'x' << k << ',';
    f << "u\n";
    std::vector<double> c(D);
    for (std::size_t i = 0; i < est.field->size(); ++i) {
      est.field->grid.node_coords(i, c);
      for (double v : c) f << v << ',';
      f << (*est.field)[i] << '\n';
    }
    out.tables.emplace_back("field.csv", f.str());
  }
  std::ostringstream os;
  os << "capacity " << number(est.value) << (est.converged ? "" : " (not converged)");
  log_line(log, os.str());
  return out;
}

TestFunction parse_polynomial(const json& j, int d) {
  check_keys(j, {"terms"}, "function");
  struct Term {
    Complex coef;
    std::vector<int> powers;
  };
  std::vector<Term> terms;
  const json& list = require(j, "terms");
  if (!list.is_array() || list.empty()) throw ConfigError("function terms must be a nonempty list");
  for (const json& t : list) {
    check_keys(t, {"coefficient", "powers"}, "function term");
    Term term{parse_complex(require(t, "coefficient"), "coefficient"), get<std::vector<int>>(t, "powers")};
    if (term.powers.size() != static_cast<std::size_t>(d)) throw ConfigError("term powers must list d exponents");
    for (int e : term.powers)
      if (e < 0) throw ConfigError("term powers must be >= 0");
    terms.push_back(std::move(term));
  }
  return {[terms](const PointCd& z) {
            Complex sum = 0.0;
            for (const auto& t : terms) {
              Complex v = t.coef;
              for (std::size_t i = 0; i < t.powers.size(); ++i)
                for (int m = 0; m < t.powers[i]; ++m) v *= z.zeta(static_cast<int>(i));
              sum += v;
            }
            return sum;
          },
          "entire (polynomial)",
          {}};
}

RunOutput run_martinelli(const json& config, const RunOptions& options, std::uint64_t seed, std::ostream& log) {
  check_keys(config, {"mode", "seed", "description", "d", "surface", "order", "function", "points", "divergence"},
             "martinelli-check config");
  const int d = get_d(config);
  const int order = get_int(config, "order");
  if (order < 1) throw ConfigError("order must be >= 1");
  const json& sj = require(config, "surface");
  const std::string type = get<std::string>(sj, "type");
  std::vector<SurfacePatch> surface;
  std::function<bool(const PointCd&)> inside;
  std::optional<std::pair<PointCd, double>> circle;
  if (type == "sphere") {
    check_keys(sj, {"type", "center", "radius"}, "surface");
    const PointCd c = get_point(sj, "center", d);
    const double r = get<double>(sj, "radius");
    if (!(r > 0.0)) throw ConfigError("sphere radius must be positive");
    surface = sphere_surface(c, r, order);
    inside = [c, r](const PointCd& z) { return z.distance(c) < r; };
    circle.emplace(c, r);
  } else if (type == "box") {
    check_keys(sj, {"type", "lo", "hi"}, "surface");
    const auto lo = get<std::vector<double>>(sj, "lo");
    const auto hi = get<std::vector<double>>(sj, "hi");
    if (lo.size() != static_cast<std::size_t>(2 * d) || hi.size() != lo.size())
      throw ConfigError("box lo and hi must list 2d coordinates");
    for (std::size_t k = 0; k < lo.size(); ++k)
      if (!(lo[k] < hi[k])) throw ConfigError("box needs lo < hi on every axis");
    surface = box_surface(lo, hi, order);
    inside = [lo, hi](const PointCd& z) {
      for (std::size_t k = 0; k < lo.size(); ++k)
        if (!(z[k] > lo[k] && z[k] < hi[k])) return false;
      return true;
    };
  } else {
    throw ConfigError("surface type must be 'sphere' or 'box'");
  }
  const TestFunction f = parse_polynomial(require(config, "function"), d);

  RunOutput out;
  out.report = envelope("martinelli-check", config, options, seed, d);
  out.report["surface_orientation_sign"] = surface.front().orientation;
  out.report["resolutions"] = {{"order_per_axis", order}};

  std::ostringstream table;
  table << std::setprecision(17) << "index,inside,re,im,expected_re,expected_im,abs_error,min_distance\n";
  auto rows = json::array();
  const json& points = require(config, "points");
  if (!points.is_array()) throw ConfigError("points must be a list");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto coords = points[i].get<std::vector<double>>();
    if (coords.size() != static_cast<std::size_t>(2 * d)) throw ConfigError("points must list 2d coordinates");
    const PointCd z(coords);
    const bool in = inside(z);
    const BmResult r = integrate_bm(f, surface, z);
    const Complex expected = in ? f(z) : Complex{};
    const double err = std::abs(r.value - expected);
    json row = {{"point", coords}, {"inside", in},         {"integral", complex_json(r.value)},
                {"expected", complex_json(expected)},      {"abs_error", err},
                {"min_distance", r.min_distance},          {"nodes", r.nodes},
                {"warnings", r.warnings}};
    if (d == 1 && circle) {
      const Complex c = cauchy_integral([&f](Complex w) { return f(PointCd::from_complex(std::vector<Complex>{w})); },
                                        circle->first.zeta(0), circle->second, z.zeta(0));
      row["cauchy"] = complex_json(c);
      row["cauchy_difference"] = std::abs(r.value - c);
    }
    rows.push_back(row);
    table << i << ',' << (in ? "true" : "false") << ',' << r.value.real() << ',' << r.value.imag() << ','
          << expected.real() << ',' << expected.imag() << ',' << err << ',' << r.min_distance << '\n';
    log_line(log, "point " + std::to_string(i) + " abs_error=" + number(err));
  }
  out.report["points"] = rows;
  out.tables.emplace_back("bm_points.csv", table.str());

  if (config.contains("divergence")) {
    const json& dj = config.at("divergence");
    check_keys(dj, {"samples", "h", "min_radius", "max_radius"}, "divergence");
    const int samples = get_int_or(dj, "samples", 100);
    const double h = get_or(dj, "h", 1e-3) * options.resolution_scale;
    const double rmin = get_or(dj, "min_radius", 0.5);
    const double rmax = get_or(dj, "max_radius", 2.0);
    if (samples < 1 || !(h > 0.0) || !(rmin > 0.0) || !(rmax >= rmin))
      throw ConfigError("divergence needs samples >= 1, h > 0 and 0 < min_radius <= max_radius");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> radius(rmin, rmax);
    std::ostringstream dt;
    dt << std::setprecision(17) << "index,radius,residual_h,residual_half_h,ratio\n";
    double worst = 0.0, ratio_min = INFINITY, ratio_max = 0.0;
    std::vector<double> coords(static_cast<std::size_t>(2 * d));
    for (int s = 0; s < samples; ++s) {
      double norm = 0.0;
      for (double& c : coords) {
        c = normal(rng);
        norm += c * c;
      }
      const double r = radius(rng);
      for (double& c : coords) c *= r / std::sqrt(norm);
      const PointCd zeta(coords);
      const double a = divergence_residual(zeta, h);
      const double b = divergence_residual(zeta, h / 2);
      const double ratio = b > 0.0 ? a / b : INFINITY;
      worst = std::max(worst, a);
      ratio_min = std::min(ratio_min, ratio);
      ratio_max = std::max(ratio_max, ratio);
      dt << s << ',' << r << ',' << a << ',' << b << ',' << ratio << '\n';
    }
    out.report["divergence"] = {{"samples", samples}, {"h", h},
                                {"max_residual", worst}, {"ratio_min", ratio_min},
                                {"ratio_max", ratio_max}};
    out.tables.emplace_back("divergence.csv", dt.str());
    log_line(log, "divergence max residual " + number(worst));
  }
  return out;
}

RunOutput run_cutoff(const json& config, const RunOptions& options, std::uint64_t seed, std::ostream& log) {
  check_keys(config, {"mode", "seed", "description", "d", "x", "n", "h", "q", "pairs", "dump_fields"},
             "cutoff-check config");
  const int d = get_d(config);
  const PointCd x = get_point(config, "x", d);
  const int n = get_int(config, "n");
  if (n < 1 || n > 40) throw ConfigError("n must lie in 1..40");
  const double h = scaled_spacing(config, "h", options);
  const double q = get<double>(config, "q");
  try {
    require_exponent(q, static_cast<std::size_t>(2 * d));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int pairs = get_int_or(config, "pairs", 10000);
  if (pairs < 0) throw ConfigError("pairs must be >= 0");
  const std::size_t D = static_cast<std::size_t>(2 * d);

  const RadialBump bump(x, n);
  std::vector<double> lo(D), hi(D);
  for (std::size_t k = 0; k < D; ++k) {
    lo[k] = x[k] - bump.r3;
    hi[k] = x[k] + bump.r3;
  }
  const Grid grid = Grid::covering(Box{lo, hi}, h, 1);
  const double node_limit = 5e7;
  if (static_cast<double>(grid.node_count()) > node_limit) throw ConfigError("grid too large; raise h");

  const ScalarField psi_field = sample_psi(grid, n, x);
  bool range_ok = true, plateau_ok = true, support_ok = true, slope_ok = true;
  const double slope_bound = std::ldexp(1.0, n + 2);
  std::vector<double> c(D);
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_coords(i, c);
    const PointCd z(c);
    const BumpSample s = psi(n, x, z);
    const double r = z.distance(x);
    range_ok = range_ok && s.value >= 0.0 && s.value <= 1.0;
    if (r >= bump.r1 && r <= bump.r2) plateau_ok = plateau_ok && s.value == 1.0;
    if (r <= bump.r0 || r >= bump.r3) support_ok = support_ok && s.value == 0.0;
    slope_ok = slope_ok && std::abs(s.slope) <= slope_bound;
  }

  // Smooth test weight g concentrated on the shells about x.
  ScalarField g(grid);
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_coords(i, c);
    const double r = PointCd(c).distance(x) / bump.r2;
    g[i] = std::exp(-r * r);
  }
  const ProductRuleCheck pr = product_rule_check(g, n, x, q);
  const ScalarField phi_n = build_phi(g, n, x);
  const ScalarField phi_next = build_phi(g, n + 1, x);
  const std::vector<ScalarField> parts{phi_n, phi_next};
  const ScalarField phi = sup_combine(parts);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.node_count() - 1);
  long violations = 0;
  for (int k = 0; k < pairs; ++k) {
    const std::size_t a = pick(rng), b = pick(rng);
    const double lhs = std::abs(phi[a] - phi[b]);
    const double rhs = std::max(std::abs(phi_n[a] - phi_n[b]), std::abs(phi_next[a] - phi_next[b]));
    if (lhs > rhs) ++violations;
  }
  const double I_n = psi_gradient_integral(n, d, 2.0 * d);
  const double I_next = psi_gradient_integral(n + 1, d, 2.0 * d);

  RunOutput out;
  out.report = envelope("cutoff-check", config, options, seed, d);
  out.report["resolutions"] = {{"h", h}, {"nodes", grid.node_count()}};
  out.report["psi_properties"] = {{"range", range_ok},
                                  {"plateau", plateau_ok},
                                  {"support", support_ok},
                                  {"slope_bound", slope_ok},
                                  {"slope_bound_value", slope_bound}};
  out.report["product_rule"] = {{"phi_energy", pr.phi_energy},
                                {"g_weighted_psi", pr.g_weighted_psi},
                                {"psi_weighted_g", pr.psi_weighted_g},
                                {"bound", pr.bound},
                                {"factor", std::pow(2.0, q - 1.0)},
                                {"holds_with_10_percent_slack", pr.holds(0.1)}};
  out.report["sup_combine"] = {{"pairs", pairs}, {"violations", violations}};
  out.report["psi_gradient_integral"] = {{"n", I_n}, {"n_plus_1", I_next}, {"ratio", I_next / I_n}};
  out.report["gns_ratio"] = gns_ratio(g, q);

  if (get_or(config, "dump_fields", false)) {
    std::ostringstream f;
    f << std::setprecision(17);
    for (std::size_t k = 0; k < D; ++k) f << 'x' << k << ',';
    f << "psi,g,phi\n";
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
      grid.node_coords(i, c);
      for (double v : c) f << v << ',';
      f << psi_field[i] << ',' << g[i] << ',' << phi_n[i] << '\n';
    }
    out.tables.emplace_back("fields.csv", f.str());
  }
  log_line(log, std::string("psi properties ") +
                    (range_ok && plateau_ok && support_ok && slope_ok ? "hold" : "FAIL") +
                    ", sup_combine violations " + std::to_string(violations));
  return out;
}

RunOutput run_probe(const json& config, const RunOptions& options, std::uint64_t seed, std::ostream& log) {
  check_keys(config, {"mode", "seed", "description", "domain", "d", "x", "p", "family", "h", "pad"},
             "probe config");
  const int d = get_d(config);
  const PointCd x = get_point(config, "x", d);
  const double p = get<double>(config, "p");
  if (!(p >= 1.0)) throw ConfigError("p must be >= 1");
  const ImplicitSet domain = domain_from_json(require(config, "domain"));
  if (domain.real_dim() != x.real_dim()) throw ConfigError("domain and x differ in dimension");
  if (!domain.bbox().bounded()) throw ConfigError("domain must be bounded");
  const double h = scaled_spacing(config, "h", options);
  const int pad = get_int_or(config, "pad", 0);
  if (pad < 0) throw ConfigError("pad must be >= 0");

  const json& fj = require(config, "family");
  const std::string type = get<std::string>(fj, "type");
  std::vector<TestFunction> family;
  if (type == "poles") {
    check_keys(fj, {"type", "poles", "max_power"}, "family");
    std::vector<Complex> poles;
    for (const json& v : require(fj, "poles")) poles.push_back(parse_complex(v, "pole"));
    family = pole_family(poles, d, get_int(fj, "max_power"));
  } else if (type == "polynomial") {
    check_keys(fj, {"type", "degree"}, "family");
    family = polynomial_family(d, get_int(fj, "degree"));
  } else {
    throw ConfigError("family type must be 'poles' or 'polynomial'");
  }

  const Grid grid = Grid::covering(domain.bbox(), h, pad);
  if (static_cast<double>(grid.node_count()) > 5e7) throw ConfigError("grid too large; raise h");
  const ProbeResult r = evaluation_norm_probe(domain, x, p, family, grid);

  RunOutput out;
  out.report = envelope("probe", config, options, seed, d);
  out.report["resolutions"] = {{"h", h}, {"nodes_in_domain", r.nodes_in_domain}};
  out.report["result"] = {{"value", r.value},
                          {"best_index", r.best_index},
                          {"best_region", family[r.best_index].region},
                          {"ratios", r.ratios},
                          {"note", "a lower bound for the evaluation functional norm on the sampled family"}};
  std::ostringstream table;
  table << std::setprecision(17) << "index,region,ratio\n";
  for (std::size_t k = 0; k < r.ratios.size(); ++k)
    table << k << ",\"" << family[k].region << "\"," << r.ratios[k] << '\n';
  out.tables.emplace_back("probe.csv", table.str());
  log_line(log, "probe value " + number(r.value));
  return out;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, column = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

int report_error(std::ostream& err, int status, const std::string& kind, const std::string& message,
                 json extra = json::object()) {
  json e = {{"status", status}, {"kind", kind}, {"message", message}};
  e.update(extra);
  err << json{{"error", e}}.dump() << std::endl;
  return status;
}

}  // namespace

ImplicitSet domain_from_json(const json& j) {
  try {
    return ImplicitSet::from_json(expand_builders(j));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid geometry: ") + e.what());
  }
}

RunOutput execute(const json& config, const RunOptions& options, std::ostream& log) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (!(options.resolution_scale > 0.0) || !std::isfinite(options.resolution_scale))
    throw ConfigError("resolution scale must be positive");
  if (options.jobs < 1) throw ConfigError("jobs must be >= 1");
  const std::string mode = get<std::string>(config, "mode");
  const std::uint64_t seed = options.seed ? *options.seed : get_or<std::uint64_t>(config, "seed", 0);
  if (mode == "criterion") return run_criterion(config, options, seed, log);
  if (mode == "capacity") return run_capacity(config, options, seed, log);
  if (mode == "martinelli-check") return run_martinelli(config, options, seed, log);
  if (mode == "cutoff-check") return run_cutoff(config, options, seed, log);
  if (mode == "probe") return run_probe(config, options, seed, log);
  throw ConfigError("unknown mode '" + mode + "'");
}

void write_file_atomic(const fs::path& path, const std::string& body) {
  static std::atomic<unsigned long> counter{0};
  const fs::path tmp =
      path.parent_path() / ("." + path.filename().string() + "." + std::to_string(::getpid()) + "." +
                            std::to_string(counter++) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string());
  }
}

int run(const fs::path& config_path, const RunOptions& options, std::ostream& log, std::ostream& err) {
  std::string text;
  {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) return report_error(err, kExitConfig, "io", "cannot read config " + config_path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  json config;
  try {
    config = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    return report_error(err, kExitConfig, "parse", e.what(), {{"line", line}, {"column", column}});
  }
  try {
    RunOutput out = execute(config, options, log);
    fs::create_directories(options.out);
    write_file_atomic(options.out / "report.json", out.report.dump(2) + "\n");
    for (const auto& [name, body] : out.tables) write_file_atomic(options.out / name, body);
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(err, kExitConfig, "config", e.what());
  } catch (const json::exception& e) {
    return report_error(err, kExitConfig, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return report_error(err, kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return report_error(err, kExitNumerical, "numerical", e.what());
  }
}

}  // namespace bpe
