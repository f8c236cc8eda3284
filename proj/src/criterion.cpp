#include "bpe/criterion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "bpe/cache.hpp"

namespace bpe {

double holder_conjugate(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("exponent p must satisfy 1 < p < infinity");
  return p / (p - 1.0);
}

double weight_log2(int n, double q, int d) { return static_cast<double>(n) * (2.0 * d - 1.0) * q; }

double weighted_term(int n, double gamma, double q, int d) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("capacity must be nonnegative");
  if (gamma == 0.0) return 0.0;
  return std::exp2(std::log2(gamma) + weight_log2(n, q, d));
}

nlohmann::json VerdictRules::to_json() const {
  return {{"window", window}, {"converge_ratio", converge_ratio}, {"diverge_factor", diverge_factor}};
}

void CriterionConfig::validate() const {
  if (d != 1 && d != 2) throw ConfigError("d must be 1 or 2 for numeric capacities");
  if (x.complex_dim() != d) throw ConfigError("point x must have complex dimension d");
  const double D = 2.0 * d;
  if (!(p > D / (D - 1.0))) {
    std::ostringstream os;
    os << "p = " << p << " must exceed 2d/(2d-1) = " << D / (D - 1.0) << " so that q < 2d";
    throw ConfigError(os.str());
  }
  if (n_min < 1) throw ConfigError("n_min must be >= 1");
  if (n_max > 40) throw ConfigError("n_max must be <= 40");
  if (n_min > n_max) throw ConfigError("n_min must not exceed n_max");
  if (ladder.empty()) throw ConfigError("ladder must list at least one spacing");
  for (double h : ladder)
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("ladder spacings must be positive");
  if (!(support_factor > 1.0)) throw ConfigError("support_factor must exceed 1");
  if (rules.window < 2) throw ConfigError("verdict window must be >= 2");
  if (!(rules.converge_ratio > 0.0 && rules.converge_ratio < 1.0))
    throw ConfigError("converge_ratio must lie in (0, 1)");
  if (!(rules.diverge_factor > 1.0)) throw ConfigError("diverge_factor must exceed 1");
}

nlohmann::json CriterionConfig::to_json() const {
  return {{"d", d},
          {"x", std::vector<double>(x.coords().begin(), x.coords().end())},
          {"p", p},
          {"q", q()},
          {"n_min", n_min},
          {"n_max", n_max},
          {"ladder", ladder},
          {"support_factor", support_factor},
          {"solver", solver.to_json()},
          {"solver_version", kSolverVersion},
          {"verdict_rules", rules.to_json()}};
}

nlohmann::json ShellRecord::to_json() const {
  return {{"n", n},
          {"capacity", capacity},
          {"weight_log2", weight_log2},
          {"term", term},
          {"partial_sum", partial_sum},
          {"resolved", resolved},
          {"converged", converged},
          {"exactly_empty", exactly_empty},
          {"pieces", pieces},
          {"resolution", resolution},
          {"iterations", iterations},
          {"warnings", warnings}};
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::converges: return "series-converges";
    case Verdict::diverges: return "series-diverges";
    default: return "inconclusive";
  }
}

nlohmann::json CriterionReport::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& s : shells) rows.push_back(s.to_json());
  return {{"config", config.to_json()},
          {"shells", rows},
          {"verdict", to_string(verdict)},
          {"fitted_ratio", fitted_ratio ? nlohmann::json(*fitted_ratio) : nlohmann::json(nullptr)},
          {"tail_estimate", tail_estimate ? nlohmann::json(*tail_estimate) : nlohmann::json(nullptr)},
          {"partial_sum", partial_sum()},
          {"conclusion", conclusion},
          {"notes", notes}};
}

std::string CriterionReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "n,capacity,weight_log2,term,partial_sum,resolved\n";
  for (const auto& s : shells)
    os << s.n << ',' << s.capacity << ',' << s.weight_log2 << ',' << s.term << ',' << s.partial_sum << ','
       << (s.resolved ? "true" : "false") << '\n';
  return os.str();
}

ShellRecord shell_capacity(const ImplicitSet& domain, const CriterionConfig& config, int n, CapacityCache* cache) {
  const int D = 2 * config.d;
  const double q = config.q();
  ShellRecord rec;
  rec.n = n;
  rec.weight_log2 = weight_log2(n, q, config.d);

  const std::vector<ImplicitSet> pieces = decompose(shell_minus_domain(config.x, n, domain));
  rec.pieces = pieces.size();
  rec.exactly_empty = pieces.empty();
  const ImplicitSet triple = triple_shell(config.x, n);

  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const ImplicitSet& piece = pieces[k];
    const Box& bb = piece.bbox();
    const std::vector<double> c = bb.center();
    const double s = bb.half_diagonal();
    if (!(s > 0.0)) {
      rec.warnings.push_back("piece " + std::to_string(k) + " has a degenerate bounding box; counted as zero");
      continue;
    }
    const ImplicitSet support = intersect(ImplicitSet::ball(c, config.support_factor * s, Boundary::open), triple);
    const ImplicitSet local = piece.normalized(c, s);
    const ImplicitSet local_support = support.normalized(c, s);
    const auto compute = [&] { return estimate_capacity(local, q, config.ladder, local_support, config.solver); };
    const CapacityEstimate est =
        cache ? cache->get_or_compute(capacity_key(local, q, config.ladder, local_support, config.solver), compute,
                                      &rec.warnings)
              : compute();

    rec.capacity += est.value * std::pow(s, D - q);
    rec.converged = rec.converged && est.converged;
    rec.iterations += est.iterations;
    rec.resolution = std::max(rec.resolution, est.resolution * s);
    for (const auto& w : est.warnings) {
      rec.warnings.push_back("piece " + std::to_string(k) + ": " + w);
      if (w.find("possibly-positive-capacity-missed") != std::string::npos) rec.resolved = false;
    }
  }
  rec.term = weighted_term(n, rec.capacity, q, config.d);
  return rec;
}

double fit_geometric_ratio(std::span<const double> terms) {
  const std::size_t k = terms.size();
  if (k < 2) throw std::invalid_argument("ratio fit needs at least two terms");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(terms[i] > 0.0)) throw std::invalid_argument("ratio fit needs positive terms");
    const double xi = static_cast<double>(i);
    const double yi = std::log(terms[i]);
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    sxy += xi * yi;
  }
  const double kk = static_cast<double>(k);
  return std::exp((kk * sxy - sx * sy) / (kk * sxx - sx * sx));
}

void apply_verdict(CriterionReport& report) {
  const VerdictRules& r = report.config.rules;
  auto& notes = report.notes;
  report.verdict = Verdict::inconclusive;
  report.fitted_ratio.reset();
  report.tail_estimate.reset();

  const bool all_zero = std::all_of(report.shells.begin(), report.shells.end(), [](const ShellRecord& s) {
    return s.term == 0.0;
  });
  const bool all_resolved = std::all_of(report.shells.begin(), report.shells.end(),
                                        [](const ShellRecord& s) { return s.resolved; });

  std::vector<double> resolved;
  for (const auto& s : report.shells)
    if (s.resolved) resolved.push_back(s.term);
  const std::size_t k = static_cast<std::size_t>(r.window);

  if (all_zero && all_resolved) {
    report.verdict = Verdict::converges;
    report.tail_estimate = 0.0;
    notes.push_back("rule (a): every term is exactly zero");
  } else if (resolved.size() >= k) {
    const std::span<const double> last(resolved.data() + resolved.size() - k, k);
    const bool any_zero = std::any_of(last.begin(), last.end(), [](double t) { return t == 0.0; });
    const bool window_zero = std::all_of(last.begin(), last.end(), [](double t) { return t == 0.0; });
    if (window_zero) {
      report.verdict = Verdict::converges;
      report.fitted_ratio = 0.0;
      report.tail_estimate = 0.0;
      notes.push_back("rule (b): the last resolved terms are all zero");
    } else if (any_zero) {
      notes.push_back("the last resolved terms mix zero and positive values; no ratio fit");
    } else {
      const double rho = fit_geometric_ratio(last);
      report.fitted_ratio = rho;
      const double first = *std::find_if(resolved.begin(), resolved.end(), [](double t) { return t > 0.0; });
      const bool nondecreasing = std::is_sorted(last.begin(), last.end());
      if (rho <= r.converge_ratio) {
        report.verdict = Verdict::converges;
        report.tail_estimate = last.back() * rho / (1.0 - rho);
        notes.push_back("rule (b): geometric fit over the last resolved terms");
      } else if (nondecreasing && last.back() > r.diverge_factor * first) {
        report.verdict = Verdict::diverges;
        notes.push_back("rule (c): terms nondecreasing and the last exceeds the first resolved term by the divergence factor");
      }
    }
  } else {
    notes.push_back("fewer resolved terms than the verdict window");
  }
  if (report.verdict == Verdict::inconclusive && !all_resolved && all_zero)
    notes.push_back("terms are zero but some shells were not resolved; refine the ladder");

  switch (report.verdict) {
    case Verdict::converges:
      report.conclusion = "sufficient condition met: x is a bounded point evaluation for L^p_a(U)";
      break;
    case Verdict::diverges:
      report.conclusion =
          "sufficient condition fails: no conclusion for d > 1; for d = 1 and p >= 2 x is not a bounded point "
          "evaluation";
      break;
    default: report.conclusion = "inconclusive: the computed terms fit neither rule"; break;
  }
  notes.push_back(
      "verdicts are heuristic: a series cannot be decided from finitely many terms, and no unconditional tail "
      "certificate exists because the trivial bound Gamma_q(A_n) <= c 2^(-n(2d-q)) makes individual weighted terms "
      "grow");
  notes.push_back("the series condition is sufficient only; divergence does not imply failure for d > 1");
}

namespace {

// Warns unless every sampled radius about x reaches a point of the domain.
std::optional<std::string> closure_check(const ImplicitSet& domain, const PointCd& x) {
  if (domain.contains(x)) return std::nullopt;
  const std::size_t D = x.real_dim();
  std::vector<double> p(D);
  for (int k = 1; k <= 30; ++k) {
    const double r = std::ldexp(1.0, -k);
    bool hit = false;
    for (std::size_t axis = 0; axis < D && !hit; ++axis)
      for (double sign : {1.0, -1.0}) {
        for (std::size_t j = 0; j < D; ++j) p[j] = x[j];
        p[axis] += sign * r;
        if (domain.contains(p)) {
          hit = true;
          break;
        }
      }
    if (!hit) {
      std::ostringstream os;
      os << "x may not lie in the closure of U: no sampled point at distance 2^-" << k << " is in U";
      return os.str();
    }
  }
  return std::nullopt;
}

}  // namespace

CriterionReport evaluate_criterion(const ImplicitSet& domain, const CriterionConfig& config, CapacityCache* cache,
                                   int jobs, const ShellProgress& progress) {
  config.validate();
  if (domain.real_dim() != config.x.real_dim()) throw ConfigError("domain and x differ in dimension");
  if (!domain.bbox().bounded()) throw ConfigError("domain must be bounded");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  CriterionReport report;
  report.config = config;
  if (auto w = closure_check(domain, config.x)) report.notes.push_back(*w);

  const std::size_t count = static_cast<std::size_t>(config.n_max - config.n_min + 1);
  std::vector<ShellRecord> records(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        records[i] = shell_capacity(domain, config, config.n_min + static_cast<int>(i), cache);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(records[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  double sum = 0.0;
  for (auto& rec : records) {
    sum += rec.term;
    rec.partial_sum = sum;
    report.shells.push_back(std::move(rec));
  }
  apply_verdict(report);
  return report;
}

ProbeRejected::ProbeRejected(std::size_t index, const std::string& what)
    : std::invalid_argument(what), index_(index) {}

ProbeResult evaluation_norm_probe(const ImplicitSet& domain, const PointCd& x, double p,
                                  std::span<const TestFunction> family, const Grid& grid) {
  if (!(p >= 1.0)) throw std::invalid_argument("probe exponent must be >= 1");
  if (family.empty()) throw std::invalid_argument("probe family is empty");
  if (grid.dim() != x.real_dim() || domain.real_dim() != x.real_dim())
    throw DimensionMismatch("probe grid, domain and x must share a dimension");

  ProbeResult out;
  std::vector<double> mass(family.size(), 0.0);
  std::vector<double> coords(grid.dim());
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_coords(i, coords);
    if (!domain.contains(coords)) continue;
    ++out.nodes_in_domain;
    const PointCd z(coords);
    for (std::size_t k = 0; k < family.size(); ++k) {
      const double a = std::abs(family[k](z));
      if (!std::isfinite(a)) {
        std::ostringstream os;
        os << "probe function " << k << " is singular at a node of U";
        throw ProbeRejected(k, os.str());
      }
      mass[k] += std::pow(a, p);
    }
  }
  if (out.nodes_in_domain == 0) throw std::invalid_argument("probe grid has no nodes in U");
  const double vol = grid.volume_element();
  for (std::size_t k = 0; k < family.size(); ++k) {
    const double at_x = std::abs(family[k](x));
    if (!std::isfinite(at_x)) throw ProbeRejected(k, "probe function " + std::to_string(k) + " is singular at x");
    const double norm = std::pow(mass[k] * vol, 1.0 / p);
    const double ratio = norm > 0.0 ? at_x / norm : 0.0;
    out.ratios.push_back(ratio);
    if (ratio > out.value) {
      out.value = ratio;
      out.best_index = k;
    }
  }
  return out;
}

std::vector<TestFunction> polynomial_family(int d, int degree) {
  if (d < 1 || degree < 0) throw std::invalid_argument("polynomial family needs d >= 1 and degree >= 0");
  std::vector<TestFunction> out;
  std::vector<int> e(static_cast<std::size_t>(d), 0);
  for (int total = 0; total <= degree; ++total) {
    // Exponent tuples of this total degree in lexicographic order, first coordinate highest.
    std::function<void(int, int)> rec = [&](int j, int left) {
      if (j == d - 1) {
        e[j] = left;
        const std::vector<int> ex = e;
        std::ostringstream name;
        name << "monomial";
        for (int v : ex) name << ' ' << v;
        out.push_back({[ex](const PointCd& z) {
                         Complex v = 1.0;
                         for (std::size_t i = 0; i < ex.size(); ++i)
                           for (int m = 0; m < ex[i]; ++m) v *= z.zeta(static_cast<int>(i));
                         return v;
                       },
                       "entire (" + name.str() + ")",
                       {}});
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[j] = v;
        rec(j + 1, left - v);
      }
    };
    rec(0, total);
  }
  return out;
}

std::vector<TestFunction> pole_family(std::span<const Complex> poles, int d, int max_power) {
  if (d < 1 || max_power < 1) throw std::invalid_argument("pole family needs d >= 1 and max_power >= 1");
  std::vector<TestFunction> out;
  for (int k = 1; k <= max_power; ++k)
    for (const Complex a : poles) {
      std::vector<Complex> where(static_cast<std::size_t>(d), Complex{});
      where[0] = a;
      std::ostringstream region;
      region << "holomorphic off zeta_1 = " << a.real() << (a.imag() < 0 ? " - " : " + ") << std::abs(a.imag())
             << "i";
      out.push_back({[a, k](const PointCd& z) { return std::pow(z.zeta(0) - a, -k); }, region.str(),
                     {PointCd::from_complex(where)}});
    }
  return out;
}

}  // namespace bpe
