#include "bpe/martinelli.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace bpe {

namespace {

constexpr double kPi = std::numbers::pi;

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Determinant of a row-major n x n complex matrix by partial pivoting.
Complex determinant(std::vector<Complex> a, std::size_t n) {
  Complex det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (a[piv * n + c] == Complex{}) return 0.0;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      det = -det;
    }
    det *= a[c * n + c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const Complex m = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= m * a[c * n + k];
    }
  }
  return det;
}

}  // namespace

std::vector<Complex> bm_flux_components(const PointCd& zeta, const PointCd& z) {
  if (zeta.real_dim() != z.real_dim()) throw DimensionMismatch("kernel arguments differ in dimension");
  const double r = zeta.distance(z);
  if (r == 0.0) throw SingularInput("kernel evaluated at its singularity");
  const int d = zeta.complex_dim();
  const double scale = std::pow(r, -2.0 * d);
  std::vector<Complex> out(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) out[j] = std::conj(zeta.zeta(j) - z.zeta(j)) * scale;
  return out;
}

GaussLegendre::GaussLegendre(int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
  const int n = order;
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * k - 1.0) * x * p2 - (k - 1.0) * p3) / k;
      }
      dp = n * (x * p1 - p2) / (x * x - 1.0);
      const double prev = x;
      x = prev - p1 / dp;
      if (std::abs(x - prev) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = w;
  }
}

std::size_t SurfacePatch::node_count() const {
  std::size_t n = 1;
  for (int o : orders) n *= static_cast<std::size_t>(o);
  return n;
}

std::vector<SurfacePatch> sphere_surface(const PointCd& center, double radius, int order) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  const int d = center.complex_dim();
  if (d < 1) throw DimensionMismatch("sphere centre has no coordinates");
  const std::size_t D = center.real_dim();
  const std::size_t P = D - 1;
  const std::vector<double> c(center.coords().begin(), center.coords().end());

  SurfacePatch patch;
  patch.complex_dim = d;
  patch.lo.assign(P, 0.0);
  patch.hi.assign(P, kPi);
  patch.hi[P - 1] = 2.0 * kPi;
  patch.orders.assign(P, order);
  patch.chart.eval = [c, radius, D, P](std::span<const double> t, std::span<double> x, std::span<double> jac) {
    std::vector<double> s(P), co(P);
    for (std::size_t i = 0; i < P; ++i) {
      s[i] = std::sin(t[i]);
      co[i] = std::cos(t[i]);
    }
    // Product of sines over i < k, skipping index `skip`.
    const auto sines = [&](std::size_t k, std::size_t skip) {
      double p = 1.0;
      for (std::size_t i = 0; i < k; ++i)
        if (i != skip) p *= s[i];
      return p;
    };
    for (std::size_t k = 0; k < D; ++k) {
      const double tail = k < P ? co[k] : 1.0;
      x[k] = c[k] + radius * sines(k, P) * tail;
      for (std::size_t m = 0; m < P; ++m) {
        double v = 0.0;
        if (m < k) v = radius * sines(k, m) * co[m] * tail;
        else if (m == k) v = -radius * sines(k, P) * s[k];
        jac[k * P + m] = v;
      }
    }
  };
  std::vector<SurfacePatch> surface{std::move(patch)};
  calibrate_orientation(surface, center);
  return surface;
}

std::vector<SurfacePatch> box_surface(std::span<const double> lo, std::span<const double> hi, int order) {
  const std::size_t D = lo.size();
  if (D == 0 || D % 2 != 0 || hi.size() != D) throw DimensionMismatch("box corners must have the same even dimension");
  for (std::size_t k = 0; k < D; ++k)
    if (!(lo[k] < hi[k])) throw std::invalid_argument("box must be nondegenerate");
  const std::size_t P = D - 1;
  std::vector<SurfacePatch> faces;
  for (std::size_t k = 0; k < D; ++k) {
    for (int side : {-1, 1}) {
      SurfacePatch f;
      f.complex_dim = static_cast<int>(D / 2);
      std::vector<std::size_t> axes;
      for (std::size_t a = 0; a < D; ++a)
        if (a != k) {
          axes.push_back(a);
          f.lo.push_back(lo[a]);
          f.hi.push_back(hi[a]);
        }
      f.orders.assign(P, order);
      f.orientation = side * ((k % 2 == 0) ? 1 : -1);
      const double fixed = side > 0 ? hi[k] : lo[k];
      f.chart.eval = [axes, k, fixed, P](std::span<const double> t, std::span<double> x, std::span<double> jac) {
        std::fill(jac.begin(), jac.end(), 0.0);
        x[k] = fixed;
        for (std::size_t m = 0; m < P; ++m) {
          x[axes[m]] = t[m];
          jac[axes[m] * P + m] = 1.0;
        }
      };
      faces.push_back(std::move(f));
    }
  }
  std::vector<double> mid(D);
  for (std::size_t k = 0; k < D; ++k) mid[k] = 0.5 * (lo[k] + hi[k]);
  calibrate_orientation(faces, PointCd(mid));
  return faces;
}

int calibrate_orientation(std::vector<SurfacePatch>& surface, const PointCd& inside) {
  const TestFunction one{[](const PointCd&) { return Complex{1.0}; }, "entire", {}};
  const Complex v = integrate_bm(one, surface, inside).value;
  if (std::abs(std::abs(v.real()) - 1.0) > 0.05 || std::abs(v.imag()) > 0.05) {
    std::ostringstream os;
    os << "orientation calibration failed: kernel integral " << v.real() << (v.imag() < 0 ? " - " : " + ")
       << std::abs(v.imag()) << "i about the calibration point";
    throw std::runtime_error(os.str());
  }
  const int sign = v.real() > 0 ? 1 : -1;
  if (sign < 0)
    for (auto& p : surface) p.orientation = -p.orientation;
  return sign;
}

BmResult integrate_bm(const TestFunction& f, std::span<const SurfacePatch> surface, const PointCd& z) {
  BmResult out;
  out.min_distance = std::numeric_limits<double>::infinity();
  const int d = z.complex_dim();
  const std::size_t D = z.real_dim();
  const std::size_t P = D - 1;
  const Complex prefactor = factorial(d - 1) / std::pow(Complex(0.0, 2.0 * kPi), d);

  std::vector<double> t(P), x(D), jac(D * P);
  std::vector<Complex> dz(static_cast<std::size_t>(d) * P), minor(P * P);
  Complex total = 0.0;
  for (const SurfacePatch& patch : surface) {
    if (patch.param_dim() != P || patch.orders.size() != P)
      throw DimensionMismatch("surface patch does not match the point dimension");
    std::vector<GaussLegendre> rules;
    for (int o : patch.orders) rules.emplace_back(o);
    std::vector<int> idx(P, 0);
    double patch_min = std::numeric_limits<double>::infinity();
    double patch_h = 0.0;
    Complex acc = 0.0;
    while (true) {
      double w = 1.0;
      for (std::size_t m = 0; m < P; ++m) {
        const double half = 0.5 * (patch.hi[m] - patch.lo[m]);
        t[m] = patch.lo[m] + half * (1.0 + rules[m].nodes[idx[m]]);
        w *= half * rules[m].weights[idx[m]];
      }
      patch.chart.eval(t, x, jac);
      const PointCd zeta(x);
      const double dist = zeta.distance(z);
      if (dist < patch_min) {
        patch_min = dist;
        patch_h = 0.0;
        for (std::size_t m = 0; m < P; ++m) {
          double col = 0.0;
          for (std::size_t k = 0; k < D; ++k) col += jac[k * P + m] * jac[k * P + m];
          patch_h = std::max(patch_h, std::sqrt(col) * (patch.hi[m] - patch.lo[m]) / patch.orders[m]);
        }
      }
      const std::vector<Complex> F = bm_flux_components(zeta, z);
      for (int j = 0; j < d; ++j)
        for (std::size_t m = 0; m < P; ++m) dz[j * P + m] = {jac[(2 * j) * P + m], jac[(2 * j + 1) * P + m]};

      Complex kernel = 0.0;
      for (int j = 0; j < d; ++j) {
        std::size_t row = 0;
        for (int l = 0; l < d; ++l) {
          if (l != j) {
            for (std::size_t m = 0; m < P; ++m) minor[row * P + m] = std::conj(dz[l * P + m]);
            ++row;
          }
          for (std::size_t m = 0; m < P; ++m) minor[row * P + m] = dz[l * P + m];
          ++row;
        }
        kernel += F[j] * determinant(minor, P);
      }
      acc += w * f(zeta) * kernel;
      ++out.nodes;

      std::size_t m = P;
      bool done = true;
      while (m > 0) {
        --m;
        if (++idx[m] < patch.orders[m]) {
          done = false;
          break;
        }
        idx[m] = 0;
      }
      if (done) break;
    }
    total += static_cast<double>(patch.orientation) * acc;
    out.min_distance = std::min(out.min_distance, patch_min);
    if (patch_min < 10.0 * patch_h) {
      std::ostringstream os;
      os << "near-singular: quadrature node at distance " << patch_min << " from z (node spacing " << patch_h
         << ")";
      out.warnings.push_back(os.str());
    }
  }
  out.value = prefactor * total;
  return out;
}

Complex cauchy_integral(const std::function<Complex(Complex)>& f, Complex center, double radius, Complex z,
                        int nodes) {
  if (nodes < 1) throw std::invalid_argument("node count must be positive");
  if (std::abs(std::abs(z - center) - radius) == 0.0) throw SingularInput("point lies on the contour");
  Complex acc = 0.0;
  for (int k = 0; k < nodes; ++k) {
    const Complex e = std::polar(1.0, 2.0 * kPi * k / nodes);
    const Complex zeta = center + radius * e;
    acc += f(zeta) * radius * e / (zeta - z);
  }
  return acc / static_cast<double>(nodes);
}

double divergence_residual(const PointCd& zeta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("difference step must be positive");
  if (!(zeta.norm() > 10.0 * h)) throw std::invalid_argument("difference step too large relative to |zeta|");
  const int d = zeta.complex_dim();
  std::vector<double> c(zeta.coords().begin(), zeta.coords().end());
  const auto component = [d](const std::vector<double>& p, int j) {
    double s = 0.0;
    for (double v : p) s += v * v;
    return Complex(p[2 * j], -p[2 * j + 1]) / std::pow(s, d);
  };
  const auto diff = [&](int j, std::size_t axis) {
    std::vector<double> a = c, b = c;
    a[axis] += h;
    b[axis] -= h;
    return (component(a, j) - component(b, j)) / (2.0 * h);
  };
  Complex sum = 0.0;
  for (int j = 0; j < d; ++j) sum += 0.5 * (diff(j, 2 * j) + Complex(0.0, 1.0) * diff(j, 2 * j + 1));
  return std::abs(sum);
}

}  // namespace bpe
