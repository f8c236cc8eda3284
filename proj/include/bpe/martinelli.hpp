#pragma once

#include <complex>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpe/point.hpp"

namespace bpe {

using Complex = std::complex<double>;

class SingularInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TestFunction {
  std::function<Complex(const PointCd&)> evaluate;
  /// Where the evaluator is holomorphic, in words.
  std::string region;
  /// Known poles, if any; used to keep probes off them.
  std::vector<PointCd> poles;

  Complex operator()(const PointCd& z) const { return evaluate(z); }
};

/// (conj(zeta_j) - conj(z_j)) / |zeta - z|^(2d) for j = 1..d.
std::vector<Complex> bm_flux_components(const PointCd& zeta, const PointCd& z);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
  explicit GaussLegendre(int order);
};

/// Maps parameters t (length 2d-1) to a point and its real Jacobian, stored
/// row-major as (2d) x (2d-1): jac[k * (2d-1) + m] = d x_k / d t_m.
struct Chart {
  std::function<void(std::span<const double> t, std::span<double> x, std::span<double> jac)> eval;
};

struct SurfacePatch {
  std::vector<double> lo, hi;
  Chart chart;
  std::vector<int> orders;
  int orientation = 1;
  int complex_dim = 1;

  std::size_t param_dim() const { return lo.size(); }
  std::size_t node_count() const;
};

/// Hypersphere |zeta - c| = r in C^d under hyperspherical angles.
std::vector<SurfacePatch> sphere_surface(const PointCd& center, double radius, int order);

/// Boundary of the axis-aligned box [lo, hi] in R^(2d): one patch per face,
/// faces carrying outward orientation relative to each other.
std::vector<SurfacePatch> box_surface(std::span<const double> lo, std::span<const double> hi, int order);

/// Flips every patch so that the kernel integrates to +1 about `inside`.
/// Returns the applied sign.
int calibrate_orientation(std::vector<SurfacePatch>& surface, const PointCd& inside);

struct BmResult {
  Complex value;
  /// Smallest node distance to z.
  double min_distance = 0.0;
  std::size_t nodes = 0;
  std::vector<std::string> warnings;
};

/// Integral of f(zeta) w(zeta, z) over the surface.
BmResult integrate_bm(const TestFunction& f, std::span<const SurfacePatch> surface, const PointCd& z);

/// (1 / 2 pi i) times the contour integral of f(zeta) / (zeta - z) over
/// |zeta - c| = r, by the trapezoidal rule with `nodes` points.
Complex cauchy_integral(const std::function<Complex(Complex)>& f, Complex center, double radius, Complex z,
                        int nodes = 256);

/// |sum_j d/d conj(zeta_j) (conj(zeta_j) / |zeta|^(2d))| by central differences of step h.
double divergence_residual(const PointCd& zeta, double h);

}  // namespace bpe
