#include "bpe/point.hpp"

#include <cmath>
#include <string>

namespace bpe {

PointCd::PointCd(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.empty() || coords_.size() % 2 != 0)
    throw DimensionMismatch("PointCd needs 2d real coordinates, got " +
                            std::to_string(coords_.size()));
  for (double c : coords_)
    if (!std::isfinite(c)) throw std::invalid_argument("PointCd coordinate is not finite");
}

PointCd PointCd::zero(int d) {
  if (d < 1) throw DimensionMismatch("complex dimension must be positive");
  return PointCd(std::vector<double>(2 * static_cast<std::size_t>(d), 0.0));
}

PointCd PointCd::from_complex(std::span<const std::complex<double>> zeta) {
  std::vector<double> c;
  c.reserve(2 * zeta.size());
  for (auto z : zeta) {
    c.push_back(z.real());
    c.push_back(z.imag());
  }
  return PointCd(std::move(c));
}

std::vector<std::complex<double>> PointCd::to_complex() const {
  std::vector<std::complex<double>> z(coords_.size() / 2);
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = {coords_[2 * j], coords_[2 * j + 1]};
  return z;
}

double PointCd::norm() const {
  double s = 0.0;
  for (double c : coords_) s += c * c;
  return std::sqrt(s);
}

double PointCd::distance(const PointCd& other) const {
  if (other.real_dim() != real_dim()) throw DimensionMismatch("distance between points of different dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const double t = coords_[i] - other.coords_[i];
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace bpe
