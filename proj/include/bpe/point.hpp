#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace bpe {

/// Thrown when two objects of different ambient dimension meet.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point of C^d stored as 2d reals (x_1, y_1, ..., x_d, y_d), zeta_j = x_j + i y_j.
class PointCd {
 public:
  PointCd() = default;
  explicit PointCd(std::vector<double> coords);

  static PointCd zero(int d);
  static PointCd from_complex(std::span<const std::complex<double>> zeta);

  int complex_dim() const { return static_cast<int>(coords_.size() / 2); }
  std::size_t real_dim() const { return coords_.size(); }

  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }

  std::complex<double> zeta(int j) const { return {coords_[2 * j], coords_[2 * j + 1]}; }
  std::vector<std::complex<double>> to_complex() const;

  double norm() const;
  double distance(const PointCd& other) const;

  friend bool operator==(const PointCd&, const PointCd&) = default;

 private:
  std::vector<double> coords_;
};

}  // namespace bpe
