#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bpe/geometry.hpp"

namespace bpe {

/// Uniform Cartesian lattice over a box in R^D. Axis 0 varies slowest.
class Grid {
 public:
  Grid(std::vector<double> lo, double h, std::vector<int> counts);

  /// Smallest grid with spacing h whose nodes cover `box`, centred on the box
  /// centre, plus `pad` extra node layers on every side.
  static Grid covering(const Box& box, double h, int pad = 1);

  std::size_t dim() const { return lo_.size(); }
  double spacing() const { return h_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<int>& counts() const { return counts_; }
  const std::vector<std::size_t>& strides() const { return strides_; }
  std::size_t node_count() const { return nodes_; }
  std::size_t cell_count() const;
  /// h^D
  double volume_element() const;

  double coord(std::size_t axis, int i) const { return lo_[axis] + i * h_; }
  void index_to_multi(std::size_t index, std::span<int> multi) const;
  std::size_t multi_to_index(std::span<const int> multi) const;
  void node_coords(std::size_t index, std::span<double> out) const;
  std::vector<double> node_coords(std::size_t index) const;
  bool on_outer_layer(std::size_t index) const;

  Box box() const;
  /// Closed cell of half-width h/2 centred at the node.
  Box node_cell(std::size_t index) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<double> lo_;
  double h_;
  std::vector<int> counts_;
  std::vector<std::size_t> strides_;
  std::size_t nodes_;
};

/// Real node values on a grid.
struct ScalarField {
  Grid grid;
  std::vector<double> values;

  explicit ScalarField(Grid g, double fill = 0.0);
  ScalarField(Grid g, std::vector<double> v);

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }

  /// Multilinear interpolation; zero outside the grid box.
  double sample(std::span<const double> p) const;
  double max_value() const;
  double min_value() const;
};

/// One membership bit per grid node.
struct NodeMask {
  Grid grid;
  std::vector<std::uint8_t> bits;
  std::size_t count = 0;
  /// Set by `rasterize` when no node qualified although the set has point members.
  bool too_coarse = false;

  explicit NodeMask(Grid g);
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  void set(std::size_t i, bool on);
  bool subset_of(const NodeMask& other) const;
};

/// Conservative inner rasterization: a node is marked when its closed cell
/// provably lies in the closure of the set.
NodeMask rasterize(const ImplicitSet& set, const Grid& grid);

/// Nodes whose own coordinates are members of the set.
NodeMask point_mask(const ImplicitSet& set, const Grid& grid);

}  // namespace bpe
