#include "bpe/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bpe {

Grid::Grid(std::vector<double> lo, double h, std::vector<int> counts)
    : lo_(std::move(lo)), h_(h), counts_(std::move(counts)) {
  if (lo_.empty() || lo_.size() != counts_.size())
    throw DimensionMismatch("grid origin and counts disagree in dimension");
  if (!(h_ > 0.0) || !std::isfinite(h_)) throw std::invalid_argument("grid spacing must be positive");
  for (int c : counts_)
    if (c < 3) throw std::invalid_argument("grid needs at least 3 nodes per axis");
  strides_.assign(counts_.size(), 1);
  for (std::size_t k = counts_.size() - 1; k > 0; --k)
    strides_[k - 1] = strides_[k] * static_cast<std::size_t>(counts_[k]);
  nodes_ = strides_[0] * static_cast<std::size_t>(counts_[0]);
}

Grid Grid::covering(const Box& box, double h, int pad) {
  if (!box.bounded() || box.empty()) throw std::invalid_argument("grid box must be bounded and nonempty");
  std::vector<double> lo(box.dim());
  std::vector<int> counts(box.dim());
  for (std::size_t k = 0; k < box.dim(); ++k) {
    const double c = 0.5 * (box.lo[k] + box.hi[k]);
    const double half = 0.5 * (box.hi[k] - box.lo[k]);
    const int m = static_cast<int>(std::ceil(half / h - 1e-9)) + pad;
    counts[k] = 2 * m + 1;
    lo[k] = c - m * h;
  }
  return Grid(std::move(lo), h, std::move(counts));
}

std::size_t Grid::cell_count() const {
  std::size_t n = 1;
  for (int c : counts_) n *= static_cast<std::size_t>(c - 1);
  return n;
}

double Grid::volume_element() const { return std::pow(h_, static_cast<double>(dim())); }

void Grid::index_to_multi(std::size_t index, std::span<int> multi) const {
  for (std::size_t k = 0; k < dim(); ++k) {
    multi[k] = static_cast<int>(index / strides_[k]);
    index %= strides_[k];
  }
}

std::size_t Grid::multi_to_index(std::span<const int> multi) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < dim(); ++k) idx += static_cast<std::size_t>(multi[k]) * strides_[k];
  return idx;
}

void Grid::node_coords(std::size_t index, std::span<double> out) const {
  for (std::size_t k = 0; k < dim(); ++k) {
    const auto i = index / strides_[k];
    index %= strides_[k];
    out[k] = lo_[k] + static_cast<double>(i) * h_;
  }
}

std::vector<double> Grid::node_coords(std::size_t index) const {
  std::vector<double> p(dim());
  node_coords(index, p);
  return p;
}

bool Grid::on_outer_layer(std::size_t index) const {
  for (std::size_t k = 0; k < dim(); ++k) {
    const auto i = index / strides_[k];
    index %= strides_[k];
    if (i == 0 || i + 1 == static_cast<std::size_t>(counts_[k])) return true;
  }
  return false;
}

Box Grid::box() const {
  Box b{lo_, lo_};
  for (std::size_t k = 0; k < dim(); ++k) b.hi[k] = coord(k, counts_[k] - 1);
  return b;
}

Box Grid::node_cell(std::size_t index) const {
  Box b{node_coords(index), {}};
  b.hi = b.lo;
  for (std::size_t k = 0; k < dim(); ++k) {
    b.lo[k] -= 0.5 * h_;
    b.hi[k] += 0.5 * h_;
  }
  return b;
}

// ---------------------------------------------------------------------------

ScalarField::ScalarField(Grid g, double fill) : grid(std::move(g)), values(grid.node_count(), fill) {}

ScalarField::ScalarField(Grid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid.node_count()) throw DimensionMismatch("field size does not match grid");
  for (double x : values)
    if (!std::isfinite(x)) throw std::invalid_argument("field values must be finite");
}

double ScalarField::sample(std::span<const double> p) const {
  const std::size_t D = grid.dim();
  if (p.size() != D) throw DimensionMismatch("sample point dimension");
  std::vector<int> base(D);
  std::vector<double> frac(D);
  for (std::size_t k = 0; k < D; ++k) {
    const double t = (p[k] - grid.lo()[k]) / grid.spacing();
    if (t < 0.0 || t > grid.counts()[k] - 1) return 0.0;
    int i = static_cast<int>(std::floor(t));
    i = std::min(i, grid.counts()[k] - 2);
    base[k] = i;
    frac[k] = t - i;
  }
  double acc = 0.0;
  const std::size_t corners = std::size_t{1} << D;
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t idx = 0;
    for (std::size_t k = 0; k < D; ++k) {
      const bool up = (c >> k) & 1u;
      w *= up ? frac[k] : 1.0 - frac[k];
      idx += static_cast<std::size_t>(base[k] + (up ? 1 : 0)) * grid.strides()[k];
    }
    if (w != 0.0) acc += w * values[idx];
  }
  return acc;
}

double ScalarField::max_value() const { return *std::max_element(values.begin(), values.end()); }
double ScalarField::min_value() const { return *std::min_element(values.begin(), values.end()); }

// ---------------------------------------------------------------------------

NodeMask::NodeMask(Grid g) : grid(std::move(g)), bits(grid.node_count(), 0) {}

void NodeMask::set(std::size_t i, bool on) {
  if ((bits[i] != 0) == on) return;
  bits[i] = on ? 1 : 0;
  if (on) ++count;
  else --count;
}

bool NodeMask::subset_of(const NodeMask& other) const {
  if (!(grid == other.grid)) throw DimensionMismatch("masks live on different grids");
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i] && !other.bits[i]) return false;
  return true;
}

namespace {

// Visits the nodes whose index range can touch `box`, widened by `margin`.
template <class F>
void for_nodes_near(const Grid& grid, const Box& box, double margin, F&& f) {
  const std::size_t D = grid.dim();
  std::vector<int> first(D), last(D);
  for (std::size_t k = 0; k < D; ++k) {
    const double a = (box.lo[k] - margin - grid.lo()[k]) / grid.spacing();
    const double b = (box.hi[k] + margin - grid.lo()[k]) / grid.spacing();
    first[k] = static_cast<int>(std::max(0.0, std::ceil(a)));
    last[k] = static_cast<int>(std::min<double>(grid.counts()[k] - 1, std::floor(b)));
    if (first[k] > last[k]) return;
  }
  std::vector<int> idx = first;
  std::vector<double> p(D);
  while (true) {
    for (std::size_t k = 0; k < D; ++k) p[k] = grid.coord(k, idx[k]);
    f(grid.multi_to_index(idx), std::span<const double>(p));
    std::size_t k = D;
    while (k > 0) {
      --k;
      if (idx[k] < last[k]) {
        ++idx[k];
        break;
      }
      idx[k] = first[k];
      if (k == 0) return;
    }
  }
}

}  // namespace

NodeMask rasterize(const ImplicitSet& set, const Grid& grid) {
  if (set.real_dim() != grid.dim()) throw DimensionMismatch("rasterize: set and grid dimension differ");
  NodeMask mask(grid);
  if (set.is_empty_expression()) return mask;
  const std::vector<double> zero(grid.dim(), 0.0);
  const ImplicitSet flat = set.normalized(zero, 1.0);
  const Box& bb = flat.bbox();
  if (!bb.bounded()) throw std::invalid_argument("rasterize: set must be bounded");
  if (!grid.box().contains(bb)) throw std::invalid_argument("rasterize: grid does not cover the set");

  const double half = 0.5 * grid.spacing();
  Box cell{std::vector<double>(grid.dim()), std::vector<double>(grid.dim())};
  for_nodes_near(grid, bb, 0.0, [&](std::size_t i, std::span<const double> p) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      cell.lo[k] = p[k] - half;
      cell.hi[k] = p[k] + half;
    }
    if (flat.cell_inside(cell)) mask.set(i, true);
  });

  if (mask.count == 0) {
    bool seen = flat.contains(bb.center());
    if (!seen)
      for_nodes_near(grid, bb, 0.0, [&](std::size_t, std::span<const double> p) {
        if (!seen && flat.contains(p)) seen = true;
      });
    mask.too_coarse = seen;
  }
  return mask;
}

NodeMask point_mask(const ImplicitSet& set, const Grid& grid) {
  if (set.real_dim() != grid.dim()) throw DimensionMismatch("point_mask: set and grid dimension differ");
  NodeMask mask(grid);
  if (set.is_empty_expression()) return mask;
  const std::vector<double> zero(grid.dim(), 0.0);
  const ImplicitSet flat = set.normalized(zero, 1.0);
  Box bb = flat.bbox().intersect(grid.box());
  if (bb.empty()) return mask;
  for_nodes_near(grid, bb, 0.0, [&](std::size_t i, std::span<const double> p) {
    if (flat.contains(p)) mask.set(i, true);
  });
  return mask;
}

}  // namespace bpe
