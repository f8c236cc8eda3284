#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bpe/point.hpp"

namespace bpe {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Whether a primitive includes its boundary.
enum class Boundary { open, closed };

/// Closed axis-aligned box [lo, hi]. Empty when lo > hi on some axis; unbounded
/// axes carry +-infinity.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box everything(std::size_t dim);
  static Box nothing(std::size_t dim);

  std::size_t dim() const { return lo.size(); }
  bool empty() const;
  bool bounded() const;
  bool contains(std::span<const double> p) const;
  bool contains(const Box& other) const;
  bool strictly_contains(const Box& other) const;
  std::vector<double> center() const;
  double half_diagonal() const;
  double max_width() const;

  Box intersect(const Box& other) const;
  Box hull(const Box& other) const;
};

namespace shape {

struct Empty {};

struct Ball {
  std::vector<double> center;
  double radius;
  Boundary boundary;
};

struct Cube {
  std::vector<double> lo;
  std::vector<double> hi;
  Boundary boundary;
};

/// { z : normal . z < offset } (open) or <= (closed).
struct Halfspace {
  std::vector<double> normal;
  double offset;
  Boundary boundary;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Union {
  NodePtr left, right;
};
struct Intersection {
  NodePtr left, right;
};
struct Difference {
  NodePtr left, right;
};
/// within \ operand, where `within` is a box primitive.
struct Complement {
  Cube within;
  NodePtr operand;
};
struct Translate {
  std::vector<double> offset;
  NodePtr operand;
};
/// { factor * z : z in operand }, factor > 0.
struct Scale {
  double factor;
  NodePtr operand;
};

using Variant = std::variant<Empty, Ball, Cube, Halfspace, Union, Intersection, Difference,
                             Complement, Translate, Scale>;

struct Node {
  Variant v;
  std::size_t dim;
  Box bbox;
};

}  // namespace shape

/// Immutable constructive-solid-geometry description of a subset of R^{2d}.
///
/// Membership is exact under the expression semantics. The two cell predicates
/// are conservative: `cell_inside` may answer false for a cell that is covered,
/// `cell_outside` may answer false for a cell that misses the set, but neither
/// ever answers true wrongly.
class ImplicitSet {
 public:
  static ImplicitSet empty(std::size_t dim);
  static ImplicitSet ball(std::vector<double> center, double radius,
                          Boundary boundary = Boundary::open);
  static ImplicitSet ball(const PointCd& center, double radius,
                          Boundary boundary = Boundary::open);
  static ImplicitSet box(std::vector<double> lo, std::vector<double> hi,
                         Boundary boundary = Boundary::closed);
  static ImplicitSet halfspace(std::vector<double> normal, double offset,
                               Boundary boundary = Boundary::open);

  friend ImplicitSet unite(const ImplicitSet& a, const ImplicitSet& b);
  friend ImplicitSet intersect(const ImplicitSet& a, const ImplicitSet& b);
  friend ImplicitSet subtract(const ImplicitSet& a, const ImplicitSet& b);

  ImplicitSet complement_within(const Box& within, Boundary boundary = Boundary::closed) const;
  ImplicitSet translated(std::vector<double> offset) const;
  ImplicitSet scaled(double factor) const;

  /// Same set in the coordinates z' = (z - shift) / factor, with the map pushed
  /// into the primitive parameters so no Translate/Scale nodes remain.
  ImplicitSet normalized(std::span<const double> shift, double factor) const;

  std::size_t real_dim() const { return node_->dim; }
  const Box& bbox() const { return node_->bbox; }
  bool is_empty_expression() const;

  bool contains(const PointCd& p) const;
  bool contains(std::span<const double> p) const;

  /// True only if the closed box lies in the closure of the set.
  bool cell_inside(const Box& cell) const;
  /// True only if the closed box misses the interior of the set.
  bool cell_outside(const Box& cell) const;

  nlohmann::json to_json() const;
  static ImplicitSet from_json(const nlohmann::json& j);
  /// Compact JSON with sorted keys and reals as shortest round-trip decimal strings.
  std::string canonical_json() const;
  /// Hex SHA-256 of canonical_json().
  std::string hash() const;

  const shape::Node& node() const { return *node_; }
  const shape::NodePtr& node_ptr() const { return node_; }
  explicit ImplicitSet(shape::NodePtr node) : node_(std::move(node)) {}

 private:
  shape::NodePtr node_;
};

ImplicitSet unite(const ImplicitSet& a, const ImplicitSet& b);
ImplicitSet intersect(const ImplicitSet& a, const ImplicitSet& b);
ImplicitSet subtract(const ImplicitSet& a, const ImplicitSet& b);

/// Conservative set relations; false means "not proven".
bool provably_subset(const ImplicitSet& a, const ImplicitSet& b);
bool provably_disjoint(const ImplicitSet& a, const ImplicitSet& b);

/// Splits a set into pieces whose union is the set, discarding pieces that are
/// provably empty. Each piece carries a tight bounding box.
std::vector<ImplicitSet> decompose(const ImplicitSet& set);

/// Membership with a dimension check.
bool contains(const ImplicitSet& set, const PointCd& point);

/// Dyadic annular shell { 2^-(n+1) < |z - x| < 2^-n } with its radii.
struct AnnulusShell {
  PointCd center;
  int index;
  double inner_radius;
  double outer_radius;
};

AnnulusShell shell_radii(const PointCd& x, int n);
/// Open shell A_n(x). For d = 1 this is the planar annulus.
ImplicitSet annulus_shell(const PointCd& x, int n);
/// A_{n-1}(x) u A_n(x) u A_{n+1}(x) together with the two separating spheres:
/// the open shell 2^-(n+2) < |z - x| < 2^-(n-1).
ImplicitSet triple_shell(const PointCd& x, int n);
/// A_n(x) \ U, bounded by the shell's box.
ImplicitSet shell_minus_domain(const PointCd& x, int n, const ImplicitSet& domain);

/// Thrown when a Swiss cheese hole does not fit strictly inside its shell.
class HoleTooLarge : public std::invalid_argument {
 public:
  HoleTooLarge(int n, double radius);
  int shell() const { return shell_; }

 private:
  int shell_;
};

/// Centre of the hole placed in shell n: x + 1.5 * 2^-(n+1) e_1.
PointCd swiss_cheese_hole_center(const PointCd& x, int n);

/// Open unit ball about x minus closed balls of radius radius(n) placed in the
/// shells n_min..n_max. Zero radii are skipped.
ImplicitSet make_swiss_cheese(const PointCd& x, const std::function<double(int)>& radius,
                              int n_min, int n_max);

}  // namespace bpe
