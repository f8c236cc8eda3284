#include "bpe/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <openssl/evp.h>

namespace bpe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using shape::Node;
using shape::NodePtr;

double sq(double x) { return x * x; }

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += sq(a[i] - b[i]);
  return s;
}

void require_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) + " vs " +
                            std::to_string(b));
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be finite");
}

NodePtr make(shape::Variant v, std::size_t dim, Box bbox) {
  return std::make_shared<const Node>(Node{std::move(v), dim, std::move(bbox)});
}

Box ball_box(const shape::Ball& b) {
  Box box{b.center, b.center};
  for (std::size_t i = 0; i < b.center.size(); ++i) {
    box.lo[i] -= b.radius;
    box.hi[i] += b.radius;
  }
  return box;
}

// ---------------------------------------------------------------------------
// Membership

bool member(const Node& n, std::span<const double> p);

struct MemberVisitor {
  std::span<const double> p;
  std::size_t dim;

  bool operator()(const shape::Empty&) const { return false; }
  bool operator()(const shape::Ball& b) const {
    const double d2 = dist2(p, b.center);
    const double r2 = b.radius * b.radius;
    return b.boundary == Boundary::open ? d2 < r2 : d2 <= r2;
  }
  bool operator()(const shape::Cube& c) const {
    for (std::size_t i = 0; i < dim; ++i) {
      if (c.boundary == Boundary::open) {
        if (!(p[i] > c.lo[i] && p[i] < c.hi[i])) return false;
      } else if (!(p[i] >= c.lo[i] && p[i] <= c.hi[i])) {
        return false;
      }
    }
    return true;
  }
  bool operator()(const shape::Halfspace& h) const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += h.normal[i] * p[i];
    return h.boundary == Boundary::open ? s < h.offset : s <= h.offset;
  }
  bool operator()(const shape::Union& u) const { return member(*u.left, p) || member(*u.right, p); }
  bool operator()(const shape::Intersection& u) const {
    return member(*u.left, p) && member(*u.right, p);
  }
  bool operator()(const shape::Difference& u) const {
    return member(*u.left, p) && !member(*u.right, p);
  }
  bool operator()(const shape::Complement& c) const {
    return (*this)(c.within) && !member(*c.operand, p);
  }
  bool operator()(const shape::Translate& t) const {
    std::vector<double> q(p.begin(), p.end());
    for (std::size_t i = 0; i < dim; ++i) q[i] -= t.offset[i];
    return member(*t.operand, q);
  }
  bool operator()(const shape::Scale& s) const {
    std::vector<double> q(p.begin(), p.end());
    for (double& x : q) x /= s.factor;
    return member(*s.operand, q);
  }
};

bool member(const Node& n, std::span<const double> p) {
  return std::visit(MemberVisitor{p, n.dim}, n.v);
}

// ---------------------------------------------------------------------------
// Conservative cell predicates

bool inside(const Node& n, const Box& cell);
bool outside(const Node& n, const Box& cell);

Box map_box(const Box& b, double shift_sign, std::span<const double> shift, double divide) {
  Box r = b;
  for (std::size_t i = 0; i < b.dim(); ++i) {
    double lo = b.lo[i], hi = b.hi[i];
    if (!shift.empty()) {
      lo += shift_sign * shift[i];
      hi += shift_sign * shift[i];
    }
    r.lo[i] = lo / divide;
    r.hi[i] = hi / divide;
  }
  return r;
}

struct InsideVisitor {
  const Box& cell;

  bool operator()(const shape::Empty&) const { return false; }
  bool operator()(const shape::Ball& b) const {
    double far = 0.0;
    for (std::size_t i = 0; i < cell.dim(); ++i)
      far += sq(std::max(std::abs(cell.lo[i] - b.center[i]), std::abs(cell.hi[i] - b.center[i])));
    return far <= b.radius * b.radius;
  }
  bool operator()(const shape::Cube& c) const {
    for (std::size_t i = 0; i < cell.dim(); ++i)
      if (cell.lo[i] < c.lo[i] || cell.hi[i] > c.hi[i]) return false;
    return true;
  }
  bool operator()(const shape::Halfspace& h) const {
    double s = 0.0;
    for (std::size_t i = 0; i < cell.dim(); ++i)
      s += std::max(h.normal[i] * cell.lo[i], h.normal[i] * cell.hi[i]);
    return s <= h.offset;
  }
  bool operator()(const shape::Union& u) const {
    return inside(*u.left, cell) || inside(*u.right, cell);
  }
  bool operator()(const shape::Intersection& u) const {
    return inside(*u.left, cell) && inside(*u.right, cell);
  }
  bool operator()(const shape::Difference& u) const {
    return inside(*u.left, cell) && outside(*u.right, cell);
  }
  bool operator()(const shape::Complement& c) const {
    return (*this)(c.within) && outside(*c.operand, cell);
  }
  bool operator()(const shape::Translate& t) const {
    return inside(*t.operand, map_box(cell, -1.0, t.offset, 1.0));
  }
  bool operator()(const shape::Scale& s) const {
    return inside(*s.operand, map_box(cell, 0.0, {}, s.factor));
  }
};

struct OutsideVisitor {
  const Box& cell;

  bool operator()(const shape::Empty&) const { return true; }
  bool operator()(const shape::Ball& b) const {
    double near = 0.0;
    for (std::size_t i = 0; i < cell.dim(); ++i) {
      const double c = std::clamp(b.center[i], cell.lo[i], cell.hi[i]);
      near += sq(c - b.center[i]);
    }
    return near >= b.radius * b.radius;
  }
  bool operator()(const shape::Cube& c) const {
    for (std::size_t i = 0; i < cell.dim(); ++i)
      if (cell.hi[i] <= c.lo[i] || cell.lo[i] >= c.hi[i]) return true;
    return false;
  }
  bool operator()(const shape::Halfspace& h) const {
    double s = 0.0;
    for (std::size_t i = 0; i < cell.dim(); ++i)
      s += std::min(h.normal[i] * cell.lo[i], h.normal[i] * cell.hi[i]);
    return s >= h.offset;
  }
  bool operator()(const shape::Union& u) const {
    return outside(*u.left, cell) && outside(*u.right, cell);
  }
  bool operator()(const shape::Intersection& u) const {
    return outside(*u.left, cell) || outside(*u.right, cell);
  }
  bool operator()(const shape::Difference& u) const {
    return outside(*u.left, cell) || inside(*u.right, cell);
  }
  bool operator()(const shape::Complement& c) const {
    return (*this)(c.within) || inside(*c.operand, cell);
  }
  bool operator()(const shape::Translate& t) const {
    return outside(*t.operand, map_box(cell, -1.0, t.offset, 1.0));
  }
  bool operator()(const shape::Scale& s) const {
    return outside(*s.operand, map_box(cell, 0.0, {}, s.factor));
  }
};

bool inside(const Node& n, const Box& cell) {
  if (!n.bbox.contains(cell)) return false;
  return std::visit(InsideVisitor{cell}, n.v);
}

bool boxes_overlap(const Box& a, const Box& b) {
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (std::max(a.lo[i], b.lo[i]) > std::min(a.hi[i], b.hi[i])) return false;
  return true;
}

bool outside(const Node& n, const Box& cell) {
  if (!boxes_overlap(n.bbox, cell)) return true;
  return std::visit(OutsideVisitor{cell}, n.v);
}

// ---------------------------------------------------------------------------
// Normalization: z' = (z - shift) / factor pushed into primitives.

NodePtr normalize(const NodePtr& n, const std::vector<double>& shift, double factor);

shape::Cube normalize_cube(const shape::Cube& c, const std::vector<double>& shift, double factor) {
  shape::Cube r = c;
  for (std::size_t i = 0; i < c.lo.size(); ++i) {
    r.lo[i] = (c.lo[i] - shift[i]) / factor;
    r.hi[i] = (c.hi[i] - shift[i]) / factor;
  }
  return r;
}

NodePtr normalize(const NodePtr& n, const std::vector<double>& shift, double factor) {
  const std::size_t dim = n->dim;
  return std::visit(
      [&](const auto& s) -> NodePtr {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, shape::Empty>) {
          return n;
        } else if constexpr (std::is_same_v<T, shape::Ball>) {
          shape::Ball b = s;
          for (std::size_t i = 0; i < dim; ++i) b.center[i] = (s.center[i] - shift[i]) / factor;
          b.radius = s.radius / factor;
          auto box = ball_box(b);
          return make(std::move(b), dim, std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Cube>) {
          auto c = normalize_cube(s, shift, factor);
          Box box{c.lo, c.hi};
          return make(std::move(c), dim, std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Halfspace>) {
          shape::Halfspace h = s;
          double ns = 0.0;
          for (std::size_t i = 0; i < dim; ++i) ns += s.normal[i] * shift[i];
          h.offset = (s.offset - ns) / factor;
          return make(std::move(h), dim, Box::everything(dim));
        } else if constexpr (std::is_same_v<T, shape::Union>) {
          auto l = normalize(s.left, shift, factor), r = normalize(s.right, shift, factor);
          auto box = l->bbox.hull(r->bbox);
          return make(shape::Union{l, r}, dim, std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Intersection>) {
          auto l = normalize(s.left, shift, factor), r = normalize(s.right, shift, factor);
          auto box = l->bbox.intersect(r->bbox);
          return make(shape::Intersection{l, r}, dim, std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Difference>) {
          auto l = normalize(s.left, shift, factor), r = normalize(s.right, shift, factor);
          auto box = l->bbox;
          return make(shape::Difference{l, r}, dim, std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Complement>) {
          auto w = normalize_cube(s.within, shift, factor);
          Box box{w.lo, w.hi};
          return make(shape::Complement{std::move(w), normalize(s.operand, shift, factor)}, dim,
                      std::move(box));
        } else if constexpr (std::is_same_v<T, shape::Translate>) {
          std::vector<double> sh = shift;
          for (std::size_t i = 0; i < dim; ++i) sh[i] -= s.offset[i];
          return normalize(s.operand, sh, factor);
        } else {
          std::vector<double> sh = shift;
          for (double& x : sh) x /= s.factor;
          return normalize(s.operand, sh, factor / s.factor);
        }
      },
      n->v);
}

// ---------------------------------------------------------------------------
// Provable relations on normalized trees.

bool subset(const NodePtr& a, const NodePtr& b);
bool disjoint(const NodePtr& a, const NodePtr& b);

bool is_open(Boundary b) { return b == Boundary::open; }

// Closed relation r <= bound when either side is open, strict otherwise.
bool fits(double lhs, double bound, bool slack_allowed) {
  return slack_allowed ? lhs <= bound : lhs < bound;
}

bool primitive_subset(const Node& a, const Node& b) {
  if (const auto* bb = std::get_if<shape::Ball>(&b.v)) {
    if (const auto* ab = std::get_if<shape::Ball>(&a.v)) {
      const double d = std::sqrt(dist2(ab->center, bb->center));
      return fits(d + ab->radius, bb->radius, is_open(ab->boundary) || !is_open(bb->boundary));
    }
    if (const auto* ac = std::get_if<shape::Cube>(&a.v)) {
      double far = 0.0;
      for (std::size_t i = 0; i < a.dim; ++i)
        far += sq(std::max(std::abs(ac->lo[i] - bb->center[i]), std::abs(ac->hi[i] - bb->center[i])));
      return fits(std::sqrt(far), bb->radius, is_open(ac->boundary) || !is_open(bb->boundary));
    }
    return false;
  }
  if (const auto* bc = std::get_if<shape::Cube>(&b.v)) {
    // a lies in its closed bbox; an open primitive a lies in the open bbox.
    bool slack = !is_open(bc->boundary);
    if (const auto* ab = std::get_if<shape::Ball>(&a.v)) slack = slack || is_open(ab->boundary);
    if (const auto* ac = std::get_if<shape::Cube>(&a.v)) slack = slack || is_open(ac->boundary);
    if (!a.bbox.bounded()) return false;
    for (std::size_t i = 0; i < a.dim; ++i)
      if (!fits(bc->lo[i], a.bbox.lo[i], slack) || !fits(a.bbox.hi[i], bc->hi[i], slack)) return false;
    return true;
  }
  if (const auto* bh = std::get_if<shape::Halfspace>(&b.v)) {
    if (!a.bbox.bounded()) return false;
    bool slack = !is_open(bh->boundary);
    if (const auto* ab = std::get_if<shape::Ball>(&a.v)) {
      slack = slack || is_open(ab->boundary);
      double nc = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < a.dim; ++i) {
        nc += bh->normal[i] * ab->center[i];
        nn += sq(bh->normal[i]);
      }
      return fits(nc + ab->radius * std::sqrt(nn), bh->offset, slack);
    }
    if (const auto* ac = std::get_if<shape::Cube>(&a.v)) slack = slack || is_open(ac->boundary);
    else return false;
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim; ++i)
      s += std::max(bh->normal[i] * a.bbox.lo[i], bh->normal[i] * a.bbox.hi[i]);
    return fits(s, bh->offset, slack);
  }
  return false;
}

bool primitive_disjoint(const Node& a, const Node& b) {
  const auto* ab = std::get_if<shape::Ball>(&a.v);
  const auto* bb = std::get_if<shape::Ball>(&b.v);
  if (ab && bb) {
    const double d = std::sqrt(dist2(ab->center, bb->center));
    return fits(ab->radius + bb->radius, d, is_open(ab->boundary) || is_open(bb->boundary));
  }
  const shape::Ball* ball = ab ? ab : bb;
  const Node& other = ab ? b : a;
  if (ball) {
    if (const auto* c = std::get_if<shape::Cube>(&other.v)) {
      double near = 0.0;
      for (std::size_t i = 0; i < other.dim; ++i)
        near += sq(std::clamp(ball->center[i], c->lo[i], c->hi[i]) - ball->center[i]);
      return fits(ball->radius, std::sqrt(near),
                  is_open(ball->boundary) || is_open(c->boundary));
    }
    if (const auto* h = std::get_if<shape::Halfspace>(&other.v)) {
      double nc = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < other.dim; ++i) {
        nc += h->normal[i] * ball->center[i];
        nn += sq(h->normal[i]);
      }
      return fits(h->offset, nc - ball->radius * std::sqrt(nn),
                  is_open(ball->boundary) || is_open(h->boundary));
    }
  }
  return false;
}

bool boxes_apart(const Box& a, const Box& b) {
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (a.hi[i] < b.lo[i] || b.hi[i] < a.lo[i]) return true;
  return false;
}

bool subset(const NodePtr& a, const NodePtr& b) {
  if (a.get() == b.get()) return true;
  const Node& an = *a;
  if (std::holds_alternative<shape::Empty>(an.v)) return true;
  if (const auto* u = std::get_if<shape::Union>(&an.v)) return subset(u->left, b) && subset(u->right, b);
  if (const auto* u = std::get_if<shape::Intersection>(&an.v))
    if (subset(u->left, b) || subset(u->right, b)) return true;
  if (const auto* u = std::get_if<shape::Difference>(&an.v)) {
    if (subset(u->left, b)) return true;
  }
  if (const auto* c = std::get_if<shape::Complement>(&an.v)) {
    auto w = make(c->within, an.dim, Box{c->within.lo, c->within.hi});
    if (subset(w, b)) return true;
  }

  const Node& bn = *b;
  if (std::holds_alternative<shape::Empty>(bn.v)) return false;
  if (const auto* u = std::get_if<shape::Union>(&bn.v)) return subset(a, u->left) || subset(a, u->right);
  if (const auto* u = std::get_if<shape::Intersection>(&bn.v))
    return subset(a, u->left) && subset(a, u->right);
  if (const auto* u = std::get_if<shape::Difference>(&bn.v))
    return subset(a, u->left) && disjoint(a, u->right);
  if (const auto* c = std::get_if<shape::Complement>(&bn.v)) {
    auto w = make(c->within, bn.dim, Box{c->within.lo, c->within.hi});
    return subset(a, w) && disjoint(a, c->operand);
  }
  return primitive_subset(an, bn);
}

bool disjoint(const NodePtr& a, const NodePtr& b) {
  const Node& an = *a;
  const Node& bn = *b;
  if (boxes_apart(an.bbox, bn.bbox) || an.bbox.empty() || bn.bbox.empty()) return true;
  if (std::holds_alternative<shape::Empty>(an.v) || std::holds_alternative<shape::Empty>(bn.v))
    return true;

  for (int pass = 0; pass < 2; ++pass) {
    const NodePtr& x = pass == 0 ? a : b;
    const NodePtr& y = pass == 0 ? b : a;
    const Node& xn = *x;
    if (const auto* u = std::get_if<shape::Union>(&xn.v))
      return disjoint(u->left, y) && disjoint(u->right, y);
    if (const auto* u = std::get_if<shape::Intersection>(&xn.v))
      if (disjoint(u->left, y) || disjoint(u->right, y)) return true;
    if (const auto* u = std::get_if<shape::Difference>(&xn.v))
      if (disjoint(u->left, y) || subset(y, u->right)) return true;
    if (const auto* c = std::get_if<shape::Complement>(&xn.v)) {
      auto w = make(c->within, xn.dim, Box{c->within.lo, c->within.hi});
      if (disjoint(w, y) || subset(y, c->operand)) return true;
    }
  }
  return primitive_disjoint(an, bn);
}

// ---------------------------------------------------------------------------
// Decomposition

std::vector<NodePtr> pieces(const NodePtr& s);
std::vector<NodePtr> subtract_piece(const NodePtr& l, const NodePtr& r);

NodePtr node_intersection(const NodePtr& l, const NodePtr& r) {
  return make(shape::Intersection{l, r}, l->dim, l->bbox.intersect(r->bbox));
}

std::vector<NodePtr> intersect_piece(const NodePtr& l, const NodePtr& r) {
  if (disjoint(l, r)) return {};
  if (const auto* u = std::get_if<shape::Union>(&r->v)) {
    auto a = intersect_piece(l, u->left);
    auto b = intersect_piece(l, u->right);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  if (subset(l, r)) return {l};
  if (subset(r, l)) return pieces(r);
  return {node_intersection(l, r)};
}

std::vector<NodePtr> subtract_piece(const NodePtr& l, const NodePtr& r) {
  if (subset(l, r)) return {};
  if (disjoint(l, r)) return {l};
  const std::size_t dim = l->dim;
  if (const auto* u = std::get_if<shape::Union>(&r->v)) {
    std::vector<NodePtr> out;
    for (const auto& p : subtract_piece(l, u->left)) {
      auto q = subtract_piece(p, u->right);
      out.insert(out.end(), q.begin(), q.end());
    }
    return out;
  }
  if (const auto* u = std::get_if<shape::Difference>(&r->v)) {
    auto a = subtract_piece(l, u->left);
    auto b = intersect_piece(l, u->right);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  if (const auto* u = std::get_if<shape::Intersection>(&r->v)) {
    auto a = subtract_piece(l, u->left);
    auto b = subtract_piece(l, u->right);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  if (const auto* c = std::get_if<shape::Complement>(&r->v)) {
    auto w = make(c->within, dim, Box{c->within.lo, c->within.hi});
    auto a = subtract_piece(l, w);
    auto b = intersect_piece(l, c->operand);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  return {make(shape::Difference{l, r}, dim, l->bbox)};
}

std::vector<NodePtr> pieces(const NodePtr& s) {
  return std::visit(
      [&](const auto& v) -> std::vector<NodePtr> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, shape::Empty>) {
          return {};
        } else if constexpr (std::is_same_v<T, shape::Union>) {
          auto a = pieces(v.left);
          auto b = pieces(v.right);
          a.insert(a.end(), b.begin(), b.end());
          return a;
        } else if constexpr (std::is_same_v<T, shape::Intersection>) {
          std::vector<NodePtr> out;
          for (const auto& l : pieces(v.left)) {
            auto q = intersect_piece(l, v.right);
            out.insert(out.end(), q.begin(), q.end());
          }
          return out;
        } else if constexpr (std::is_same_v<T, shape::Difference>) {
          std::vector<NodePtr> out;
          for (const auto& l : pieces(v.left)) {
            auto q = subtract_piece(l, v.right);
            out.insert(out.end(), q.begin(), q.end());
          }
          return out;
        } else if constexpr (std::is_same_v<T, shape::Complement>) {
          auto w = make(v.within, s->dim, Box{v.within.lo, v.within.hi});
          return subtract_piece(w, v.operand);
        } else {
          return {s};
        }
      },
      s->v);
}

// ---------------------------------------------------------------------------
// JSON

std::string real_string(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double read_real(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw std::invalid_argument("not a decimal real: '" + s + "'");
    return x;
  }
  throw std::invalid_argument("expected a real (number or decimal string)");
}

std::vector<double> read_reals(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of reals");
  std::vector<double> v;
  for (const auto& e : j) v.push_back(read_real(e));
  return v;
}

nlohmann::json reals_json(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(real_string(x));
  return a;
}

std::string boundary_name(Boundary b) { return b == Boundary::open ? "open" : "closed"; }

Boundary read_boundary(const nlohmann::json& j, const char* key, Boundary fallback) {
  if (!j.contains(key)) return fallback;
  const auto s = j.at(key).get<std::string>();
  if (s == "open") return Boundary::open;
  if (s == "closed") return Boundary::closed;
  throw std::invalid_argument("boundary must be 'open' or 'closed', got '" + s + "'");
}

nlohmann::json node_json(const Node& n) {
  using nlohmann::json;
  return std::visit(
      [&](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, shape::Empty>) {
          return {{"type", "empty"}, {"dim", n.dim}};
        } else if constexpr (std::is_same_v<T, shape::Ball>) {
          return {{"type", "ball"},
                  {"center", reals_json(s.center)},
                  {"radius", real_string(s.radius)},
                  {"boundary", boundary_name(s.boundary)}};
        } else if constexpr (std::is_same_v<T, shape::Cube>) {
          return {{"type", "box"},
                  {"lo", reals_json(s.lo)},
                  {"hi", reals_json(s.hi)},
                  {"boundary", boundary_name(s.boundary)}};
        } else if constexpr (std::is_same_v<T, shape::Halfspace>) {
          return {{"type", "halfspace"},
                  {"normal", reals_json(s.normal)},
                  {"offset", real_string(s.offset)},
                  {"boundary", boundary_name(s.boundary)}};
        } else if constexpr (std::is_same_v<T, shape::Union>) {
          return {{"type", "union"}, {"left", node_json(*s.left)}, {"right", node_json(*s.right)}};
        } else if constexpr (std::is_same_v<T, shape::Intersection>) {
          return {{"type", "intersection"},
                  {"left", node_json(*s.left)},
                  {"right", node_json(*s.right)}};
        } else if constexpr (std::is_same_v<T, shape::Difference>) {
          return {{"type", "difference"},
                  {"left", node_json(*s.left)},
                  {"right", node_json(*s.right)}};
        } else if constexpr (std::is_same_v<T, shape::Complement>) {
          return {{"type", "complement"},
                  {"lo", reals_json(s.within.lo)},
                  {"hi", reals_json(s.within.hi)},
                  {"boundary", boundary_name(s.within.boundary)},
                  {"operand", node_json(*s.operand)}};
        } else if constexpr (std::is_same_v<T, shape::Translate>) {
          return {{"type", "translate"},
                  {"offset", reals_json(s.offset)},
                  {"operand", node_json(*s.operand)}};
        } else {
          return {{"type", "scale"},
                  {"factor", real_string(s.factor)},
                  {"operand", node_json(*s.operand)}};
        }
      },
      n.v);
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}


// ---------------------------------------------------------------------------
// Box

Box Box::everything(std::size_t dim) {
  return {std::vector<double>(dim, -kInf), std::vector<double>(dim, kInf)};
}

Box Box::nothing(std::size_t dim) {
  return {std::vector<double>(dim, kInf), std::vector<double>(dim, -kInf)};
}

bool Box::empty() const {
  for (std::size_t i = 0; i < dim(); ++i)
    if (lo[i] > hi[i]) return true;
  return false;
}

bool Box::bounded() const {
  for (std::size_t i = 0; i < dim(); ++i)
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) return false;
  return true;
}

bool Box::contains(std::span<const double> p) const {
  for (std::size_t i = 0; i < dim(); ++i)
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.empty()) return true;
  for (std::size_t i = 0; i < dim(); ++i)
    if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
  return true;
}

bool Box::strictly_contains(const Box& other) const {
  if (other.empty()) return true;
  for (std::size_t i = 0; i < dim(); ++i)
    if (other.lo[i] <= lo[i] || other.hi[i] >= hi[i]) return false;
  return true;
}

std::vector<double> Box::center() const {
  std::vector<double> c(dim());
  for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
  return c;
}

double Box::half_diagonal() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) s += sq(0.5 * (hi[i] - lo[i]));
  return std::sqrt(s);
}

double Box::max_width() const {
  double w = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) w = std::max(w, hi[i] - lo[i]);
  return w;
}

Box Box::intersect(const Box& other) const {
  Box r = *this;
  for (std::size_t i = 0; i < dim(); ++i) {
    r.lo[i] = std::max(lo[i], other.lo[i]);
    r.hi[i] = std::min(hi[i], other.hi[i]);
  }
  return r;
}

Box Box::hull(const Box& other) const {
  if (empty()) return other;
  if (other.empty()) return *this;
  Box r = *this;
  for (std::size_t i = 0; i < dim(); ++i) {
    r.lo[i] = std::min(lo[i], other.lo[i]);
    r.hi[i] = std::max(hi[i], other.hi[i]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// ImplicitSet

ImplicitSet ImplicitSet::empty(std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw DimensionMismatch("set dimension must be 2d");
  return ImplicitSet(make(shape::Empty{}, dim, Box::nothing(dim)));
}

ImplicitSet ImplicitSet::ball(std::vector<double> center, double radius, Boundary boundary) {
  if (center.empty() || center.size() % 2 != 0) throw DimensionMismatch("ball center must have 2d coordinates");
  require_finite(center, "ball center");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("ball radius must be positive");
  const std::size_t dim = center.size();
  shape::Ball b{std::move(center), radius, boundary};
  auto box = ball_box(b);
  return ImplicitSet(make(std::move(b), dim, std::move(box)));
}

ImplicitSet ImplicitSet::ball(const PointCd& center, double radius, Boundary boundary) {
  return ball(std::vector<double>(center.coords().begin(), center.coords().end()), radius, boundary);
}

ImplicitSet ImplicitSet::box(std::vector<double> lo, std::vector<double> hi, Boundary boundary) {
  require_dim(lo.size(), hi.size(), "box corners");
  if (lo.empty() || lo.size() % 2 != 0) throw DimensionMismatch("box must have 2d coordinates");
  require_finite(lo, "box corner");
  require_finite(hi, "box corner");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw std::invalid_argument("box is degenerate");
  const std::size_t dim = lo.size();
  Box bb{lo, hi};
  return ImplicitSet(make(shape::Cube{std::move(lo), std::move(hi), boundary}, dim, std::move(bb)));
}

ImplicitSet ImplicitSet::halfspace(std::vector<double> normal, double offset, Boundary boundary) {
  if (normal.empty() || normal.size() % 2 != 0) throw DimensionMismatch("halfspace normal must have 2d coordinates");
  require_finite(normal, "halfspace normal");
  const std::size_t dim = normal.size();
  return ImplicitSet(
      make(shape::Halfspace{std::move(normal), offset, boundary}, dim, Box::everything(dim)));
}

ImplicitSet unite(const ImplicitSet& a, const ImplicitSet& b) {
  require_dim(a.real_dim(), b.real_dim(), "union");
  return ImplicitSet(make(shape::Union{a.node_, b.node_}, a.real_dim(), a.bbox().hull(b.bbox())));
}

ImplicitSet intersect(const ImplicitSet& a, const ImplicitSet& b) {
  require_dim(a.real_dim(), b.real_dim(), "intersection");
  return ImplicitSet(
      make(shape::Intersection{a.node_, b.node_}, a.real_dim(), a.bbox().intersect(b.bbox())));
}

ImplicitSet subtract(const ImplicitSet& a, const ImplicitSet& b) {
  require_dim(a.real_dim(), b.real_dim(), "difference");
  return ImplicitSet(make(shape::Difference{a.node_, b.node_}, a.real_dim(), a.bbox()));
}

ImplicitSet ImplicitSet::complement_within(const Box& within, Boundary boundary) const {
  require_dim(within.dim(), real_dim(), "complement box");
  if (!within.bounded() || within.empty()) throw std::invalid_argument("complement box must be bounded");
  return ImplicitSet(make(shape::Complement{shape::Cube{within.lo, within.hi, boundary}, node_},
                          real_dim(), within));
}

ImplicitSet ImplicitSet::translated(std::vector<double> offset) const {
  require_dim(offset.size(), real_dim(), "translation");
  require_finite(offset, "translation");
  Box bb = bbox();
  for (std::size_t i = 0; i < offset.size(); ++i) {
    bb.lo[i] += offset[i];
    bb.hi[i] += offset[i];
  }
  return ImplicitSet(make(shape::Translate{std::move(offset), node_}, real_dim(), std::move(bb)));
}

ImplicitSet ImplicitSet::scaled(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw std::invalid_argument("scale factor must be positive");
  Box bb = bbox();
  for (std::size_t i = 0; i < bb.dim(); ++i) {
    bb.lo[i] *= factor;
    bb.hi[i] *= factor;
  }
  return ImplicitSet(make(shape::Scale{factor, node_}, real_dim(), std::move(bb)));
}

ImplicitSet ImplicitSet::normalized(std::span<const double> shift, double factor) const {
  require_dim(shift.size(), real_dim(), "normalization shift");
  if (!(factor > 0.0)) throw std::invalid_argument("normalization factor must be positive");
  return ImplicitSet(normalize(node_, std::vector<double>(shift.begin(), shift.end()), factor));
}

bool ImplicitSet::is_empty_expression() const {
  return std::holds_alternative<shape::Empty>(node_->v) || bbox().empty();
}

bool ImplicitSet::contains(const PointCd& p) const {
  require_dim(p.real_dim(), real_dim(), "membership");
  return member(*node_, p.coords());
}

bool ImplicitSet::contains(std::span<const double> p) const {
  require_dim(p.size(), real_dim(), "membership");
  return member(*node_, p);
}

bool ImplicitSet::cell_inside(const Box& cell) const { return inside(*node_, cell); }
bool ImplicitSet::cell_outside(const Box& cell) const { return outside(*node_, cell); }

nlohmann::json ImplicitSet::to_json() const { return node_json(*node_); }

std::string ImplicitSet::canonical_json() const { return to_json().dump(); }

std::string ImplicitSet::hash() const { return sha256_hex(canonical_json()); }

ImplicitSet ImplicitSet::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) throw std::invalid_argument("set expression needs a 'type'");
  const auto type = j.at("type").get<std::string>();
  if (type == "empty") return empty(j.at("dim").get<std::size_t>());
  if (type == "ball")
    return ball(read_reals(j.at("center")), read_real(j.at("radius")),
                read_boundary(j, "boundary", Boundary::open));
  if (type == "box")
    return box(read_reals(j.at("lo")), read_reals(j.at("hi")), read_boundary(j, "boundary", Boundary::closed));
  if (type == "halfspace")
    return halfspace(read_reals(j.at("normal")), read_real(j.at("offset")),
                     read_boundary(j, "boundary", Boundary::open));
  if (type == "union") return unite(from_json(j.at("left")), from_json(j.at("right")));
  if (type == "intersection") return intersect(from_json(j.at("left")), from_json(j.at("right")));
  if (type == "difference") return subtract(from_json(j.at("left")), from_json(j.at("right")));
  if (type == "complement")
    return from_json(j.at("operand"))
        .complement_within(Box{read_reals(j.at("lo")), read_reals(j.at("hi"))},
                           read_boundary(j, "boundary", Boundary::closed));
  if (type == "translate") return from_json(j.at("operand")).translated(read_reals(j.at("offset")));
  if (type == "scale") return from_json(j.at("operand")).scaled(read_real(j.at("factor")));
  throw std::invalid_argument("unknown set type '" + type + "'");
}

bool provably_subset(const ImplicitSet& a, const ImplicitSet& b) {
  require_dim(a.real_dim(), b.real_dim(), "subset test");
  const std::vector<double> zero(a.real_dim(), 0.0);
  return subset(a.normalized(zero, 1.0).node_ptr(), b.normalized(zero, 1.0).node_ptr());
}

bool provably_disjoint(const ImplicitSet& a, const ImplicitSet& b) {
  require_dim(a.real_dim(), b.real_dim(), "disjointness test");
  const std::vector<double> zero(a.real_dim(), 0.0);
  return disjoint(a.normalized(zero, 1.0).node_ptr(), b.normalized(zero, 1.0).node_ptr());
}

std::vector<ImplicitSet> decompose(const ImplicitSet& set) {
  const std::vector<double> zero(set.real_dim(), 0.0);
  std::vector<ImplicitSet> out;
  for (auto& p : pieces(set.normalized(zero, 1.0).node_ptr()))
    if (!p->bbox.empty()) out.emplace_back(std::move(p));
  return out;
}

bool contains(const ImplicitSet& set, const PointCd& point) { return set.contains(point); }

// ---------------------------------------------------------------------------
// Shells and scenarios

AnnulusShell shell_radii(const PointCd& x, int n) {
  if (n < 1) throw std::invalid_argument("shell index must be >= 1");
  return {x, n, std::ldexp(1.0, -(n + 1)), std::ldexp(1.0, -n)};
}

ImplicitSet annulus_shell(const PointCd& x, int n) {
  const auto s = shell_radii(x, n);
  return subtract(ImplicitSet::ball(x, s.outer_radius, Boundary::open),
                  ImplicitSet::ball(x, s.inner_radius, Boundary::closed));
}

ImplicitSet triple_shell(const PointCd& x, int n) {
  if (n < 1) throw std::invalid_argument("shell index must be >= 1");
  return subtract(ImplicitSet::ball(x, std::ldexp(1.0, -(n - 1)), Boundary::open),
                  ImplicitSet::ball(x, std::ldexp(1.0, -(n + 2)), Boundary::closed));
}

ImplicitSet shell_minus_domain(const PointCd& x, int n, const ImplicitSet& domain) {
  require_dim(x.real_dim(), domain.real_dim(), "shell_minus_domain");
  if (!domain.bbox().bounded()) throw std::invalid_argument("domain must be bounded");
  return subtract(annulus_shell(x, n), domain);
}

HoleTooLarge::HoleTooLarge(int n, double radius)
    : std::invalid_argument("hole radius " + real_string(radius) + " in shell " + std::to_string(n) +
                            " is not below 2^-(n+2)"),
      shell_(n) {}

PointCd swiss_cheese_hole_center(const PointCd& x, int n) {
  std::vector<double> c(x.coords().begin(), x.coords().end());
  c[0] += 1.5 * std::ldexp(1.0, -(n + 1));
  return PointCd(std::move(c));
}

ImplicitSet make_swiss_cheese(const PointCd& x, const std::function<double(int)>& radius, int n_min,
                              int n_max) {
  if (n_min < 1 || n_max < n_min) throw std::invalid_argument("swiss cheese needs 1 <= n_min <= n_max");
  std::optional<ImplicitSet> holes;
  for (int n = n_max; n >= n_min; --n) {
    const double r = radius(n);
    if (r < 0.0 || !std::isfinite(r)) throw HoleTooLarge(n, r);
    if (r == 0.0) continue;
    if (!(r < std::ldexp(1.0, -(n + 2)))) throw HoleTooLarge(n, r);
    auto hole = ImplicitSet::ball(swiss_cheese_hole_center(x, n), r, Boundary::closed);
    holes = holes ? unite(hole, *holes) : hole;
  }
  auto body = ImplicitSet::ball(x, 1.0, Boundary::open);
  return holes ? subtract(body, *holes) : body;
}

}  // namespace bpe
