#pragma once

// Admissible rectangles and cubes of the multi-scale hierarchy.
//
// Conventions: the long side of every rectangle lies along axis 1 (index 0).
//   R_0          = [0,1] x [0,1/K]^{d-1}
//   Q(R,i)       = [0,c/K]^d + p(R) + i (c/K) e_1
//   R(Q,z)       = [0,r/M] x [0,r/(MK)]^{d-1} + p(Q) + r z,   z in Ref
//   Ref          = (1/M) Z^d  intersected with  [0, 1 - 1/M]^d
// A rectangle of order k has c = 1/(KM)^k, a cube of order k has r = 1/(K (KM)^k).
// Enumeration is lexicographic in (i_0, z_1, i_1, z_2, ...).

#include <cstddef>
#include <functional>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pje/errors.hpp"
#include "pje/rational.hpp"

namespace pje {

struct HierarchyParams {
  int d = 2;
  int K = 6;
  int M = 4;
  int k_max = 2;

  HierarchyParams() = default;
  HierarchyParams(int d_, int K_, int M_, int k_max_) : d(d_), K(K_), M(M_), k_max(k_max_) {
    validate();
  }

  void validate() const {
    if (d < 2) throw ConfigError("hierarchy: d must be >= 2, got " + std::to_string(d));
    if (K < 2) throw ConfigError("hierarchy: K must be >= 2, got " + std::to_string(K));
    if (M < 2) throw ConfigError("hierarchy: M must be >= 2, got " + std::to_string(M));
    if (k_max < 0) throw ConfigError("hierarchy: k_max must be >= 0, got " + std::to_string(k_max));
  }

  // Long side of an order-k rectangle: 1/(KM)^k.
  Rational rect_length(int k) const { return Rational(1) / pow(Rational(K * M), k); }
  // Side of an order-k cube: 1/(K (KM)^k).
  Rational cube_side(int k) const { return rect_length(k) / Rational(K); }

  std::size_t lattice_size() const {
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) n *= static_cast<std::size_t>(M);
    return n;
  }
  std::size_t rectangles_at(int k) const {
    std::size_t n = 1;
    for (int j = 0; j < k; ++j) n *= static_cast<std::size_t>(K) * lattice_size();
    return n;
  }

  friend bool operator==(const HierarchyParams&, const HierarchyParams&) = default;
};

// Axis-aligned box with exact corners.
struct RationalBox {
  Point lo;
  Point hi;

  int dim() const { return static_cast<int>(lo.size()); }

  Rational volume() const {
    Rational v(1);
    for (int a = 0; a < dim(); ++a) {
      if (hi[a] <= lo[a]) return Rational(0);
      v *= hi[a] - lo[a];
    }
    return v;
  }

  bool contains(const RationalBox& other) const {
    for (int a = 0; a < dim(); ++a)
      if (other.lo[a] < lo[a] || other.hi[a] > hi[a]) return false;
    return true;
  }

  bool contains_point(const Point& x) const {
    for (int a = 0; a < dim(); ++a)
      if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
  }

  friend bool operator==(const RationalBox&, const RationalBox&) = default;
};

inline RationalBox unit_box(int d) {
  return RationalBox{Point(d, Rational(0)), Point(d, Rational(1))};
}

inline Rational intersection_volume(const RationalBox& a, const RationalBox& b) {
  Rational v(1);
  for (int k = 0; k < a.dim(); ++k) {
    Rational lo = max(a.lo[k], b.lo[k]);
    Rational hi = min(a.hi[k], b.hi[k]);
    if (hi <= lo) return Rational(0);
    v *= hi - lo;
  }
  return v;
}

struct Cube {
  Point p;
  Rational r;
  int order = 0;

  int dim() const { return static_cast<int>(p.size()); }
  RationalBox box() const {
    RationalBox b{p, p};
    for (auto& x : b.hi) x += r;
    return b;
  }
  Rational volume() const { return pow(r, static_cast<unsigned>(dim())); }
  Point center() const {
    Point c = p;
    for (auto& x : c) x += r / Rational(2);
    return c;
  }

  friend bool operator==(const Cube&, const Cube&) = default;
};

struct Rect {
  Point p;
  Rational c;
  int order = 0;
  int factor = 2;  // F(R): long side / short side

  int dim() const { return static_cast<int>(p.size()); }
  Rational short_side() const { return c / Rational(factor); }
  RationalBox box() const {
    RationalBox b{p, p};
    b.hi[0] += c;
    for (int a = 1; a < dim(); ++a) b.hi[a] += short_side();
    return b;
  }
  Rational volume() const { return box().volume(); }
  const Point& left() const { return p; }
  Point right() const {
    Point q = p;
    q[0] += c;
    return q;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct AdjacentPair {
  Cube left;
  Cube right;
  Point tau;
  Rect parent;
  int index = 0;  // n with left = Q(parent, n)

  Rational side() const { return left.r; }
  int order() const { return left.order; }
};

// Ref = (1/M)Z^d in [0, 1-1/M]^d, lexicographically ordered (axis 1 slowest).
inline std::vector<Point> reference_lattice(const HierarchyParams& params) {
  params.validate();
  std::vector<Point> out;
  out.reserve(params.lattice_size());
  std::vector<int> idx(params.d, 0);
  for (std::size_t n = 0; n < params.lattice_size(); ++n) {
    Point z(params.d);
    for (int a = 0; a < params.d; ++a) z[a] = Rational(idx[a], params.M);
    out.push_back(std::move(z));
    for (int a = params.d - 1; a >= 0; --a) {
      if (++idx[a] < params.M) break;
      idx[a] = 0;
    }
  }
  return out;
}

inline bool in_reference_lattice(const HierarchyParams& params, const Point& z) {
  if (static_cast<int>(z.size()) != params.d) return false;
  for (const auto& c : z) {
    Rational scaled = c * Rational(params.M);
    if (!scaled.is_integer() || scaled < Rational(0) || scaled > Rational(params.M - 1)) return false;
  }
  return true;
}

inline Rect initial_rectangle(const HierarchyParams& params) {
  params.validate();
  return Rect{Point(params.d, Rational(0)), Rational(1), 0, params.K};
}

inline Cube subcube(const Rect& R, int i) {
  if (i < 0 || i >= R.factor)
    throw RangeError("subcube index " + std::to_string(i) + " outside admissible range [0, " +
                     std::to_string(R.factor - 1) + "]");
  Rational side = R.short_side();
  Cube q{R.p, side, R.order};
  q.p[0] += Rational(i) * side;
  return q;
}

namespace detail {
// z already known to be a lattice point
inline Rect child_rectangle_unchecked(const HierarchyParams& params, const Cube& Q, const Point& z) {
  Rect R{Q.p, Q.r / Rational(params.M), Q.order + 1, params.K};
  for (int a = 0; a < params.d; ++a) R.p[a] += Q.r * z[a];
  return R;
}
}  // namespace detail

inline Rect child_rectangle(const HierarchyParams& params, const Cube& Q, const Point& z) {
  if (!in_reference_lattice(params, z)) throw RangeError("child_rectangle: z is not in the reference lattice");
  return detail::child_rectangle_unchecked(params, Q, z);
}

namespace detail {

template <class Fn>
bool visit_rectangles(const HierarchyParams& params, const std::vector<Point>& lattice, const Rect& R,
                      int target, Fn& fn) {
  if (R.order == target) return fn(R);
  for (int i = 0; i < params.K; ++i) {
    Cube Q = subcube(R, i);
    for (const auto& z : lattice)
      if (!visit_rectangles(params, lattice, child_rectangle(params, Q, z), target, fn)) return false;
  }
  return true;
}

}  // namespace detail

// Calls fn(const Rect&) for every rectangle of order k; fn may return false to stop early.
template <class Fn>
void for_each_rectangle(const HierarchyParams& params, int k, Fn&& fn) {
  params.validate();
  if (k < 0 || k > params.k_max)
    throw RangeError("order " + std::to_string(k) + " outside [0, " + std::to_string(params.k_max) + "]");
  auto lattice = reference_lattice(params);
  auto wrapped = [&](const Rect& R) -> bool {
    if constexpr (std::is_same_v<decltype(fn(R)), bool>) {
      return fn(R);
    } else {
      fn(R);
      return true;
    }
  };
  detail::visit_rectangles(params, lattice, initial_rectangle(params), k, wrapped);
}

inline std::vector<Rect> enumerate_rectangles(const HierarchyParams& params, int k) {
  std::vector<Rect> out;
  for_each_rectangle(params, k, [&](const Rect& R) { out.push_back(R); });
  return out;
}

inline AdjacentPair make_adjacent_pair(const Rect& R, int n) {
  if (n < 0 || n > R.factor - 2)
    throw RangeError("adjacent pair index " + std::to_string(n) + " outside [0, " +
                     std::to_string(R.factor - 2) + "]");
  AdjacentPair pair{subcube(R, n), subcube(R, n + 1), Point(R.dim(), Rational(0)), R, n};
  pair.tau[0] = pair.left.r;
  return pair;
}

// Every (Q(R,n), Q(R,n+1)) for R of order <= k_max, orders ascending.
template <class Fn>
void for_each_adjacent_pair(const HierarchyParams& params, int k_max, Fn&& fn) {
  if (k_max > params.k_max)
    throw RangeError("pair order bound " + std::to_string(k_max) + " exceeds hierarchy k_max " +
                     std::to_string(params.k_max));
  for (int k = 0; k <= k_max; ++k)
    for_each_rectangle(params, k, [&](const Rect& R) {
      for (int n = 0; n + 1 < params.K; ++n) fn(make_adjacent_pair(R, n));
    });
}

inline std::vector<AdjacentPair> enumerate_adjacent_pairs(const HierarchyParams& params, int k_max) {
  std::vector<AdjacentPair> out;
  for_each_adjacent_pair(params, k_max, [&](const AdjacentPair& p) { out.push_back(p); });
  return out;
}

// Volume of Q outside the order-(k+1) rectangles it contains. The children are
// checked pairwise for disjoint interiors so the union volume is a plain sum.
inline Rational uncovered_volume(const HierarchyParams& params, const Cube& Q) {
  std::vector<RationalBox> children;
  for (const auto& z : reference_lattice(params)) children.push_back(child_rectangle(params, Q, z).box());
  RationalBox qb = Q.box();
  Rational covered(0);
  for (std::size_t a = 0; a < children.size(); ++a) {
    for (std::size_t b = a + 1; b < children.size(); ++b)
      if (intersection_volume(children[a], children[b]) != Rational(0))
        throw NumericalError("child rectangles overlap");
    covered += intersection_volume(qb, children[a]);
  }
  return Q.volume() - covered;
}

// ---- JSON ----

inline nlohmann::json point_to_json(const Point& p) {
  auto j = nlohmann::json::array();
  for (const auto& c : p) j.push_back(c.fraction_str());
  return j;
}

inline Point point_from_json(const nlohmann::json& j) {
  Point p;
  for (const auto& c : j) p.push_back(Rational::parse(c.get<std::string>()));
  return p;
}

inline void to_json(nlohmann::json& j, const HierarchyParams& hp) {
  j = {{"d", hp.d}, {"K", hp.K}, {"M", hp.M}, {"k_max", hp.k_max}};
}
inline void from_json(const nlohmann::json& j, HierarchyParams& hp) {
  hp.d = j.value("d", 2);
  hp.K = j.value("K", 6);
  hp.M = j.value("M", 4);
  hp.k_max = j.value("k_max", 2);
  hp.validate();
}

inline void to_json(nlohmann::json& j, const Cube& q) {
  j = {{"p", point_to_json(q.p)}, {"r", q.r.fraction_str()}, {"order", q.order}};
}
inline void from_json(const nlohmann::json& j, Cube& q) {
  q.p = point_from_json(j.at("p"));
  q.r = Rational::parse(j.at("r").get<std::string>());
  q.order = j.at("order").get<int>();
}

inline void to_json(nlohmann::json& j, const Rect& R) {
  j = {{"p", point_to_json(R.p)}, {"c", R.c.fraction_str()}, {"order", R.order}};
}

inline std::string rect_id(const Rect& R) {
  std::string s = "o" + std::to_string(R.order) + "@";
  for (std::size_t a = 0; a < R.p.size(); ++a) s += (a ? ";" : "") + R.p[a].str();
  return s;
}

}  // namespace pje
