#pragma once

// Two-valued checkerboard densities built by refinement along the hierarchy,
// with exact integration over rational boxes.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pje/errors.hpp"
#include "pje/grid_field.hpp"
#include "pje/hierarchy.hpp"
#include "pje/rational.hpp"

namespace pje {

// Piecewise-constant background on a uniform n^d grid over [0,1]^d.
struct BaseField {
  int d = 2;
  int n = 1;
  std::vector<Rational> values{Rational(1)};

  static BaseField constant(int d, Rational sigma) { return BaseField{d, 1, {std::move(sigma)}}; }

  void validate() const {
    std::size_t expect = 1;
    for (int a = 0; a < d; ++a) expect *= static_cast<std::size_t>(n);
    if (n < 1 || values.size() != expect) throw ConfigError("base field: expected n^d values");
    for (const auto& v : values)
      if (abs(v) > Rational(2)) throw ConfigError("base field values must satisfy |sigma| <= 2");
  }

  Rational integrate(const RationalBox& box) const {
    if (n == 1) return values[0] * box.volume();
    Rational total(0);
    std::vector<int> lo(d), hi(d);
    for (int a = 0; a < d; ++a) {
      lo[a] = std::clamp(static_cast<int>(floor_to_integer(box.lo[a] * Rational(n)).to_double()), 0, n - 1);
      hi[a] = std::clamp(static_cast<int>(-floor_to_integer(-(box.hi[a] * Rational(n))).to_double()), 1, n);
    }
    std::vector<int> idx(lo);
    while (true) {
      RationalBox cell{Point(d), Point(d)};
      std::size_t flat = 0;
      for (int a = 0; a < d; ++a) {
        cell.lo[a] = Rational(idx[a], n);
        cell.hi[a] = Rational(idx[a] + 1, n);
        flat = flat * n + idx[a];
      }
      total += values[flat] * intersection_volume(box, cell);
      int a = d - 1;
      for (; a >= 0; --a) {
        if (++idx[a] < hi[a]) break;
        idx[a] = lo[a];
      }
      if (a < 0) break;
    }
    return total;
  }

  double value_at(const double* x) const {
    std::size_t flat = 0;
    for (int a = 0; a < d; ++a) {
      int i = std::clamp(static_cast<int>(std::floor(x[a] * n)), 0, n - 1);
      flat = flat * n + i;
    }
    return values[flat].to_double();
  }
};

class DensityField {
 public:
  explicit DensityField(HierarchyParams params, std::optional<BaseField> base = std::nullopt)
      : params_(params), base_(base ? std::move(*base) : BaseField::constant(params.d, Rational(1))) {
    params_.validate();
    if (base_.d != params_.d) throw ConfigError("base field dimension does not match hierarchy");
    base_.validate();
  }

  const HierarchyParams& params() const { return params_; }
  const BaseField& base() const { return base_; }
  const std::set<int>& refined_orders() const { return refined_; }
  bool refined(int k) const { return refined_.count(k) != 0; }
  int deepest_order() const { return refined_.empty() ? -1 : *refined_.rbegin(); }

  // Value 1 on Q(R,i) for even i and 2 for odd i, for every R of order k.
  DensityField refine_at_order(int k) const {
    if (k < 0 || k > params_.k_max)
      throw RangeError("refine order " + std::to_string(k) + " outside [0, " + std::to_string(params_.k_max) + "]");
    if (refined(k)) throw ConfigError("order " + std::to_string(k) + " is already refined");
    DensityField out = *this;
    out.refined_.insert(k);
    out.full_cache_.clear();
    return out;
  }

  // Orders 0..k0 inclusive.
  DensityField refine_to_depth(int k0) const {
    if (k0 > params_.k_max)
      throw RangeError("refine depth " + std::to_string(k0) + " exceeds k_max " + std::to_string(params_.k_max));
    DensityField out = *this;
    for (int k = 0; k <= k0; ++k) out = out.refine_at_order(k);
    return out;
  }

  static int parity_value(int i) { return (i % 2 == 0) ? 1 : 2; }

  // Exact integral over a box inside [0,1]^d.
  Rational integrate(const RationalBox& box) const {
    if (box.dim() != params_.d) throw ConfigError("integration box has wrong dimension");
    if (!unit_box(params_.d).contains(box)) throw RangeError("integration box must lie inside [0,1]^d");
    Rational total = base_.integrate(box);
    if (refined_.empty()) return total;
    Rect R0 = initial_rectangle(params_);
    for (int i : candidate_subcubes(R0, box)) {
      Cube Q = subcube(R0, i);
      RationalBox qb = Q.box();
      Rational overlap = intersection_volume(box, qb);
      if (overlap == Rational(0)) continue;
      std::optional<int> own = refined(0) ? std::optional<int>(parity_value(i)) : std::nullopt;
      total += integrate_cube(Q, box, own) - fill(std::nullopt, box, qb, overlap);
    }
    return total;
  }

  Rational discrepancy(const AdjacentPair& pair) const {
    return abs(integrate(pair.left.box()) - integrate(pair.right.box()));
  }

  // Point value; on cube faces the lower-index cell wins.
  double value_at(const double* x) const {
    const int d = params_.d;
    for (int a = 0; a < d; ++a)
      if (x[a] < 0.0 || x[a] > 1.0) return 0.0;
    double value = base_.value_at(x);
    if (refined_.empty()) return value;
    const int K = params_.K, M = params_.M;
    std::vector<double> p(d, 0.0);
    double c = 1.0;
    int order = 0;
    const int deepest = deepest_order();
    while (true) {
      // inside the rectangle [0,c] x [0,c/K]^{d-1} + p ?
      for (int a = 1; a < d; ++a)
        if (x[a] - p[a] > c / K) return value;
      if (x[0] - p[0] > c) return value;
      double side = c / K;
      int i = std::clamp(static_cast<int>(std::floor((x[0] - p[0]) / side)), 0, K - 1);
      if (refined(order)) value = parity_value(i);
      if (order >= deepest) return value;
      // the cube Q(R,i)
      std::vector<double> q = p;
      q[0] += i * side;
      std::vector<int> z(d);
      for (int a = 0; a < d; ++a) {
        z[a] = static_cast<int>(std::floor((x[a] - q[a]) / side * M));
        if (z[a] < 0 || z[a] >= M) return value;
      }
      for (int a = 0; a < d; ++a) p[a] = q[a] + side * z[a] / M;
      c = side / M;
      ++order;
    }
  }
  double value_at(const std::vector<double>& x) const { return value_at(x.data()); }

 private:
  Rational fill(const std::optional<int>& v, const RationalBox& box, const RationalBox& region,
                const Rational& overlap) const {
    if (v) return Rational(*v) * overlap;
    RationalBox inter{Point(params_.d), Point(params_.d)};
    for (int a = 0; a < params_.d; ++a) {
      inter.lo[a] = max(box.lo[a], region.lo[a]);
      inter.hi[a] = min(box.hi[a], region.hi[a]);
    }
    return base_.integrate(inter);
  }

  // Indices j in [0, count) whose intervals [t0 + j w, t0 + j w + len] overlap (lo, hi) in their interiors.
  static std::vector<int> overlap_range(const Rational& lo, const Rational& hi, const Rational& origin,
                                        const Rational& pitch, const Rational& len, int count) {
    Rational t = (lo - origin) / pitch;
    Rational u = (hi - origin) / pitch;
    Rational w = len / pitch;
    int jmin = static_cast<int>(floor_to_integer(t - w).to_double()) + 1;
    int jmax = static_cast<int>(-floor_to_integer(-u).to_double()) - 1;
    jmin = std::max(jmin, 0);
    jmax = std::min(jmax, count - 1);
    std::vector<int> out;
    for (int j = jmin; j <= jmax; ++j) out.push_back(j);
    return out;
  }

  std::vector<int> candidate_subcubes(const Rect& R, const RationalBox& box) const {
    Rational s = R.short_side();
    return overlap_range(box.lo[0], box.hi[0], R.p[0], s, s, R.factor);
  }

  // Integral of the field over box within the admissible cube Q whose own value is `own`.
  Rational integrate_cube(const Cube& Q, const RationalBox& box, const std::optional<int>& own) const {
    RationalBox qb = Q.box();
    Rational overlap = intersection_volume(box, qb);
    if (overlap == Rational(0)) return Rational(0);
    bool full = overlap == Q.volume();
    if (full && own) {
      auto key = std::make_pair(Q.order, *own);
      auto it = full_cache_.find(key);
      if (it != full_cache_.end()) return it->second;
    }
    Rational total = fill(own, box, qb, overlap);
    if (deepest_order() > Q.order) {
      const int d = params_.d;
      const int M = params_.M;
      Rational pitch = Q.r / Rational(M);
      Rational short_len = pitch / Rational(params_.K);
      std::vector<std::vector<int>> ranges(d);
      for (int a = 0; a < d; ++a) {
        ranges[a] = overlap_range(box.lo[a], box.hi[a], Q.p[a], pitch, a == 0 ? pitch : short_len, M);
        if (ranges[a].empty()) return finish(full, Q, own, total);
      }
      std::vector<std::size_t> pos(d, 0);
      while (true) {
        Point z(d);
        for (int a = 0; a < d; ++a) z[a] = Rational(ranges[a][pos[a]], M);
        Rect child = child_rectangle(params_, Q, z);
        for (int i : candidate_subcubes(child, box)) {
          Cube sub = subcube(child, i);
          RationalBox sb = sub.box();
          Rational ov = intersection_volume(box, sb);
          if (ov == Rational(0)) continue;
          std::optional<int> sub_own = refined(child.order) ? std::optional<int>(parity_value(i)) : own;
          total += integrate_cube(sub, box, sub_own) - fill(own, box, sb, ov);
        }
        int a = d - 1;
        for (; a >= 0; --a) {
          if (++pos[a] < ranges[a].size()) break;
          pos[a] = 0;
        }
        if (a < 0) break;
      }
    }
    return finish(full, Q, own, total);
  }

  Rational finish(bool full, const Cube& Q, const std::optional<int>& own, Rational total) const {
    if (full && own) full_cache_.emplace(std::make_pair(Q.order, *own), total);
    return total;
  }

  HierarchyParams params_;
  BaseField base_;
  std::set<int> refined_;
  // integral of a fully covered cube by (order, own value); translation invariant
  mutable std::map<std::pair<int, int>, Rational> full_cache_;
};

inline DensityField refine_at_order(const DensityField& rho, int k) { return rho.refine_at_order(k); }
inline DensityField refine_to_depth(const DensityField& rho, int k0) { return rho.refine_to_depth(k0); }
inline Rational integrate_over_box(const DensityField& rho, const RationalBox& box) { return rho.integrate(box); }
inline Rational discrepancy(const DensityField& rho, const AdjacentPair& pair) { return rho.discrepancy(pair); }

// Exact cell averages of rho on a uniform grid of n cells per axis over box.
inline CellField cell_averages(const DensityField& rho, const RationalBox& box, const std::vector<int>& cells) {
  const int d = rho.params().d;
  std::vector<Rational> step(d);
  for (int a = 0; a < d; ++a) step[a] = (box.hi[a] - box.lo[a]) / Rational(cells[a]);
  for (int a = 1; a < d; ++a)
    if (step[a] != step[0]) throw GridError("cell_averages: box and cell counts must give square cells");
  CellField out{to_doubles(box.lo), step[0].to_double(), cells, {}};
  std::size_t total = 1;
  for (int c : cells) total *= static_cast<std::size_t>(c);
  out.values.resize(total);
  std::vector<int> idx(d, 0);
  Rational vol = pow(step[0], static_cast<unsigned>(d));
  for (std::size_t n = 0; n < total; ++n) {
    RationalBox cell{Point(d), Point(d)};
    for (int a = 0; a < d; ++a) {
      cell.lo[a] = box.lo[a] + step[a] * Rational(idx[a]);
      cell.hi[a] = cell.lo[a] + step[a];
    }
    out.values[n] = (rho.integrate(cell) / vol).to_double();
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < cells[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

// Samples psi_delta * rho at grid nodes over [0,1]^d with step 1/n. psi is the
// tensor product of 1-D bumps exp(-1/(1-t^2)) scaled so its support lies in the
// unit ball, discretized with `quad` points per axis and normalized to unit mass.
// rho is extended by 0 outside [0,1]^d.
inline GridField mollify_to_grid(const DensityField& rho, double delta, int n, int quad = 12) {
  if (!(delta > 0)) throw ConfigError("mollification width must be positive");
  if (n < 1) throw ConfigError("grid must have at least one cell per axis");
  const int d = rho.params().d;
  const double half = delta / std::sqrt(static_cast<double>(d));
  std::vector<double> offs, w1;
  for (int q = 0; q < quad; ++q) {
    double t = -1.0 + (2.0 * q + 1.0) / quad;
    offs.push_back(t * half);
    w1.push_back(std::exp(-1.0 / (1.0 - t * t)));
  }
  std::size_t kn = 1;
  for (int a = 0; a < d; ++a) kn *= static_cast<std::size_t>(quad);
  std::vector<std::vector<double>> kernel_offsets(kn, std::vector<double>(d));
  std::vector<double> kernel_weights(kn);
  double mass = 0.0;
  for (std::size_t k = 0; k < kn; ++k) {
    std::size_t rem = k;
    double w = 1.0;
    for (int a = d - 1; a >= 0; --a) {
      int q = static_cast<int>(rem % quad);
      rem /= quad;
      kernel_offsets[k][a] = offs[q];
      w *= w1[q];
    }
    kernel_weights[k] = w;
    mass += w;
  }
  for (auto& w : kernel_weights) w /= mass;
  std::vector<double> y(d);
  return GridField::sample(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), 1,
                           [&](const double* x, double* out) {
                             double acc = 0.0;
                             for (std::size_t k = 0; k < kn; ++k) {
                               for (int a = 0; a < d; ++a) y[a] = x[a] - kernel_offsets[k][a];
                               acc += kernel_weights[k] * rho.value_at(y.data());
                             }
                             out[0] = acc;
                           });
}

struct Constraint {
  AdjacentPair pair;
  Rational threshold;
};

// |int_Q rho - int_Q' rho| > threshold for every listed pair.
struct ConstraintSet {
  Rational eps;
  std::vector<Constraint> constraints;

  std::size_t size() const { return constraints.size(); }

  // Smallest (discrepancy - threshold); positive iff rho is a member.
  Rational min_margin(const DensityField& rho) const {
    std::optional<Rational> best;
    for (const auto& c : constraints) {
      Rational m = rho.discrepancy(c.pair) - c.threshold;
      if (!best || m < *best) best = m;
    }
    return best.value_or(Rational(1));
  }
  bool satisfied_by(const DensityField& rho) const { return min_margin(rho) > Rational(0); }
};

inline Rational constraint_threshold(const HierarchyParams& params, const Rational& side, const Rational& eps) {
  return pow(side, params.d) * (Rational(1) - eps - Rational(5) / pow(Rational(params.K), params.d - 1));
}

inline ConstraintSet build_constraint_set(const DensityField& rho, int k0, const Rational& eps) {
  for (int k = 0; k <= k0; ++k)
    if (!rho.refined(k)) throw ConfigError("constraint set needs the density refined at every order <= k0");
  ConstraintSet set{eps, {}};
  for_each_adjacent_pair(rho.params(), k0, [&](const AdjacentPair& p) {
    set.constraints.push_back({p, constraint_threshold(rho.params(), p.side(), eps)});
  });
  return set;
}

// ---- export ----

inline nlohmann::json density_to_json(const DensityField& rho) {
  nlohmann::json j;
  j["params"] = rho.params();
  j["refined_orders"] = std::vector<int>(rho.refined_orders().begin(), rho.refined_orders().end());
  auto base = nlohmann::json::array();
  for (const auto& v : rho.base().values) base.push_back(v.fraction_str());
  j["base"] = {{"n", rho.base().n}, {"values", base}};
  auto cells = nlohmann::json::array();
  for (int k : rho.refined_orders())
    for_each_rectangle(rho.params(), k, [&](const Rect& R) {
      for (int i = 0; i < R.factor; ++i)
        cells.push_back({{"cube", subcube(R, i)}, {"value", DensityField::parity_value(i)}});
    });
  j["cells"] = std::move(cells);
  return j;
}

// CSV rows x1..xd,value at the centres of an n^d grid of cells over [0,1]^d.
inline void write_density_samples_csv(const DensityField& rho, int n, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const int d = rho.params().d;
  for (int a = 0; a < d; ++a) os << "x" << (a + 1) << ",";
  os << "value\n";
  os.precision(12);
  std::vector<int> idx(d, 0);
  std::vector<double> x(d);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(n);
  for (std::size_t k = 0; k < total; ++k) {
    for (int a = 0; a < d; ++a) {
      x[a] = (idx[a] + 0.5) / n;
      os << x[a] << ",";
    }
    os << rho.value_at(x.data()) << "\n";
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < n) break;
      idx[a] = 0;
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace pje
