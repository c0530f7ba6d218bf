#pragma once

// Property 1 / property 2 classification of admissible rectangles for an
// embedding h, good rectangles and good pairs, and the contradiction budget.

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "pje/errors.hpp"
#include "pje/estimates.hpp"
#include "pje/hierarchy.hpp"
#include "pje/lipschitz_sum.hpp"
#include "pje/rational.hpp"

namespace pje {

struct DichotomyParams {
  Rational eps{1, 10};
  Rational phi{1, 2};
  int k0 = 0;
  double L = 1.0;
  int samples_per_side = 4;  // sample lattice (n+1)^d per cube

  void validate() const {
    if (eps.sign() <= 0) throw ConfigError("dichotomy: eps must be positive");
    if (phi.sign() <= 0) throw ConfigError("dichotomy: phi must be positive");
    if (k0 < 0) throw ConfigError("dichotomy: k0 must be >= 0");
    if (!(L >= 1.0)) throw ConfigError("dichotomy: L must be >= 1");
    if (samples_per_side < 1) throw ConfigError("dichotomy: samples_per_side must be >= 1");
  }
};

template <class T>
T from_rational(const Rational& q) {
  if constexpr (std::is_same_v<T, Rational>) return q;
  else return static_cast<T>(q.to_double());
}

template <class T>
double as_double(const T& v) {
  if constexpr (std::is_same_v<T, Rational>) return v.to_double();
  else return static_cast<double>(v);
}

template <class T>
std::vector<T> convert_point(const Point& p) {
  std::vector<T> out;
  out.reserve(p.size());
  for (const auto& q : p) out.push_back(from_rational<T>(q));
  return out;
}

template <class T>
T squared_distance(const std::vector<T>& a, const std::vector<T>& b) {
  T s(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    T t = a[i] - b[i];
    add_product(s, t, t);
  }
  return s;
}

// A_h(R)^2 = |h(l) - h(r)|^2 / |l - r|^2
template <class T>
T stretch_ratio_squared(const BasicEmbeddedMap<T>& h, const Rect& R) {
  if (R.c.sign() <= 0) throw GridError("degenerate rectangle");
  auto l = convert_point<T>(R.p);
  T c = from_rational<T>(R.c);
  auto r = l;
  r[0] += c;
  return squared_distance(h(l), h(r)) / (c * c);
}

template <class T>
double stretch_ratio(const BasicEmbeddedMap<T>& h, const Rect& R) {
  return std::sqrt(as_double(stretch_ratio_squared(h, R)));
}

// Lattice p + (j/n) r, j in {0..n}^d. With boundary_only, only points on the cube's boundary.
template <class T, class Fn>
void for_each_cube_sample(const Cube& Q, int n, bool boundary_only, Fn&& fn) {
  const int d = Q.dim();
  std::vector<int> j(d, 0);
  std::vector<T> x(d);
  while (true) {
    bool on_boundary = false;
    for (int a = 0; a < d; ++a) on_boundary = on_boundary || j[a] == 0 || j[a] == n;
    if (!boundary_only || on_boundary) {
      for (int a = 0; a < d; ++a) x[a] = from_rational<T>(Q.p[a] + Q.r * Rational(j[a], n));
      fn(x);
    }
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++j[a] <= n) break;
      j[a] = 0;
    }
    if (a < 0) break;
  }
}

struct Property1Result {
  std::optional<int> witness;
  double margin = 0.0;     // eps r - lhs for the witness, or the best (largest) over i
  double lhs = 0.0;        // max sampled lhs for the witness (or best i)
  bool lhs_exact_zero = false;
};

// |h(x + tau) - h(x) - (1/K)(h(r(R)) - h(l(R)))| <= eps r on sampled x in Q(R,i), i <= K-2.
template <class T>
Property1Result check_property1(const BasicEmbeddedMap<T>& h, const Rect& R, const Rational& eps, int samples) {
  const int d = R.dim();
  const Rational r = R.short_side();
  auto hl = h(convert_point<T>(R.p));
  auto hr = h(convert_point<T>(R.right()));
  std::vector<T> mean_step(hl.size());
  T invK = from_rational<T>(Rational(1, R.factor));
  for (std::size_t m = 0; m < hl.size(); ++m) mean_step[m] = (hr[m] - hl[m]) * invK;
  const T tau = from_rational<T>(r);
  const T bound = from_rational<T>(eps * r);
  const T bound2 = bound * bound;
  Property1Result best;
  bool have_best = false;
  std::vector<T> shifted(d), hx, hs;
  for (int i = 0; i + 1 < R.factor; ++i) {
    T worst(0);
    for_each_cube_sample<T>(subcube(R, i), samples, false, [&](const std::vector<T>& x) {
      shifted = x;
      shifted[0] += tau;
      hx = h(x);
      hs = h(shifted);
      T s(0);
      for (std::size_t m = 0; m < hx.size(); ++m) {
        T t = hs[m] - hx[m] - mean_step[m];
        s += t * t;
      }
      if (worst < s) worst = s;
    });
    double lhs = std::sqrt(as_double(worst));
    double margin = as_double(bound) - lhs;
    bool pass = !(bound2 < worst);
    if (pass) {
      Property1Result out;
      out.witness = i;
      out.margin = margin;
      out.lhs = lhs;
      out.lhs_exact_zero = worst == T(0);
      return out;
    }
    if (!have_best || margin > best.margin) {
      best.margin = margin;
      best.lhs = lhs;
      have_best = true;
    }
  }
  return best;
}

struct Property2Result {
  std::optional<Rect> witness;
  double best_ratio = 0.0;  // max over children of A_h(R') / A_h(R)
  bool checkable = true;    // false when R has no children in the hierarchy
};

// Some child R' = R(Q(R,i), z) with A_h(R') > (1 + phi) A_h(R).
template <class T>
Property2Result check_property2(const BasicEmbeddedMap<T>& h, const HierarchyParams& params, const Rect& R,
                                const Rational& phi) {
  Property2Result out;
  if (R.order >= params.k_max) {
    out.checkable = false;
    return out;
  }
  const T parent2 = stretch_ratio_squared(h, R);
  const T factor = from_rational<T>((Rational(1) + phi) * (Rational(1) + phi));
  const T threshold = factor * parent2;
  const double parent2_d = as_double(parent2);
  auto lattice = reference_lattice(params);
  const int d = params.d, M = params.M;
  // child z of Q runs from p + r z to p + r (z + e_0 / M); both ends sit on an
  // (M+1) x M^{d-1} lattice, so h is evaluated once per lattice node
  std::size_t nodes = static_cast<std::size_t>(M + 1);
  for (int a = 1; a < d; ++a) nodes *= static_cast<std::size_t>(M);
  auto node_index = [&](const std::vector<int>& j) {
    std::size_t n = static_cast<std::size_t>(j[0]);
    for (int a = 1; a < d; ++a) n = n * static_cast<std::size_t>(M) + static_cast<std::size_t>(j[a]);
    return n;
  };
  std::vector<std::vector<T>> H(nodes);
  std::vector<int> j(d, 0);
  std::vector<T> x(d);
  for (int i = 0; i < R.factor; ++i) {
    Cube Q = subcube(R, i);
    std::fill(j.begin(), j.end(), 0);
    for (std::size_t n = 0; n < nodes; ++n) {
      for (int a = 0; a < d; ++a) x[a] = from_rational<T>(Q.p[a] + Q.r * Rational(j[a], M));
      H[node_index(j)] = h(x);
      for (int a = d - 1; a >= 0; --a) {
        if (++j[a] < (a == 0 ? M + 1 : M)) break;
        j[a] = 0;
      }
    }
    const T c = from_rational<T>(Q.r / Rational(M));
    const T c2 = c * c;
    const T scaled = threshold * c2;
    const double c2_d = as_double(c2);
    // same order as reference_lattice: last axis fastest
    std::fill(j.begin(), j.end(), 0);
    for (const auto& z : lattice) {
      std::size_t left = node_index(j);
      j[0] += 1;
      std::size_t rnode = node_index(j);
      j[0] -= 1;
      T dist2 = squared_distance(H[left], H[rnode]);
      double ratio = parent2_d > 0 ? std::sqrt(as_double(dist2) / c2_d / parent2_d) : 0.0;
      out.best_ratio = std::max(out.best_ratio, ratio);
      if (scaled < dist2) {
        out.witness = detail::child_rectangle_unchecked(params, Q, z);
        return out;
      }
      for (int a = d - 1; a >= 0; --a) {
        if (++j[a] < M) break;
        j[a] = 0;
      }
    }
  }
  return out;
}

enum class VerdictStatus { Property1, Property2, Both, Neither };

inline std::string status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Property1: return "property1";
    case VerdictStatus::Property2: return "property2";
    case VerdictStatus::Both: return "both";
    case VerdictStatus::Neither: return "neither";
  }
  return "neither";
}

struct PropertyVerdict {
  Rect rect;
  Property1Result p1;
  Property2Result p2;
  double stretch = 0.0;

  VerdictStatus status() const {
    bool a = p1.witness.has_value(), b = p2.witness.has_value();
    if (a && b) return VerdictStatus::Both;
    if (a) return VerdictStatus::Property1;
    if (b) return VerdictStatus::Property2;
    return VerdictStatus::Neither;
  }
};

template <class T>
PropertyVerdict classify_rectangle(const BasicEmbeddedMap<T>& h, const HierarchyParams& params, const Rect& R,
                                   const DichotomyParams& dp) {
  PropertyVerdict v{R, check_property1(h, R, dp.eps, dp.samples_per_side), check_property2(h, params, R, dp.phi),
                    stretch_ratio(h, R)};
  return v;
}

// All rectangles of order <= k0 in enumeration order.
template <class T>
std::vector<PropertyVerdict> classify_all(const BasicEmbeddedMap<T>& h, const HierarchyParams& params,
                                          const DichotomyParams& dp) {
  dp.validate();
  std::vector<PropertyVerdict> out;
  for (int k = 0; k <= dp.k0; ++k)
    for_each_rectangle(params, k, [&](const Rect& R) { out.push_back(classify_rectangle(h, params, R, dp)); });
  return out;
}

inline void write_classification_csv(const std::vector<PropertyVerdict>& verdicts, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "order,rect_id,property1_witness,property1_margin,property2_witness,A_h,status\n";
  os.precision(12);
  for (const auto& v : verdicts) {
    os << v.rect.order << "," << rect_id(v.rect) << ",";
    if (v.p1.witness) os << *v.p1.witness;
    os << "," << v.p1.margin << ",";
    if (v.p2.witness) os << rect_id(*v.p2.witness);
    os << "," << v.stretch << "," << status_name(v.status()) << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

inline int depth_bound(double L, double phi) {
  if (!(L >= 1.0) || !(phi > 0)) throw ConfigError("depth_bound needs L >= 1 and phi > 0");
  const double target = L * L;
  int k = 0;
  double p = 1.0;
  // relative slack absorbs rounding in L*L (e.g. L = sqrt(9))
  while (p * (1.0 + 1e-12) < target) {
    p *= 1.0 + phi;
    ++k;
  }
  return k;
}

class DichotomyError : public std::runtime_error {
 public:
  DichotomyError(const std::string& msg, std::vector<PropertyVerdict> verdicts)
      : std::runtime_error(msg), verdicts_(std::move(verdicts)) {}
  const std::vector<PropertyVerdict>& verdicts() const { return verdicts_; }

 private:
  std::vector<PropertyVerdict> verdicts_;
};

struct GoodRectangle {
  PropertyVerdict verdict;
  std::vector<PropertyVerdict> examined;
};

// Breadth-first over orders 0..k0: the first rectangle without property 2 that
// has property 1 at the sampling resolution.
template <class T>
GoodRectangle find_good_rectangle(const BasicEmbeddedMap<T>& h, const HierarchyParams& params,
                                  const DichotomyParams& dp) {
  dp.validate();
  if (dp.k0 > params.k_max) throw ConfigError("dichotomy depth exceeds the hierarchy's k_max");
  GoodRectangle out;
  std::optional<PropertyVerdict> found;
  for (int k = 0; k <= dp.k0 && !found; ++k) {
    for_each_rectangle(params, k, [&](const Rect& R) {
      PropertyVerdict v{R, {}, check_property2(h, params, R, dp.phi), stretch_ratio(h, R)};
      if (!v.p2.witness) {
        v.p1 = check_property1(h, R, dp.eps, dp.samples_per_side);
        if (v.p1.witness) found = v;
      }
      out.examined.push_back(v);
      return !found.has_value();
    });
  }
  if (!found)
    throw DichotomyError("no rectangle of order <= " + std::to_string(dp.k0) +
                             " has property 1 without property 2 at this sampling resolution",
                         std::move(out.examined));
  out.verdict = *found;
  return out;
}

struct GoodPairCertificate {
  AdjacentPair pair;
  std::vector<std::vector<double>> W;
  double bound_lhs = 0.0;   // sum_i L_i^{d-2} sup_{dQ} |pi_i - pi~_i|^2
  double pointwise = 0.0;   // sup_{dQ} sum_i L_i^{d-2} |pi_i - pi~_i|^2
  double bound_rhs = 0.0;   // r^2 eps^2
  bool verified = false;
  Rect rect;
};

// Boundary sums on the sample lattice of dQ for the pair's left cube.
inline void measure_pair(const RegularSum& sum, const AdjacentPair& pair, int samples, double& sum_of_sups,
                         double& pointwise, const std::vector<std::vector<double>>& W) {
  const int n = static_cast<int>(sum.size());
  const int d = pair.left.dim();
  std::vector<double> sups(n, 0.0);
  pointwise = 0.0;
  const double tau = pair.side().to_double();
  std::vector<double> a(d), b(d);
  for_each_cube_sample<double>(pair.left, samples, true, [&](const std::vector<double>& x) {
    std::vector<double> shifted = x;
    shifted[0] += tau;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (sum.L[i] == 0.0) continue;
      const auto& pi = sum.sum.term(i).pi;
      pi.interpolate(x.data(), a.data());
      pi.interpolate(shifted.data(), b.data());
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        double t = b[j] - a[j] - W[i][j];
        s += t * t;
      }
      s *= std::pow(sum.L[i], d - 2);
      sups[i] = std::max(sups[i], s);
      total += s;
    }
    pointwise = std::max(pointwise, total);
  });
  sum_of_sups = 0.0;
  for (double s : sups) sum_of_sups += s;
}

inline GoodPairCertificate find_good_pair(const RegularSum& sum, const HierarchyParams& params,
                                          const DichotomyParams& dp) {
  const int d = params.d;
  if (sum.size() > 0 && sum.dim() != d) throw ConfigError("sum dimension does not match hierarchy");
  EmbeddedMap h = embed_h(sum, d);
  GoodRectangle good = find_good_rectangle(h, params, dp);
  const Rect& R = good.verdict.rect;
  GoodPairCertificate cert;
  cert.rect = R;
  cert.pair = make_adjacent_pair(R, *good.verdict.p1.witness);
  cert.W = sum.size() ? translation_vectors(sum.sum, R) : std::vector<std::vector<double>>{};
  measure_pair(sum, cert.pair, dp.samples_per_side, cert.bound_lhs, cert.pointwise, cert.W);
  double e = (dp.eps * cert.pair.side()).to_double();
  cert.bound_rhs = e * e;
  cert.verified = cert.bound_lhs <= cert.bound_rhs;
  if (!cert.verified)
    throw DichotomyError("good pair check failed: sum of boundary sups " + std::to_string(cert.bound_lhs) +
                             " > r^2 eps^2 = " + std::to_string(cert.bound_rhs) +
                             " (pointwise sup " + std::to_string(cert.pointwise) + ")",
                         {good.verdict});
  return cert;
}

struct BudgetRecord {
  double eta = 0.25;
  double eps = 0.0;
  double r = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool violated = false;
};

inline double default_eps(double S, int d) { return 1.0 / (c_d(d) * std::sqrt(S)); }

// lower = r^d (1 - eta), upper = r^{d+1}(sqrt d + 1) S + r^d c_d sqrt(S) eps.
inline BudgetRecord contradiction_budget(double S, int d, int K, int M, int k, std::optional<double> eps = std::nullopt,
                                         double eta = 0.25) {
  if (!(S > 0) || d < 2 || K < 2 || M < 2 || k < 0) throw ConfigError("contradiction_budget: invalid parameters");
  BudgetRecord b;
  b.eta = eta;
  b.eps = eps ? *eps : default_eps(S, d);
  b.r = 1.0 / (K * std::pow(static_cast<double>(K) * M, k));
  const double rd = std::pow(b.r, d);
  b.lower = rd * (1.0 - eta);
  b.upper = rd * b.r * (std::sqrt(static_cast<double>(d)) + 1.0) * S + rd * c_d(d) * std::sqrt(S) * b.eps;
  b.violated = b.lower > b.upper;
  return b;
}

// Smallest K with (sqrt d + 1) S / K <= 1/4.
inline int budget_K(double S, int d) {
  return std::max(2, static_cast<int>(std::ceil(4.0 * (std::sqrt(static_cast<double>(d)) + 1.0) * S - 1e-12)));
}

}  // namespace pje
