#pragma once

// Finite formal Lipschitz sums sum_i (f_i, pi_i) on a shared grid.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pje/errors.hpp"
#include "pje/estimates.hpp"
#include "pje/grid_field.hpp"
#include "pje/hierarchy.hpp"
#include "pje/rational.hpp"

namespace pje {

// max{Lip f, |f|_inf}
inline double coefficient_norm(const GridField& f) {
  if (f.ncomp() != 1) throw GridError("coefficient must be a scalar field");
  return std::max(lipschitz_constants(f)[0], sup_norm(f, 0));
}

struct SumTerm {
  GridField f;
  GridField pi;
  double f_norm = 0.0;
  std::vector<double> pi_lips;

  void record_norms() {
    f_norm = coefficient_norm(f);
    pi_lips = lipschitz_constants(pi);
  }
  double weight() const {
    double w = f_norm;
    for (double l : pi_lips) w *= l;
    return w;
  }
};

class LipschitzSum {
 public:
  LipschitzSum() = default;

  void add(GridField f, GridField pi) {
    require_vector_field(pi);
    if (f.ncomp() != 1) throw GridError("coefficient must be a scalar field");
    require_shared_grid(f, pi);
    if (!terms_.empty()) require_shared_grid(terms_.front().pi, pi);
    SumTerm t{std::move(f), std::move(pi), 0.0, {}};
    t.record_norms();
    terms_.push_back(std::move(t));
  }

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<SumTerm>& terms() const { return terms_; }
  const SumTerm& term(std::size_t i) const { return terms_.at(i); }

 private:
  std::vector<SumTerm> terms_;
};

inline double s_value(const LipschitzSum& sum) {
  double s = 0.0;
  for (const auto& t : sum.terms()) s += t.weight();
  return s;
}

struct RegularSum {
  LipschitzSum sum;
  std::vector<double> L;  // 0 for zero pairs

  std::size_t size() const { return sum.size(); }
  int dim() const { return sum.empty() ? 0 : sum.term(0).pi.dim(); }
  double S() const {
    double s = 0.0;
    for (double l : L) s += std::pow(l, dim());
    return s;
  }
};

inline GridField zero_like(const GridField& F) { return GridField::like(F, F.ncomp()); }

// Rescales each term to max{Lip f, |f|_inf} = 1 and Lip pi^j = L_i, with pi_i
// anchored to vanish at the grid origin node. Degenerate terms become zero pairs.
inline RegularSum regularize(const LipschitzSum& in) {
  RegularSum out;
  for (const auto& t : in.terms()) {
    const int d = t.pi.dim();
    double gnorm = t.f_norm;
    bool degenerate = !(gnorm > 0);
    for (double l : t.pi_lips) degenerate = degenerate || !(l > 0);
    if (degenerate) {
      out.sum.add(zero_like(t.f), zero_like(t.pi));
      out.L.push_back(0.0);
      continue;
    }
    double Li = std::pow(t.weight(), 1.0 / d);
    GridField f = t.f;
    for (auto& v : f.values()) v /= gnorm;
    GridField pi = t.pi;
    for (int j = 0; j < d; ++j) {
      double origin = t.pi.at(0, j);
      double scale = Li / t.pi_lips[j];
      for (std::size_t n = 0; n < pi.node_count(); ++n) pi.at(n, j) = (t.pi.at(n, j) - origin) * scale;
    }
    out.sum.add(std::move(f), std::move(pi));
    out.L.push_back(Li);
  }
  return out;
}

inline bool is_regular(const LipschitzSum& sum, double tol = 1e-9) {
  for (const auto& t : sum.terms()) {
    bool zero = t.f_norm == 0.0;
    for (double l : t.pi_lips) zero = zero && l == 0.0;
    if (zero) continue;
    if (std::abs(t.f_norm - 1.0) > tol) return false;
    for (double l : t.pi_lips)
      if (std::abs(l - t.pi_lips[0]) > tol) return false;
    for (int j = 0; j < t.pi.ncomp(); ++j)
      if (std::abs(t.pi.at(0, j)) > tol) return false;
  }
  return true;
}

// Cell-wise sum_i f_i det D pi_i with f_i at the cell centre.
inline CellField em_field(const LipschitzSum& sum) {
  if (sum.empty()) throw GridError("em_field of an empty sum has no grid");
  const GridField& g0 = sum.term(0).pi;
  CellField out = empty_cells_like(g0);
  const int d = g0.dim();
  std::vector<double> jac(d * d);
  for (const auto& t : sum.terms()) {
    std::size_t k = 0;
    detail::for_each_cell(t.pi, t.pi.full_box(), [&](const std::vector<int>&, std::size_t corner) {
      cell_jacobian(t.pi, corner, jac.data());
      out.values[k++] += cell_center_value(t.f, corner) * determinant(jac.data(), d);
    });
  }
  return out;
}

inline double em_integral(const LipschitzSum& sum, const GridBox& box) {
  double s = 0.0;
  for (const auto& t : sum.terms()) s += weighted_det_integral(t.f, t.pi, box);
  return s;
}

// ---- the embedding h ----

// A map R^d -> R^m given by an evaluator, with a known biLipschitz upper bound.
template <class T>
struct BasicEmbeddedMap {
  int d = 2;
  int target_dim = 2;
  double upper = 1.0;
  std::function<void(const T*, T*)> eval;

  std::vector<T> operator()(const std::vector<T>& x) const {
    if (static_cast<int>(x.size()) != d) throw GridError("embedding: wrong input dimension");
    std::vector<T> out(target_dim);
    eval(x.data(), out.data());
    return out;
  }
};

using EmbeddedMap = BasicEmbeddedMap<double>;

template <class T>
BasicEmbeddedMap<T> identity_map(int d) {
  return {d, d, 1.0, [d](const T* x, T* out) {
            for (int a = 0; a < d; ++a) out[a] = x[a];
          }};
}

// x -> A x + b with A stored row-major (m x d).
template <class T>
BasicEmbeddedMap<T> affine_map(int d, std::vector<T> A, std::vector<T> b) {
  const int m = static_cast<int>(b.size());
  if (static_cast<int>(A.size()) != m * d) throw GridError("affine map: A must be m x d");
  return {d, m, 1.0, [d, m, A = std::move(A), b = std::move(b)](const T* x, T* out) {
            for (int i = 0; i < m; ++i) {
              out[i] = b[i];
              for (int a = 0; a < d; ++a) add_product(out[i], A[i * d + a], x[a]);
            }
          }};
}

// h(x) = (x, L_1^{d/2-1} pi_1(x), L_2^{d/2-1} pi_2(x), ...), pi_i multilinearly interpolated.
inline EmbeddedMap embed_h(const RegularSum& sum) {
  const int n = static_cast<int>(sum.size());
  const int d = n ? sum.dim() : 0;
  if (n == 0) throw GridError("embed_h: use embed_h(sum, d) for an empty sum");
  std::vector<double> scale(n);
  for (int i = 0; i < n; ++i) scale[i] = sum.L[i] > 0 ? std::pow(sum.L[i], d / 2.0 - 1.0) : 0.0;
  EmbeddedMap h;
  h.d = d;
  h.target_dim = d + d * n;
  h.upper = std::sqrt(1.0 + d * sum.S());
  const RegularSum* src = &sum;
  h.eval = [src, scale, d, n](const double* x, double* out) {
    for (int a = 0; a < d; ++a) out[a] = x[a];
    for (int i = 0; i < n; ++i) {
      src->sum.term(i).pi.interpolate(x, out + d + d * i);
      for (int j = 0; j < d; ++j) out[d + d * i + j] *= scale[i];
    }
  };
  return h;
}

inline EmbeddedMap embed_h(const RegularSum& sum, int d) {
  if (sum.size() == 0) return identity_map<double>(d);
  return embed_h(sum);
}

// ---- sum estimate on adjacent cubes ----

// W_i for each term: (1/K)(pi_i(r(R)) - pi_i(l(R))).
inline std::vector<std::vector<double>> translation_vectors(const LipschitzSum& sum, const Rect& R) {
  std::vector<std::vector<double>> W;
  auto l = to_doubles(R.p);
  auto r = to_doubles(R.right());
  for (const auto& t : sum.terms()) {
    auto pl = t.pi.interpolate(l);
    auto pr = t.pi.interpolate(r);
    std::vector<double> w(pl.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = (pr[j] - pl[j]) / R.factor;
    W.push_back(std::move(w));
  }
  return W;
}

struct SumEstimateDetail {
  EstimateReport report;
  double S = 0.0;
  double comparison = 0.0;  // sum_i L_i^{d-2} |pi_i - pi~_i|^2_{l^inf(dQ)}
};

// L_i is re-measured on the pair's region; coefficients are assumed normalized
// (max{Lip f_i, |f_i|} <= 1) as in a regular sum.
inline SumEstimateDetail sum_estimate_detail(const RegularSum& sum, const AdjacentPair& pair,
                                             const std::vector<std::vector<double>>& W) {
  if (W.size() != sum.size()) throw ConfigError("need one W vector per term");
  SumEstimateDetail out;
  if (sum.size() == 0) {
    out.report.name = "sum-estimate";
    return out;
  }
  const GridField& g0 = sum.sum.term(0).pi;
  const int d = g0.dim();
  PairBoxes pb = locate_pair(g0, pair);
  GridBox both = pb.left;
  for (int a = 0; a < d; ++a) {
    both.begin[a] = std::min(pb.left.begin[a], pb.right.begin[a]);
    both.cells[a] = std::max(pb.left.begin[a], pb.right.begin[a]) + pb.left.cells[a] - both.begin[a];
  }
  const double r = pair.side().to_double();
  double S = 0.0, comparison = 0.0, lhs = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const auto& t = sum.sum.term(i);
    double Li = max_lip(t.pi, both);
    S += std::pow(Li, d);
    double diff = translated_boundary_difference(t.pi, pb, W[i]);
    comparison += std::pow(Li, d - 2) * diff * diff;
    lhs += weighted_det_integral(t.f, t.pi, pb.left) - weighted_det_integral(t.f, t.pi, pb.right);
  }
  out.S = S;
  out.comparison = comparison;
  out.report.name = "sum-estimate";
  out.report.lhs = std::abs(lhs);
  out.report.rhs = std::pow(r, d + 1) * (std::sqrt(static_cast<double>(d)) + 1.0) * S +
                   std::pow(r, d - 1) * c_d(d) * std::sqrt(S) * std::sqrt(comparison);
  out.report.context = "pair order " + std::to_string(pair.order()) + " index " + std::to_string(pair.index);
  return out;
}

inline EstimateReport check_sum_estimate(const RegularSum& sum, const AdjacentPair& pair,
                                         const std::vector<std::vector<double>>& W) {
  return sum_estimate_detail(sum, pair, W).report;
}

// ---- exterior derivative reduction ----

struct ExteriorReduction {
  LipschitzSum sum;
  double residual = 0.0;  // max over cells of |sum_j det D pi_j - eta_1|
};

// Term j has coefficient 1 and pi_j with component j = (-1)^{j-1} omega_j and
// component i = x_i otherwise, so sum_j det D pi_j = sum_j (-1)^{j-1} d_j omega_j.
inline ExteriorReduction exterior_to_jacobian(const std::vector<GridField>& omega, const GridField& eta1) {
  const int d = static_cast<int>(omega.size());
  if (d < 2) throw GridError("exterior reduction needs at least two components");
  for (const auto& w : omega) {
    if (w.dim() != d || w.ncomp() != 1) throw GridError("omega components must be scalar fields on a d-dimensional grid");
    require_shared_grid(w, omega[0]);
  }
  require_shared_grid(eta1, omega[0]);
  if (eta1.ncomp() != 1) throw GridError("eta must be a scalar field");
  ExteriorReduction out;
  std::vector<int> idx;
  for (int j = 0; j < d; ++j) {
    GridField pi = GridField::like(omega[0], d);
    GridField f = GridField::like(omega[0], 1);
    double sgn = (j % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t n = 0; n < pi.node_count(); ++n) {
      pi.unflatten(n, idx);
      for (int i = 0; i < d; ++i) pi.at(n, i) = (i == j) ? sgn * omega[j].at(n) : pi.coord(i, idx[i]);
      f.at(n) = 1.0;
    }
    out.sum.add(std::move(f), std::move(pi));
  }
  CellField em = em_field(out.sum);
  std::size_t k = 0;
  detail::for_each_cell(eta1, eta1.full_box(), [&](const std::vector<int>&, std::size_t corner) {
    out.residual = std::max(out.residual, std::abs(em.values[k++] - cell_center_value(eta1, corner)));
  });
  return out;
}

// ---- persistence ----

inline nlohmann::json write_sum(const LipschitzSum& sum, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["terms"] = nlohmann::json::array();
  manifest["s_value"] = s_value(sum);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const auto& t = sum.term(i);
    std::string fname = "f_" + std::to_string(i) + ".bin";
    std::string pname = "pi_" + std::to_string(i) + ".bin";
    write_binary(t.f, (dir / fname).string());
    write_binary(t.pi, (dir / pname).string());
    manifest["terms"].push_back({{"f", fname}, {"pi", pname}, {"f_norm", t.f_norm}, {"pi_lips", t.pi_lips}});
  }
  std::ofstream os(dir / "sum.json");
  if (!os) throw IoError("cannot write " + (dir / "sum.json").string());
  os << manifest.dump(2) << "\n";
  return manifest;
}

inline LipschitzSum read_sum(const std::filesystem::path& dir) {
  std::ifstream is(dir / "sum.json");
  if (!is) throw IoError("cannot read " + (dir / "sum.json").string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sum manifest: " + std::string(e.what()));
  }
  LipschitzSum sum;
  for (const auto& t : manifest.at("terms"))
    sum.add(read_binary((dir / t.at("f").get<std::string>()).string()),
            read_binary((dir / t.at("pi").get<std::string>()).string()));
  return sum;
}

}  // namespace pje
