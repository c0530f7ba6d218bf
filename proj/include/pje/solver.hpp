#pragma once

// L-BFGS with feasibility back-off for det D pi = rho (and sum_i f_i det D pi_i = rho)
// under per-component Lipschitz budgets.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pje/density.hpp"
#include "pje/errors.hpp"
#include "pje/estimates.hpp"
#include "pje/grid_field.hpp"
#include "pje/hierarchy.hpp"
#include "pje/lipschitz_sum.hpp"

namespace pje {

struct ProjectionOptions {
  int max_sweeps = 200;
  double rel_tol = 1e-6;
  double undershoot = 1e-3;  // over-budget cells are shrunk to budget (1 - undershoot)
  bool global_fallback = true;
};

struct ProjectionStats {
  int sweeps = 0;
  bool used_fallback = false;
  double max_violation = 0.0;  // max over components of Lip / budget after projection
};

namespace detail {

inline std::vector<std::size_t> corner_offsets(const GridField& F) {
  const int d = F.dim();
  std::vector<std::size_t> off(std::size_t(1) << d, 0);
  for (int m = 0; m < (1 << d); ++m)
    for (int a = 0; a < d; ++a)
      if ((m >> a) & 1) off[m] += F.stride(a);
  return off;
}

inline std::vector<std::size_t> cell_corners(const GridField& F) {
  std::vector<std::size_t> out;
  out.reserve(F.cell_count());
  for_each_cell(F, F.full_box(), [&](const std::vector<int>&, std::size_t corner) { out.push_back(corner); });
  return out;
}

}  // namespace detail

// Gauss-Seidel sweeps that shrink each over-budget cell's values towards their
// mean. Returns the components that are still over budget (1 + rel_tol).
inline std::vector<int> shrink_cells(GridField& F, const std::vector<double>& budget, const ProjectionOptions& opt,
                                     ProjectionStats* stats = nullptr) {
  if (static_cast<int>(budget.size()) != F.ncomp()) throw ConfigError("need one Lipschitz budget per component");
  for (double b : budget)
    if (!(b >= 0) || !std::isfinite(b)) throw ConfigError("Lipschitz budget must be finite and >= 0");
  const auto corners = detail::cell_corners(F);
  const auto off = detail::corner_offsets(F);
  const double inv = 1.0 / static_cast<double>(off.size());
  std::vector<int> dirty;
  for (int c = 0; c < F.ncomp(); ++c) {
    const double B = budget[c];
    if (B == 0.0) {
      double mean = 0.0;
      for (std::size_t n = 0; n < F.node_count(); ++n) mean += F.at(n, c);
      mean /= static_cast<double>(F.node_count());
      for (std::size_t n = 0; n < F.node_count(); ++n) F.at(n, c) = mean;
      continue;
    }
    const double limit = B * (1.0 + opt.rel_tol);
    bool clean = false;
    int sweep = 0;
    for (; sweep < opt.max_sweeps && !clean; ++sweep) {
      clean = true;
      for (std::size_t corner : corners) {
        double L = cell_lipschitz(F, corner, c);
        if (L <= limit) continue;
        clean = false;
        double mean = 0.0;
        for (std::size_t o : off) mean += F.at(corner + o, c);
        mean *= inv;
        double s = B * (1.0 - opt.undershoot) / L;
        for (std::size_t o : off) {
          double& v = F.at(corner + o, c);
          v = mean + (v - mean) * s;
        }
      }
    }
    if (stats) stats->sweeps = std::max(stats->sweeps, sweep);
    if (!clean) {
      // the last sweep may have fixed everything
      double L = 0.0;
      for (std::size_t corner : corners) L = std::max(L, cell_lipschitz(F, corner, c));
      if (L > limit) dirty.push_back(c);
    }
  }
  return dirty;
}

// Lipschitz constant of every component brought to <= budget (1 + rel_tol). When
// local sweeps do not settle within the cap the component is rescaled about its
// mean, or an error is raised if that fallback is disabled.
inline GridField project_lipschitz(GridField F, const std::vector<double>& budget, const ProjectionOptions& opt = {},
                                   ProjectionStats* stats = nullptr) {
  ProjectionStats st;
  for (int c : shrink_cells(F, budget, opt, &st)) {
    const double B = budget[c];
    double L = 0.0;
    detail::for_each_cell(F, F.full_box(), [&](const std::vector<int>&, std::size_t corner) {
      L = std::max(L, cell_lipschitz(F, corner, c));
    });
    if (!opt.global_fallback)
      throw NumericalError("Lipschitz projection did not converge: component " + std::to_string(c) +
                           " has constant " + std::to_string(L) + " > budget " + std::to_string(B));
    st.used_fallback = true;
    double mean = 0.0;
    for (std::size_t n = 0; n < F.node_count(); ++n) mean += F.at(n, c);
    mean /= static_cast<double>(F.node_count());
    double s = B / L;
    for (std::size_t n = 0; n < F.node_count(); ++n) F.at(n, c) = mean + (F.at(n, c) - mean) * s;
  }
  auto lips = lipschitz_constants(F);
  for (int c = 0; c < F.ncomp(); ++c)
    st.max_violation = std::max(st.max_violation, budget[c] > 0 ? lips[c] / budget[c] : (lips[c] > 0 ? 1e300 : 0.0));
  if (stats) *stats = st;
  return F;
}

inline GridField project_lipschitz(GridField F, double budget, const ProjectionOptions& opt = {}) {
  std::vector<double> b(F.ncomp(), budget);
  return project_lipschitz(std::move(F), b, opt);
}

// ---- objective ----

// Fields of an n-term sum; for single-map solving f is the constant 1 and frozen.
struct SumState {
  std::vector<GridField> f;
  std::vector<GridField> pi;
};

inline CellField em_cells(const SumState& s) {
  const GridField& g0 = s.pi.at(0);
  CellField out = empty_cells_like(g0);
  const int d = g0.dim();
  const auto corners = detail::cell_corners(g0);
  std::vector<double> jac(d * d);
  for (std::size_t i = 0; i < s.pi.size(); ++i)
    for (std::size_t k = 0; k < corners.size(); ++k) {
      cell_jacobian(s.pi[i], corners[k], jac.data());
      out.values[k] += cell_center_value(s.f[i], corners[k]) * determinant(jac.data(), d);
    }
  return out;
}

inline void require_target(const GridField& g, const CellField& rho) {
  if (!rho.same_layout(g)) throw GridError("target density and fields must share a grid");
}

// sum over cells of (Em - rho)^2 h^d
inline double objective(const SumState& s, const CellField& rho) {
  require_target(s.pi.at(0), rho);
  CellField em = em_cells(s);
  double e = 0.0;
  for (std::size_t k = 0; k < em.values.size(); ++k) {
    double r = em.values[k] - rho.values[k];
    e += r * r;
  }
  return e * std::pow(rho.h, rho.dim());
}

struct SumGradient {
  std::vector<std::vector<double>> f;
  std::vector<std::vector<double>> pi;
};

// Exact gradient: the per-cell determinant is differentiated through its cofactors.
inline SumGradient objective_gradient(const SumState& s, const CellField& rho) {
  const GridField& g0 = s.pi.at(0);
  require_target(g0, rho);
  const int d = g0.dim();
  const double h = g0.h();
  const double hd = std::pow(h, d);
  const auto corners = detail::cell_corners(g0);
  const auto off = detail::corner_offsets(g0);
  CellField em = em_cells(s);
  SumGradient g;
  std::vector<double> jac(d * d), cof(d * d);
  for (std::size_t i = 0; i < s.pi.size(); ++i) {
    g.f.emplace_back(s.f[i].values().size(), 0.0);
    g.pi.emplace_back(s.pi[i].values().size(), 0.0);
    auto& gf = g.f.back();
    auto& gp = g.pi.back();
    for (std::size_t k = 0; k < corners.size(); ++k) {
      const std::size_t n0 = corners[k];
      const double w = 2.0 * (em.values[k] - rho.values[k]) * hd;
      cell_jacobian(s.pi[i], n0, jac.data());
      const double det = determinant(jac.data(), d);
      const double fc = cell_center_value(s.f[i], n0);
      for (std::size_t o : off) gf[n0 + o] += w * det / static_cast<double>(off.size());
      cofactors(jac.data(), d, cof.data());
      for (int a = 0; a < d; ++a) {
        const std::size_t nb = n0 + g0.stride(a);
        for (int j = 0; j < d; ++j) {
          double t = w * fc * cof[j * d + a] / h;
          gp[nb * d + j] += t;
          gp[n0 * d + j] -= t;
        }
      }
    }
  }
  return g;
}

// ---- solving ----

struct SolverConfig {
  double lip_budget = 1.0;      // per component (single) or total S (sums)
  int max_iters = 400;
  double step = 1.0;            // initial step, in preconditioned units
  double step_shrink = 0.5;
  double min_step = 1e-10;
  int lbfgs_memory = 8;         // 0 gives projected gradient descent
  int feasibility_sweeps = 20;  // local cell shrinking before backing off towards the last iterate
  std::uint64_t seed = 1;
  double residual_target = 1e-14;  // stop once the objective drops below this
  double stall_tol = 1e-6;         // relative objective decrease counted as a stall
  int stall_iters = 15;            // stop after this many consecutive stalls
  double init_noise = 0.0;         // uniform perturbation of the initial pi, in units of h
  ProjectionOptions projection;

  void validate() const {
    if (!(lip_budget >= 0) || !std::isfinite(lip_budget)) throw ConfigError("solver: budget must be >= 0");
    if (max_iters < 0) throw ConfigError("solver: max_iters must be >= 0");
    if (!(step > 0) || !(step_shrink > 0 && step_shrink < 1) || !(min_step > 0))
      throw ConfigError("solver: invalid step schedule");
    if (stall_iters < 1 || !(stall_tol >= 0)) throw ConfigError("solver: invalid stall criterion");
    if (lbfgs_memory < 0 || feasibility_sweeps < 0) throw ConfigError("solver: negative memory or sweep count");
    if (!(init_noise >= 0)) throw ConfigError("solver: init_noise must be >= 0");
  }
};

struct SolveResult {
  double residual_l2 = 0.0;   // (sum over cells (Em - rho)^2 h^d)^{1/2}
  double residual_sup = 0.0;  // max over cells |Em - rho|
  std::vector<double> lip_achieved;  // per component, max over terms
  double s_value = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  SumState state;
};

inline std::vector<double> node_values_from_cells(const CellField& rho) {
  GridField g(rho.lo, rho.h, rho.cells, 1);
  std::vector<double> acc(g.node_count(), 0.0), cnt(g.node_count(), 0.0);
  const auto off = detail::corner_offsets(g);
  std::size_t k = 0;
  detail::for_each_cell(g, g.full_box(), [&](const std::vector<int>&, std::size_t corner) {
    for (std::size_t o : off) {
      acc[corner + o] += rho.values[k];
      cnt[corner + o] += 1.0;
    }
    ++k;
  });
  for (std::size_t n = 0; n < acc.size(); ++n) acc[n] /= cnt[n];
  return acc;
}

namespace detail {

inline GridField scaled_identity(const CellField& rho, double s, bool flip) {
  const int d = rho.dim();
  return GridField::sample(rho.lo, rho.h, rho.cells, d, [&](const double* x, double* out) {
    for (int a = 0; a < d; ++a) out[a] = s * x[a];
    if (flip) out[0] = -out[0];
  });
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct Budgets {
  double f = 1.0;   // coefficient norm budget, ignored when f is frozen
  double pi = 1.0;  // per component
};

inline void add_noise(SumState& s, double amplitude, std::uint64_t seed) {
  if (amplitude <= 0) return;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (auto& p : s.pi)
    for (auto& v : p.values()) v += u(rng);
}

// Flattened optimisation variables: every pi_i, then every f_i when f is free.
struct Packing {
  bool free_f = false;

  std::vector<double> pack(const SumState& s) const {
    std::vector<double> x;
    for (const auto& p : s.pi) x.insert(x.end(), p.values().begin(), p.values().end());
    if (free_f)
      for (const auto& f : s.f) x.insert(x.end(), f.values().begin(), f.values().end());
    return x;
  }
  void unpack(const std::vector<double>& x, SumState& s) const {
    std::size_t k = 0;
    for (auto& p : s.pi)
      for (auto& v : p.values()) v = x[k++];
    if (free_f)
      for (auto& f : s.f)
        for (auto& v : f.values()) v = x[k++];
  }
  std::vector<double> pack(const SumGradient& g) const {
    std::vector<double> x;
    for (const auto& p : g.pi) x.insert(x.end(), p.begin(), p.end());
    if (free_f)
      for (const auto& f : g.f) x.insert(x.end(), f.begin(), f.end());
    return x;
  }
};

inline bool feasible(const SumState& s, const Budgets& b, bool free_f, double rel_tol) {
  for (std::size_t i = 0; i < s.pi.size(); ++i) {
    for (double l : lipschitz_constants(s.pi[i]))
      if (l > b.pi * (1.0 + rel_tol)) return false;
    if (free_f && coefficient_norm(s.f[i]) > b.f * (1.0 + rel_tol)) return false;
  }
  return true;
}

// Local repair of a trial point; when that is not enough, bisect on the segment
// from the feasible point `from` (the feasible set is convex).
inline SumState make_feasible(SumState trial, const SumState& from, const Budgets& b, bool free_f,
                              const SolverConfig& cfg) {
  ProjectionOptions local = cfg.projection;
  local.max_sweeps = cfg.feasibility_sweeps;
  const double tol = cfg.projection.rel_tol;
  for (std::size_t i = 0; i < trial.pi.size(); ++i) {
    if (free_f)
      for (auto& v : trial.f[i].values()) v = std::clamp(v, -b.f, b.f);
    shrink_cells(trial.pi[i], std::vector<double>(trial.pi[i].ncomp(), b.pi), local);
    if (free_f) shrink_cells(trial.f[i], std::vector<double>{b.f}, local);
  }
  if (feasible(trial, b, free_f, tol)) return trial;
  Packing pk{free_f};
  auto x0 = pk.pack(from);
  auto x1 = pk.pack(trial);
  double lo = 0.0, hi = 1.0;
  SumState probe = from;
  std::vector<double> x(x0.size());
  for (int it = 0; it < 24; ++it) {
    double t = 0.5 * (lo + hi);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = x0[k] + t * (x1[k] - x0[k]);
    pk.unpack(x, probe);
    if (feasible(probe, b, free_f, tol)) lo = t;
    else hi = t;
  }
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = x0[k] + lo * (x1[k] - x0[k]);
  pk.unpack(x, probe);
  return probe;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline SolveResult run_descent(SumState state, const CellField& rho, const Budgets& budgets, bool free_f,
                               const SolverConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  const int d = rho.dim();
  const double h = rho.h;
  Packing pk{free_f};
  {
    // start from a feasible point
    ProjectionOptions opt = cfg.projection;
    opt.global_fallback = true;
    for (std::size_t i = 0; i < state.pi.size(); ++i) {
      state.pi[i] = project_lipschitz(std::move(state.pi[i]), std::vector<double>(state.pi[i].ncomp(), budgets.pi), opt);
      if (free_f) {
        for (auto& v : state.f[i].values()) v = std::clamp(v, -budgets.f, budgets.f);
        state.f[i] = project_lipschitz(std::move(state.f[i]), std::vector<double>{budgets.f}, opt);
      }
    }
  }
  double E = objective(state, rho);
  if (!std::isfinite(E)) throw NumericalError("solver diverged: objective is not finite");

  // diagonal preconditioner: a unit step moves a cell determinant by about its residual
  const double bpi = std::max(budgets.pi, 1e-3);
  const double pi_scale = std::pow(h, 2 - d) / (2.0 * d * std::pow(bpi, 2 * (d - 1)));
  const double f_scale = 1.0 / (2.0 * std::pow(h, d) * std::pow(bpi, 2 * d));
  std::vector<double> D;
  {
    std::size_t npi = 0, nf = 0;
    for (const auto& p : state.pi) npi += p.values().size();
    if (free_f)
      for (const auto& f : state.f) nf += f.values().size();
    D.assign(npi, pi_scale);
    D.insert(D.end(), nf, f_scale);
  }

  std::vector<std::vector<double>> S_mem, Y_mem;
  std::vector<double> x = pk.pack(state);
  std::vector<double> g = pk.pack(objective_gradient(state, rho));
  int it = 0;
  int stalls = 0;
  for (; it < cfg.max_iters && E > cfg.residual_target && stalls < cfg.stall_iters; ++it) {
    // two-loop recursion with H0 = gamma D
    std::vector<double> q = g;
    const std::size_t m = S_mem.size();
    std::vector<double> alpha(m), rho_k(m);
    for (std::size_t k = m; k-- > 0;) {
      rho_k[k] = 1.0 / dot(Y_mem[k], S_mem[k]);
      alpha[k] = rho_k[k] * dot(S_mem[k], q);
      for (std::size_t n = 0; n < q.size(); ++n) q[n] -= alpha[k] * Y_mem[k][n];
    }
    double gamma = cfg.step;
    if (m > 0) {
      const auto& s = S_mem.back();
      const auto& y = Y_mem.back();
      double ydy = 0.0;
      for (std::size_t n = 0; n < y.size(); ++n) ydy += y[n] * D[n] * y[n];
      gamma = dot(s, y) / ydy;
    }
    for (std::size_t n = 0; n < q.size(); ++n) q[n] *= gamma * D[n];
    for (std::size_t k = 0; k < m; ++k) {
      double beta = rho_k[k] * dot(Y_mem[k], q);
      for (std::size_t n = 0; n < q.size(); ++n) q[n] += S_mem[k][n] * (alpha[k] - beta);
    }
    if (dot(q, g) <= 0) {  // not a descent direction; fall back to the scaled gradient
      S_mem.clear();
      Y_mem.clear();
      for (std::size_t n = 0; n < q.size(); ++n) q[n] = cfg.step * D[n] * g[n];
    }

    bool accepted = false;
    double t = 1.0;
    SumState trial = state;
    double Et = E;
    while (t * cfg.step >= cfg.min_step || (m > 0 && t >= cfg.min_step)) {
      std::vector<double> xt(x.size());
      for (std::size_t n = 0; n < x.size(); ++n) xt[n] = x[n] - t * q[n];
      pk.unpack(xt, trial);
      trial = make_feasible(std::move(trial), state, budgets, free_f, cfg);
      Et = objective(trial, rho);
      if (!std::isfinite(Et)) throw NumericalError("solver diverged: objective is not finite");
      if (Et < E) {
        accepted = true;
        break;
      }
      t *= cfg.step_shrink;
    }
    if (!accepted) {
      if (S_mem.empty()) break;
      S_mem.clear();
      Y_mem.clear();
      continue;
    }
    std::vector<double> xn = pk.pack(trial);
    std::vector<double> gn = pk.pack(objective_gradient(trial, rho));
    std::vector<double> s(x.size()), y(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
      s[n] = xn[n] - x[n];
      y[n] = gn[n] - g[n];
    }
    double sy = dot(s, y);
    if (cfg.lbfgs_memory > 0 && sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      S_mem.push_back(std::move(s));
      Y_mem.push_back(std::move(y));
      if (static_cast<int>(S_mem.size()) > cfg.lbfgs_memory) {
        S_mem.erase(S_mem.begin());
        Y_mem.erase(Y_mem.begin());
      }
    }
    stalls = (E - Et <= cfg.stall_tol * E) ? stalls + 1 : 0;
    state = std::move(trial);
    E = Et;
    x = std::move(xn);
    g = std::move(gn);
  }

  SolveResult res;
  CellField em = em_cells(state);
  for (std::size_t k = 0; k < em.values.size(); ++k)
    res.residual_sup = std::max(res.residual_sup, std::abs(em.values[k] - rho.values[k]));
  res.residual_l2 = std::sqrt(E);
  res.lip_achieved.assign(d, 0.0);
  for (std::size_t i = 0; i < state.pi.size(); ++i) {
    auto l = lipschitz_constants(state.pi[i]);
    double w = coefficient_norm(state.f[i]);
    for (int a = 0; a < d; ++a) {
      res.lip_achieved[a] = std::max(res.lip_achieved[a], l[a]);
      w *= l[a];
    }
    res.s_value += w;
  }
  res.iterations = it;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.state = std::move(state);
  return res;
}

}  // namespace detail

// det D pi ~ rho with Lip(pi^j) <= cfg.lip_budget.
inline SolveResult solve_single(const CellField& rho, const SolverConfig& cfg) {
  cfg.validate();
  for (double v : rho.values)
    if (!std::isfinite(v)) throw NumericalError("target density has non-finite values");
  const int d = rho.dim();
  double mean = detail::mean_of(rho.values);
  double s = std::clamp(std::pow(std::abs(mean), 1.0 / d), 1e-3, std::max(cfg.lip_budget, 1e-3));
  s = std::min(s, cfg.lip_budget);
  SumState st;
  st.pi.push_back(detail::scaled_identity(rho, s, mean < 0));
  st.f.push_back(GridField::sample(rho.lo, rho.h, rho.cells, 1, [](const double*, double* out) { out[0] = 1.0; }));
  detail::add_noise(st, cfg.init_noise * rho.h, cfg.seed);
  return detail::run_descent(std::move(st), rho, {1.0, cfg.lip_budget}, false, cfg);
}

// sum_i f_i det D pi_i ~ rho with max{Lip f_i, |f_i|} <= 1 and Lip(pi_i^j) <= (S/n)^{1/d},
// so that the s-value stays <= S.
inline SolveResult solve_sum(const CellField& rho, int n_terms, double S, const SolverConfig& cfg) {
  cfg.validate();
  if (n_terms < 1) throw ConfigError("solve_sum needs at least one term");
  if (!(S >= 0)) throw ConfigError("solve_sum: S must be >= 0");
  const int d = rho.dim();
  const double b = std::pow(S / n_terms, 1.0 / d);
  auto nodes = node_values_from_cells(rho);
  SumState st;
  double mean_abs_rho = 0.0, mean_abs_f = 0.0;
  for (double v : rho.values) mean_abs_rho += std::abs(v);
  mean_abs_rho /= static_cast<double>(rho.values.size());
  GridField f(rho.lo, rho.h, rho.cells, 1);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    f.at(n) = std::clamp(nodes[n], -1.0, 1.0);
    mean_abs_f += std::abs(f.at(n));
  }
  mean_abs_f /= static_cast<double>(nodes.size());
  double s = mean_abs_f > 0 ? std::pow(mean_abs_rho / (n_terms * mean_abs_f), 1.0 / d) : 0.0;
  s = std::min(s, b);
  for (int i = 0; i < n_terms; ++i) {
    st.f.push_back(f);
    st.pi.push_back(detail::scaled_identity(rho, s, false));
  }
  detail::add_noise(st, cfg.init_noise * rho.h, cfg.seed);
  return detail::run_descent(std::move(st), rho, {1.0, b}, true, cfg);
}

// ---- depth / budget sweep ----

struct SweepConfig {
  HierarchyParams hierarchy{2, 6, 2, 2};
  std::vector<int> depths{0, 1, 2};
  std::vector<double> budgets{1, 2, 4, 8};  // S; per component budget S^{1/d}
  int cells_per_leaf = 4;                   // grid cells per side of a cube of the deepest order
  int window_order = -1;                    // order of the window rectangle; -1: deepest depth - 1
  SolverConfig solver;
  bool record_timing = false;
  int threads = 1;

  void validate() const {
    hierarchy.validate();
    solver.validate();
    if (depths.empty() || budgets.empty()) throw ConfigError("sweep needs at least one depth and one budget");
    for (int k : depths)
      if (k < 0 || k > hierarchy.k_max) throw ConfigError("sweep depth " + std::to_string(k) + " outside [0, k_max]");
    for (double s : budgets)
      if (!(s >= 0) || !std::isfinite(s)) throw ConfigError("sweep budgets must be finite and >= 0");
    if (cells_per_leaf < 1) throw ConfigError("cells_per_leaf must be >= 1");
    if (resolved_window_order() > hierarchy.k_max) throw ConfigError("window order exceeds k_max");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    RationalBox b = window().box();
    Rational h = hierarchy.cube_side(deepest()) / Rational(cells_per_leaf);
    for (int a = 0; a < hierarchy.d; ++a)
      if (!((b.hi[a] - b.lo[a]) / h).is_integer())
        throw ConfigError("sweep window is not a whole number of grid cells; raise cells_per_leaf");
  }

  int deepest() const { return *std::max_element(depths.begin(), depths.end()); }
  int resolved_window_order() const { return window_order >= 0 ? window_order : std::max(0, deepest() - 1); }

  // The first admissible rectangle of the window order: every depth is compared on the same region.
  Rect window() const {
    Rect W = initial_rectangle(hierarchy);
    for (int k = 0; k < resolved_window_order(); ++k) {
      Point z(hierarchy.d, Rational(0));
      W = child_rectangle(hierarchy, subcube(W, 0), z);
    }
    return W;
  }
};

struct SweepRow {
  int k0 = 0;
  double S = 0.0;
  double residual_l2 = 0.0;  // root mean square of det - rho over the window
  double residual_sup = 0.0;
  double lip_achieved = 0.0;
  long violations = 0;
  long pairs_checked = 0;
  int iters = 0;
  double seconds = 0.0;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Exact cell averages of rho over the sweep window.
inline CellField sweep_target(const DensityField& rho, const SweepConfig& cfg) {
  const auto& p = rho.params();
  Rect W = cfg.window();
  Rational h = p.cube_side(cfg.deepest()) / Rational(cfg.cells_per_leaf);
  std::vector<int> cells(p.d);
  for (int a = 0; a < p.d; ++a) {
    Rational n = (W.box().hi[a] - W.box().lo[a]) / h;
    if (!n.is_integer()) throw ConfigError("sweep window is not a whole number of grid cells");
    cells[a] = static_cast<int>(n.to_double());
  }
  return cell_averages(rho, W.box(), cells);
}

// Pairs of order <= k0 inside the window (grid aligned by construction), and how
// many of them have target discrepancy above the sum-estimate bound of the solved
// single-term field.
inline std::pair<long, long> count_violations(const DensityField& rho, int k0, const GridField& pi,
                                              const RationalBox& window) {
  GridField one = GridField::like(pi, 1);
  for (auto& v : one.values()) v = 1.0;
  long checked = 0, violated = 0;
  RegularSum sum;
  sum.sum.add(one, pi);
  sum.L.push_back(lipschitz_constant(pi));
  for (int k = 0; k <= k0; ++k) {
    // pair cubes must span whole cells
    double cells = pi.h() > 0 ? rho.params().cube_side(k).to_double() / pi.h() : 0;
    if (std::abs(cells - std::round(cells)) > 1e-9 || std::round(cells) < 1) continue;
    for_each_rectangle(rho.params(), k, [&](const Rect& R) {
      if (!window.contains(R.box())) return;
      auto W = translation_vectors(sum.sum, R);
      for (int n = 0; n + 1 < R.factor; ++n) {
        AdjacentPair pair = make_adjacent_pair(R, n);
        auto est = sum_estimate_detail(sum, pair, W);
        double target = rho.discrepancy(pair).to_double();
        ++checked;
        if (target > est.report.rhs) ++violated;
      }
    });
  }
  return {checked, violated};
}

inline SweepRow sweep_cell(const SweepConfig& cfg, int k0, double S, std::uint64_t seed) {
  SweepRow row;
  row.k0 = k0;
  row.S = S;
  try {
    DensityField rho = DensityField(cfg.hierarchy).refine_to_depth(k0);
    CellField target = sweep_target(rho, cfg);
    SolverConfig sc = cfg.solver;
    sc.lip_budget = std::pow(S, 1.0 / cfg.hierarchy.d);
    sc.seed = seed;
    SolveResult res = solve_single(target, sc);
    row.residual_l2 = res.residual_l2 / std::sqrt(cfg.window().volume().to_double());
    row.residual_sup = res.residual_sup;
    row.lip_achieved = *std::max_element(res.lip_achieved.begin(), res.lip_achieved.end());
    row.iters = res.iterations;
    row.seconds = res.seconds;
    auto [checked, violated] = count_violations(rho, k0, res.state.pi[0], cfg.window().box());
    row.pairs_checked = checked;
    row.violations = violated;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

inline std::uint64_t derived_seed(std::uint64_t seed, std::size_t cell) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cell)};
  std::uint32_t w[2];
  seq.generate(w, w + 2);
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

inline SweepResult sweep_depth(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<int, double>> cells;
  for (int k : cfg.depths)
    for (double S : cfg.budgets) {
      for (const auto& c : cells)
        if (c.first == k && c.second == S) throw ConfigError("duplicate (depth, budget) in sweep");
      cells.emplace_back(k, S);
    }
  SweepResult out;
  out.rows.resize(cells.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        i = next++;
      }
      out.rows[i] = sweep_cell(cfg, cells[i].first, cells[i].second, derived_seed(cfg.solver.seed, i));
    }
  };
  const int nthreads = std::min<int>(cfg.threads, static_cast<int>(cells.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void write_sweep_csv(const SweepResult& res, const std::string& path, bool record_timing) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "k0,S,residual_l2,residual_sup,lip_achieved,violations,iters,seconds\n";
  for (const auto& r : res.rows) {
    os << r.k0 << "," << format_number(r.S) << ",";
    if (!r.error.empty()) {
      os << "NA,NA,NA,NA,NA,NA\n";
      continue;
    }
    os << format_number(r.residual_l2) << "," << format_number(r.residual_sup) << ","
       << format_number(r.lip_achieved) << "," << r.violations << "," << r.iters << ","
       << (record_timing ? format_number(r.seconds) : std::string("NA")) << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace pje
