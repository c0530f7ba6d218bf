#pragma once

// Experiment commands: each one reads a RunConfig and writes files into a run
// directory together with config.json and manifest.json.

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pje/config.hpp"
#include "pje/density.hpp"
#include "pje/dichotomy.hpp"
#include "pje/estimates.hpp"
#include "pje/lipschitz_sum.hpp"
#include "pje/random_fields.hpp"
#include "pje/solver.hpp"

namespace pje {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfig = 2, kExitIo = 3 };

// ---- hashing and files ----

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << content;
  if (!os) throw IoError("write failed: " + p.string());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

struct CommandResult {
  int exit_code = kExitOk;
  fs::path dir;
  std::vector<std::string> files;  // relative to dir, manifest excluded
  std::string summary;
};

// config.json plus manifest.json with content hashes of every output.
inline void finish_run(CommandResult& res, const std::string& command, const RunConfig& cfg,
                       const std::string& config_source) {
  const std::string echoed = to_json(cfg).dump(2) + "\n";
  write_file(res.dir / "config.json", echoed);
  res.files.push_back("config.json");
  nlohmann::json m;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config_sha256"] = sha256_hex(echoed);
  if (!config_source.empty() && fs::exists(config_source)) {
    m["config_source"] = config_source;
    m["config_source_sha256"] = sha256_file(config_source);
  } else {
    m["config_source"] = "defaults";
  }
  m["exit_code"] = res.exit_code;
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& f : res.files) outs[f] = sha256_file(res.dir / f);
  m["outputs"] = outs;
  write_file(res.dir / "manifest.json", m.dump(2) + "\n");
}

// ---- build-density ----

inline DensityField build_density(const RunConfig& cfg) {
  DensityField rho(cfg.hierarchy, cfg.base());
  return rho.refine_to_depth(cfg.density.depth);
}

inline std::size_t write_discrepancy_table(const DensityField& rho, int k0, const Rational& eps, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "order,rect_id,pair_index,side,integral_left,integral_right,discrepancy,threshold,margin,satisfied\n";
  std::size_t rows = 0;
  for_each_adjacent_pair(rho.params(), k0, [&](const AdjacentPair& p) {
    Rational a = rho.integrate(p.left.box());
    Rational b = rho.integrate(p.right.box());
    Rational disc = abs(a - b);
    Rational thr = constraint_threshold(rho.params(), p.side(), eps);
    os << p.order() << "," << rect_id(p.parent) << "," << p.index << "," << p.side().fraction_str() << ","
       << a.fraction_str() << "," << b.fraction_str() << "," << disc.fraction_str() << "," << thr.fraction_str() << ","
       << (disc - thr).fraction_str() << "," << (disc >= thr ? "true" : "false") << "\n";
    ++rows;
  });
  if (!os) throw IoError("write failed: " + path.string());
  return rows;
}

inline CommandResult cmd_build_density(const RunConfig& cfg, const fs::path& dir, const std::string& config_source = {}) {
  cfg.validate();
  ensure_dir(dir);
  CommandResult res;
  res.dir = dir;
  DensityField rho = build_density(cfg);
  write_file(dir / "density.json", density_to_json(rho).dump(2) + "\n");
  write_density_samples_csv(rho, cfg.density.sample_cells, (dir / "density_samples.csv").string());
  std::size_t rows = write_discrepancy_table(rho, cfg.density.depth, cfg.density.eps, dir / "discrepancy.csv");
  res.files = {"density.json", "density_samples.csv", "discrepancy.csv"};
  res.summary = "density depth " + std::to_string(cfg.density.depth) + ", " + std::to_string(rows) + " pairs";
  finish_run(res, "build-density", cfg, config_source);
  return res;
}

// ---- verify ----

struct VerifyRow {
  std::string suite;
  int trial = 0;
  std::uint64_t seed = 0;
  EstimateReport report;
  double tolerance = 0.0;
  bool pass = true;
};

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"average-det", "coef",        "sum-estimate", "stokes",
                                              "measure",     "discrepancy", "pythagoras"};
  return names;
}

namespace detail {

inline VerifyRow judged(std::string suite, int trial, std::uint64_t seed, EstimateReport rep, double tol) {
  VerifyRow r{std::move(suite), trial, seed, std::move(rep), tol, false};
  r.pass = std::isfinite(r.report.lhs) && std::isfinite(r.report.rhs) && r.report.passes(tol);
  return r;
}

inline GridField affine_field(int d, int n, const std::vector<double>& A, const std::vector<double>& b) {
  return GridField::sample(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), d,
                           [&](const double* x, double* out) {
                             for (int i = 0; i < d; ++i) {
                               out[i] = b[i];
                               for (int a = 0; a < d; ++a) out[i] += A[i * d + a] * x[a];
                             }
                           });
}

inline double det_dense(std::vector<double> A, int d) { return determinant(A.data(), d); }

// Grid resolving every cube of order <= k with `per_cube` cells per side.
inline int aligned_cells(const HierarchyParams& p, int k, int per_cube) {
  long n = p.K * per_cube;
  for (int i = 0; i < k; ++i) n *= static_cast<long>(p.K) * p.M;
  return static_cast<int>(n);
}

inline std::vector<VerifyRow> suite_average_det(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const int d = cfg.hierarchy.d, n = cfg.verify.grid_cells;
  const double h = 1.0 / n, tol = cfg.tolerance.slack_tolerance(h);
  for (int t = 0; t < cfg.verify.trials; ++t) {
    std::uint64_t seed = derived_seed(cfg.seed, t);
    std::mt19937_64 rng(seed);
    GridField pi = random_lipschitz_map(d, n, cfg.verify.lip, rng);
    double amp = std::uniform_real_distribution<double>(1e-3, 0.1)(rng);
    GridField kappa = perturb_map(pi, amp, cfg.verify.lip, rng);
    auto rep = check_average_det(pi, kappa);
    rep.context += " amp=" + std::to_string(amp);
    rows.push_back(judged("average-det", t, seed, rep, tol));
  }
  // affine maps and constant shifts: lhs vanishes
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> A(d * d), b(d), c(d);
  for (auto& v : A) v = u(rng);
  for (auto& v : b) v = u(rng);
  for (auto& v : c) v = u(rng);
  GridField pi = affine_field(d, n, A, b);
  for (int i = 0; i < d; ++i) b[i] += c[i];
  GridField kappa = affine_field(d, n, A, b);
  auto rep = check_average_det(pi, kappa);
  rep.name = "average-det-affine";
  rows.push_back(judged("average-det", cfg.verify.trials, cfg.seed, rep, cfg.tolerance.affine));
  return rows;
}

inline std::vector<VerifyRow> suite_coef(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const int d = cfg.hierarchy.d, n = cfg.verify.grid_cells + cfg.verify.grid_cells % 2;
  const double h = 1.0 / n, tol = cfg.tolerance.slack_tolerance(h);
  for (int t = 0; t < cfg.verify.trials; ++t) {
    std::uint64_t seed = derived_seed(cfg.seed, t);
    std::mt19937_64 rng(seed);
    GridField pi = random_lipschitz_map(d, n, cfg.verify.lip, rng);
    double amp = std::uniform_real_distribution<double>(1e-3, 0.1)(rng);
    GridField kappa = perturb_map(pi, amp, cfg.verify.lip, rng);
    GridField f = random_scalar(d, n, 1.0, rng);
    GridField g = perturb_map(f, amp, 1.0, rng);
    auto rep = check_coef_estimate(f, g, pi, kappa);
    rep.context += " amp=" + std::to_string(amp);
    rows.push_back(judged("coef", t, seed, rep, tol));
  }
  return rows;
}

inline std::vector<VerifyRow> suite_sum_estimate(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const auto& p = cfg.hierarchy;
  const int k = std::min(1, p.k_max);
  const int n = aligned_cells(p, k, 4);
  const int sums = std::max(1, cfg.verify.trials / 10);
  for (int t = 0; t < sums; ++t) {
    std::uint64_t seed = derived_seed(cfg.seed, t);
    std::mt19937_64 rng(seed);
    RegularSum sum = regularize(random_sum(p.d, n, cfg.verify.sum_terms, cfg.verify.lip, rng));
    double L = 0.0;
    for (double l : sum.L) L = std::max(L, l);
    const double tol = cfg.tolerance.slack_tolerance(1.0 / n, L);
    for_each_adjacent_pair(p, k, [&](const AdjacentPair& pair) {
      auto rep = check_sum_estimate(sum, pair, translation_vectors(sum.sum, pair.parent));
      rows.push_back(judged("sum-estimate", t, seed, rep, tol));
    });
  }
  return rows;
}

// Minimum observed order over consecutive halvings of h.
inline double observed_order(const std::vector<double>& errs) {
  double order = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) order = std::min(order, std::log2(errs[i] / errs[i + 1]));
  return order;
}

inline std::vector<VerifyRow> suite_stokes(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const int d = cfg.hierarchy.d;
  const int trials = std::min(cfg.verify.trials, 20);
  for (int t = 0; t < trials; ++t) {
    std::uint64_t seed = derived_seed(cfg.seed, t);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> A(d * d), b(d);
    for (auto& v : A) v = u(rng);
    for (auto& v : b) v = u(rng);
    GridField pi = affine_field(d, cfg.verify.grid_cells, A, b);
    double exact = det_dense(A, d);
    double V = jacobian_det_volume(pi), B = jacobian_det_boundary(pi);
    rows.push_back(judged("stokes", t, seed, {"stokes-affine-volume", std::abs(V - exact), 0.0, "det A"}, cfg.tolerance.affine));
    rows.push_back(judged("stokes", t, seed, {"stokes-affine-boundary", std::abs(B - exact), 0.0, "det A"}, cfg.tolerance.affine));
  }
  // (x1^2, x2, ..., xd): volume and boundary agree within h at each resolution.
  for (int n : {32, 64, 128}) {
    GridField pi = GridField::sample(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), d,
                                     [d](const double* x, double* out) {
                                       out[0] = x[0] * x[0];
                                       for (int a = 1; a < d; ++a) out[a] = x[a];
                                     });
    double e = std::abs(jacobian_det_volume(pi) - jacobian_det_boundary(pi));
    rows.push_back(judged("stokes", n, cfg.seed, {"stokes-square", e, 1.0 / n, "n=" + std::to_string(n)}, 0.0));
  }
  // Convergence order against the analytic integral for pi = (x1^3, x2 + x1 x2^2, x3, ...):
  // det = 3 x1^2 (1 + 2 x1 x2), integral 7/4.
  std::vector<double> ev, eb;
  for (int n : {32, 64, 128}) {
    GridField pi = GridField::sample(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), d,
                                     [d](const double* x, double* out) {
                                       out[0] = x[0] * x[0] * x[0];
                                       out[1] = x[1] + x[0] * x[1] * x[1];
                                       for (int a = 2; a < d; ++a) out[a] = x[a];
                                     });
    ev.push_back(std::abs(jacobian_det_volume(pi) - 1.75));
    eb.push_back(std::abs(jacobian_det_boundary(pi) - 1.75));
  }
  rows.push_back(judged("stokes", 0, cfg.seed, {"stokes-order-volume", 1.0, observed_order(ev), "h=1/32,1/64,1/128"}, 0.0));
  rows.push_back(judged("stokes", 0, cfg.seed, {"stokes-order-boundary", 1.0, observed_order(eb), "h=1/32,1/64,1/128"}, 0.0));
  return rows;
}

inline std::vector<VerifyRow> suite_measure(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const auto& p = cfg.hierarchy;
  const int kmax = std::min(1, p.k_max - 1);
  const Rational frac = Rational(1) - Rational(1) / pow(Rational(p.K), p.d - 1);
  int t = 0;
  for (int k = 0; k <= kmax; ++k)
    for_each_rectangle(p, k, [&](const Rect& R) {
      for (int i = 0; i < p.K; ++i) {
        Cube Q = subcube(R, i);
        Rational bound = Q.volume() * frac;
        Rational unc = uncovered_volume(p, Q);
        VerifyRow row{"measure", t++, 0, {"measure", bound.to_double(), unc.to_double(), rect_id(R) + " i=" + std::to_string(i)}, 0.0, unc >= bound};
        rows.push_back(row);
      }
    });
  return rows;
}

inline std::vector<VerifyRow> suite_discrepancy(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  DensityField rho = build_density(cfg);
  int t = 0;
  for_each_adjacent_pair(cfg.hierarchy, cfg.density.depth, [&](const AdjacentPair& pair) {
    Rational disc = abs(rho.discrepancy(pair));
    Rational thr = constraint_threshold(cfg.hierarchy, pair.side(), cfg.density.eps);
    VerifyRow row{"discrepancy", t++, 0,
                  {"discrepancy", thr.to_double(), disc.to_double(),
                   rect_id(pair.parent) + " n=" + std::to_string(pair.index)},
                  0.0, disc >= thr};
    rows.push_back(row);
  });
  return rows;
}

inline std::vector<VerifyRow> suite_pythagoras(const RunConfig& cfg) {
  std::vector<VerifyRow> rows;
  const auto& p = cfg.hierarchy;
  const int d = p.d;
  const int n = aligned_cells(p, 0, 16);
  const int sums = std::max(1, cfg.verify.trials / 20);
  for (int t = 0; t < sums; ++t) {
    std::uint64_t seed = derived_seed(cfg.seed, t);
    std::mt19937_64 rng(seed);
    RegularSum sum = regularize(random_sum(d, n, cfg.verify.sum_terms, cfg.verify.lip, rng));
    EmbeddedMap h = embed_h(sum);
    for_each_adjacent_pair(p, 0, [&](const AdjacentPair& pair) {
      auto W = translation_vectors(sum.sum, pair.parent);
      const GridField& g0 = sum.sum.term(0).pi;
      PairBoxes pb = locate_pair(g0, pair);
      std::vector<GridField> moved;
      for (std::size_t i = 0; i < sum.size(); ++i) moved.push_back(translated_comparison(sum.sum.term(i).pi, pb, W[i]));
      double worst = 0.0, scale = 1.0;
      std::vector<int> idx;
      for (std::size_t m = 0; m < moved[0].node_count(); ++m) {
        moved[0].unflatten(m, idx);
        std::vector<double> x(d), xt(d);
        std::vector<int> gi(d);
        for (int a = 0; a < d; ++a) {
          gi[a] = pb.left.begin[a] + idx[a];
          x[a] = g0.coord(a, gi[a]);
          xt[a] = x[a] + to_doubles(pair.tau)[a];
        }
        std::size_t node = g0.flatten(gi);
        // lhs: sum_i L_i^{d-2} |pi_i(x) - pi~_i(x)|^2 from the grids
        double lhs = 0.0;
        for (std::size_t i = 0; i < sum.size(); ++i) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) {
            double diff = sum.sum.term(i).pi.at(node, j) - moved[i].at(m, j);
            s += diff * diff;
          }
          lhs += std::pow(sum.L[i], d - 2) * s;
        }
        // rhs: |h(x + tau) - h(x) - (tau, L_i^{d/2-1} W_i)|^2 through the embedding
        auto hx = h(x), ht = h(xt);
        double rhs = 0.0;
        for (int a = 0; a < d; ++a) rhs += std::pow(ht[a] - hx[a] - (xt[a] - x[a]), 2);
        for (std::size_t i = 0; i < sum.size(); ++i)
          for (int j = 0; j < d; ++j) {
            std::size_t c = d + d * i + j;
            double w = sum.L[i] > 0 ? std::pow(sum.L[i], d / 2.0 - 1.0) * W[i][j] : 0.0;
            rhs += std::pow(ht[c] - hx[c] - w, 2);
          }
        worst = std::max(worst, std::abs(lhs - rhs));
        scale = std::max(scale, lhs);
      }
      rows.push_back(judged("pythagoras", t, seed,
                            {"pythagoras", worst, 0.0, rect_id(pair.parent) + " n=" + std::to_string(pair.index)},
                            1e-12 * scale));
    });
  }
  return rows;
}

}  // namespace detail

inline std::vector<VerifyRow> run_suite(const RunConfig& cfg, const std::string& suite) {
  cfg.validate();
  if (suite == "average-det") return detail::suite_average_det(cfg);
  if (suite == "coef") return detail::suite_coef(cfg);
  if (suite == "sum-estimate") return detail::suite_sum_estimate(cfg);
  if (suite == "stokes") return detail::suite_stokes(cfg);
  if (suite == "measure") return detail::suite_measure(cfg);
  if (suite == "discrepancy") return detail::suite_discrepancy(cfg);
  if (suite == "pythagoras") return detail::suite_pythagoras(cfg);
  std::string known;
  for (const auto& s : verify_suites()) known += (known.empty() ? "" : ", ") + s;
  throw ConfigError("unknown suite '" + suite + "' (known: " + known + ")");
}

inline void write_verify_csv(const std::vector<VerifyRow>& rows, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "suite,trial,seed,name,lhs,rhs,slack,tolerance,pass,context\n";
  os << std::setprecision(12);
  for (const auto& r : rows)
    os << r.suite << "," << r.trial << "," << r.seed << "," << r.report.name << "," << r.report.lhs << ","
       << r.report.rhs << "," << r.report.slack() << "," << r.tolerance << "," << (r.pass ? "true" : "false") << ",\""
       << r.report.context << "\"\n";
  if (!os) throw IoError("write failed: " + path.string());
}

// suite "all" runs every suite into one CSV.
inline CommandResult cmd_verify(const RunConfig& cfg, const std::string& suite, const fs::path& dir,
                                const std::string& config_source = {}) {
  cfg.validate();
  std::vector<std::string> suites;
  if (suite == "all")
    suites = verify_suites();
  else
    suites = {suite};
  std::vector<VerifyRow> rows;
  for (const auto& s : suites) {
    auto r = run_suite(cfg, s);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  ensure_dir(dir);
  CommandResult res;
  res.dir = dir;
  const std::string name = "verify_" + suite + ".csv";
  write_verify_csv(rows, dir / name);
  res.files = {name};
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.pass ? 0 : 1;
  res.exit_code = failed ? kExitVerifyFailed : kExitOk;
  res.summary = suite + ": " + std::to_string(rows.size() - failed) + "/" + std::to_string(rows.size()) + " passed";
  finish_run(res, "verify " + suite, cfg, config_source);
  return res;
}

// ---- classify ----

inline CommandResult cmd_classify(const RunConfig& cfg, const fs::path& dir, const std::string& config_source = {}) {
  cfg.validate();
  const int d = cfg.hierarchy.d;
  std::mt19937_64 rng(cfg.seed);
  RegularSum sum;
  EmbeddedMap h = identity_map<double>(d);
  if (cfg.classify.map == "affine") {
    // x -> (x, B x + b): injective, with lower stretch 1
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> A(2 * d * d, 0.0), b(2 * d, 0.0);
    double frob = 0.0;
    for (int i = 0; i < d; ++i) A[i * d + i] = 1.0;
    for (int i = d; i < 2 * d; ++i) {
      for (int a = 0; a < d; ++a) {
        A[i * d + a] = u(rng);
        frob += A[i * d + a] * A[i * d + a];
      }
      b[i] = u(rng);
    }
    h = affine_map<double>(d, A, b);
    h.upper = std::sqrt(1.0 + frob);
  } else if (cfg.classify.map == "random-sum") {
    sum = regularize(random_sum(d, cfg.classify.grid_cells, cfg.classify.terms, 1.0, rng));
    h = embed_h(sum);
  }
  auto verdicts = classify_all(h, cfg.hierarchy, cfg.dichotomy);
  ensure_dir(dir);
  CommandResult res;
  res.dir = dir;
  write_classification_csv(verdicts, (dir / "classification.csv").string());
  nlohmann::json s;
  std::map<std::string, int> counts;
  for (const auto& v : verdicts) counts[status_name(v.status())]++;
  s["map"] = cfg.classify.map;
  s["rectangles"] = verdicts.size();
  s["counts"] = counts;
  s["biLipschitz_upper"] = h.upper;
  try {
    auto good = find_good_rectangle(h, cfg.hierarchy, cfg.dichotomy);
    s["good_rectangle"] = rect_id(good.verdict.rect);
    s["good_rectangle_witness"] = *good.verdict.p1.witness;
  } catch (const DichotomyError& e) {
    s["good_rectangle"] = nullptr;
    s["good_rectangle_error"] = e.what();
  }
  write_file(dir / "classification_summary.json", s.dump(2) + "\n");
  res.files = {"classification.csv", "classification_summary.json"};
  res.summary = std::to_string(verdicts.size()) + " rectangles classified";
  finish_run(res, "classify", cfg, config_source);
  return res;
}

// ---- sweep ----

inline SweepConfig effective_sweep(const RunConfig& cfg) {
  SweepConfig sc = cfg.sweep;
  sc.solver.seed = cfg.seed;
  sc.threads = cfg.threads;
  return sc;
}

inline CommandResult cmd_sweep(const RunConfig& cfg, const fs::path& dir, const std::string& config_source = {}) {
  cfg.validate();
  SweepConfig sc = effective_sweep(cfg);
  SweepResult out = sweep_depth(sc);
  ensure_dir(dir);
  CommandResult res;
  res.dir = dir;
  write_sweep_csv(out, (dir / "sweep.csv").string(), sc.record_timing);
  res.files = {"sweep.csv"};
  std::size_t errors = 0;
  for (const auto& r : out.rows) errors += r.error.empty() ? 0 : 1;
  res.summary = std::to_string(out.rows.size()) + " sweep cells, " + std::to_string(errors) + " failed";
  finish_run(res, "sweep", cfg, config_source);
  return res;
}

// ---- report-data ----

// Density and classification outputs for plotting, plus an index of the CSV
// schemas. The sweep CSV comes from the sweep command.
inline CommandResult cmd_report_data(const RunConfig& cfg, const fs::path& dir, const std::string& config_source = {}) {
  cfg.validate();
  ensure_dir(dir);
  CommandResult res;
  res.dir = dir;
  DensityField rho = build_density(cfg);
  write_density_samples_csv(rho, cfg.density.sample_cells, (dir / "density_samples.csv").string());
  write_discrepancy_table(rho, cfg.density.depth, cfg.density.eps, dir / "discrepancy.csv");
  const int d = cfg.hierarchy.d;
  auto verdicts = classify_all(identity_map<double>(d), cfg.hierarchy, cfg.dichotomy);
  write_classification_csv(verdicts, (dir / "classification.csv").string());
  nlohmann::json index;
  index["density_samples.csv"] = {{"columns", "x1..xd,value"}, {"grid", cfg.density.sample_cells},
                                  {"params", cfg.hierarchy}, {"depth", cfg.density.depth}};
  index["discrepancy.csv"] = {{"columns", "order,rect_id,pair_index,side,integral_left,integral_right,discrepancy,"
                                          "threshold,margin,satisfied"}};
  index["classification.csv"] = {{"columns", "order,rect_id,property1_witness,property1_margin,property2_witness,A_h,status"}};
  index["sweep.csv"] = {{"columns", "k0,S,residual_l2,residual_sup,lip_achieved,violations,iters,seconds"},
                        {"produced_by", "sweep"}};
  write_file(dir / "report_index.json", index.dump(2) + "\n");
  res.files = {"density_samples.csv", "discrepancy.csv", "classification.csv", "report_index.json"};
  res.summary = "report data written";
  finish_run(res, "report-data", cfg, config_source);
  return res;
}

}  // namespace pje
