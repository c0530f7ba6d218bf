#include <gtest/gtest.h>

#include <random>

#include "pje/density.hpp"

using namespace pje;

namespace {

Rational q(long a, long b = 1) { return Rational(a, b); }

// Independent point evaluation at an exact interior point: scan every
// rectangle of every refined order; deeper orders override shallower ones.
int oracle_value(const HierarchyParams& p, const std::set<int>& orders, const Point& x) {
  int v = 1;
  for (int k : orders)
    for (const Rect& R : enumerate_rectangles(p, k)) {
      RationalBox b = R.box();
      bool inside = true;
      for (int a = 0; a < p.d; ++a) inside = inside && b.lo[a] < x[a] && x[a] < b.hi[a];
      if (!inside) continue;
      int i = static_cast<int>(floor_to_integer((x[0] - R.p[0]) / R.short_side()).to_double());
      v = (i % 2 == 0) ? 1 : 2;
    }
  return v;
}

// Integral over box by summing exact cell overlaps on the grid of step g.
Rational oracle_integral(const HierarchyParams& p, const std::set<int>& orders, const RationalBox& box,
                         const Rational& g) {
  const int d = p.d;
  std::vector<int> lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = static_cast<int>(floor_to_integer(box.lo[a] / g).to_double());
    hi[a] = static_cast<int>(-floor_to_integer(-(box.hi[a] / g)).to_double());
  }
  Rational total(0);
  std::vector<int> idx(lo);
  while (true) {
    RationalBox cell{Point(d), Point(d)};
    Point c(d);
    for (int a = 0; a < d; ++a) {
      cell.lo[a] = g * Rational(idx[a]);
      cell.hi[a] = g * Rational(idx[a] + 1);
      c[a] = g * Rational(2 * idx[a] + 1, 2);
    }
    Rational ov = intersection_volume(box, cell);
    if (ov != Rational(0)) total += Rational(oracle_value(p, orders, c)) * ov;
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < hi[a]) break;
      idx[a] = lo[a];
    }
    if (a < 0) break;
  }
  return total;
}

}  // namespace

TEST(Density, RefineOrderZeroSmall) {
  HierarchyParams p(2, 2, 2, 1);
  DensityField rho = DensityField(p).refine_at_order(0);
  Rect R0 = initial_rectangle(p);
  EXPECT_EQ(rho.integrate(subcube(R0, 0).box()), subcube(R0, 0).volume());
  EXPECT_EQ(rho.integrate(subcube(R0, 1).box()), q(1, 2));
  std::vector<double> out{0.5, 0.8};
  EXPECT_EQ(rho.value_at(out), 1.0);
  std::vector<double> in1{0.75, 0.2};
  EXPECT_EQ(rho.value_at(in1), 2.0);
  EXPECT_THROW(rho.refine_at_order(0), ConfigError);
  EXPECT_THROW(DensityField(p).refine_at_order(2), RangeError);
}

TEST(Density, RefineToDepthZeroMatchesSingleStep) {
  HierarchyParams p(2, 6, 4, 2);
  auto a = DensityField(p).refine_to_depth(0);
  auto b = DensityField(p).refine_at_order(0);
  for (const auto& pr : enumerate_adjacent_pairs(p, 1)) {
    EXPECT_EQ(a.integrate(pr.left.box()), b.integrate(pr.left.box()));
  }
}

TEST(Density, MeasureOfValueTwo) {
  // K=2: {rho = 2} is Q(R0,1), volume 1/4; integral of rho - 1 over [0,1]^2 equals it.
  HierarchyParams p(2, 2, 2, 1);
  DensityField rho = DensityField(p).refine_to_depth(0);
  EXPECT_EQ(rho.integrate(unit_box(2)) - Rational(1), q(1, 4));
}

TEST(Density, ConstantField) {
  HierarchyParams p(2, 6, 4, 2);
  DensityField rho(p);
  EXPECT_EQ(rho.integrate(unit_box(2)), q(1));
  for (const auto& pr : enumerate_adjacent_pairs(p, 1)) EXPECT_EQ(rho.discrepancy(pr), q(0));
  EXPECT_THROW(rho.integrate(RationalBox{{q(0), q(0)}, {q(2), q(1)}}), RangeError);
}

TEST(Density, CubeIntegralMatchesCellOracle) {
  HierarchyParams p(2, 6, 4, 2);
  DensityField rho = DensityField(p).refine_to_depth(1);
  Cube Q = subcube(initial_rectangle(p), 0);
  Rational got = rho.integrate(Q.box());
  EXPECT_EQ(got, oracle_integral(p, {0, 1}, Q.box(), p.cube_side(1)));
  EXPECT_EQ(got, q(13, 432));
}

TEST(Density, DeepRefinementMatchesOracleOnRandomBoxes) {
  HierarchyParams p(2, 3, 2, 2);
  DensityField rho = DensityField(p).refine_to_depth(2);
  const Rational g = p.cube_side(2);  // 1/108
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> u(0, 216);
  for (int t = 0; t < 12; ++t) {
    int a = u(rng), b = u(rng), c = u(rng), e = u(rng);
    if (a == b || c == e) continue;
    RationalBox box{{q(std::min(a, b), 216), q(std::min(c, e), 216)}, {q(std::max(a, b), 216), q(std::max(c, e), 216)}};
    EXPECT_EQ(rho.integrate(box), oracle_integral(p, {0, 1, 2}, box, g)) << t;
  }
}

TEST(Density, AdditiveOverRandomPartitions) {
  HierarchyParams p(2, 6, 4, 2);
  DensityField rho = DensityField(p).refine_to_depth(2);
  std::mt19937 rng(3);
  std::uniform_int_distribution<long> u(1, 999);
  for (int t = 0; t < 10; ++t) {
    Rational sx(u(rng), 1000), sy(u(rng), 1000);
    Rational whole = rho.integrate(unit_box(2));
    Rational parts = rho.integrate({{q(0), q(0)}, {sx, sy}}) + rho.integrate({{sx, q(0)}, {q(1), sy}}) +
                     rho.integrate({{q(0), sy}, {sx, q(1)}}) + rho.integrate({{sx, sy}, {q(1), q(1)}});
    EXPECT_EQ(whole, parts);
  }
}

TEST(Density, DifferencesOfNeighboursExact) {
  for (int k0 = 0; k0 <= 2; ++k0) {
    HierarchyParams p(2, 6, 4, 2);
    DensityField rho = DensityField(p).refine_to_depth(k0);
    const Rational frac = Rational(1) - Rational(5, 6);
    std::size_t n = 0;
    for_each_adjacent_pair(p, k0, [&](const AdjacentPair& pr) {
      EXPECT_GE(rho.discrepancy(pr), pr.side() * pr.side() * frac);
      ++n;
    });
    EXPECT_EQ(n, k0 == 0 ? 5u : k0 == 1 ? 485u : 485u + 9216u * 5u);
  }
}

TEST(Density, TwoValuedInsideRefinedRectangles) {
  HierarchyParams p(2, 6, 4, 1);
  DensityField rho = DensityField(p).refine_to_depth(1);
  for (const Rect& R : enumerate_rectangles(p, 1))
    for (int i = 0; i < p.K; ++i) {
      Cube Q = subcube(R, i);
      EXPECT_EQ(rho.integrate(Q.box()), Rational(DensityField::parity_value(i)) * Q.volume());
    }
}

TEST(Density, RegionChangedByRefinementIsInitialRectangle) {
  for (int K : {2, 4, 8}) {
    HierarchyParams p(2, K, 2, 1);
    DensityField rho = DensityField(p).refine_to_depth(1);
    // rho - 1 is 1 exactly on the odd cubes; all changes lie in R0 of volume 1/K
    Rational changed = rho.integrate(unit_box(2)) - Rational(1);
    EXPECT_LE(changed, initial_rectangle(p).volume());
    EXPECT_EQ(initial_rectangle(p).volume(), Rational(1, K));
  }
}

TEST(Density, MollifierProperties) {
  HierarchyParams p(2, 6, 4, 1);
  DensityField one(p);
  GridField g = mollify_to_grid(one, 0.05, 40);
  std::vector<int> idx;
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    g.unflatten(n, idx);
    bool interior = true;
    for (int a = 0; a < 2; ++a) interior = interior && idx[a] >= 2 && idx[a] <= 38;
    if (interior) {
      EXPECT_NEAR(g.at(n), 1.0, 1e-12);
    }
  }
  DensityField rho = DensityField(p).refine_to_depth(1);
  GridField m = mollify_to_grid(rho, 0.01, 72);
  for (double v : m.values()) EXPECT_LE(v, 2.0 + 1e-12);
}

TEST(Density, MollifierConvergesOnCube) {
  HierarchyParams p(2, 6, 4, 1);
  DensityField rho = DensityField(p).refine_to_depth(1);
  Cube Q = subcube(initial_rectangle(p), 1);
  const int n = 1440;  // 240 cells per side of Q
  GridField m = mollify_to_grid(rho, 1e-3, n, 6);
  // midpoint-in-node rule over Q's nodes
  GridBox box = m.locate(to_doubles(Q.box().lo), to_doubles(Q.box().hi));
  double s = 0.0;
  detail::for_each_cell(m, box, [&](const std::vector<int>&, std::size_t corner) {
    double c = 0.0;
    for (std::size_t off : {std::size_t(0), m.stride(0), m.stride(1), m.stride(0) + m.stride(1)}) c += m.at(corner + off);
    s += 0.25 * c;
  });
  s *= m.h() * m.h();
  EXPECT_NEAR(s, rho.integrate(Q.box()).to_double(), 1e-2);
}

TEST(Density, ConstraintSets) {
  HierarchyParams p(2, 6, 4, 1);
  DensityField rho = DensityField(p).refine_to_depth(0);
  auto set = build_constraint_set(rho, 0, q(1, 2));
  ASSERT_EQ(set.constraints.size(), 5u);
  for (const auto& c : set.constraints) EXPECT_LT(c.threshold, q(0));

  HierarchyParams big(2, 60, 2, 0);
  auto r60 = DensityField(big).refine_to_depth(0);
  auto s60 = build_constraint_set(r60, 0, q(1, 10));
  Rational side = big.cube_side(0);
  for (const auto& c : s60.constraints) EXPECT_EQ(c.threshold, side * side * q(49, 60));

  for (int k0 : {0, 1}) {
    auto r = DensityField(p).refine_to_depth(k0);
    auto s = build_constraint_set(r, k0, q(1, 100));
    EXPECT_TRUE(s.satisfied_by(r));
    EXPECT_GT(s.min_margin(r), q(0));
  }
  EXPECT_THROW(build_constraint_set(rho, 1, q(0)), ConfigError);
}

TEST(Density, BaseFieldValidation) {
  HierarchyParams p(2, 6, 4, 1);
  EXPECT_THROW(DensityField(p, BaseField::constant(2, q(3))), ConfigError);
  BaseField b{2, 2, {q(1), q(-1), q(2), q(0)}};
  DensityField rho(p, b);
  EXPECT_EQ(rho.integrate(unit_box(2)), q(1, 2));
}

TEST(Density, JsonAndSamples) {
  HierarchyParams p(2, 6, 4, 1);
  DensityField rho = DensityField(p).refine_to_depth(1);
  auto j = density_to_json(rho);
  EXPECT_EQ(j["refined_orders"].size(), 2u);
  EXPECT_TRUE(j.contains("cells"));
  auto path = std::filesystem::temp_directory_path() / "pje_density_samples.csv";
  write_density_samples_csv(rho, 12, path.string());
  std::ifstream is(path);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 1 + 144);
}
