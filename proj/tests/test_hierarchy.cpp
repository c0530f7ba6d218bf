#include <gtest/gtest.h>

#include <map>
#include <set>

#include "pje/hierarchy.hpp"

using namespace pje;

namespace {

HierarchyParams hp(int d, int K, int M, int k_max) {
  HierarchyParams p;
  p.d = d;
  p.K = K;
  p.M = M;
  p.k_max = k_max;
  return p;
}

Rational q(long a, long b = 1) { return Rational(a, b); }

}  // namespace

TEST(Rational, ArithmeticStaysCanonical) {
  Rational a(6, 4), b(-1, 3);
  EXPECT_EQ((a + b).fraction_str(), "7/6");
  EXPECT_EQ((a - b).fraction_str(), "11/6");
  EXPECT_EQ((a * b).fraction_str(), "-1/2");
  EXPECT_EQ((a / b).fraction_str(), "-9/2");
  EXPECT_EQ((-b).fraction_str(), "1/3");
  EXPECT_EQ(Rational(2, 4) + Rational(1, 2), Rational(1));
  Rational acc(1, 6);
  acc.add_mul(a, b);
  EXPECT_EQ(acc, Rational(1, 6) + a * b);
  EXPECT_EQ(acc.fraction_str(), "-1/3");
  EXPECT_THROW(a / Rational(0), NumericalError);
}

TEST(Hierarchy, ReferenceLatticeSmall) {
  auto L = reference_lattice(hp(2, 2, 2, 1));
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& z : L) got.insert({z[0].str(), z[1].str()});
  std::set<std::pair<std::string, std::string>> want{{"0", "0"}, {"0", "1/2"}, {"1/2", "0"}, {"1/2", "1/2"}};
  EXPECT_EQ(got, want);
}

TEST(Hierarchy, ReferenceLatticeThreeD) {
  auto L = reference_lattice(hp(3, 2, 4, 1));
  ASSERT_EQ(L.size(), 64u);
  Rational lo = L[0][0], hi = L[0][0];
  for (const auto& z : L)
    for (const auto& c : z) lo = min(lo, c), hi = max(hi, c);
  EXPECT_EQ(lo, q(0));
  EXPECT_EQ(hi, q(3, 4));
}

TEST(Hierarchy, InvalidParamsRejected) {
  EXPECT_THROW(hp(2, 2, 1, 1).validate(), ConfigError);
  EXPECT_THROW(hp(1, 2, 2, 1).validate(), ConfigError);
  EXPECT_THROW(hp(2, 1, 2, 1).validate(), ConfigError);
  EXPECT_THROW(reference_lattice(hp(2, 2, 1, 1)), ConfigError);
}

TEST(Hierarchy, SubcubeFormula) {
  auto p = hp(2, 4, 2, 1);
  Rect R0 = initial_rectangle(p);
  EXPECT_EQ(R0.c, q(1));
  EXPECT_EQ(R0.short_side(), q(1, 4));
  Cube Q0 = subcube(R0, 0);
  EXPECT_EQ(Q0.p, (Point{q(0), q(0)}));
  EXPECT_EQ(Q0.r, q(1, 4));
  EXPECT_EQ(Q0.order, 0);
  Cube Q3 = subcube(R0, 3);
  EXPECT_EQ(Q3.p, (Point{q(3, 4), q(0)}));
  EXPECT_EQ(Q3.box().hi, (Point{q(1), q(1, 4)}));
  EXPECT_THROW(subcube(R0, 4), RangeError);
  EXPECT_THROW(subcube(R0, -1), RangeError);
}

TEST(Hierarchy, SubcubesPartitionRectangle) {
  auto p = hp(2, 5, 3, 1);
  for (const Rect& R : enumerate_rectangles(p, 1)) {
    Rational total(0);
    for (int i = 0; i < p.K; ++i) {
      total += subcube(R, i).volume();
      for (int j = i + 1; j < p.K; ++j)
        EXPECT_EQ(intersection_volume(subcube(R, i).box(), subcube(R, j).box()), q(0));
      EXPECT_TRUE(R.box().contains(subcube(R, i).box()));
    }
    EXPECT_EQ(total, R.volume());
  }
}

TEST(Hierarchy, ChildRectangle) {
  auto p = hp(2, 2, 2, 2);
  Cube Q{{q(0), q(0)}, q(1, 2), 0};
  Rect R = child_rectangle(p, Q, {q(0), q(0)});
  EXPECT_EQ(R.p, (Point{q(0), q(0)}));
  EXPECT_EQ(R.c, q(1, 4));
  EXPECT_EQ(R.short_side(), q(1, 8));
  EXPECT_EQ(R.order, 1);
  for (const auto& z : reference_lattice(p)) {
    Rect C = child_rectangle(p, Q, z);
    EXPECT_TRUE(Q.box().contains(C.box()));
    // (r/(MK))^{d-1} (r/M)
    EXPECT_EQ(C.volume(), q(1, 8) * q(1, 4));
  }
  EXPECT_THROW(child_rectangle(p, Q, {q(1, 3), q(0)}), RangeError);
}

TEST(Hierarchy, RectangleCounts) {
  EXPECT_EQ(enumerate_rectangles(hp(2, 2, 2, 1), 0).size(), 1u);
  EXPECT_EQ(enumerate_rectangles(hp(2, 2, 2, 1), 1).size(), 8u);
  std::size_t n = 0;
  for_each_rectangle(hp(2, 6, 4, 2), 2, [&](const Rect&) { ++n; });
  EXPECT_EQ(n, 9216u);  // (K M^d)^2
  EXPECT_THROW(enumerate_rectangles(hp(2, 2, 2, 1), 2), RangeError);
}

TEST(Hierarchy, RectangleSidesByOrder) {
  auto p = hp(2, 3, 2, 2);
  for (int k = 0; k <= 2; ++k)
    for (const Rect& R : enumerate_rectangles(p, k)) {
      EXPECT_EQ(R.c, Rational(1) / pow(q(6), k));
      EXPECT_EQ(subcube(R, 0).r, Rational(1) / (q(3) * pow(q(6), k)));
      EXPECT_EQ(R.factor, 3);
    }
}

TEST(Hierarchy, EnumerationHasNoDuplicates) {
  auto p = hp(2, 3, 3, 2);
  std::set<std::string> ids;
  std::size_t n = 0;
  for_each_rectangle(p, 2, [&](const Rect& R) {
    ids.insert(rect_id(R));
    ++n;
  });
  EXPECT_EQ(ids.size(), n);
  EXPECT_EQ(n, static_cast<std::size_t>(27 * 27));
}

// Brute-force nesting: each order-(k+1) rectangle lies in exactly one order-k
// cube, found by scanning all of them.
TEST(Hierarchy, NestingByEnumeration) {
  auto p = hp(2, 3, 2, 2);
  for (int k = 0; k < 2; ++k) {
    std::vector<Cube> cubes;
    std::vector<Rect> parents;
    for (const Rect& R : enumerate_rectangles(p, k))
      for (int i = 0; i < p.K; ++i) cubes.push_back(subcube(R, i)), parents.push_back(R);
    for (const Rect& C : enumerate_rectangles(p, k + 1)) {
      int in_cubes = 0, in_rects = 0;
      for (const auto& Q : cubes) in_cubes += Q.box().contains(C.box());
      for (const auto& R : enumerate_rectangles(p, k)) in_rects += R.box().contains(C.box());
      EXPECT_EQ(in_cubes, 1);
      EXPECT_EQ(in_rects, 1);
    }
  }
}

TEST(Hierarchy, AdjacentPairs) {
  EXPECT_EQ(enumerate_adjacent_pairs(hp(2, 2, 2, 1), 0).size(), 1u);
  auto pairs = enumerate_adjacent_pairs(hp(2, 6, 4, 2), 1);
  EXPECT_EQ(pairs.size(), 485u);
  for (const auto& pr : pairs) {
    Point diff(2);
    for (int a = 0; a < 2; ++a) diff[a] = pr.right.p[a] - pr.left.p[a];
    EXPECT_EQ(diff, (Point{pr.side(), q(0)}));
    EXPECT_EQ(pr.tau, diff);
    EXPECT_EQ(pr.left.p, subcube(pr.parent, pr.index).p);
    EXPECT_EQ(pr.right.p, subcube(pr.parent, pr.index + 1).p);
  }
  EXPECT_THROW(make_adjacent_pair(initial_rectangle(hp(2, 6, 4, 2)), 5), RangeError);
}

// Measure bound with exact arithmetic, and an independent recount of the
// covered volume by direct summation of child volumes.
TEST(Hierarchy, MeasureBoundExact) {
  for (auto p : {hp(2, 6, 4, 2), hp(2, 3, 2, 2), hp(3, 2, 2, 1)}) {
    const Rational frac = Rational(1) - Rational(1) / pow(Rational(p.K), p.d - 1);
    for (int k = 0; k < std::min(2, p.k_max); ++k)
      for (const Rect& R : enumerate_rectangles(p, k))
        for (int i = 0; i < p.K; ++i) {
          Cube Q = subcube(R, i);
          Rational unc = uncovered_volume(p, Q);
          EXPECT_GE(unc, Q.volume() * frac);
          Rational covered(0);
          for (const auto& z : reference_lattice(p)) covered += child_rectangle(p, Q, z).volume();
          EXPECT_EQ(unc, Q.volume() - covered);
        }
  }
}

TEST(Hierarchy, DenominatorsDivideFinestScale) {
  auto p = hp(2, 3, 2, 2);
  mpz_class fine = 3 * 6 * 6;
  for (int k = 0; k <= 2; ++k)
    for (const Rect& R : enumerate_rectangles(p, k))
      for (const auto& c : R.p) EXPECT_EQ(mpz_class(fine % c.denominator()), 0);
}

TEST(Hierarchy, JsonRoundTrip) {
  auto p = hp(3, 4, 2, 2);
  nlohmann::json j = p;
  EXPECT_EQ(j.get<HierarchyParams>().K, 4);
  Cube Q = subcube(enumerate_rectangles(p, 1)[5], 2);
  nlohmann::json jq = Q;
  Cube back = jq.get<Cube>();
  EXPECT_EQ(back.p, Q.p);
  EXPECT_EQ(back.r, Q.r);
  EXPECT_EQ(back.order, Q.order);
  EXPECT_TRUE(jq["r"].get<std::string>().find('/') != std::string::npos);
}
