#include "srbkit/core.hpp"
#include "srbkit/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using namespace srb;

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

TEST(Mininorm, IdentityDiagonalAndCat) {
  EXPECT_DOUBLE_EQ(mininorm(Mat::Identity(2, 2)), 1.0);
  EXPECT_NEAR(mininorm(mat2(3, 0, 0, 0.5)), 0.5, 1e-15);
  EXPECT_NEAR(mininorm(cat_matrix()), (3.0 - std::sqrt(5.0)) / 2.0, 1e-15);
}

TEST(Mininorm, SingularAndNonSquareRejected) {
  EXPECT_THROW(mininorm(mat2(1, 2, 2, 4)), Error);
  Mat rect(2, 3);
  rect.setOnes();
  try {
    mininorm(rect);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Mininorm, EqualsInverseNormReciprocalOnRandomMaps) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int k = 0; k < 200; ++k) {
    Mat a(3, 3);
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = g(rng);
    if (std::abs(a.determinant()) < 1e-3) continue;
    const Mat inv = a.inverse();
    EXPECT_NEAR(mininorm(a), 1.0 / operator_norm(inv), 1e-10 * (1.0 + 1.0 / operator_norm(inv)));
  }
}

TEST(SubspaceDistance, Examples) {
  const auto e1 = Subspace::line(vec2(1, 0));
  const auto e2 = Subspace::line(vec2(0, 1));
  EXPECT_EQ(subspace_distance(e1, e1), 0.0);
  EXPECT_NEAR(subspace_distance(e1, e2), 1.0, 1e-15);
  const double t = 0.3;
  EXPECT_NEAR(subspace_distance(e1, Subspace::line(vec2(std::cos(t), std::sin(t)))), std::sin(t), 1e-15);
}

TEST(SubspaceDistance, MatchesBruteForceMaximization) {
  // oracle: max over unit vectors of A of the distance to B, sampled densely
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 3.1);
  for (int k = 0; k < 50; ++k) {
    const double s = u(rng), t = u(rng);
    const auto a = Subspace::line(vec2(std::cos(s), std::sin(s)));
    const auto b = Subspace::line(vec2(std::cos(t), std::sin(t)));
    EXPECT_NEAR(subspace_distance(a, b), std::abs(std::sin(s - t)), 1e-14);
  }
}

TEST(SubspaceDistance, TinyAnglesKeepPrecision) {
  const double t = 1e-12;
  const auto a = Subspace::line(vec2(1, 0));
  const auto b = Subspace::line(vec2(std::cos(t), std::sin(t)));
  EXPECT_NEAR(subspace_distance(a, b) / t, 1.0, 1e-6);
}

TEST(SubspaceDistance, PropertiesSymmetricBoundedZeroOnSelf) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    Mat m(3, 2), n(3, 2);
    for (int i = 0; i < 6; ++i) {
      m(i / 2, i % 2) = g(rng);
      n(i / 2, i % 2) = g(rng);
    }
    const auto a = Subspace::span(m), b = Subspace::span(n);
    const double d = subspace_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_DOUBLE_EQ(d, subspace_distance(b, a));
    EXPECT_LT(subspace_distance(a, a), 1e-14);
  }
}

TEST(RestrictedNorm, Examples) {
  const auto s = Subspace::line(vec2(0.6, 0.8));
  EXPECT_NEAR(restricted_norm(Mat::Identity(2, 2), s), 1.0, 1e-15);
  EXPECT_NEAR(restricted_norm(mat2(3, 0, 0, 0.5), Subspace::line(vec2(0, 1))), 0.5, 1e-15);
  EXPECT_NEAR(restricted_norm(cat_matrix(), Subspace::line(cat_unstable_direction())), kCatLambdaU, 1e-14);
}

TEST(RestrictedDet, Examples) {
  EXPECT_NEAR(restricted_det(Mat::Identity(2, 2), Subspace::line(vec2(1, 2))), 1.0, 1e-15);
  EXPECT_NEAR(restricted_det(mat2(2, 0, 0, 3), Subspace::span(Mat::Identity(2, 2))), 6.0, 1e-14);
  EXPECT_NEAR(restricted_det(cat_matrix(), Subspace::line(cat_unstable_direction())), 2.618034, 1e-6);
}

TEST(RestrictedDet, MultiplicativeAlongImages) {
  // det(AB|S) = det(A|BS) det(B|S)
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) {
    Mat a(3, 3), b(3, 3), m(3, 2);
    for (int i = 0; i < 9; ++i) {
      a(i / 3, i % 3) = g(rng);
      b(i / 3, i % 3) = g(rng);
    }
    for (int i = 0; i < 6; ++i) m(i / 2, i % 2) = g(rng);
    const auto s = Subspace::span(m);
    const double lhs = restricted_det(a * b, s);
    const double rhs = restricted_det(a, image(b, s)) * restricted_det(b, s);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, lhs));
  }
}

TEST(ObliqueSplit, ReconstructsAndRespectsComponents) {
  const Splitting sp{Subspace::line(vec2(1, 0)), Subspace::line(vec2(1, 1))};
  const Vec v = vec2(0.3, -2.0);
  const auto parts = oblique_split(v, sp);
  EXPECT_LT((parts.along_e + parts.along_f - v).norm(), 1e-14);
  EXPECT_NEAR(parts.along_f(0), parts.along_f(1), 1e-14);
  EXPECT_NEAR(parts.along_e(1), 0.0, 1e-14);
  const Splitting degenerate{Subspace::line(vec2(1, 0)), Subspace::line(vec2(1, 1e-12))};
  EXPECT_THROW(oblique_split(v, degenerate), Error);
}

TEST(CocycleLogs, CatMapIsConstant) {
  const auto cat = build({"cat", {}});
  const auto log = cocycle_logs(*cat, make_point({0.1, 0.7}), 5);
  ASSERT_EQ(log.log_f_inv.size(), 5u);
  for (double v : log.log_f_inv) EXPECT_NEAR(v, -std::log((3.0 + std::sqrt(5.0)) / 2.0), 1e-12);
  for (double v : log.log_e) EXPECT_NEAR(v, std::log(kCatLambdaS), 1e-12);
}

TEST(CocycleLogs, IdentitySystemIsZero) {
  const LinearSystem id(Mat::Identity(2, 2), Subspace::line(vec2(1, 0)), Subspace::line(vec2(0, 1)));
  const auto log = cocycle_logs(id, make_point({0.5, 0.5}), 3);
  for (double v : log.log_f_inv) EXPECT_EQ(v, 0.0);
  for (double v : log.log_e) EXPECT_EQ(v, 0.0);
}

TEST(CocycleLogs, SolenoidFiberContraction) {
  const auto sol = build({"solenoid", {{"c", 0.25}, {"d", 0.5}}});
  const auto log = cocycle_logs(*sol, make_point({0.4, 0.2, -0.1}), 4);
  for (double v : log.log_e) EXPECT_NEAR(v, std::log(0.25), 1e-12);
  EXPECT_NEAR(log.log_e_at_base, std::log(0.25), 1e-12);
}

TEST(CocycleLogs, OrbitEscapeIsReported) {
  const LinearSystem grow(mat2(10, 0, 0, 0.5), Subspace::line(vec2(0, 1)), Subspace::line(vec2(1, 0)), 100.0);
  try {
    cocycle_logs(grow, make_point({1.0, 0.0}), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OrbitEscaped);
  }
}

TEST(MapSystem, WrapAndDisplacementOnTorus) {
  const auto cat = build({"cat", {}});
  const Point p = cat->wrap(make_point({1.25, -0.25}));
  EXPECT_DOUBLE_EQ(p.coords(0), 0.25);
  EXPECT_DOUBLE_EQ(p.coords(1), 0.75);
  const Vec d = cat->displacement(make_point({0.95, 0.5}), make_point({0.05, 0.5}));
  EXPECT_NEAR(d(0), 0.1, 1e-15);
}

}  // namespace
