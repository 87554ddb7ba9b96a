#include "srbkit/cones.hpp"
#include "srbkit/disks.hpp"
#include "srbkit/models.hpp"
#include "srbkit/pliss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace {

using namespace srb;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double polyline_length(const EmbeddedDisk& d) {
  double s = 0.0;
  for (double e : d.edge_lengths) s += e;
  return s;
}

EmbeddedDisk cat_segment(const MapSystem& cat, const Vec& dir, double radius, int res) {
  return make_disk(cat, make_point({0.5, 0.5}), Subspace::line(dir), radius, res);
}

/// First sigma-hyperbolic time >= from along the orbit of x.
int first_hyperbolic_time(const MapSystem& sys, const Point& x, double sigma, int from, int horizon) {
  const auto logs = expansion_logs(sys, x, horizon);
  for (int t : hyperbolic_times(logs, sigma).times) {
    if (t >= from) return t;
  }
  return -1;
}

TEST(MakeDisk, RejectsZeroRadius) {
  const auto cat = build({"cat", {}});
  try {
    cat_segment(*cat, cat_unstable_direction(), 0.0, 101);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(MakeDisk, CollinearSamplesWithEqualTangents) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 101);
  ASSERT_EQ(d.size(), 101);
  EXPECT_EQ(d.center_index, 50);
  const Vec u = cat_unstable_direction().normalized();
  for (int j = 0; j < d.size(); ++j) {
    const Vec off = d.offsets[j];
    EXPECT_LT(std::abs(off(0) * u(1) - off(1) * u(0)), 1e-15);
    EXPECT_LT(subspace_distance(d.tangents[j], d.tangents[0]), 1e-15);
  }
  EXPECT_NEAR(polyline_length(d), 0.2, 1e-14);
  EXPECT_NEAR(d.total_weight(), 0.2, 1e-14);
}

TEST(MakeDisk, SolenoidAlongFIsTangent) {
  const auto sol = build({"solenoid", {}});
  const Point x = iterate(*sol, make_point({1.0, 0.3, -0.2}), 30);
  const auto d = make_disk(*sol, x, sol->f_at(x), 0.05, 11);
  const auto rep = tangency_report(d, cone_of(*sol, 0.1));
  // the disk is flat, F varies along it: oracle is subspace_distance at each sample
  double oracle = 0.0;
  for (int j = 0; j < d.size(); ++j) oracle = std::max(oracle, subspace_distance(sol->f_at(d.points[j]), d.tangents[j]));
  EXPECT_DOUBLE_EQ(rep.max_f_distance, oracle);
  EXPECT_LT(subspace_distance(sol->f_at(x), d.tangents[d.center_index]), 1e-14);
}

TEST(MakeDisk, WrongDimensionAndOverflow) {
  const auto cat = build({"cat", {}});
  EXPECT_THROW(make_disk(*cat, make_point({0.5, 0.5}), Subspace::span(Mat::Identity(2, 2)), 0.1, 11), Error);
  try {
    cat_segment(*cat, cat_unstable_direction(), 0.3, 11);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChartOverflow);
  }
  EXPECT_THROW(cat_segment(*cat, cat_unstable_direction(), 0.1, 10), Error);
}

TEST(IterateDisk, ZeroStepsIsIdentity) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.01, 21);
  const auto e = iterate_disk(*cat, d, 0);
  for (int j = 0; j < d.size(); ++j) EXPECT_EQ(d.points[j].coords, e.points[j].coords);
}

TEST(IterateDisk, CatUnstableLengthScalesByCube) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.01, 101);
  const auto e = iterate_disk(*cat, d, 3);
  const double factor = std::pow(kCatLambdaU, 3);
  EXPECT_NEAR(factor, 17.944, 1e-3);
  EXPECT_NEAR(polyline_length(e) / polyline_length(d), factor, 1e-9);
  EXPECT_NEAR(e.intrinsic_radius(), 0.01 * factor, 1e-11);
}

TEST(IterateDisk, CatStableLengthShrinksByCube) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_stable_direction(), 0.1, 101);
  const auto e = iterate_disk(*cat, d, 3);
  EXPECT_NEAR(polyline_length(e) / polyline_length(d), std::pow(kCatLambdaU, -3), 1e-12);
  EXPECT_NEAR(std::pow(kCatLambdaU, -3), 0.05573, 1e-5);
}

TEST(IterateDisk, ResolutionCeilingIsExplicit) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 11);
  try {
    iterate_disk(*cat, d, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ResolutionExhausted);
  }
}

TEST(IterateDisk, LengthMatchesIntegratedStretch) {
  // oracle: integral over the initial disk of prod_k ||Df|T|| along each sample orbit
  const auto pc = build({"perturbed_cat", {{"eps", 0.03}}});
  const Point x = make_point({0.31, 0.27});
  const auto d = make_disk(*pc, x, pc->f_at(x), 0.004, 801);
  const auto traj = disk_trajectory(*pc, d, 4);
  long double integral = 0.0L;
  for (int j = 0; j < d.size(); ++j) {
    long double stretch = 1.0L;
    for (int k = 0; k < 4; ++k) stretch *= restricted_norm(pc->tangent(traj[k].points[j]), traj[k].tangents[j]);
    integral += d.cell_weights[j] * stretch;
  }
  EXPECT_NEAR(polyline_length(traj[4]) / static_cast<double>(integral), 1.0, 0.01);
}

TEST(IterateDisk, TangentsFollowSecants) {
  for (const char* name : {"perturbed_cat", "dfa"}) {
    const auto sys = build({name, {}});
    const Point x = make_point({0.31, 0.27});
    auto d = make_disk(*sys, x, sys->f_at(x), 0.002, 201);
    for (int k = 0; k < 4; ++k) {
      d = iterate_disk(*sys, d, 1);
      EXPECT_LE(d.tangent_defect, 10.0 * d.grid_step()) << name << " step " << k;
    }
  }
}

TEST(Tangency, AlongFIsZeroAndTiltedIsSine) {
  const auto cat = build({"cat", {}});
  const auto along = cat_segment(*cat, cat_unstable_direction(), 0.05, 21);
  const auto r0 = tangency_report(along, cone_of(*cat, 0.5));
  EXPECT_LT(r0.max_width, 1e-15);
  EXPECT_LT(r0.max_f_distance, 1e-15);

  const double t = 0.2;
  const Vec u = cat_unstable_direction().normalized();
  const Vec s = cat_stable_direction().normalized();
  const auto tilted = cat_segment(*cat, std::cos(t) * u + std::sin(t) * s, 0.05, 21);
  EXPECT_NEAR(tangency_report(tilted, cone_of(*cat, 0.5)).max_f_distance, std::sin(t), 1e-14);
}

TEST(Tangency, IteratesObeyConeWidthDecay) {
  const auto pc = build({"perturbed_cat", {{"eps", 0.01}}});
  const Point x = make_point({0.7, 0.2});
  const auto log = cocycle_logs(*pc, x, 12);
  double worst = 0.0;
  for (int j = 0; j <= 12; ++j) worst = std::max(worst, std::exp(log.log_step_ratio(j)));
  const double gamma = 1.1 * worst;
  const double a = 0.2;
  const Splitting sp = pc->splitting(x);
  const Vec dir = sp.f.frame().col(0) + a * sp.e.frame().col(0);
  auto d = make_disk(*pc, x, Subspace::line(dir), 1e-8, 11);
  const auto cone = cone_of(*pc, 1.0);
  for (int j = 1; j <= 12; ++j) {
    d = iterate_disk(*pc, d, 1);
    const double w = cone_width_of(d.tangents[d.center_index], pc->splitting(d.center));
    EXPECT_LE(w, (cone_width_bound(a, gamma, j) + kWidthFloor) * (1.0 + 1e-8)) << "step " << j;
    EXPECT_LE(tangency_report(d, cone).max_f_distance, a * std::pow(gamma, 0.5 * j) * 1.5);
  }
}

TEST(Carving, CatComponentIsScaledSegment) {
  const auto cat = build({"cat", {}});
  const double r = 0.05;
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 401);
  const auto c = hyperbolic_component(*cat, d, 5, r);
  const double expected = 2.0 * r / std::pow(kCatLambdaU, 5);
  EXPECT_NEAR(polyline_length(c) / expected, 1.0, 1e-6);
  const auto img = iterate_disk(*cat, c, 5, {1.0});
  EXPECT_NEAR(img.intrinsic_radius() / r, 1.0, 1e-6);
}

TEST(Carving, ZeroTimeIsBallIntersection) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 101);
  const auto c = hyperbolic_component(*cat, d, 0, 0.03);
  EXPECT_NEAR(c.intrinsic_radius(), 0.03, 1e-9);
  EXPECT_NEAR(polyline_length(c), 0.06, 1e-9);
}

TEST(Carving, EveryImageInsideItsBall) {
  const auto pc = build({"perturbed_cat", {{"eps", 0.01}}});
  const Point x = make_point({0.31, 0.27});
  const int n = first_hyperbolic_time(*pc, x, 0.5, 12, 40);
  ASSERT_GT(n, 0);
  const double r = 0.02;
  const auto c = hyperbolic_component(*pc, make_disk(*pc, x, pc->f_at(x), 0.05, 201), n, r);
  const auto traj = disk_trajectory(*pc, c, n, {1.0});
  for (int k = 0; k <= n; ++k) {
    for (const auto& off : traj[k].offsets) ASSERT_LE(off.norm(), r * (1.0 + 1e-9)) << "step " << k;
  }
  EXPECT_GE(traj[n].intrinsic_radius(), r * (1.0 - 5.0 * c.grid_step()));
}

TEST(Carving, RejectsDiskSmallerThanR) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.01, 21);
  try {
    hyperbolic_component(*cat, d, 3, 0.05);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HypothesisViolated);
  }
}

TEST(BackwardContraction, CatMaximumAtFirstStep) {
  // distances scale by lambda_u^{-k}, so the ratio (lambda_u^-1 / sqrt(sigma))^k peaks at k = 1
  const auto cat = build({"cat", {}});
  const int n = 5;
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 401);
  const auto c = hyperbolic_component(*cat, d, n, 0.05);
  const double v = backward_contraction_check(*cat, c, n, 0.5, {1.0});
  EXPECT_NEAR(v, (1.0 / kCatLambdaU) / std::sqrt(0.5), 1e-9);
  EXPECT_LT(v, 0.541);
  EXPECT_EQ(backward_contraction_check(*cat, c, 0, 0.5), 0.0);
}

TEST(BackwardContraction, SolenoidUniformExpansion) {
  const auto sol = build({"solenoid", {}});
  const Point x = iterate(*sol, make_point({1.0, 0.3, -0.2}), 30);
  const int n = 6;
  const auto d = make_disk(*sol, x, sol->f_at(x), 0.3, 401);
  const auto c = hyperbolic_component(*sol, d, n, 0.2);
  const double v = backward_contraction_check(*sol, c, n, 0.5, {1.0});
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, 0.7071 * (1.0 + 5.0 * c.grid_step()));
}

TEST(Distortion, CatRatioIsOne) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 101);
  const auto c = hyperbolic_component(*cat, d, 5, 0.05);
  const DistortionSettings set{0.1, 0.5, 0.05, {}};
  for (int y : {0, 17, 50, 100}) EXPECT_NEAR(distortion(*cat, c, y, 5, set, {1.0}).ratio, 1.0, 1e-10);
}

TEST(Distortion, PerturbedCatWithinMeasuredBound) {
  const auto pc = build({"perturbed_cat", {{"eps", 0.01}}});
  const auto h = measure_constants_h(*pc, {});
  const double a = 0.1, r = 0.02;
  const auto consts = measure_distortion_constants(*pc, a);
  const DistortionSettings set{a, h.lambda2, r, consts};
  const Point x = make_point({0.31, 0.27});
  const int n = first_hyperbolic_time(*pc, x, h.lambda2, 20, 60);
  ASSERT_GT(n, 0);
  const auto c = hyperbolic_component(*pc, make_disk(*pc, x, pc->f_at(x), 0.05, 101), n, r);
  const auto traj = disk_trajectory(*pc, c, n, {1.0});
  for (int y = 0; y < c.size(); y += 5) {
    const auto rep = distortion(*pc, traj, y, n, set);
    EXPECT_TRUE(rep.within()) << "y " << y << " ratio " << rep.ratio << " K " << rep.bound_k;
    // oracle: direct product of per-step determinant ratios
    long double acc = 1.0L;
    for (int k = 0; k < n; ++k) {
      acc *= restricted_det(pc->tangent(traj[k].points[y]), traj[k].tangents[y]) /
             restricted_det(pc->tangent(traj[k].points[c.center_index]), traj[k].tangents[c.center_index]);
    }
    EXPECT_NEAR(rep.ratio, static_cast<double>(acc), 1e-12 * static_cast<double>(acc));
  }
  EXPECT_DOUBLE_EQ(distortion(*pc, traj, c.center_index, n, set).ratio, 1.0);
}

TEST(Distortion, DistancePreconditionChecked) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.01, 21);
  try {
    distortion(*cat, d, 0, 3, DistortionSettings{0.1, 0.5, 0.01, {}}, {1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HypothesisViolated);
  }
}

TEST(DistortionBound, Formula) {
  EXPECT_DOUBLE_EQ(distortion_bound(0.1, 0.5, 1.0, 0.0, 0.0), 1.0);
  const double lb = std::sqrt(0.25);
  EXPECT_NEAR(distortion_bound(0.2, 0.25, 1.0, 3.0, 2.0), std::exp(2 * 3.0 * 0.2 / 0.75 + 2.0 * lb / (1 - lb)), 1e-12);
}

EmbeddedDisk circle_arc(int samples, double half_angle) {
  static const LinearSystem plane(Mat::Identity(2, 2), Subspace::line(vec2(1, 0)), Subspace::line(vec2(0, 1)));
  std::vector<Point> pts;
  std::vector<Subspace> tans;
  for (int j = 0; j < samples; ++j) {
    const double t = -half_angle + 2.0 * half_angle * j / (samples - 1);
    pts.push_back(make_point({std::cos(t), std::sin(t)}));
    tans.push_back(Subspace::line(vec2(-std::sin(t), std::cos(t))));
  }
  return disk_from_samples(plane, pts, tans);
}

TEST(HolderCurvature, FlatDiskIsZero) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 51);
  EXPECT_EQ(holder_curvature(d, 1.0, 0.1), 0.0);
  EXPECT_EQ(holder_curvature(*cat, d, 1.0), 0.0);
}

TEST(HolderCurvature, UnitCircleIsOne) {
  // tangent angle turns at unit rate: ||L|| = tan(dt), arclength ~ dt
  const auto d = circle_arc(401, 0.5);
  const double k = holder_curvature(d, 1.0, 0.05);
  EXPECT_NEAR(k, 1.0, 0.01);
  EXPECT_GE(k, 1.0 - 1e-6);
}

TEST(HolderCurvature, RefinementConsistent) {
  const double coarse = holder_curvature(circle_arc(201, 0.5), 1.0, 0.05);
  const double fine = holder_curvature(circle_arc(401, 0.5), 1.0, 0.05);
  EXPECT_NEAR(coarse / fine, 1.0, 0.05);
  const double half_coarse = holder_curvature(circle_arc(201, 0.5), 0.5, 0.05);
  const double half_fine = holder_curvature(circle_arc(401, 0.5), 0.5, 0.05);
  EXPECT_NEAR(half_coarse / half_fine, 1.0, 0.05);
}

TEST(HolderCurvature, RejectsBadExponent) {
  EXPECT_THROW(holder_curvature(circle_arc(11, 0.5), 0.0, 0.1), Error);
  EXPECT_THROW(holder_curvature(circle_arc(11, 0.5), 1.5, 0.1), Error);
}

TEST(CurvatureRecursion, CatStaysFlat) {
  const auto cat = build({"cat", {}});
  const auto h = measure_constants_h(*cat, {});
  const auto k = curvature_constants(*cat, h);
  EXPECT_EQ(k.l1, 0.0);
  EXPECT_EQ(k.script_l, 0.0);
  const auto d = hyperbolic_component(*cat, cat_segment(*cat, cat_unstable_direction(), 0.1, 101), 5, 0.05);
  const auto rep = curvature_recursion(*cat, d, 5, k, -1.0, {1.0});
  EXPECT_LT(rep.measured, 1e-9);
  EXPECT_LE(rep.measured, rep.bound() + 1e-12);
}

TEST(CurvatureRecursion, PerturbedCatBelowLimitBound) {
  const auto pc = build({"perturbed_cat", {{"eps", 0.01}}});
  const auto h = measure_constants_h(*pc, {});
  const auto k = curvature_constants(*pc, h);
  EXPECT_NEAR(k.script_l, std::pow(2.0, 1.0 + k.xi) * k.l1 / std::pow(k.b, 1.0 + k.xi), 1e-12);
  const Point x = make_point({0.31, 0.27});
  const int n = first_hyperbolic_time(*pc, x, h.lambda2, 12, 60);
  ASSERT_GT(n, 0);
  const auto d = hyperbolic_component(*pc, make_disk(*pc, x, pc->f_at(x), 0.05, 201), n, 0.02);
  const auto rep = curvature_recursion(*pc, d, n, k, -1.0, {1.0});
  EXPECT_EQ(rep.initial, 0.0);
  // flat start: the bound reduces to the geometric-series term
  EXPECT_NEAR(rep.bound_closed, k.script_l / (1.0 - k.lambda4), 1e-12);
  EXPECT_LE(rep.measured, rep.bound() * (1.0 + 5.0 * d.grid_step()));
  EXPECT_LT(rep.measured, 2.0 * k.script_l / (1.0 - k.lambda4));
}

TEST(CurvatureStep, SingleStepClaim) {
  // H(f D) <= c0 H(D) + L1 / (m - 2 alpha)^{1+xi} on a curved initial disk
  const auto pc = build({"perturbed_cat", {{"eps", 0.01}}});
  const auto h = measure_constants_h(*pc, {});
  const auto k = curvature_constants(*pc, h);
  const Point x = make_point({0.31, 0.27});
  const Splitting sp = pc->splitting(x);
  const Vec f = sp.f.frame().col(0), e = sp.e.frame().col(0);
  for (int res : {201, 401}) {
    std::vector<Point> pts;
    std::vector<Subspace> tans;
    for (int j = 0; j < res; ++j) {
      const double t = 0.01 * (2.0 * j / (res - 1) - 1.0);
      pts.push_back(pc->translate(x, t * f + 0.5 * t * t * e));
      tans.push_back(Subspace::line(f + t * e));
    }
    const auto d = disk_from_samples(*pc, pts, tans);
    const auto ef0 = e_frames(*pc, d);
    const double before = holder_curvature(d, k.xi, 0.1, &ef0);
    const auto img = iterate_disk(*pc, d, 1, {1.0});
    const auto ef1 = e_frames(*pc, img);
    const double after = holder_curvature(img, k.xi, 0.1, &ef1);
    const double m = restricted_mininorm(pc->tangent(x), sp.f);
    const double bound = curvature_step_factor(*pc, x, k) * before + k.l1 / std::pow(m - 2.0 * k.alpha, 1.0 + k.xi);
    EXPECT_LE(after, bound * 1.05) << "resolution " << res;
  }
}

TEST(DiskCsv, HeaderAndRows) {
  const auto cat = build({"cat", {}});
  const auto d = cat_segment(*cat, cat_unstable_direction(), 0.1, 5);
  std::ostringstream os;
  write_disk_csv(os, d);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "p0,x0,x1,t0_0,t0_1");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 6);
}

}  // namespace
