#include "srbkit/measures.hpp"
#include "srbkit/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace {

using namespace srb;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Observable cos_x1() {
  return Observable{"cos(2 pi x1)", [](const Point& p) { return std::cos(2.0 * std::numbers::pi * p.coords(0)); }, 1.0,
                    0.0, "character"};
}

EmbeddedDisk cat_unstable_segment(const MapSystem& cat, int res = 101) {
  return make_disk(cat, make_point({0.31, 0.27}), Subspace::line(cat_unstable_direction()), 0.1, res);
}

/// Representative disk for each model, along F at a typical point.
EmbeddedDisk model_disk(const MapSystem& sys) {
  const Point x = sys.name() == "solenoid" ? iterate(sys, make_point({1.0, 0.3, -0.2}), 30) : make_point({0.31, 0.27});
  return make_disk(sys, x, sys.f_at(x), 0.05, 51);
}

TEST(PushforwardAverage, SingleStepIsDiskLebesgue) {
  const auto cat = build({"cat", {}});
  const auto d = cat_unstable_segment(*cat);
  const auto mu = pushforward_average(*cat, d, 1);
  ASSERT_EQ(mu.atoms.size(), static_cast<size_t>(d.size()));
  const auto w = normalized_weights(d);
  for (int s = 0; s < d.size(); ++s) {
    EXPECT_EQ(mu.atoms[s].coords, d.points[s].coords);
    EXPECT_EQ(mu.weights[s], w[s]);
  }
  EXPECT_NEAR(mu.total, 1.0, 1e-15);
}

TEST(PushforwardAverage, IdentityMapKeepsDiskLebesgue) {
  const LinearSystem id(Mat::Identity(2, 2), Subspace::line(vec2(1, 0)), Subspace::line(vec2(0, 1)));
  const auto d = make_disk(id, make_point({0.0, 0.0}), Subspace::line(vec2(0, 1)), 1.0, 21);
  const auto tests = trig_tests(id, 4);
  const auto leb = integrals(pushforward_average(id, d, 1), tests);
  for (int n : {2, 7, 50}) {
    const auto mu = pushforward_average(id, d, n);
    EXPECT_LT(weak_star_distance(integrals(mu, tests), leb), 1e-15) << n;
  }
}

TEST(PushforwardAverage, MassIsConserved) {
  for (const char* name : {"cat", "perturbed_cat", "solenoid", "dfa"}) {
    const auto sys = build({name, {}});
    const auto mu = pushforward_average(*sys, model_disk(*sys), 37);
    EXPECT_NEAR(mu.total, 1.0, 1e-14) << name;
  }
}

TEST(PushforwardAverage, CatCosineIntegralVanishes) {
  const auto cat = build({"cat", {}});
  const auto ints = pushforward_integrals(*cat, cat_unstable_segment(*cat), 10'000, {cos_x1()});
  EXPECT_LT(std::abs(ints.values[0] / ints.total), 0.02);
}

TEST(PushforwardIntegrals, MatchesMaterializedMeasure) {
  const auto pc = build({"perturbed_cat", {}});
  const auto d = model_disk(*pc);
  const auto tests = trig_tests(*pc, 8);
  const auto direct = integrals(pushforward_average(*pc, d, 200), tests);
  const auto streamed = pushforward_integrals(*pc, d, 200, tests);
  for (size_t t = 0; t < tests.size(); ++t) EXPECT_NEAR(direct.values[t], streamed.values[t], 1e-13);
}

TEST(Checkpoints, MatchMaterializedPush) {
  const auto dfa = build({"dfa", {}});
  const auto d = model_disk(*dfa);
  const auto tests = trig_tests(*dfa, 8);
  const auto cps = pushforward_checkpoints(*dfa, d, {5, 40}, tests);
  for (const auto& cp : cps) {
    const auto mu = pushforward_average(*dfa, d, cp.n);
    const auto avg = integrals(mu, tests);
    const auto pushed = integrals(push(*dfa, mu), tests);
    for (size_t t = 0; t < tests.size(); ++t) {
      EXPECT_NEAR(cp.average.values[t], avg.values[t], 1e-13);
      EXPECT_NEAR(cp.pushed.values[t], pushed.values[t], 1e-13);
    }
  }
  EXPECT_THROW(pushforward_checkpoints(*dfa, d, {5, 5}, tests), Error);
}

TEST(Checkpoints, CesaroDefectWithinTwoBoundOverN) {
  // mu_n - f_* mu_n = (Leb_D - f^n_* Leb_D) / n, so each test differs by at most 2B/n
  for (const char* name : {"cat", "perturbed_cat", "solenoid", "dfa"}) {
    const auto sys = build({name, {}});
    const auto tests = trig_tests(*sys, 8);
    double bound = 0.0;
    for (const auto& t : tests) bound = std::max(bound, t.bound);
    for (const auto& cp : pushforward_checkpoints(*sys, model_disk(*sys), {100, 1000}, tests)) {
      EXPECT_LE(weak_star_distance(cp.average, cp.pushed), 2.0 * bound / cp.n) << name << " n " << cp.n;
    }
  }
}

TEST(TrigTests, BoundedWithTorusReferences) {
  const auto cat = build({"cat", {}});
  const auto tests = trig_tests(*cat, 8);
  ASSERT_EQ(tests.size(), 8u);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& t : tests) {
    ASSERT_TRUE(t.reference_integral.has_value());
    EXPECT_EQ(*t.reference_integral, 0.0);
    for (int k = 0; k < 100; ++k) EXPECT_LE(std::abs(t.eval(make_point({u(rng), u(rng)}))), t.bound);
  }
  const auto sol = build({"solenoid", {}});
  EXPECT_EQ(trig_tests(*sol, 8).size(), 8u);
  EXPECT_THROW(reference_integrals(trig_tests(*sol, 8)), Error);
}

TEST(Birkhoff, ConstantAndSingleStep) {
  const auto cat = build({"cat", {}});
  const Point x = make_point({0.123, 0.456});
  EXPECT_DOUBLE_EQ(birkhoff(*cat, x, constant_observable(2.5), 1000), 2.5);
  EXPECT_DOUBLE_EQ(birkhoff(*cat, x, cos_x1(), 1), std::cos(2.0 * std::numbers::pi * 0.123));
  EXPECT_THROW(birkhoff(*cat, x, cos_x1(), 0), Error);
}

TEST(Birkhoff, CatGenericOrbitEquidistributes) {
  const auto cat = build({"cat", {}});
  EXPECT_LT(std::abs(birkhoff(*cat, make_point({0.1234567, 0.7654321}), cos_x1(), 1'000'000)), 0.005);
}

TEST(Birkhoff, AllMatchesSingle) {
  const auto dfa = build({"dfa", {}});
  const auto tests = trig_tests(*dfa, 4);
  const Point x = make_point({0.3, 0.8});
  const auto all = birkhoff_all(*dfa, x, tests, 500);
  for (size_t t = 0; t < tests.size(); ++t) EXPECT_DOUBLE_EQ(all[t], birkhoff(*dfa, x, tests[t], 500));
}

TEST(WeakStar, Examples) {
  const auto cat = build({"cat", {}});
  const auto tests = trig_tests(*cat, 8);
  const auto mu = pushforward_average(*cat, cat_unstable_segment(*cat, 21), 5);
  EXPECT_EQ(weak_star_distance(mu, mu, tests), 0.0);
  const Point x = make_point({0.1, 0.2}), y = make_point({0.6, 0.9});
  const auto phi = cos_x1();
  EXPECT_NEAR(weak_star_distance(EmpiricalMeasure::dirac(x), EmpiricalMeasure::dirac(y), {phi}),
              std::abs(phi.eval(x) - phi.eval(y)), 1e-15);
  const auto zero = EmpiricalMeasure::from({x}, {0.0});
  try {
    weak_star_distance(zero, mu, tests);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroMass);
  }
  EXPECT_THROW(weak_star_distance(mu, mu, {}), Error);
}

TEST(WeakStar, CatAveragesAreCauchy) {
  const auto cat = build({"cat", {}});
  const auto d = cat_unstable_segment(*cat);
  const auto tests = trig_tests(*cat, 8);
  const auto cps = pushforward_checkpoints(*cat, d, {10'000, 20'000}, tests);
  EXPECT_LT(weak_star_distance(cps[0].average, cps[1].average), 0.03);
}

TEST(DisjointBalls, CoincidentCentersKeepOne) {
  const std::vector<Point> c(10, make_point({0.5, 0.5}));
  EXPECT_EQ(select_disjoint_balls(c, 0.1).size(), 1u);
}

TEST(DisjointBalls, SpacedCentersAllKept) {
  const double r = 0.01;
  std::vector<Point> c;
  for (int i = 0; i < 20; ++i) c.push_back(make_point({2.5 * r * i, 0.0}));
  EXPECT_EQ(select_disjoint_balls(c, r).size(), 20u);
}

TEST(DisjointBalls, RandomSegmentCountAndPostconditions) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> t(1000);
    for (auto& v : t) v = u(rng);
    std::sort(t.begin(), t.end());
    auto dist = [&](int i, int j) { return std::abs(t[i] - t[j]); };
    const auto kept = select_disjoint_balls(t.size(), 0.05, dist);
    EXPECT_GE(kept.size(), 10u);
    EXPECT_LE(kept.size(), 20u);
    EXPECT_TRUE(verify_disjoint_balls(t.size(), 0.05, kept, dist));
    // oracle: direct pairwise check of both properties
    for (size_t a = 0; a < kept.size(); ++a) {
      for (size_t b = a + 1; b < kept.size(); ++b) EXPECT_GT(dist(kept[a], kept[b]), 0.1);
    }
    for (int i = 0; i < 1000; ++i) {
      double best = 1e9;
      for (int k : kept) best = std::min(best, dist(i, k));
      EXPECT_LE(best, 0.1);
    }
  }
}

TEST(DisjointBalls, VerifierRejectsOverlapAndGaps) {
  const std::vector<double> t{0.0, 0.05, 0.5};
  auto dist = [&](int i, int j) { return std::abs(t[i] - t[j]); };
  EXPECT_FALSE(verify_disjoint_balls(3, 0.1, {0, 1, 2}, dist));
  EXPECT_FALSE(verify_disjoint_balls(3, 0.1, {0}, dist));
  EXPECT_TRUE(verify_disjoint_balls(3, 0.1, {0, 2}, dist));
}

TEST(HyperbolicMass, CatEverySampleEveryTime) {
  const auto cat = build({"cat", {}});
  const auto d = make_disk(*cat, make_point({0.31, 0.27}), Subspace::line(cat_unstable_direction()), 0.002, 1001);
  const auto rep = hyperbolic_mass(*cat, d, 6, 0.5, 0.004, {0.5, 0, 0});
  EXPECT_NEAR(rep.lambda_fraction, 1.0, 1e-12);
  // oracle: S_i is every sample for i >= 1 and nothing at i = 0
  EXPECT_EQ(rep.hyperbolic_mass[0], 0.0);
  for (int i = 1; i < 6; ++i) {
    EXPECT_NEAR(rep.hyperbolic_mass[i], 1.0, 1e-12);
    EXPECT_NEAR(rep.union_mass[i], 1.0, 1e-12);
    EXPECT_GT(rep.per_i[i], 0.0);
    EXPECT_LE(rep.per_i[i], 1.0 + 1e-12);
  }
  EXPECT_GT(rep.eta, 0.0);
  EXPECT_GT(rep.tau, 0.0);
  EXPECT_LE(rep.tau, 1.0 + 1e-12);
}

TEST(HyperbolicMass, ContractingFHasNone) {
  const LinearSystem toy(vec2(0.5, 0.9).asDiagonal(), Subspace::line(vec2(1, 0)), Subspace::line(vec2(0, 1)));
  const auto d = make_disk(toy, make_point({0.0, 0.0}), Subspace::line(vec2(0, 1)), 0.1, 51);
  const auto rep = hyperbolic_mass(toy, d, 10, 0.5, 0.01, {0.5, 0, 0});
  EXPECT_EQ(rep.eta, 0.0);
  EXPECT_EQ(rep.lambda_fraction, 0.0);
}

TEST(HyperbolicMass, DfaAboveHalfFloor) {
  const auto dfa = build({"dfa", {}});
  const auto h = measure_constants_h(*dfa, {});
  const Point x = make_point({0.6339, 0.4697});
  const auto d = make_disk(*dfa, x, dfa->f_at(x), 0.002, 1001);
  const auto rep = hyperbolic_mass(*dfa, d, 8, h.lambda2, 0.02, {h.lambda1, 1000, 0});
  EXPECT_GT(rep.eta, 0.0);
  EXPECT_LT(rep.worst_edge_ratio, 1.0);
  EXPECT_GE(rep.eta, 0.5 * rep.floor);
}

TEST(LambdaSurrogate, AntiMonotoneInHorizon) {
  const auto dfa = build({"dfa", {}});
  const auto h = measure_constants_h(*dfa, {});
  const auto pts = sample_points(*dfa, 1000, 3);
  int gained = 0;
  for (const auto& p : pts) {
    const auto logs = expansion_logs(*dfa, p, 400);
    const bool shorter = lambda_membership(std::span<const double>(logs).first(200), h.lambda1, 1);
    const bool longer = lambda_membership(logs, h.lambda1, 1);
    if (longer && !shorter) ++gained;
  }
  EXPECT_EQ(gained, 0);
}

TEST(Sampling, HaltonIsDeterministicAndInUnitCube) {
  const Vec s = halton_shift(2, 9);
  EXPECT_EQ(halton(17, 2, s), halton(17, 2, s));
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const Vec u = halton(k, 3, Vec::Zero(3));
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(u(i), 0.0);
      EXPECT_LT(u(i), 1.0);
    }
  }
  EXPECT_DOUBLE_EQ(halton(0, 1, Vec::Zero(1))(0), 0.5);
}

TEST(PhysicalFraction, VacuousToleranceGivesOne) {
  const auto dfa = build({"dfa", {}});
  const auto tests = trig_tests(*dfa, 8);
  EXPECT_EQ(physical_fraction(*dfa, reference_integrals(tests), tests, 100, 2.0, 100), 1.0);
  EXPECT_THROW(physical_fraction(*dfa, reference_integrals(tests), tests, 100, 2.0, 99), Error);
}

TEST(PhysicalFraction, CatLebesgueBasin) {
  const auto cat = build({"cat", {}});
  const auto tests = trig_tests(*cat, 8);
  EXPECT_GE(physical_fraction(*cat, reference_integrals(tests), tests, 100'000, 0.02, 200), 0.99);
}

TEST(PhysicalFraction, SolenoidAttractorBasin) {
  const auto sol = build({"solenoid", {}});
  const auto tests = trig_tests(*sol, 8);
  const auto ref = pushforward_integrals(*sol, model_disk(*sol), 20'000, tests);
  EXPECT_GE(physical_fraction(*sol, ref, tests, 20'000, 0.02, 200), 0.95);
}

}  // namespace
