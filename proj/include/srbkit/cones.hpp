// Cone fields around the unstable bundle, average domination along orbit
// segments, cone-width propagation and sampled robustness radii.
#pragma once

#include "srbkit/core.hpp"
#include "srbkit/models.hpp"
#include "srbkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace srb {

struct ConeSpec {
  double width = 0.5;
  std::function<Splitting(const Point&)> splitting_at;

  void validate() const {
    if (!(width > 0.0 && width < 1.0)) throw Error(ErrorKind::InvalidArgument, "cone width must lie in (0,1)");
    if (!splitting_at) throw Error(ErrorKind::InvalidArgument, "cone has no splitting");
  }
};

inline ConeSpec cone_of(const MapSystem& sys, double width) {
  return ConeSpec{width, [&sys](const Point& p) { return sys.splitting(p); }};
}

/// ||v_E|| / ||v_F|| for the oblique decomposition (infinity when v lies in E).
inline double cone_width_of(const Vec& v, const Splitting& split) {
  const ObliqueParts parts = oblique_split(v, split);
  const double ne = parts.along_e.norm();
  const double nf = parts.along_f.norm();
  if (nf == 0.0) return ne == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return ne / nf;
}

/// Largest cone width over unit vectors of a subspace (sampled for dim 2).
inline double cone_width_of(const Subspace& s, const Splitting& split) {
  if (s.dim() == 1) return cone_width_of(Vec(s.frame().col(0)), split);
  double worst = 0.0;
  constexpr int kDirections = 64;
  for (int k = 0; k < kDirections; ++k) {
    const double t = std::numbers::pi * k / kDirections;
    const Vec v = s.frame().col(0) * std::cos(t) + s.frame().col(1) * std::sin(t);
    worst = std::max(worst, cone_width_of(v, split));
  }
  return worst;
}

inline bool in_cone(const Vec& v, const Point& x, const ConeSpec& cone) {
  cone.validate();
  if (!(v.norm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "vector must be nonzero");
  const ObliqueParts parts = oblique_split(v, cone.splitting_at(x));
  return parts.along_e.norm() <= cone.width * parts.along_f.norm();
}

/// Which cocycle entries feed the domination product. `FromBase` multiplies
/// the ratios at f^0 x .. f^{i-1} x; `FromFirstImage` uses f^1 x .. f^i x,
/// matching the sums that define hyperbolic times.
enum class IndexBase { FromBase, FromFirstImage };

struct DominationCertificate {
  double gamma = 0.0;
  int length = 0;
  IndexBase base = IndexBase::FromBase;
  std::vector<double> ratios;  // ratios[i-1] = product over the first i steps
};

struct DominationFailure {
  int index = 0;  // first failing i (1-based)
  double ratio = 0.0;
};

struct DominationCheck {
  std::optional<DominationCertificate> certificate;
  std::optional<DominationFailure> failure;

  explicit operator bool() const { return certificate.has_value(); }
};

inline DominationCheck check_avg_domination(const CocycleLog& cocycle, double gamma, int n,
                                            IndexBase base = IndexBase::FromBase) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must lie in (0,1)");
  if (n < 0 || n > cocycle.length) throw Error(ErrorKind::InvalidArgument, "cocycle shorter than n");
  DominationCertificate cert{gamma, n, base, {}};
  cert.ratios.reserve(n);
  const long double lg = std::log(static_cast<long double>(gamma));
  long double acc = 0.0L;
  for (int i = 1; i <= n; ++i) {
    const int j = (base == IndexBase::FromBase) ? i - 1 : i;
    acc += cocycle.log_step_ratio(j);
    const double ratio = static_cast<double>(std::exp(acc));
    // tiny slack so exact equality (linear models) is not lost to rounding
    if (acc > lg * i + 1e-13L * i) return {std::nullopt, DominationFailure{i, ratio}};
    cert.ratios.push_back(ratio);
  }
  return {std::move(cert), std::nullopt};
}

/// Width of the image cone after i dominated steps: gamma^i a.
inline double cone_width_bound(double a, double gamma, int i) {
  if (!(a > 0.0) || !(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::InvalidArgument, "need a > 0, 0 < gamma < 1");
  if (i < 0) throw Error(ErrorKind::InvalidArgument, "negative step");
  return std::pow(gamma, i) * a;
}

/// Absolute rounding error of a measured width (unit vectors, a few flops).
inline constexpr double kWidthFloor = 16.0 * std::numeric_limits<double>::epsilon();

struct ConeContractionReport {
  std::vector<double> ratio_by_step;  // entry i-1: max width at step i / (gamma^i a + floor)
  double max_ratio = 0.0;
  int unresolved_steps = 0;           // steps with gamma^i a below kWidthFloor
  bool violation = false;
};

/// Pushes random boundary vectors of C_a^F(x) through Df^i, i = 1..n, and
/// compares measured widths with gamma^i a, allowing kWidthFloor of rounding.
inline ConeContractionReport verify_cone_contraction(const MapSystem& sys, const Point& x, double a, double gamma,
                                                     int n, int samples, std::uint64_t seed = 1) {
  ConeContractionReport report;
  if (n <= 0) return report;
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "samples must be >= 1");
  const CocycleLog log = cocycle_logs(sys, x, n);
  if (!check_avg_domination(log, gamma, n)) {
    throw Error(ErrorKind::HypothesisViolated, "segment is not gamma-average dominated");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Splitting s0 = sys.splitting(x);
  std::vector<Vec> vs;
  for (int k = 0; k < samples; ++k) {
    Vec cf(s0.f.dim()), ce(s0.e.dim());
    for (auto& c : cf) c = normal(rng);
    for (auto& c : ce) c = normal(rng);
    const Vec vf = s0.f.frame() * cf.normalized();
    const Vec ve = s0.e.frame() * ce.normalized();
    // oblique parts of vf + a ve are exactly (a ve, vf): boundary of the cone
    vs.push_back(vf + a * ve);
  }
  report.ratio_by_step.assign(n, 0.0);
  Point p = x;
  for (int i = 1; i <= n; ++i) {
    const LinearMap df = sys.tangent(p);
    p = sys.forward(p);
    const Splitting si = sys.splitting(p);
    const double exact = std::pow(gamma, i) * a;
    if (exact < kWidthFloor) ++report.unresolved_steps;
    const double bound = exact + kWidthFloor;
    double worst = 0.0;
    for (auto& v : vs) {
      v = df * v;
      v /= v.norm();
      worst = std::max(worst, cone_width_of(v, si) / bound);
    }
    report.ratio_by_step[i - 1] = worst;
    report.max_ratio = std::max(report.max_ratio, worst);
  }
  report.violation = report.max_ratio > 1.0 + 1e-8;
  return report;
}

/// Largest r (on a dyadic ladder below the chart diameter) such that every
/// sampled pair at distance <= r has ||Df|E|| and m(Df|F) ratios inside
/// [sqrt(g1/g2), sqrt(g2/g1)], with the log-tolerance halved as a safety
/// factor.
inline double domination_robustness_radius(const MapSystem& sys, double gamma1, double gamma2,
                                           const GridSpec& grid = {}) {
  if (!(gamma1 > 0.0 && gamma1 < gamma2 && gamma2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "need 0 < gamma1 < gamma2 < 1");
  }
  const double tol = 0.5 * 0.5 * std::log(gamma2 / gamma1);
  const auto pts = grid_points(sys, grid);
  const int d = sys.dim();

  struct Local {
    double log_e, log_f;
  };
  auto local = [&](const Point& p) {
    const LinearMap df = sys.tangent(p);
    const Splitting s = sys.splitting(p);
    return Local{std::log(restricted_norm(df, s.e)), std::log(restricted_mininorm(df, s.f))};
  };
  std::vector<Local> base(pts.size());
  parallel_for(pts.size(), [&](size_t i) { base[i] = local(pts[i]); });

  std::vector<Vec> dirs;
  for (int i = 0; i < d; ++i) {
    Vec u = Vec::Zero(d);
    u(i) = 1.0;
    dirs.push_back(u);
    for (int j = i + 1; j < d; ++j) {
      Vec w = Vec::Zero(d);
      w(i) = w(j) = std::sqrt(0.5);
      dirs.push_back(w);
      w(j) = -w(j);
      dirs.push_back(w);
    }
  }
  const double diameter = sys.chart_diameter();
  const double step = diameter / grid.per_axis;
  auto passes = [&](double r) {
    std::vector<char> ok(pts.size(), 1);
    parallel_for(pts.size(), [&](size_t i) {
      for (const auto& u : dirs) {
        for (double frac : {0.25, 0.5, 1.0}) {
          const Point y = sys.translate(pts[i], frac * r * u);
          if (!sys.in_region(y)) continue;
          const Local ly = local(y);
          if (std::abs(ly.log_e - base[i].log_e) > tol || std::abs(ly.log_f - base[i].log_f) > tol) {
            ok[i] = 0;
            return;
          }
        }
      }
    });
    return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
  };
  for (double r = diameter; r >= step / 1024.0; r *= 0.5) {
    if (passes(r)) return r;
  }
  throw Error(ErrorKind::EmptyRadius, "no certified radius down to the finest grid step");
}

}  // namespace srb
