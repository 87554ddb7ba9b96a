// Sampled embedded disks tangent to the unstable cone: construction,
// iteration, tangency, carving at hyperbolic times, backward contraction,
// determinant distortion and Hoelder curvature.
//
// A disk is the image under f^steps of a flat parametrized disk
// origin + frame * p, p in a star-shaped parameter domain. Samples are kept
// as offsets from the center orbit, pushed with MapSystem::forward_offset, so
// disks far below the chart resolution keep their shape.
#pragma once

#include "srbkit/cones.hpp"
#include "srbkit/core.hpp"
#include "srbkit/models.hpp"
#include "srbkit/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <queue>
#include <vector>

namespace srb {

struct DiskOptions {
  double max_edge = 0.05;  // ResolutionExhausted beyond this chart edge length
};

/// Star-shaped parameter domain: [-minus, plus] for 1-D disks; per-ray radii
/// at angles 2 pi m / M (linearly interpolated) for 2-D disks.
struct ParamDomain {
  int dim = 1;
  double minus = 0.0;
  double plus = 0.0;
  std::vector<double> rays;

  static ParamDomain ball(int dim, double radius, int ray_count = 64) {
    ParamDomain d;
    d.dim = dim;
    if (dim == 1) {
      d.minus = d.plus = radius;
    } else {
      d.rays.assign(ray_count, radius);
    }
    return d;
  }

  int ray_count() const { return dim == 1 ? 2 : static_cast<int>(rays.size()); }

  double ray_angle(int m) const { return 2.0 * std::numbers::pi * m / ray_count(); }

  double ray_radius(int m) const { return dim == 1 ? (m == 0 ? plus : minus) : rays[m]; }
  void set_ray_radius(int m, double v) {
    if (dim == 1) {
      (m == 0 ? plus : minus) = v;
    } else {
      rays[m] = v;
    }
  }

  /// Unit parameter direction of ray m.
  Vec ray_direction(int m) const {
    Vec u(dim);
    if (dim == 1) {
      u(0) = m == 0 ? 1.0 : -1.0;
    } else {
      u(0) = std::cos(ray_angle(m));
      u(1) = std::sin(ray_angle(m));
    }
    return u;
  }

  double radius_along(double angle) const {
    const int m = ray_count();
    double t = angle / (2.0 * std::numbers::pi) * m;
    t -= std::floor(t / m) * m;
    const int i0 = static_cast<int>(std::floor(t)) % m;
    const int i1 = (i0 + 1) % m;
    const double w = t - std::floor(t);
    return (1.0 - w) * rays[i0] + w * rays[i1];
  }

  double min_radius() const {
    return dim == 1 ? std::min(minus, plus) : *std::min_element(rays.begin(), rays.end());
  }
};

struct DiskGenerator {
  Point origin;
  Mat frame;  // ambient x dim, orthonormal columns
};

class EmbeddedDisk {
 public:
  int dim = 1;
  int resolution = 0;  // samples per axis (odd)
  int steps = 0;       // number of forward iterates applied to the generator
  std::optional<DiskGenerator> generator;
  ParamDomain domain;

  Point center;
  int center_index = 0;
  std::vector<Vec> params;
  std::vector<Vec> offsets;  // chart displacement from the center, unwrapped
  std::vector<Point> points;
  std::vector<Subspace> tangents;
  std::vector<double> cell_weights;  // Lebesgue weights of the initial disk (sum = its volume)
  std::vector<std::array<int, 2>> edges;
  std::vector<double> edge_lengths;
  double tangent_defect = 0.0;  // max sine between tangent and central secant (1-D)

  int size() const { return static_cast<int>(points.size()); }
  int half() const { return (resolution - 1) / 2; }
  /// Parameter grid step relative to the domain radius.
  double grid_step() const { return 1.0 / half(); }

  int index(int i, int j) const { return i * resolution + j; }

  double max_edge() const {
    return edge_lengths.empty() ? 0.0 : *std::max_element(edge_lengths.begin(), edge_lengths.end());
  }

  std::vector<int> boundary() const {
    std::vector<int> out;
    if (dim == 1) return {0, resolution - 1};
    for (int i = 0; i < resolution; ++i) {
      for (int j = 0; j < resolution; ++j) {
        if (i == 0 || j == 0 || i == resolution - 1 || j == resolution - 1) out.push_back(index(i, j));
      }
    }
    return out;
  }

  /// Polyline arclength coordinate of each sample (1-D), zero at the center.
  std::vector<double> arclength() const {
    std::vector<double> s(size(), 0.0);
    for (int j = center_index + 1; j < size(); ++j) s[j] = s[j - 1] + edge_lengths[j - 1];
    for (int j = center_index - 1; j >= 0; --j) s[j] = s[j + 1] - edge_lengths[j];
    return s;
  }

  /// Intrinsic (shortest mesh path) distances from sample `from`.
  std::vector<double> distances_from(int from) const {
    if (dim == 1) {
      auto s = arclength();
      const double s0 = s[from];
      for (auto& v : s) v = std::abs(v - s0);
      return s;
    }
    std::vector<std::vector<std::pair<int, double>>> adj(size());
    for (size_t e = 0; e < edges.size(); ++e) {
      adj[edges[e][0]].emplace_back(edges[e][1], edge_lengths[e]);
      adj[edges[e][1]].emplace_back(edges[e][0], edge_lengths[e]);
    }
    std::vector<double> dist(size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[from] = 0.0;
    pq.emplace(0.0, from);
    while (!pq.empty()) {
      auto [dv, v] = pq.top();
      pq.pop();
      if (dv > dist[v]) continue;
      for (auto [w, len] : adj[v]) {
        if (dv + len < dist[w]) {
          dist[w] = dv + len;
          pq.emplace(dist[w], w);
        }
      }
    }
    return dist;
  }

  /// Intrinsic distance from the center to the boundary.
  double intrinsic_radius() const {
    const auto d = distances_from(center_index);
    double r = std::numeric_limits<double>::infinity();
    for (int b : boundary()) r = std::min(r, d[b]);
    return r;
  }

  double total_weight() const { return pairwise_sum(std::span<const double>(cell_weights)); }
};

namespace detail {

inline Vec grid_param(const ParamDomain& dom, int resolution, int i, int j) {
  const int c = (resolution - 1) / 2;
  if (dom.dim == 1) {
    const double q = static_cast<double>(i - c) / c;
    Vec p(1);
    p(0) = q * (q < 0 ? dom.minus : dom.plus);
    return p;
  }
  const double q1 = static_cast<double>(i - c) / c;
  const double q2 = static_cast<double>(j - c) / c;
  const double s = std::max(std::abs(q1), std::abs(q2));
  Vec p = Vec::Zero(2);
  if (s == 0.0) return p;
  const double th = std::atan2(q2, q1);
  const double rad = s * dom.radius_along(th < 0 ? th + 2.0 * std::numbers::pi : th);
  p(0) = rad * std::cos(th);
  p(1) = rad * std::sin(th);
  return p;
}

inline void build_edges(EmbeddedDisk& d) {
  d.edges.clear();
  if (d.dim == 1) {
    for (int j = 0; j + 1 < d.resolution; ++j) d.edges.push_back({j, j + 1});
    return;
  }
  const int n = d.resolution;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i + 1 < n) d.edges.push_back({d.index(i, j), d.index(i + 1, j)});
      if (j + 1 < n) d.edges.push_back({d.index(i, j), d.index(i, j + 1)});
      if (i + 1 < n && j + 1 < n) {
        d.edges.push_back({d.index(i, j), d.index(i + 1, j + 1)});
        d.edges.push_back({d.index(i + 1, j), d.index(i, j + 1)});
      }
    }
  }
}

inline void measure_edges(EmbeddedDisk& d) {
  d.edge_lengths.resize(d.edges.size());
  for (size_t e = 0; e < d.edges.size(); ++e) {
    d.edge_lengths[e] = (d.offsets[d.edges[e][1]] - d.offsets[d.edges[e][0]]).norm();
  }
  d.tangent_defect = 0.0;
  if (d.dim == 1) {
    for (int j = 1; j + 1 < d.size(); ++j) {
      const Vec sec = d.offsets[j + 1] - d.offsets[j - 1];
      if (!(sec.norm() > 0.0)) continue;
      d.tangent_defect = std::max(d.tangent_defect, subspace_distance(Subspace::line(sec), d.tangents[j]));
    }
  }
}

inline void compute_weights(EmbeddedDisk& d) {
  d.cell_weights.assign(d.size(), 0.0);
  if (d.dim == 1) {
    for (int j = 0; j + 1 < d.size(); ++j) {
      const double len = std::abs(d.params[j + 1](0) - d.params[j](0));
      d.cell_weights[j] += 0.5 * len;
      d.cell_weights[j + 1] += 0.5 * len;
    }
    return;
  }
  const int n = d.resolution;
  auto tri = [&](int a, int b, int c) {
    const Vec u = d.params[b] - d.params[a];
    const Vec v = d.params[c] - d.params[a];
    const double area = 0.5 * std::abs(u(0) * v(1) - u(1) * v(0));
    for (int k : {a, b, c}) d.cell_weights[k] += area / 3.0;
  };
  for (int i = 0; i + 1 < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      tri(d.index(i, j), d.index(i + 1, j), d.index(i + 1, j + 1));
      tri(d.index(i, j), d.index(i + 1, j + 1), d.index(i, j + 1));
    }
  }
}

inline void require_samples_in_region(const MapSystem& sys, const EmbeddedDisk& d, ErrorKind kind) {
  for (int j = 0; j < d.size(); ++j) {
    if (!sys.in_region(d.points[j])) {
      throw Error(kind, "disk sample " + std::to_string(j) + " left the region after " + std::to_string(d.steps) +
                            " steps");
    }
  }
}

/// One forward step of every sample (parallel across samples).
inline void step_disk(const MapSystem& sys, EmbeddedDisk& d) {
  const Point c = d.center;
  const Point fc = sys.forward(c);
  std::vector<Vec> off(d.size());
  std::vector<Subspace> tan(d.size());
  std::vector<Point> pts(d.size());
  parallel_for(d.size(), [&](size_t j) {
    const LinearMap df = sys.tangent(d.points[j]);
    off[j] = sys.forward_offset(c, d.offsets[j]);
    tan[j] = image(df, d.tangents[j]);
    pts[j] = sys.translate(fc, off[j]);
  });
  d.center = fc;
  d.offsets = std::move(off);
  d.tangents = std::move(tan);
  d.points = std::move(pts);
  d.offsets[d.center_index] = Vec::Zero(sys.dim());
  d.points[d.center_index] = fc;
  ++d.steps;
}

}  // namespace detail

/// Flat disk generated by `gen` over `domain`, iterated `steps` times.
inline EmbeddedDisk build_disk(const MapSystem& sys, const DiskGenerator& gen, const ParamDomain& domain,
                               int resolution, int steps = 0, const DiskOptions& opt = {}) {
  if (resolution < 3 || resolution % 2 == 0) throw Error(ErrorKind::InvalidArgument, "resolution must be odd and >= 3");
  EmbeddedDisk d;
  d.dim = static_cast<int>(gen.frame.cols());
  d.resolution = resolution;
  d.generator = gen;
  d.domain = domain;
  d.center = sys.wrap(gen.origin);
  const int count = d.dim == 1 ? resolution : resolution * resolution;
  d.center_index = d.dim == 1 ? (resolution - 1) / 2 : d.index((resolution - 1) / 2, (resolution - 1) / 2);
  const Subspace tangent = Subspace::span(gen.frame);
  for (int k = 0; k < count; ++k) {
    const int i = d.dim == 1 ? k : k / resolution;
    const int j = d.dim == 1 ? 0 : k % resolution;
    d.params.push_back(detail::grid_param(domain, resolution, i, j));
    d.offsets.push_back(gen.frame * d.params.back());
    d.points.push_back(sys.translate(d.center, d.offsets.back()));
    d.tangents.push_back(tangent);
  }
  detail::build_edges(d);
  detail::compute_weights(d);
  detail::require_samples_in_region(sys, d, ErrorKind::ChartOverflow);
  for (int s = 0; s < steps; ++s) {
    detail::step_disk(sys, d);
    detail::require_samples_in_region(sys, d, ErrorKind::OrbitEscaped);
  }
  detail::measure_edges(d);
  if (steps > 0 && d.max_edge() > opt.max_edge) {
    throw Error(ErrorKind::ResolutionExhausted, "edge length " + std::to_string(d.max_edge()) + " exceeds ceiling");
  }
  return d;
}

/// Flat disk through x spanned by `direction`.
inline EmbeddedDisk make_disk(const MapSystem& sys, const Point& x, const Subspace& direction, double radius,
                              int resolution) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error(ErrorKind::InvalidArgument, "disk radius must be > 0");
  if (direction.ambient() != sys.dim()) throw Error(ErrorKind::DimensionMismatch, "direction not in the tangent space");
  if (direction.dim() != sys.unstable_dim() || direction.dim() > 2) {
    throw Error(ErrorKind::DimensionMismatch, "disk dimension must equal dim F (1 or 2)");
  }
  for (const auto& ax : sys.axes()) {
    if (ax.periodic && 2.0 * radius >= 0.5 * ax.period()) {
      throw Error(ErrorKind::ChartOverflow, "disk would wrap around a periodic axis");
    }
  }
  return build_disk(sys, DiskGenerator{x, direction.frame()}, ParamDomain::ball(direction.dim(), radius), resolution);
}

/// 1-D disk from explicit samples (no generator, cannot be carved).
inline EmbeddedDisk disk_from_samples(const MapSystem& sys, const std::vector<Point>& pts,
                                      const std::vector<Subspace>& tangents) {
  if (pts.size() < 3 || pts.size() % 2 == 0 || tangents.size() != pts.size()) {
    throw Error(ErrorKind::InvalidArgument, "need an odd number (>= 3) of samples with tangents");
  }
  EmbeddedDisk d;
  d.dim = 1;
  d.resolution = static_cast<int>(pts.size());
  d.center_index = d.half();
  d.center = pts[d.center_index];
  d.points = pts;
  d.tangents = tangents;
  // unwrap offsets along the chain
  d.offsets.assign(pts.size(), Vec::Zero(sys.dim()));
  for (int j = d.center_index + 1; j < d.size(); ++j) d.offsets[j] = d.offsets[j - 1] + sys.displacement(pts[j - 1], pts[j]);
  for (int j = d.center_index - 1; j >= 0; --j) d.offsets[j] = d.offsets[j + 1] + sys.displacement(pts[j + 1], pts[j]);
  for (int j = 0; j < d.size(); ++j) {
    Vec p(1);
    p(0) = static_cast<double>(j - d.center_index);
    d.params.push_back(p);
  }
  detail::build_edges(d);
  detail::measure_edges(d);
  d.cell_weights.assign(d.size(), 0.0);
  for (size_t e = 0; e < d.edges.size(); ++e) {
    d.cell_weights[d.edges[e][0]] += 0.5 * d.edge_lengths[e];
    d.cell_weights[d.edges[e][1]] += 0.5 * d.edge_lengths[e];
  }
  return d;
}

inline EmbeddedDisk iterate_disk(const MapSystem& sys, EmbeddedDisk d, int steps, const DiskOptions& opt = {}) {
  if (steps < 0) throw Error(ErrorKind::InvalidArgument, "negative step count");
  for (int s = 0; s < steps; ++s) {
    detail::step_disk(sys, d);
    detail::require_samples_in_region(sys, d, ErrorKind::OrbitEscaped);
    detail::measure_edges(d);
    if (d.max_edge() > opt.max_edge) {
      throw Error(ErrorKind::ResolutionExhausted,
                  "edge length " + std::to_string(d.max_edge()) + " exceeds ceiling at step " + std::to_string(d.steps));
    }
  }
  return d;
}

/// d, f(d), ..., f^n(d).
inline std::vector<EmbeddedDisk> disk_trajectory(const MapSystem& sys, const EmbeddedDisk& d, int n,
                                                 const DiskOptions& opt = {}) {
  std::vector<EmbeddedDisk> out;
  out.reserve(static_cast<size_t>(n) + 1);
  out.push_back(d);
  for (int k = 1; k <= n; ++k) out.push_back(iterate_disk(sys, out.back(), 1, opt));
  return out;
}

struct TangencyReport {
  double max_width = 0.0;
  double max_f_distance = 0.0;
};

inline TangencyReport tangency_report(const EmbeddedDisk& d, const ConeSpec& cone) {
  TangencyReport rep;
  for (int j = 0; j < d.size(); ++j) {
    const Splitting s = cone.splitting_at(d.points[j]);
    rep.max_width = std::max(rep.max_width, cone_width_of(d.tangents[j], s));
    rep.max_f_distance = std::max(rep.max_f_distance, subspace_distance(s.f, d.tangents[j]));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Carving

namespace detail {

/// Does the sub-ray [0, t] of ray m satisfy the carving conditions? Offsets of
/// `count` points are pushed along the center orbit; steps first..last are
/// checked against the chart ball of radius r, and the polyline length at
/// `last` against r.
inline bool ray_fits(const MapSystem& sys, const DiskGenerator& gen, const std::vector<Point>& orbit, const Vec& dir,
                     double t, int count, int first, int last, double r) {
  std::vector<Vec> off(count);
  for (int k = 0; k < count; ++k) off[k] = gen.frame * (dir * (t * (k + 1) / count));
  for (int step = 0; step <= last; ++step) {
    if (step > 0) {
      for (auto& o : off) o = sys.forward_offset(orbit[step - 1], o);
    }
    if (step >= first) {
      for (const auto& o : off) {
        if (!(o.norm() <= r)) return false;
      }
    }
  }
  double len = off[0].norm();
  for (int k = 1; k < count; ++k) len += (off[k] - off[k - 1]).norm();
  return len <= r;
}

}  // namespace detail

/// Sub-disk D' of d containing the center such that f^k(D') stays in the
/// r-ball around f^k(center) for 0 <= k <= n and f^n(D') has intrinsic radius
/// about r. Built by bisection along each parameter ray, then resampled at
/// the full resolution and verified sample by sample.
inline EmbeddedDisk hyperbolic_component(const MapSystem& sys, const EmbeddedDisk& d, int n, double r,
                                         const DiskOptions& opt = {}) {
  if (!d.generator) throw Error(ErrorKind::InvalidArgument, "disk has no generator and cannot be carved");
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative time");
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "carving radius must be > 0");
  if (!(d.intrinsic_radius() > r)) throw Error(ErrorKind::HypothesisViolated, "disk radius does not exceed r");
  const DiskGenerator& gen = *d.generator;
  const int first = d.steps;
  const int last = d.steps + n;
  std::vector<Point> orbit(static_cast<size_t>(last) + 1);
  orbit[0] = sys.wrap(gen.origin);
  for (int k = 1; k <= last; ++k) orbit[k] = sys.forward(orbit[k - 1]);

  ParamDomain dom = d.domain;
  const int count = d.half();
  std::vector<double> radii(dom.ray_count());
  parallel_for(radii.size(), [&](size_t m) {
    const Vec dir = dom.ray_direction(static_cast<int>(m));
    const double tmax = dom.ray_radius(static_cast<int>(m));
    auto fits = [&](double t) { return detail::ray_fits(sys, gen, orbit, dir, t, count, first, last, r); };
    if (fits(tmax)) {
      radii[m] = tmax;
      return;
    }
    double lo = tmax;
    while (lo > 1e-300 && !fits(lo)) lo *= 0.5;
    if (!(lo > 1e-300)) {
      radii[m] = 0.0;
      return;
    }
    double hi = std::min(2.0 * lo, tmax);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (fits(mid) ? lo : hi) = mid;
    }
    radii[m] = lo;
  });
  for (int m = 0; m < dom.ray_count(); ++m) {
    if (!(radii[m] > 0.0)) throw Error(ErrorKind::CarvingFailed, "carved component collapsed along a ray");
    dom.set_ray_radius(m, radii[m]);
  }

  for (int attempt = 0; attempt < 60; ++attempt) {
    EmbeddedDisk out = build_disk(sys, gen, dom, d.resolution, 0, opt);
    bool ok = true;
    EmbeddedDisk probe = out;
    for (int step = 0; step <= last && ok; ++step) {
      if (step > 0) detail::step_disk(sys, probe);
      if (step < first) continue;
      for (const auto& o : probe.offsets) {
        if (!(o.norm() <= r * (1.0 + 1e-9))) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return first > 0 ? iterate_disk(sys, std::move(out), first, opt) : out;
    for (int m = 0; m < dom.ray_count(); ++m) dom.set_ray_radius(m, 0.97 * dom.ray_radius(m));
  }
  throw Error(ErrorKind::CarvingFailed, "sampled component does not fit the balls");
}

/// max over samples y and 1 <= k <= n of
/// d_{f^{n-k}D}(f^{n-k}x, f^{n-k}y) / (sigma^{k/2} d_{f^nD}(f^n x, f^n y)).
inline double backward_contraction_check(const MapSystem& sys, const EmbeddedDisk& d, int n, double sigma,
                                         const DiskOptions& opt = {}) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
  if (n <= 0) return 0.0;
  const auto traj = disk_trajectory(sys, d, n, opt);
  std::vector<std::vector<double>> dist(n + 1);
  parallel_for(static_cast<size_t>(n) + 1, [&](size_t k) { dist[k] = traj[k].distances_from(d.center_index); });
  double worst = 0.0;
  for (int y = 0; y < d.size(); ++y) {
    const double dn = dist[n][y];
    if (y == d.center_index || !(dn > 0.0)) continue;
    for (int k = 1; k <= n; ++k) {
      worst = std::max(worst, dist[n - k][y] / (std::pow(sigma, 0.5 * k) * dn));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Distortion

struct DistortionConstants {
  double r1 = 0.0;  // Lipschitz constant of log|det Df| in the tangent plane
  double r2 = 0.0;  // beta-Hoelder constant of log|det Df|F|
  double beta = 1.0;
};

struct DistortionSettings {
  double a = 0.1;
  double lambda2 = 0.5;
  double r = 0.05;
  DistortionConstants constants;
};

struct DistortionReport {
  double ratio = 1.0;
  double bound_k = 1.0;
  int n = 0;
  int x = 0;
  int y = 0;

  bool within() const { return ratio <= bound_k && 1.0 / ratio <= bound_k; }
};

inline double distortion_bound(double a, double lambda2, double beta, double r1, double r2) {
  const double lb = std::pow(lambda2, 0.5 * beta);
  return std::exp(2.0 * r1 * a / (1.0 - lambda2) + r2 * lb / (1.0 - lb));
}

namespace detail {

/// Calls fn(x, y) on grid points x and nearby y = x + h u over several
/// directions and scales h.
template <class Fn>
void scan_pairs(const MapSystem& sys, const GridSpec& grid, Fn&& fn) {
  const auto pts = grid_points(sys, grid);
  const int d = sys.dim();
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
  const double step = sys.chart_diameter() / grid.per_axis;
  for (size_t i = 0; i < pts.size(); ++i) {
    for (const auto& u : dirs) {
      for (double h : {step, step / 4, step / 16}) {
        const Point y = sys.translate(pts[i], h * u);
        if (sys.in_region(y)) fn(pts[i], y, h);
      }
    }
  }
}

}  // namespace detail

/// Grid scans for R1 and R2 with a 1.5 safety factor. R1 compares tangent
/// planes inside the cone of width a around F.
inline DistortionConstants measure_distortion_constants(const MapSystem& sys, double a, const GridSpec& grid = {},
                                                        double beta = 1.0) {
  DistortionConstants out;
  out.beta = beta;
  const auto pts = grid_points(sys, grid);
  std::vector<double> r1(pts.size(), 0.0);
  parallel_for(pts.size(), [&](size_t i) {
    const Splitting s = sys.splitting(pts[i]);
    const LinearMap df = sys.tangent(pts[i]);
    std::vector<Subspace> planes;
    const int de = s.e.dim(), dfd = s.f.dim();
    for (double t : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      for (int k = 0; k < std::max(1, de * dfd); ++k) {
        Mat m = Mat::Zero(de, dfd);
        m(k % de, k / de) = t * a;
        planes.push_back(Subspace::span(s.f.frame() + s.e.frame() * m));
        if (t == 0.0) break;
      }
    }
    for (size_t p = 0; p < planes.size(); ++p) {
      for (size_t q = p + 1; q < planes.size(); ++q) {
        const double dist = subspace_distance(planes[p], planes[q]);
        if (!(dist > 1e-12)) continue;
        const double diff = std::abs(std::log(restricted_det(df, planes[p])) - std::log(restricted_det(df, planes[q])));
        r1[i] = std::max(r1[i], diff / dist);
      }
    }
  });
  out.r1 = 1.5 * *std::max_element(r1.begin(), r1.end());
  double r2 = 0.0;
  detail::scan_pairs(sys, grid, [&](const Point& x, const Point& y, double) {
    const double lx = std::log(restricted_det(sys.tangent(x), sys.f_at(x)));
    const double ly = std::log(restricted_det(sys.tangent(y), sys.f_at(y)));
    const double dist = sys.distance(x, y);
    if (dist > 0.0) r2 = std::max(r2, std::abs(lx - ly) / std::pow(dist, beta));
  });
  out.r2 = 1.5 * r2;
  return out;
}

/// |det Df^n on T_y D| / |det Df^n on T_x D| along a disk trajectory.
inline DistortionReport distortion(const MapSystem& sys, const std::vector<EmbeddedDisk>& traj, int y_index, int n,
                                   const DistortionSettings& set) {
  if (n < 0 || n >= static_cast<int>(traj.size())) throw Error(ErrorKind::InvalidArgument, "trajectory shorter than n");
  const EmbeddedDisk& d0 = traj.front();
  if (y_index < 0 || y_index >= d0.size()) throw Error(ErrorKind::InvalidArgument, "sample index out of range");
  const int x_index = d0.center_index;
  const double dn = traj[n].distances_from(x_index)[y_index];
  if (!(dn <= set.r * (1.0 + 1e-9))) throw Error(ErrorKind::HypothesisViolated, "intrinsic distance at time n exceeds r");
  long double acc = 0.0L;
  for (int k = 0; k < n; ++k) {
    const EmbeddedDisk& dk = traj[k];
    acc += std::log(restricted_det(sys.tangent(dk.points[y_index]), dk.tangents[y_index]));
    acc -= std::log(restricted_det(sys.tangent(dk.points[x_index]), dk.tangents[x_index]));
  }
  DistortionReport rep;
  rep.ratio = static_cast<double>(std::exp(acc));
  rep.bound_k = distortion_bound(set.a, set.lambda2, set.constants.beta, set.constants.r1, set.constants.r2);
  rep.n = n;
  rep.x = x_index;
  rep.y = y_index;
  return rep;
}

inline DistortionReport distortion(const MapSystem& sys, const EmbeddedDisk& d, int y_index, int n,
                                   const DistortionSettings& set, const DiskOptions& opt = {}) {
  return distortion(sys, disk_trajectory(sys, d, n, opt), y_index, n, set);
}

// ---------------------------------------------------------------------------
// Hoelder curvature

/// E frames at every sample, from the system's splitting.
inline std::vector<Subspace> e_frames(const MapSystem& sys, const EmbeddedDisk& d) {
  std::vector<Subspace> out(d.size());
  parallel_for(d.size(), [&](size_t j) { out[j] = sys.e_at(d.points[j]); });
  return out;
}

/// ||L_x(y)|| where T_y D is the graph of L_x(y): T_x D -> E(x).
inline double graph_map_norm(const Subspace& tx, const Subspace& ex, const Subspace& ty) {
  const int k = tx.dim();
  const int d = tx.ambient();
  Mat joint(d, d);
  joint.leftCols(k) = tx.frame();
  joint.rightCols(d - k) = ex.frame();
  Eigen::PartialPivLU<Mat> lu(joint);
  if (!(std::abs(lu.determinant()) > kAngleFloor)) throw Error(ErrorKind::DegenerateTangent, "T_x D meets E(x)");
  const Mat c = lu.solve(ty.frame());
  const Mat p = c.topRows(k);
  const Mat q = c.bottomRows(d - k);
  if (!(std::abs(p.determinant()) > 1e-12)) throw Error(ErrorKind::DegenerateTangent, "T_y D is not a graph over T_x D");
  const Mat l = q * p.inverse();
  const double norm = operator_norm(l);
  if (norm > 1.0) throw Error(ErrorKind::DegenerateTangent, "T_y D leaves the width-1 cone over T_x D");
  return norm;
}

/// Grid estimate of the Hoelder curvature: max over sample pairs with
/// 0 < d_D(x, y) <= delta0 of ||L_x(y)|| / d_D(x, y)^xi. With no E frames the
/// orthogonal complement of T_x D is used.
inline double holder_curvature(const EmbeddedDisk& d, double xi, double delta0,
                               const std::vector<Subspace>* e_frames_in = nullptr) {
  if (d.resolution < 3) throw Error(ErrorKind::InvalidArgument, "need >= 3 samples per axis");
  if (!(xi > 0.0 && xi <= 1.0)) throw Error(ErrorKind::InvalidArgument, "xi must lie in (0,1]");
  std::vector<double> best(d.size(), 0.0);
  const std::vector<double> arc = d.dim == 1 ? d.arclength() : std::vector<double>{};
  parallel_for(d.size(), [&](size_t xi_idx) {
    const int x = static_cast<int>(xi_idx);
    const Subspace ex = e_frames_in ? (*e_frames_in)[x] : d.tangents[x].complement();
    std::vector<double> dist;
    if (d.dim == 1) {
      dist.resize(d.size());
      for (int y = 0; y < d.size(); ++y) dist[y] = std::abs(arc[y] - arc[x]);
    } else {
      dist = d.distances_from(x);
    }
    for (int y = 0; y < d.size(); ++y) {
      if (y == x || !(dist[y] > 0.0) || dist[y] > delta0) continue;
      const double l = graph_map_norm(d.tangents[x], ex, d.tangents[y]);
      best[x] = std::max(best[x], l / std::pow(dist[y], xi));
    }
  });
  return *std::max_element(best.begin(), best.end());
}

inline double holder_curvature(const MapSystem& sys, const EmbeddedDisk& d, double xi) {
  const auto ef = e_frames(sys, d);
  return holder_curvature(d, xi, 0.1 * sys.chart_diameter(), &ef);
}

struct CurvatureConstants {
  double lambda4 = 0.0;
  double script_l = 0.0;
  double l1 = 0.0;
  double xi = 1.0;
  double alpha = 0.0;
  double b = 0.0;
};

/// (L1, xi)-Hoelder constant of Df by grid scan, with a 1.5 safety factor.
inline double measure_tangent_holder(const MapSystem& sys, double xi, const GridSpec& grid = {}) {
  double l1 = 0.0;
  detail::scan_pairs(sys, grid, [&](const Point& x, const Point& y, double) {
    const double dist = sys.distance(x, y);
    if (dist > 0.0) l1 = std::max(l1, operator_norm(sys.tangent(x) - sys.tangent(y)) / std::pow(dist, xi));
  });
  return 1.5 * l1;
}

/// alpha defaults to b/8 and lambda4 to the midpoint of (lambda3, 1).
inline CurvatureConstants curvature_constants(const MapSystem& sys, const ConstantsH& h, const GridSpec& grid = {},
                                              std::optional<double> alpha = {}, std::optional<double> lambda4 = {}) {
  CurvatureConstants c;
  c.xi = h.xi;
  c.b = h.b;
  c.alpha = alpha.value_or(h.b / 8.0);
  if (!(c.alpha > 0.0 && c.alpha < h.b / 4.0)) throw Error(ErrorKind::ConstantsInvalid, "alpha must lie in (0, b/4)");
  c.lambda4 = lambda4.value_or(0.5 * (h.lambda3 + 1.0));
  if (!(c.lambda4 > h.lambda3 && c.lambda4 < 1.0)) throw Error(ErrorKind::ConstantsInvalid, "lambda4 must lie in (lambda3, 1)");
  c.l1 = measure_tangent_holder(sys, c.xi, grid);
  c.script_l = std::pow(2.0, 1.0 + c.xi) * c.l1 / std::pow(c.b, 1.0 + c.xi);
  return c;
}

struct CurvatureReport {
  double initial = 0.0;         // curvature of d
  double measured = 0.0;        // curvature of f^n(d)
  double bound_induction = 0.0; // c_0..c_{n-1} H + L (1 + c_{n-1} + ... + c_{n-1}..c_1)
  double bound_closed = 0.0;    // lambda4^n H + L / (1 - lambda4)
  std::vector<double> c;        // per-step factors along the center orbit

  double bound() const { return std::min(bound_induction, bound_closed); }
};

/// Per-step factor (||Df|E|| + 2 alpha) / (m(Df|F) - 2 alpha)^{1+xi} at p.
inline double curvature_step_factor(const MapSystem& sys, const Point& p, const CurvatureConstants& k) {
  const LinearMap df = sys.tangent(p);
  const Splitting s = sys.splitting(p);
  const double den = restricted_mininorm(df, s.f) - 2.0 * k.alpha;
  if (!(den > 0.0)) throw Error(ErrorKind::ConstantsInvalid, "m(Df|F) - 2 alpha is not positive");
  return (restricted_norm(df, s.e) + 2.0 * k.alpha) / std::pow(den, 1.0 + k.xi);
}

inline CurvatureReport curvature_recursion(const MapSystem& sys, const EmbeddedDisk& d, int n,
                                           const CurvatureConstants& k, double delta0 = -1.0,
                                           const DiskOptions& opt = {}) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative time");
  if (delta0 <= 0.0) delta0 = 0.1 * sys.chart_diameter();
  CurvatureReport rep;
  Point p = d.center;
  for (int j = 0; j < n; ++j) {
    rep.c.push_back(curvature_step_factor(sys, p, k));
    p = sys.forward(p);
  }
  long double tail = 1.0L;
  for (int len = 1; len <= n; ++len) {
    tail *= rep.c[n - len];
    if (static_cast<double>(tail) > std::pow(k.lambda4, len) * (1.0 + 1e-12)) {
      throw Error(ErrorKind::ConstantsInvalid, "trailing product over " + std::to_string(len) + " steps exceeds lambda4^k");
    }
  }
  const auto ef0 = e_frames(sys, d);
  rep.initial = holder_curvature(d, k.xi, delta0, &ef0);
  const EmbeddedDisk dn = iterate_disk(sys, d, n, opt);
  const auto efn = e_frames(sys, dn);
  rep.measured = holder_curvature(dn, k.xi, delta0, &efn);

  long double prod = 1.0L;
  for (double c : rep.c) prod *= c;
  long double series = 1.0L, run = 1.0L;
  for (int j = n - 1; j >= 1; --j) {
    run *= rep.c[j];
    series += run;
  }
  rep.bound_induction = static_cast<double>(prod * rep.initial + k.script_l * series);
  rep.bound_closed = std::pow(k.lambda4, n) * rep.initial + k.script_l / (1.0 - k.lambda4);
  return rep;
}

// ---------------------------------------------------------------------------

/// Columnar snapshot: param coords, point coords, tangent frame entries.
inline void write_disk_csv(std::ostream& os, const EmbeddedDisk& d) {
  const int amb = d.points.empty() ? 0 : d.points[0].dim();
  for (int i = 0; i < d.dim; ++i) os << "p" << i << ",";
  for (int i = 0; i < amb; ++i) os << "x" << i << ",";
  for (int c = 0; c < d.dim; ++c) {
    for (int i = 0; i < amb; ++i) os << "t" << c << "_" << i << (c + 1 == d.dim && i + 1 == amb ? "\n" : ",");
  }
  os << std::setprecision(17);
  for (int j = 0; j < d.size(); ++j) {
    for (int i = 0; i < d.dim; ++i) os << d.params[j](i) << ",";
    for (int i = 0; i < amb; ++i) os << d.points[j].coords(i) << ",";
    const Mat& f = d.tangents[j].frame();
    for (int c = 0; c < d.dim; ++c) {
      for (int i = 0; i < amb; ++i) os << f(i, c) << (c + 1 == d.dim && i + 1 == amb ? "\n" : ",");
    }
  }
}

}  // namespace srb
