// Concrete systems: the linear cat map, its sine perturbation, the
// Smale-Williams solenoid and a derived-from-Anosov deformation of the cat
// map with a weakly expanding fixed point. Plus a linear toy on R^d.
#pragma once

#include "srbkit/core.hpp"
#include "srbkit/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

namespace srb {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;
/// Unstable eigenvalue of [[2,1],[1,1]].
inline const double kCatLambdaU = (3.0 + std::sqrt(5.0)) / 2.0;
inline const double kCatLambdaS = (3.0 - std::sqrt(5.0)) / 2.0;

inline Mat cat_matrix() {
  Mat a(2, 2);
  a << 2, 1, 1, 1;
  return a;
}

inline Mat cat_inverse_matrix() {
  Mat a(2, 2);
  a << 1, -1, -1, 2;
  return a;
}

/// Unit eigenvectors of the cat matrix; they are orthogonal since it is symmetric.
inline Vec cat_unstable_direction() {
  Vec v(2);
  v << 1.0, kGolden - 1.0;
  return v.normalized();
}

inline Vec cat_stable_direction() {
  Vec v(2);
  v << 1.0, -kGolden;
  return v.normalized();
}

inline std::vector<Axis> torus_axes() { return {Axis{true, 0.0, 1.0}, Axis{true, 0.0, 1.0}}; }

/// Memo for numerically converged splittings, keyed on the exact bits of the
/// point. Filling is idempotent, so concurrent readers see the same values
/// they would compute themselves.
class SplittingMemo {
 public:
  explicit SplittingMemo(size_t capacity = 1 << 16) : capacity_(capacity) {}

  template <class Compute>
  Splitting get(const Point& x, Compute&& compute) const {
    const Key key = key_of(x);
    {
      std::lock_guard lock(mutex_);
      if (auto it = map_.find(key); it != map_.end()) return it->second;
    }
    Splitting s = compute();
    std::lock_guard lock(mutex_);
    if (map_.size() >= capacity_) map_.clear();
    map_.emplace(key, s);
    return s;
  }

 private:
  using Key = std::array<std::uint64_t, kMaxDim>;
  struct KeyHash {
    size_t operator()(const Key& k) const noexcept {
      size_t h = 1469598103934665603ull;
      for (auto v : k) h = (h ^ v) * 1099511628211ull;
      return h;
    }
  };
  static Key key_of(const Point& x) {
    Key k{};
    for (int i = 0; i < x.dim(); ++i) k[i] = std::bit_cast<std::uint64_t>(x.coords(i));
    return k;
  }

  size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<Key, Splitting, KeyHash> map_;
};

/// Systems whose E and/or F come from iterating the tangent cocycle.
class ConvergedSplittingSystem : public MapSystem {
 public:
  explicit ConvergedSplittingSystem(int depth) : depth_(depth) {}

  int depth() const { return depth_; }

  Subspace e_at(const Point& x) const override { return cached(x).e; }
  Subspace f_at(const Point& x) const override { return cached(x).f; }

  SplittingKind splitting_kind() const override { return {false, tolerance_, depth_}; }

  /// Splitting computed at an explicit iteration depth (no memo).
  virtual Splitting splitting_at_depth(const Point& x, int depth) const = 0;

 protected:
  void set_tolerance(double t) { tolerance_ = t; }

 private:
  Splitting cached(const Point& x) const {
    return memo_.get(x, [&] { return splitting_at_depth(x, depth_); });
  }

  int depth_;
  double tolerance_ = 0.0;
  SplittingMemo memo_;
};

// ---------------------------------------------------------------------------

class CatMap final : public MapSystem {
 public:
  std::string name() const override { return "cat"; }
  const std::vector<Axis>& axes() const override { return axes_; }
  int unstable_dim() const override { return 1; }

  Point forward(const Point& x) const override {
    Point y = x;
    y.coords = a_ * x.coords;
    return wrap(y);
  }
  Point inverse(const Point& x) const override {
    Point y = x;
    y.coords = a_inv_ * x.coords;
    return wrap(y);
  }
  LinearMap tangent(const Point&) const override { return a_; }
  Subspace e_at(const Point&) const override { return e_; }
  Subspace f_at(const Point&) const override { return f_; }
  Vec forward_offset(const Point&, const Vec& offset) const override { return a_ * offset; }

  SystemConstants constants() const override {
    // c0 carries a 1e-12 relative pad so rounding in the cocycle never breaks b_j <= c0.
    return {kCatLambdaU, std::log(kCatLambdaU) * (1.0 + 1e-12), 1.0, 1.0};
  }

 private:
  std::vector<Axis> axes_ = torus_axes();
  Mat a_ = cat_matrix();
  Mat a_inv_ = cat_inverse_matrix();
  Subspace e_ = Subspace::line(cat_stable_direction());
  Subspace f_ = Subspace::line(cat_unstable_direction());
};

/// f(x) = A x + eps (sin 2 pi x1, 0) mod 1.
class PerturbedCat final : public ConvergedSplittingSystem {
 public:
  explicit PerturbedCat(double eps, int depth = 30) : ConvergedSplittingSystem(depth), eps_(eps) {
    if (!(eps >= 0.0 && eps <= 0.05)) {
      throw Error(ErrorKind::ConstructionFailed, "perturbed_cat eps must lie in [0, 0.05]");
    }
    measure_constants();
  }

  double eps() const { return eps_; }
  std::string name() const override { return "perturbed_cat"; }
  const std::vector<Axis>& axes() const override { return axes_; }
  int unstable_dim() const override { return 1; }

  Point forward(const Point& x) const override {
    Point y = x;
    y.coords = a_ * x.coords;
    y.coords(0) += eps_ * std::sin(kTwoPi * x.coords(0));
    return wrap(y);
  }

  Point inverse(const Point& y) const override {
    // A x = z (mod 1) with z2 = y2 and z1 + eps sin(2 pi (z1 - z2)) = y1.
    const double z2 = y.coords(1);
    double z1 = y.coords(0);
    for (int it = 0; it < 60; ++it) {
      const double g = z1 + eps_ * std::sin(kTwoPi * (z1 - z2)) - y.coords(0);
      const double dg = 1.0 + eps_ * kTwoPi * std::cos(kTwoPi * (z1 - z2));
      const double step = g / dg;
      z1 -= step;
      if (std::abs(step) < 1e-17) break;
    }
    Point x = y;
    Vec z(2);
    z << z1, z2;
    x.coords = a_inv_ * z;
    return wrap(x);
  }

  LinearMap tangent(const Point& x) const override {
    Mat df = a_;
    df(0, 0) += eps_ * kTwoPi * std::cos(kTwoPi * x.coords(0));
    return df;
  }

  Vec forward_offset(const Point& x, const Vec& d) const override {
    Vec out = a_ * d;
    // sin(u + h) - sin(u) = 2 cos(u + h/2) sin(h/2)
    const double u = kTwoPi * x.coords(0);
    const double h = kTwoPi * d(0);
    out(0) += eps_ * 2.0 * std::cos(u + 0.5 * h) * std::sin(0.5 * h);
    return out;
  }

  Splitting splitting_at_depth(const Point& x, int depth) const override {
    if (eps_ == 0.0) return {Subspace::line(cat_stable_direction()), Subspace::line(cat_unstable_direction())};
    Mat fs(2, 1), es(2, 1);
    fs.col(0) = cat_unstable_direction();
    es.col(0) = cat_stable_direction();
    return {converge_backward_bundle(*this, x, depth, es), converge_forward_bundle(*this, x, depth, fs)};
  }

  SystemConstants constants() const override { return constants_; }

 private:
  void measure_constants() {
    // m(Df|F) ranges over a grid; pad outward so orbit values stay inside.
    double mmin = 1e300, mmax = 0.0;
    const int n = 32;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Point p = make_point({(i + 0.5) / n, (j + 0.5) / n});
        const double m = restricted_mininorm(tangent(p), f_at(p));
        mmin = std::min(mmin, m);
        mmax = std::max(mmax, m);
      }
    }
    constants_.b = mmin * 0.98;
    constants_.c0 = std::max(std::abs(std::log(mmin)), std::abs(std::log(mmax))) * 1.02 + 1e-12;
    constants_.beta = 1.0;
    constants_.xi = 1.0;
    set_tolerance(1e-12);
  }

  double eps_;
  std::vector<Axis> axes_ = torus_axes();
  Mat a_ = cat_matrix();
  Mat a_inv_ = cat_inverse_matrix();
  SystemConstants constants_;
};

/// Solenoid (phi, w) -> (2 phi mod 2 pi, c w + d e^{i phi}) on S^1 x D^2.
/// E is the fiber plane (exactly invariant); F is converged.
class Solenoid final : public ConvergedSplittingSystem {
 public:
  Solenoid(double c, double d, int depth = 30) : ConvergedSplittingSystem(depth), c_(c), d_(d) {
    if (!(c > 0.0 && c < 0.5)) throw Error(ErrorKind::ConstructionFailed, "solenoid needs 0 < c < 1/2");
    if (!std::isfinite(d)) throw Error(ErrorKind::ConstructionFailed, "solenoid d must be finite");
    radius_ = std::max(1.0, 1.25 * std::abs(d) / (1.0 - c));
    axes_ = {Axis{true, 0.0, kTwoPi}, Axis{false, -radius_, radius_}, Axis{false, -radius_, radius_}};
    // |psi| <= (d/2) / (1 - c/2) bounds the F slope over the base circle.
    const double psi = 0.5 * std::abs(d) / (1.0 - 0.5 * c);
    const double g = std::sqrt(1.0 + psi * psi);
    constants_ = {2.0 / g, std::log(2.0 * g), 1.0, 1.0};
    set_tolerance(std::pow(0.5 * c, depth));
  }

  double c() const { return c_; }
  double d() const { return d_; }
  double disk_radius() const { return radius_; }

  std::string name() const override { return "solenoid"; }
  const std::vector<Axis>& axes() const override { return axes_; }
  int unstable_dim() const override { return 1; }

  bool in_region(const Point& x) const override {
    if (x.dim() != 3 || !x.coords.allFinite()) return false;
    return std::hypot(x.coords(1), x.coords(2)) <= radius_;
  }

  Point forward(const Point& x) const override {
    const double phi = x.coords(0);
    Point y = x;
    y.coords(0) = 2.0 * phi;
    y.coords(1) = c_ * x.coords(1) + d_ * std::cos(phi);
    y.coords(2) = c_ * x.coords(2) + d_ * std::sin(phi);
    return wrap(y);
  }

  /// Branch whose fiber preimage is closest to the axis; on the image of the
  /// trapping region this is the unique preimage.
  Point inverse(const Point& y) const override {
    Point best;
    double best_r = 1e300;
    for (int k = 0; k < 2; ++k) {
      const double phi = 0.5 * y.coords(0) + k * std::numbers::pi;
      Point x = y;
      x.coords(0) = phi;
      x.coords(1) = (y.coords(1) - d_ * std::cos(phi)) / c_;
      x.coords(2) = (y.coords(2) - d_ * std::sin(phi)) / c_;
      const double r = std::hypot(x.coords(1), x.coords(2));
      if (r < best_r) {
        best_r = r;
        best = x;
      }
    }
    return wrap(best);
  }

  LinearMap tangent(const Point& x) const override {
    const double phi = x.coords(0);
    Mat df = Mat::Zero(3, 3);
    df(0, 0) = 2.0;
    df(1, 0) = -d_ * std::sin(phi);
    df(2, 0) = d_ * std::cos(phi);
    df(1, 1) = c_;
    df(2, 2) = c_;
    return df;
  }

  Vec forward_offset(const Point& x, const Vec& off) const override {
    const double phi = x.coords(0);
    const double h = off(0);
    // e^{i(phi+h)} - e^{i phi} = e^{i phi} (cos h - 1 + i sin h), cos h - 1 = -2 sin^2(h/2)
    const double re = -2.0 * std::sin(0.5 * h) * std::sin(0.5 * h);
    const double im = std::sin(h);
    Vec out(3);
    out(0) = 2.0 * h;
    out(1) = c_ * off(1) + d_ * (std::cos(phi) * re - std::sin(phi) * im);
    out(2) = c_ * off(2) + d_ * (std::sin(phi) * re + std::cos(phi) * im);
    return out;
  }

  Splitting splitting_at_depth(const Point& x, int depth) const override {
    Mat seed = Mat::Zero(3, 1);
    seed(0, 0) = 1.0;
    return {Subspace::coordinate(3, {1, 2}), converge_forward_bundle(*this, x, depth, seed)};
  }

  SystemConstants constants() const override { return constants_; }

  Point sample_region(const Vec& u) const override {
    const double r = radius_ * std::sqrt(u(1));
    return make_point({kTwoPi * u(0), r * std::cos(kTwoPi * u(2)), r * std::sin(kTwoPi * u(2))});
  }

 private:
  double c_, d_;
  double radius_ = 1.0;
  std::vector<Axis> axes_;
  SystemConstants constants_;
};

/// Derived-from-Anosov deformation: f = A o h where, in stable/unstable
/// eigen-coordinates (s, u) centered at the fixed point 0,
/// h(s, u) = (s, u (1 - kappa beta(s^2 + u^2))), beta(q) = (1 - q/rho^2)^3_+.
/// The unstable multiplier at the fixed point is 1 + delta and F is exactly
/// the unstable eigenline; E is converged.
class DerivedFromAnosov final : public ConvergedSplittingSystem {
 public:
  DerivedFromAnosov(double delta, double rho, int depth = 30)
      : ConvergedSplittingSystem(depth), delta_(delta), rho_(rho) {
    if (!(delta > 0.0 && delta < kCatLambdaU - 1.0)) {
      throw Error(ErrorKind::ConstructionFailed, "dfa delta must lie in (0, lambda_u - 1)");
    }
    if (!(rho > 0.0 && rho < 0.45)) throw Error(ErrorKind::ConstructionFailed, "dfa rho must lie in (0, 0.45)");
    kappa_ = (kCatLambdaU - 1.0 - delta) / kCatLambdaU;
    rot_.resize(2, 2);
    rot_.col(0) = cat_stable_direction();
    rot_.col(1) = cat_unstable_direction();
    verify_and_measure();
  }

  double delta() const { return delta_; }
  double rho() const { return rho_; }

  std::string name() const override { return "dfa"; }
  const std::vector<Axis>& axes() const override { return axes_; }
  int unstable_dim() const override { return 1; }

  Point forward(const Point& x) const override {
    const Vec lifted = lift(x.coords);
    Vec su = rot_.transpose() * lifted;
    su(1) = su(1) * (1.0 - kappa_ * bump(su(0) * su(0) + su(1) * su(1)));
    Point y = x;
    y.coords = a_ * (rot_ * su);
    return wrap(y);
  }

  Point inverse(const Point& y) const override {
    const Vec z = lift(a_inv_ * y.coords);
    Vec sv = rot_.transpose() * z;
    const double s = sv(0), v = sv(1);
    double u = v;
    const double q_edge = rho_ * rho_ - s * s;
    if (q_edge > 0.0 && v * v < q_edge) {
      // u (1 - kappa beta(s^2 + u^2)) = v is increasing in u on |u| < sqrt(q_edge)
      double lo = -std::sqrt(q_edge), hi = std::sqrt(q_edge);
      for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = mid * (1.0 - kappa_ * bump(s * s + mid * mid)) - v;
        (g < 0.0 ? lo : hi) = mid;
      }
      u = 0.5 * (lo + hi);
      for (int it = 0; it < 3; ++it) {
        const double q = s * s + u * u;
        const double g = u * (1.0 - kappa_ * bump(q)) - v;
        const double dg = 1.0 - kappa_ * (bump(q) + 2.0 * u * u * bump_prime(q));
        u -= g / dg;
      }
    }
    sv(1) = u;
    Point x = y;
    x.coords = rot_ * sv;
    return wrap(x);
  }

  LinearMap tangent(const Point& x) const override {
    const Vec su = rot_.transpose() * lift(x.coords);
    const double s = su(0), u = su(1);
    const double q = s * s + u * u;
    Mat dh = Mat::Identity(2, 2);
    dh(1, 0) = -kappa_ * u * bump_prime(q) * 2.0 * s;
    dh(1, 1) = 1.0 - kappa_ * (bump(q) + 2.0 * u * u * bump_prime(q));
    return a_ * rot_ * dh * rot_.transpose();
  }

  Subspace f_at(const Point&) const override { return Subspace::line(cat_unstable_direction()); }

  /// Unwrapped offset F(z + d) - F(z) of the lift F(z) = A z + A R g(z - round z),
  /// with g the (0, -kappa u beta) deformation in eigen-coordinates.
  Vec forward_offset(const Point& x, const Vec& d) const override {
    const Vec z = x.coords;
    const Vec zy = z + d;
    Vec dg(2);
    dg(0) = 0.0;
    const bool same_cell = std::round(z(0)) == std::round(zy(0)) && std::round(z(1)) == std::round(zy(1));
    if (same_cell) {
      const Vec su = rot_.transpose() * lift(z);
      const Vec dsu = rot_.transpose() * d;
      const double s = su(0), u = su(1), ds = dsu(0), du = dsu(1);
      const double q = s * s + u * u;
      const double dq = 2.0 * s * ds + ds * ds + 2.0 * u * du + du * du;
      dg(1) = -kappa_ * (du * bump(q + dq) + u * bump_difference(q, dq));
    } else {
      dg(1) = deformation(zy) - deformation(z);
    }
    return a_ * (d + rot_ * dg);
  }

  Splitting splitting_at_depth(const Point& x, int depth) const override {
    Mat es(2, 1);
    es.col(0) = cat_stable_direction();
    return {converge_backward_bundle(*this, x, depth, es), f_at(x)};
  }

  SystemConstants constants() const override { return constants_; }

  /// m(Df|F) at x, exact: lambda_u * d(h_u)/du.
  double unstable_multiplier(const Point& x) const {
    const Vec su = rot_.transpose() * lift(x.coords);
    const double q = su(0) * su(0) + su(1) * su(1);
    return kCatLambdaU * (1.0 - kappa_ * (bump(q) + 2.0 * su(1) * su(1) * bump_prime(q)));
  }

 private:
  static Vec lift(Vec v) {
    for (int i = 0; i < v.size(); ++i) v(i) -= std::round(v(i));
    return v;
  }
  /// u-component of h(w) - w at the lift w of z.
  double deformation(const Vec& z) const {
    const Vec su = rot_.transpose() * lift(z);
    return -kappa_ * su(1) * bump(su(0) * su(0) + su(1) * su(1));
  }
  double bump(double q) const {
    const double t = 1.0 - q / (rho_ * rho_);
    return t > 0.0 ? t * t * t : 0.0;
  }
  double bump_prime(double q) const {
    const double t = 1.0 - q / (rho_ * rho_);
    return t > 0.0 ? -3.0 * t * t / (rho_ * rho_) : 0.0;
  }
  /// bump(q + dq) - bump(q) without cancellation when both lie inside the support.
  double bump_difference(double q, double dq) const {
    const double r2 = rho_ * rho_;
    const double a = 1.0 - (q + dq) / r2;
    const double b = 1.0 - q / r2;
    if (a > 0.0 && b > 0.0) return (-dq / r2) * (a * a + a * b + b * b);
    return bump(q + dq) - bump(q);
  }

  void verify_and_measure() {
    const int n = 48;
    double mmax = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Point p = make_point({(i + 0.5) / n, (j + 0.5) / n});
        const double det = tangent(p).determinant();
        if (!(det > 1e-6)) throw Error(ErrorKind::ConstructionFailed, "Jacobian determinant not bounded away from 0");
        mmax = std::max(mmax, unstable_multiplier(p));
      }
    }
    // inf m(Df|F) = 1 + delta, attained at the fixed point.
    constants_.b = 1.0 + delta_;
    constants_.c0 = std::max(std::log(mmax) * 1.02, std::log(1.0 + delta_)) + 1e-12;
    constants_.beta = 1.0;
    constants_.xi = 1.0;
    set_tolerance(1e-12);
  }

  double delta_, rho_, kappa_ = 0.0;
  std::vector<Axis> axes_ = torus_axes();
  Mat a_ = cat_matrix();
  Mat a_inv_ = cat_inverse_matrix();
  Mat rot_;
  SystemConstants constants_;
};

/// Linear map on a box of R^d with a prescribed invariant splitting. Used for
/// degenerate toys (identity, contracting F, diagonal maps).
class LinearSystem final : public MapSystem {
 public:
  LinearSystem(Mat a, Subspace e, Subspace f, double half_width = 1e6)
      : a_(std::move(a)), e_(std::move(e)), f_(std::move(f)) {
    require_square_invertible(a_);
    a_inv_ = a_.inverse();
    for (int i = 0; i < a_.rows(); ++i) axes_.push_back(Axis{false, -half_width, half_width});
    const double m = restricted_mininorm(a_, f_);
    constants_ = {m, std::abs(std::log(m)) * (1.0 + 1e-12) + 1e-15, 1.0, 1.0};
  }

  std::string name() const override { return "linear"; }
  const std::vector<Axis>& axes() const override { return axes_; }
  int unstable_dim() const override { return f_.dim(); }
  Point forward(const Point& x) const override {
    Point y = x;
    y.coords = a_ * x.coords;
    return y;
  }
  Point inverse(const Point& x) const override {
    Point y = x;
    y.coords = a_inv_ * x.coords;
    return y;
  }
  LinearMap tangent(const Point&) const override { return a_; }
  Subspace e_at(const Point&) const override { return e_; }
  Subspace f_at(const Point&) const override { return f_; }
  Vec forward_offset(const Point&, const Vec& d) const override { return a_ * d; }
  SystemConstants constants() const override { return constants_; }

 private:
  Mat a_, a_inv_;
  Subspace e_, f_;
  std::vector<Axis> axes_;
  SystemConstants constants_;
};

// ---------------------------------------------------------------------------
// Model specs and construction

struct ModelSpec {
  std::string name;
  std::map<std::string, double> params;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

struct ModelInfo {
  std::string name;
  std::string summary;
  std::map<std::string, double> defaults;
};

inline const std::vector<ModelInfo>& model_catalog() {
  static const std::vector<ModelInfo> catalog = {
      {"cat", "linear cat map [[2,1],[1,1]] on T^2, exact eigenline splitting", {}},
      {"perturbed_cat", "A x + eps (sin 2 pi x1, 0) mod 1, eps in [0, 0.05], converged splitting",
       {{"eps", 0.01}, {"depth", 30}}},
      {"solenoid", "(phi, w) -> (2 phi, c w + d e^{i phi}) on S^1 x D^2, 0 < c < 1/2, E = fiber plane",
       {{"c", 0.25}, {"d", 0.5}, {"depth", 30}}},
      {"dfa", "derived-from-Anosov: cat map with unstable multiplier 1 + delta at the fixed point, radius rho",
       {{"delta", 0.05}, {"rho", 0.2}, {"depth", 30}}},
  };
  return catalog;
}

inline std::shared_ptr<const MapSystem> build(const ModelSpec& spec) {
  const auto& cat = model_catalog();
  auto info = std::find_if(cat.begin(), cat.end(), [&](const ModelInfo& m) { return m.name == spec.name; });
  if (info == cat.end()) throw Error(ErrorKind::ConstructionFailed, "unknown model '" + spec.name + "'");
  for (const auto& [k, v] : spec.params) {
    if (!info->defaults.count(k)) {
      throw Error(ErrorKind::ConstructionFailed, "model '" + spec.name + "' has no parameter '" + k + "'");
    }
    if (!std::isfinite(v)) throw Error(ErrorKind::ConstructionFailed, "parameter '" + k + "' is not finite");
  }
  auto get = [&](const char* k) { return spec.param(k, info->defaults.at(k)); };
  auto depth = [&] {
    const double d = get("depth");
    if (!(d >= 1 && d <= 200 && d == std::floor(d))) throw Error(ErrorKind::ConstructionFailed, "depth must be an integer in [1, 200]");
    return static_cast<int>(d);
  };
  if (spec.name == "cat") return std::make_shared<CatMap>();
  if (spec.name == "perturbed_cat") return std::make_shared<PerturbedCat>(get("eps"), depth());
  if (spec.name == "solenoid") return std::make_shared<Solenoid>(get("c"), get("d"), depth());
  return std::make_shared<DerivedFromAnosov>(get("delta"), get("rho"), depth());
}

struct GroundTruth {
  std::string quantity;
  double value;
  std::string provenance;
};

inline std::vector<GroundTruth> ground_truth(const ModelSpec& spec) {
  if (spec.name == "cat") {
    return {{"norm_df_inv_on_f", kCatLambdaS, "inverse unstable eigenvalue of [[2,1],[1,1]]"},
            {"norm_df_on_e", kCatLambdaS, "stable eigenvalue"},
            {"b", kCatLambdaU, "unstable eigenvalue; constant derivative"},
            {"domination_ratio", kCatLambdaS / kCatLambdaU, "lambda_s / lambda_u = lambda_u^-2"}};
  }
  if (spec.name == "solenoid") {
    const double c = spec.param("c", 0.25);
    return {{"norm_df_on_e", c, "fiber contraction is c by construction"},
            {"base_expansion", 2.0, "doubling on the base circle"}};
  }
  if (spec.name == "dfa") {
    const double delta = spec.param("delta", 0.05);
    return {{"b", 1.0 + delta, "unstable multiplier at the deformed fixed point"},
            {"far_field_multiplier", kCatLambdaU, "cat map outside the deformation radius"}};
  }
  if (spec.name == "perturbed_cat" && spec.param("eps", 0.01) == 0.0) {
    return {{"norm_df_inv_on_f", kCatLambdaS, "eps = 0 reduces to the cat map"}};
  }
  return {};
}

// ---------------------------------------------------------------------------

struct ConvergedSplitting {
  Subspace e;
  Subspace f;
  double residual = 0.0;
};

/// Splitting at the given depth with its invariance residual. Exact models
/// ignore the depth. Throws NoConvergence when the residual at `depth` is
/// worse than at depth/2 (beyond a 1e-12 noise floor).
inline ConvergedSplitting converge_splitting(const MapSystem& sys, const Point& x, int depth) {
  if (depth < 1) throw Error(ErrorKind::InvalidArgument, "depth must be >= 1");
  auto at = [&](const Point& p, int d) -> Splitting {
    if (auto* conv = dynamic_cast<const ConvergedSplittingSystem*>(&sys)) return conv->splitting_at_depth(p, d);
    return sys.splitting(p);
  };
  auto residual = [&](int d) {
    const Splitting here = at(x, d);
    const Splitting there = at(sys.forward(x), d);
    const LinearMap df = sys.tangent(x);
    return std::make_pair(here, std::max(subspace_distance(image(df, here.f), there.f),
                                         subspace_distance(image(df, here.e), there.e)));
  };
  auto [split, res] = residual(depth);
  if (depth >= 2) {
    const double half = residual(depth / 2).second;
    if (res > half && res > 1e-12) {
      throw Error(ErrorKind::NoConvergence, "residual grew from depth/2 to depth");
    }
  }
  return {split.e, split.f, res};
}

// ---------------------------------------------------------------------------

struct GridSpec {
  int per_axis = 24;
};

/// Cell-midpoint grid over the region.
inline std::vector<Point> grid_points(const MapSystem& sys, const GridSpec& grid) {
  const int d = sys.dim();
  std::vector<Point> out;
  std::vector<int> idx(d, 0);
  while (true) {
    Vec u(d);
    for (int i = 0; i < d; ++i) u(i) = (idx[i] + 0.5) / grid.per_axis;
    Point p = sys.sample_region(u);
    if (sys.in_region(p)) out.push_back(p);
    int k = 0;
    while (k < d && ++idx[k] == grid.per_axis) idx[k++] = 0;
    if (k == d) break;
  }
  return out;
}

struct ConstantsH {
  double eps0 = 0.0;
  double xi = 1.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double b = 0.0;
  double sup_norm_e = 0.0;
  int horizon = 0;

  /// The chain 0 < l1 < l1 e^eps0 < l2 < 1 and l3 = l2 e^eps0 / b^xi < 1.
  /// When b > e^{eps0/xi} (uniform expansion along F) l3 < l2, which only
  /// strengthens every estimate that uses l3, so l2 < l3 is not required.
  bool chain_holds() const {
    return eps0 > 0.0 && lambda1 > 0.0 && lambda1 * std::exp(eps0) < lambda2 && lambda2 < 1.0 &&
           lambda3 < 1.0 && std::abs(lambda3 - lambda2 * std::exp(eps0) / std::pow(b, xi)) <= 1e-12 * lambda3;
  }
};

struct ConstantsHOptions {
  GridSpec grid{};
  double xi = 1.0;
  int horizon = 1000;         // length of the long-run averages
  double quantile = 0.9;      // lambda1 = exp(quantile of the averages)
  double eps_margin = 0.01;
};

/// Measures the standing-assumption constants on a grid: eps0 from
/// sup ||Df|E||, b = inf m(Df|F), lambda1 from long-run cocycle averages,
/// then lambda2 and lambda3 by the chain. Throws ChainInfeasible.
inline ConstantsH measure_constants_h(const MapSystem& sys, const ConstantsHOptions& opt = {}) {
  const auto pts = grid_points(sys, opt.grid);
  std::vector<double> sup_e(pts.size()), min_f(pts.size()), avg(pts.size());
  parallel_for(pts.size(), [&](size_t i) {
    const Splitting s = sys.splitting(pts[i]);
    const LinearMap df = sys.tangent(pts[i]);
    sup_e[i] = restricted_norm(df, s.e);
    min_f[i] = restricted_mininorm(df, s.f);
    try {
      const auto logs = expansion_logs(sys, pts[i], opt.horizon);
      long double acc = 0.0L;
      for (double v : logs) acc += v;
      avg[i] = static_cast<double>(acc / opt.horizon);
    } catch (const Error&) {
      avg[i] = std::numeric_limits<double>::infinity();
    }
  });
  ConstantsH h;
  h.xi = opt.xi;
  h.horizon = opt.horizon;
  h.sup_norm_e = *std::max_element(sup_e.begin(), sup_e.end());
  h.eps0 = std::max(std::log(h.sup_norm_e) + opt.eps_margin, opt.eps_margin);
  h.b = std::min(sys.constants().b, *std::min_element(min_f.begin(), min_f.end()));
  std::vector<double> sorted = avg;
  std::sort(sorted.begin(), sorted.end());
  const size_t qi = std::min(sorted.size() - 1, static_cast<size_t>(opt.quantile * (sorted.size() - 1) + 0.5));
  const double log_l1 = sorted[qi];
  if (!(log_l1 < 0.0)) {
    throw Error(ErrorKind::ChainInfeasible,
                "lambda1 = exp(" + std::to_string(log_l1) + ") is not below 1");
  }
  // relative pad so orbits whose average equals the quantile (constant cocycles) count as members
  h.lambda1 = std::exp(log_l1) * (1.0 + 1e-9);
  if (!(h.lambda1 < 1.0)) throw Error(ErrorKind::ChainInfeasible, "lambda1 is not below 1");
  const double lo = h.lambda1 * std::exp(h.eps0);
  const double hi = std::min(1.0, std::pow(h.b, h.xi) * std::exp(-h.eps0));
  if (!(lo < hi)) {
    throw Error(ErrorKind::ChainInfeasible, "no lambda2 in (lambda1 e^eps0, min(1, b^xi e^-eps0)): lambda1 = " +
                                                std::to_string(h.lambda1) + ", b = " + std::to_string(h.b));
  }
  h.lambda2 = 0.5 * (lo + hi);
  h.lambda3 = h.lambda2 * std::exp(h.eps0) / std::pow(h.b, h.xi);
  if (!h.chain_holds()) throw Error(ErrorKind::ChainInfeasible, "standing-assumption chain fails");
  return h;
}

}  // namespace srb
