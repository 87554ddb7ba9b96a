// Map/splitting abstraction and the elementary linear algebra on tangent
// spaces: mininorm, restricted norms and determinants, subspace distance,
// oblique splitting projections and derivative cocycles along orbits.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace srb {

inline constexpr int kMaxDim = 3;

// Small fixed-capacity storage: no heap traffic in the orbit kernels.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using LinearMap = Mat;

inline constexpr double kDetFloor = 1e-12;
inline constexpr double kAngleFloor = 1e-8;
inline constexpr double kFrameTolerance = 1e-10;

enum class ErrorKind {
  SingularMap,
  DimensionMismatch,
  DegenerateImage,
  DegenerateSplitting,
  OrbitEscaped,
  HypothesisViolated,
  ChartOverflow,
  ResolutionExhausted,
  CarvingFailed,
  DegenerateTangent,
  ConstantsInvalid,
  EmptyRadius,
  ZeroMass,
  ConstructionFailed,
  NoConvergence,
  ChainInfeasible,
  ConfigInvalid,
  InvalidArgument,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularMap: return "SingularMap";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::DegenerateSplitting: return "DegenerateSplitting";
    case ErrorKind::OrbitEscaped: return "OrbitEscaped";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::ChartOverflow: return "ChartOverflow";
    case ErrorKind::ResolutionExhausted: return "ResolutionExhausted";
    case ErrorKind::CarvingFailed: return "CarvingFailed";
    case ErrorKind::DegenerateTangent: return "DegenerateTangent";
    case ErrorKind::ConstantsInvalid: return "ConstantsInvalid";
    case ErrorKind::EmptyRadius: return "EmptyRadius";
    case ErrorKind::ZeroMass: return "ZeroMass";
    case ErrorKind::ConstructionFailed: return "ConstructionFailed";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ChainInfeasible: return "ChainInfeasible";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct Point {
  int chart_id = 0;
  Vec coords;

  int dim() const { return static_cast<int>(coords.size()); }
};

inline Point make_point(std::initializer_list<double> values, int chart_id = 0) {
  Point p;
  p.chart_id = chart_id;
  p.coords.resize(static_cast<Eigen::Index>(values.size()));
  int i = 0;
  for (double v : values) p.coords(i++) = v;
  return p;
}

inline Vec singular_values(const Mat& a) {
  if (a.cols() == 1) {
    Vec s(1);
    s(0) = a.col(0).norm();
    return s;
  }
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues();
}

/// Linear subspace of R^d stored as an orthonormal frame.
class Subspace {
 public:
  Subspace() = default;

  /// Orthonormalizes the given columns (modified Gram-Schmidt with one
  /// re-orthogonalization pass). Throws DegenerateImage on rank deficiency.
  static Subspace span(const Mat& columns) {
    if (columns.cols() < 1 || columns.cols() > columns.rows()) {
      throw Error(ErrorKind::DimensionMismatch, "subspace needs 1 <= dim <= ambient dim");
    }
    Mat q = columns;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      const double scale = q.col(j).norm();
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      }
      const double n = q.col(j).norm();
      if (!(n > 1e-14 * std::max(scale, 1e-300)) || !std::isfinite(n)) {
        throw Error(ErrorKind::DegenerateImage, "columns are linearly dependent");
      }
      q.col(j) /= n;
    }
    Subspace s;
    s.frame_ = std::move(q);
    return s;
  }

  static Subspace line(const Vec& direction) {
    Mat m(direction.size(), 1);
    m.col(0) = direction;
    return span(m);
  }

  static Subspace coordinate(int ambient, std::initializer_list<int> axes) {
    Mat m = Mat::Zero(ambient, static_cast<Eigen::Index>(axes.size()));
    int j = 0;
    for (int a : axes) m(a, j++) = 1.0;
    return span(m);
  }

  const Mat& frame() const { return frame_; }
  int dim() const { return static_cast<int>(frame_.cols()); }
  int ambient() const { return static_cast<int>(frame_.rows()); }
  bool empty() const { return frame_.size() == 0; }

  /// Orthogonal complement, used where no splitting is available.
  Subspace complement() const {
    const int d = ambient();
    Eigen::HouseholderQR<Mat> qr(frame_);
    Mat full = qr.householderQ() * Mat::Identity(d, d);
    return span(full.rightCols(d - dim()));
  }

 private:
  Mat frame_;
};

struct Splitting {
  Subspace e;
  Subspace f;
};

inline void require_square_invertible(const Mat& a) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "map must be square");
  if (!a.allFinite()) throw Error(ErrorKind::SingularMap, "non-finite entries");
  if (std::abs(a.determinant()) < kDetFloor) {
    throw Error(ErrorKind::SingularMap, "|det| below floor");
  }
}

/// m(A) = inf |Av|/|v|, the smallest singular value.
inline double mininorm(const Mat& a) {
  require_square_invertible(a);
  return singular_values(a).minCoeff();
}

inline double operator_norm(const Mat& a) { return singular_values(a).maxCoeff(); }

inline void require_source(const Mat& a, const Subspace& s) {
  if (a.cols() != s.ambient()) {
    throw Error(ErrorKind::DimensionMismatch, "subspace is not in the source space of the map");
  }
}

inline double restricted_norm(const Mat& a, const Subspace& s) {
  require_source(a, s);
  return singular_values(a * s.frame()).maxCoeff();
}

/// Smallest singular value of A restricted to S, i.e. m(A|S).
inline double restricted_mininorm(const Mat& a, const Subspace& s) {
  require_source(a, s);
  return singular_values(a * s.frame()).minCoeff();
}

/// Volume expansion factor sqrt(det(M^T M)), M = A * frame(S).
inline double restricted_det(const Mat& a, const Subspace& s) {
  require_source(a, s);
  const Mat m = a * s.frame();
  double det;
  if (m.cols() == 1) {
    det = m.col(0).norm();
  } else {
    const Mat g = m.transpose() * m;
    det = std::sqrt(std::max(0.0, g.determinant()));
  }
  if (!(det >= kDetFloor)) throw Error(ErrorKind::DegenerateImage, "restricted determinant below floor");
  return det;
}

inline Subspace image(const Mat& a, const Subspace& s) {
  require_source(a, s);
  return Subspace::span(a * s.frame());
}

/// max of the two one-sided distances max_{u in A, |u|=1} dist(u, B).
inline double subspace_distance(const Subspace& a, const Subspace& b) {
  if (a.ambient() != b.ambient()) throw Error(ErrorKind::DimensionMismatch, "different ambient spaces");
  auto one_sided = [](const Subspace& from, const Subspace& to) {
    if (from.dim() > to.dim()) return 1.0;
    // residual of projecting onto `to`; avoids the sqrt(1 - cos^2) cancellation
    const Mat r = from.frame() - to.frame() * (to.frame().transpose() * from.frame());
    return singular_values(r).maxCoeff();
  };
  return std::min(1.0, std::max(one_sided(a, b), one_sided(b, a)));
}

/// Sine of the smallest principal angle between two subspaces.
inline double min_angle_sine(const Subspace& a, const Subspace& b) {
  const Subspace& small = a.dim() <= b.dim() ? a : b;
  const Subspace& large = a.dim() <= b.dim() ? b : a;
  const Mat r = small.frame() - large.frame() * (large.frame().transpose() * small.frame());
  return std::min(1.0, singular_values(r).minCoeff());
}

struct ObliqueParts {
  Vec along_e;
  Vec along_f;
  Vec coeff_e;  // coordinates in the E frame
  Vec coeff_f;
};

/// Decomposes v = v_E + v_F along a (not necessarily orthogonal) splitting.
inline ObliqueParts oblique_split(const Vec& v, const Splitting& split) {
  const int de = split.e.dim();
  const int df = split.f.dim();
  const int d = split.e.ambient();
  if (de + df != d || split.f.ambient() != d || v.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "splitting does not match the vector");
  }
  if (min_angle_sine(split.e, split.f) < kAngleFloor) {
    throw Error(ErrorKind::DegenerateSplitting, "E and F nearly intersect");
  }
  Mat joint(d, d);
  joint.leftCols(de) = split.e.frame();
  joint.rightCols(df) = split.f.frame();
  const Vec c = joint.partialPivLu().solve(v);
  ObliqueParts out;
  out.coeff_e = c.head(de);
  out.coeff_f = c.tail(df);
  out.along_e = split.e.frame() * out.coeff_e;
  out.along_f = split.f.frame() * out.coeff_f;
  return out;
}

/// One coordinate axis of a chart: periodic (wrapped into [lo, hi)) or a box side.
struct Axis {
  bool periodic = false;
  double lo = 0.0;
  double hi = 1.0;

  double period() const { return hi - lo; }
};

struct SystemConstants {
  double b = 0.0;        // inf m(Df|F) over the region
  double c0 = 0.0;       // sup |log ||Df^-1|F|| |
  double beta = 1.0;     // Hoelder exponent of F
  double xi = 1.0;       // curvature exponent
};

struct SplittingKind {
  bool exact = true;
  double tolerance = 0.0;
  int depth = 0;
};

/// A smooth invertible map on a chart (torus or box) with analytic tangent
/// maps and an invariant splitting E + F. Implementations are pure: every
/// method may be called concurrently.
class MapSystem {
 public:
  virtual ~MapSystem() = default;

  virtual std::string name() const = 0;
  virtual const std::vector<Axis>& axes() const = 0;
  virtual int unstable_dim() const = 0;

  virtual Point forward(const Point& x) const = 0;
  virtual Point inverse(const Point& x) const = 0;
  virtual LinearMap tangent(const Point& x) const = 0;
  virtual Subspace e_at(const Point& x) const = 0;
  virtual Subspace f_at(const Point& x) const = 0;
  virtual SplittingKind splitting_kind() const { return {}; }
  virtual SystemConstants constants() const = 0;

  /// Preimage used when pushing frames along backward orbits; defaults to the
  /// true inverse. Non-surjective models may extend it off the image.
  virtual Point formal_inverse(const Point& x) const { return inverse(x); }

  int dim() const { return static_cast<int>(axes().size()); }

  Splitting splitting(const Point& x) const { return {e_at(x), f_at(x)}; }

  virtual bool in_region(const Point& x) const {
    if (x.dim() != dim() || !x.coords.allFinite()) return false;
    const auto& ax = axes();
    for (int i = 0; i < dim(); ++i) {
      if (ax[i].periodic) continue;
      if (x.coords(i) < ax[i].lo || x.coords(i) > ax[i].hi) return false;
    }
    return true;
  }

  /// Shortest chart displacement from `from` to `to` (periodic axes wrapped).
  Vec displacement(const Point& from, const Point& to) const {
    Vec d = to.coords - from.coords;
    const auto& ax = axes();
    for (int i = 0; i < dim(); ++i) {
      if (!ax[i].periodic) continue;
      const double p = ax[i].period();
      d(i) -= p * std::round(d(i) / p);
    }
    return d;
  }

  double distance(const Point& a, const Point& b) const { return displacement(a, b).norm(); }

  Point wrap(Point p) const {
    const auto& ax = axes();
    for (int i = 0; i < dim(); ++i) {
      if (!ax[i].periodic) continue;
      const double p0 = ax[i].period();
      double v = p.coords(i) - ax[i].lo;
      if (v >= 0.0 && v < p0) continue;
      // v - floor(v) is exact; fmod handles other periods
      v = (p0 == 1.0) ? v - std::floor(v) : std::fmod(v, p0);
      if (v < 0) v += p0;
      if (v >= p0) v = 0.0;
      p.coords(i) = ax[i].lo + v;
    }
    return p;
  }

  Point translate(const Point& p, const Vec& offset) const {
    Point q = p;
    q.coords += offset;
    return wrap(q);
  }

  /// f(x + offset) - f(x) as a small chart displacement. Models override this
  /// with cancellation-free formulas so that sub-ulp disks keep their shape.
  virtual Vec forward_offset(const Point& x, const Vec& offset) const {
    return displacement(forward(x), forward(translate(x, offset)));
  }

  virtual double chart_diameter() const {
    double s = 0.0;
    for (const auto& a : axes()) {
      const double w = a.periodic ? a.period() / 2 : a.hi - a.lo;
      s += w * w;
    }
    return std::sqrt(s);
  }

  /// Maps a point of the unit cube [0,1)^d onto the region (used for
  /// quasi-uniform sampling).
  virtual Point sample_region(const Vec& unit) const {
    Point p;
    p.coords.resize(dim());
    const auto& ax = axes();
    for (int i = 0; i < dim(); ++i) p.coords(i) = ax[i].lo + unit(i) * (ax[i].hi - ax[i].lo);
    return p;
  }
};

inline Point iterate(const MapSystem& sys, Point x, int n) {
  for (int i = 0; i < n; ++i) x = sys.forward(x);
  return x;
}

inline void require_in_region(const MapSystem& sys, const Point& x, int step) {
  if (!sys.in_region(x)) {
    throw Error(ErrorKind::OrbitEscaped, "iterate " + std::to_string(step) + " left the region");
  }
}

/// Per-orbit derivative cocycle. Entry j-1 of `log_e` is log||Df|E(f^j x)||
/// and entry j-1 of `log_f_inv` is log||Df^-1|F(f^j x)||, j = 1..length,
/// where Df^-1 at f^j x is the inverse of Df|F at f^{j-1} x, i.e.
/// log_f_inv[j-1] = -log m(Df|F(f^{j-1} x)).
struct CocycleLog {
  Point base;
  int length = 0;
  std::vector<double> log_e;
  std::vector<double> log_f_inv;
  double log_e_at_base = 0.0;      // log||Df|E(x)||
  double log_min_f_at_end = 0.0;   // log m(Df|F(f^n x))

  /// log of ||Df|E(f^j x)|| / m(Df|F(f^j x)) for the point f^j x, 0 <= j <= length.
  double log_step_ratio(int j) const {
    const double le = (j == 0) ? log_e_at_base : log_e[j - 1];
    const double lm = (j < length) ? -log_f_inv[j] : log_min_f_at_end;
    return le - lm;
  }
};

/// F is evaluated once at the base point and then carried along the orbit by
/// Df (it is the dominating bundle, so forward transport is stable); E comes
/// from the system at every point.
inline CocycleLog cocycle_logs(const MapSystem& sys, const Point& x, int n) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative cocycle length");
  CocycleLog log;
  log.base = x;
  log.length = n;
  log.log_e.reserve(n);
  log.log_f_inv.reserve(n);
  Point p = x;
  require_in_region(sys, p, 0);
  Subspace f = sys.f_at(p);
  for (int j = 0; j <= n; ++j) {
    const LinearMap df = sys.tangent(p);
    const double le = std::log(restricted_norm(df, sys.e_at(p)));
    const Mat image_f = df * f.frame();
    const double lm = std::log(singular_values(image_f).minCoeff());
    if (j == 0) {
      log.log_e_at_base = le;
    } else {
      log.log_e.push_back(le);
    }
    if (j < n) {
      log.log_f_inv.push_back(-lm);
      p = sys.forward(p);
      require_in_region(sys, p, j + 1);
      f = Subspace::span(image_f);
    } else {
      log.log_min_f_at_end = lm;
    }
  }
  return log;
}

/// Only the F part of the cocycle: entries log||Df^-1|F(f^j x)||, j = 1..n.
inline std::vector<double> expansion_logs(const MapSystem& sys, const Point& x, int n) {
  std::vector<double> out;
  out.reserve(n);
  Point p = x;
  require_in_region(sys, p, 0);
  Subspace f = sys.f_at(p);
  for (int j = 0; j < n; ++j) {
    const Mat image_f = sys.tangent(p) * f.frame();
    out.push_back(-std::log(singular_values(image_f).minCoeff()));
    p = sys.forward(p);
    require_in_region(sys, p, j + 1);
    f = Subspace::span(image_f);
  }
  return out;
}

/// Pushes `seed` forward along the backward orbit of x (depth steps); the
/// result approximates the dominating (unstable) bundle at x.
inline Subspace converge_forward_bundle(const MapSystem& sys, const Point& x, int depth, const Mat& seed) {
  std::vector<Point> back(static_cast<size_t>(depth) + 1);
  back[0] = x;
  for (int k = 1; k <= depth; ++k) back[k] = sys.formal_inverse(back[k - 1]);
  Mat v = seed;
  for (int k = depth; k >= 1; --k) {
    v = sys.tangent(back[k]) * v;
    v = Subspace::span(v).frame();
  }
  return Subspace::span(v);
}

/// Pulls `seed` back along the forward orbit of x (depth steps); the result
/// approximates the dominated (stable) bundle at x.
inline Subspace converge_backward_bundle(const MapSystem& sys, const Point& x, int depth, const Mat& seed) {
  std::vector<Point> fwd(static_cast<size_t>(depth) + 1);
  fwd[0] = x;
  for (int k = 1; k <= depth; ++k) fwd[k] = sys.forward(fwd[k - 1]);
  Mat v = seed;
  for (int k = depth - 1; k >= 0; --k) {
    v = sys.tangent(fwd[k]).partialPivLu().solve(v);
    v = Subspace::span(v).frame();
  }
  return Subspace::span(v);
}

/// Invariance defect max(dist(Df F(x), F(fx)), dist(Df E(x), E(fx))).
inline double invariance_residual(const MapSystem& sys, const Point& x) {
  const LinearMap df = sys.tangent(x);
  const Point fx = sys.forward(x);
  return std::max(subspace_distance(image(df, sys.f_at(x)), sys.f_at(fx)),
                  subspace_distance(image(df, sys.e_at(x)), sys.e_at(fx)));
}

}  // namespace srb
