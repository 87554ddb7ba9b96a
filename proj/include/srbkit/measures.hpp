// Empirical measures from pushed-forward disk Lebesgue measure, Birkhoff
// averages, weak-* diagnostics on a test family, disjoint-ball selection,
// hyperbolic-time mass and basin-fraction estimates.
#pragma once

#include "srbkit/core.hpp"
#include "srbkit/disks.hpp"
#include "srbkit/parallel.hpp"
#include "srbkit/pliss.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace srb {

struct Observable {
  std::string name;
  std::function<double(const Point&)> eval;
  double bound = 1.0;  // sup |eval| over the region
  std::optional<double> reference_integral;  // against normalized Lebesgue, when known
  std::string provenance;
};

/// Trigonometric test family: characters cos/sin(2 pi k . x / period) over
/// integer frequency vectors on the periodic axes, ordered by l1 norm, one
/// representative per +-k pair. Box axes use cos/sin(pi k w / half-width).
/// All bounded by 1; reference integrals (0) are attached on tori.
inline std::vector<Observable> trig_tests(const MapSystem& sys, int count = 8) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "need at least one test");
  const auto& axes = sys.axes();
  const int d = sys.dim();
  const bool torus = std::all_of(axes.begin(), axes.end(), [](const Axis& a) { return a.periodic; });
  std::vector<Observable> out;
  for (int norm = 1; static_cast<int>(out.size()) < count && norm < 64; ++norm) {
    // enumerate k with |k|_1 = norm, first nonzero entry positive
    std::vector<int> k(d, -norm);
    while (true) {
      int l1 = 0;
      for (int v : k) l1 += std::abs(v);
      int first = 0;
      for (int v : k) {
        if (v != 0) {
          first = v;
          break;
        }
      }
      if (l1 == norm && first > 0) {
        std::vector<double> freq(d);
        std::string label;
        for (int i = 0; i < d; ++i) {
          const Axis& a = axes[i];
          freq[i] = a.periodic ? 2.0 * std::numbers::pi * k[i] / a.period()
                               : std::numbers::pi * k[i] / (0.5 * (a.hi - a.lo));
          label += (i ? "," : "") + std::to_string(k[i]);
        }
        auto phase = [freq, axes](const Point& p) {
          double s = 0.0;
          for (size_t i = 0; i < freq.size(); ++i) {
            const double centre = axes[i].periodic ? axes[i].lo : 0.5 * (axes[i].lo + axes[i].hi);
            s += freq[i] * (p.coords(static_cast<int>(i)) - centre);
          }
          return s;
        };
        for (int c = 0; c < 2 && static_cast<int>(out.size()) < count; ++c) {
          Observable o;
          o.name = std::string(c == 0 ? "cos" : "sin") + "(" + label + ")";
          o.eval = c == 0 ? std::function<double(const Point&)>([phase](const Point& p) { return std::cos(phase(p)); })
                          : std::function<double(const Point&)>([phase](const Point& p) { return std::sin(phase(p)); });
          o.bound = 1.0;
          if (torus) {
            o.reference_integral = 0.0;
            o.provenance = "nonzero character integrates to 0 against Lebesgue";
          }
          out.push_back(std::move(o));
        }
      }
      int i = d - 1;
      while (i >= 0 && k[i] == norm) k[i--] = -norm;
      if (i < 0) break;
      ++k[i];
    }
  }
  return out;
}

inline Observable constant_observable(double c) {
  return Observable{"const", [c](const Point&) { return c; }, std::abs(c), c, "constant"};
}

struct EmpiricalMeasure {
  std::vector<Point> atoms;
  std::vector<double> weights;
  double total = 0.0;

  static EmpiricalMeasure from(std::vector<Point> atoms, std::vector<double> weights) {
    if (atoms.size() != weights.size()) throw Error(ErrorKind::DimensionMismatch, "atoms and weights differ in length");
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::InvalidArgument, "weights must be finite and >= 0");
    }
    EmpiricalMeasure m{std::move(atoms), std::move(weights), 0.0};
    m.total = pairwise_sum(std::span<const double>(m.weights));
    return m;
  }

  static EmpiricalMeasure dirac(const Point& p) { return from({p}, {1.0}); }

  double integrate(const std::function<double(const Point&)>& f) const {
    std::vector<long double> terms(atoms.size());
    parallel_for(atoms.size(), [&](size_t i) { terms[i] = static_cast<long double>(weights[i]) * f(atoms[i]); });
    return static_cast<double>(pairwise_sum(std::span<const long double>(terms)));
  }
};

/// Unnormalized integrals of each test plus the total mass.
struct TestIntegrals {
  std::vector<double> values;
  double total = 0.0;
};

inline TestIntegrals integrals(const EmpiricalMeasure& mu, const std::vector<Observable>& tests) {
  TestIntegrals out{{}, mu.total};
  for (const auto& t : tests) out.values.push_back(mu.integrate(t.eval));
  return out;
}

/// Reference integrals against normalized Lebesgue; every test needs one.
inline TestIntegrals reference_integrals(const std::vector<Observable>& tests) {
  TestIntegrals out{{}, 1.0};
  for (const auto& t : tests) {
    if (!t.reference_integral) throw Error(ErrorKind::InvalidArgument, "test '" + t.name + "' has no reference integral");
    out.values.push_back(*t.reference_integral);
  }
  return out;
}

inline double weak_star_distance(const TestIntegrals& mu, const TestIntegrals& nu) {
  if (!(mu.total > 0.0) || !(nu.total > 0.0)) throw Error(ErrorKind::ZeroMass, "measure has zero total mass");
  if (mu.values.size() != nu.values.size() || mu.values.empty()) {
    throw Error(ErrorKind::InvalidArgument, "test families differ or are empty");
  }
  double worst = 0.0;
  for (size_t t = 0; t < mu.values.size(); ++t) {
    worst = std::max(worst, std::abs(mu.values[t] / mu.total - nu.values[t] / nu.total));
  }
  return worst;
}

inline double weak_star_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                 const std::vector<Observable>& tests) {
  if (tests.empty()) throw Error(ErrorKind::InvalidArgument, "tests must be nonempty");
  if (!(mu.total > 0.0) || !(nu.total > 0.0)) throw Error(ErrorKind::ZeroMass, "measure has zero total mass");
  return weak_star_distance(integrals(mu, tests), integrals(nu, tests));
}

/// Normalized Lebesgue cell weights of the disk samples.
inline std::vector<double> normalized_weights(const EmbeddedDisk& d) {
  std::vector<double> w = d.cell_weights;
  const double total = d.total_weight();
  if (!(total > 0.0)) throw Error(ErrorKind::ZeroMass, "disk has zero area");
  for (auto& v : w) v /= total;
  return w;
}

inline constexpr size_t kMaxAtoms = 10'000'000;

/// mu_n = (1/n) sum_{i<n} f^i_* Leb_D with the initial cell weights.
inline EmpiricalMeasure pushforward_average(const MapSystem& sys, const EmbeddedDisk& d, int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  const size_t count = static_cast<size_t>(d.size()) * static_cast<size_t>(n);
  if (count > kMaxAtoms) throw Error(ErrorKind::InvalidArgument, "too many atoms; use pushforward_integrals");
  const auto w = normalized_weights(d);
  std::vector<Point> atoms(count);
  std::vector<double> weights(count);
  parallel_for(d.size(), [&](size_t s) {
    Point p = d.points[s];
    for (int i = 0; i < n; ++i) {
      if (i > 0) p = sys.forward(p);
      require_in_region(sys, p, i);
      atoms[s * n + i] = p;
      weights[s * n + i] = w[s] / n;
    }
  });
  return EmpiricalMeasure::from(std::move(atoms), std::move(weights));
}

/// f_* mu.
inline EmpiricalMeasure push(const MapSystem& sys, const EmpiricalMeasure& mu) {
  std::vector<Point> atoms(mu.atoms.size());
  parallel_for(atoms.size(), [&](size_t i) { atoms[i] = sys.forward(mu.atoms[i]); });
  return EmpiricalMeasure::from(std::move(atoms), mu.weights);
}

/// Streaming integrals of f^shift_* mu_n: per-sample orbit sums over
/// i = shift .. shift+n-1 in long double, combined by a pairwise tree.
inline TestIntegrals pushforward_integrals(const MapSystem& sys, const EmbeddedDisk& d, int n,
                                           const std::vector<Observable>& tests, int shift = 0) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  const auto w = normalized_weights(d);
  const size_t nt = tests.size();
  std::vector<long double> terms(d.size() * nt);
  parallel_for(d.size(), [&](size_t s) {
    std::vector<long double> acc(nt, 0.0L);
    Point p = d.points[s];
    for (int i = 0; i < shift + n; ++i) {
      if (i > 0) {
        p = sys.forward(p);
        require_in_region(sys, p, i);
      }
      if (i < shift) continue;
      for (size_t t = 0; t < nt; ++t) acc[t] += tests[t].eval(p);
    }
    for (size_t t = 0; t < nt; ++t) terms[t * d.size() + s] = static_cast<long double>(w[s]) * acc[t] / n;
  });
  TestIntegrals out;
  out.total = pairwise_sum(std::span<const double>(w));
  for (size_t t = 0; t < nt; ++t) {
    out.values.push_back(static_cast<double>(
        pairwise_sum(std::span<const long double>(terms).subspan(t * d.size(), d.size()))));
  }
  return out;
}

struct CheckpointIntegrals {
  int n = 0;
  TestIntegrals average;  // mu_n
  TestIntegrals pushed;   // f_* mu_n
};

/// mu_n and f_* mu_n for every n in `checkpoints` (increasing) from a single
/// pass over each sample orbit.
inline std::vector<CheckpointIntegrals> pushforward_checkpoints(const MapSystem& sys, const EmbeddedDisk& d,
                                                                const std::vector<int>& checkpoints,
                                                                const std::vector<Observable>& tests) {
  if (checkpoints.empty()) throw Error(ErrorKind::InvalidArgument, "no checkpoints");
  for (size_t c = 0; c < checkpoints.size(); ++c) {
    if (checkpoints[c] < 1 || (c > 0 && checkpoints[c] <= checkpoints[c - 1])) {
      throw Error(ErrorKind::InvalidArgument, "checkpoints must be positive and increasing");
    }
  }
  const auto w = normalized_weights(d);
  const size_t nt = tests.size();
  const size_t nc = checkpoints.size();
  const size_t ns = static_cast<size_t>(d.size());
  // layout: [checkpoint][pushed?][test][sample]
  std::vector<long double> terms(nc * 2 * nt * ns);
  auto slot = [&](size_t c, size_t which, size_t t) { return ((c * 2 + which) * nt + t) * ns; };
  parallel_for(ns, [&](size_t s) {
    std::vector<long double> acc(nt, 0.0L);
    std::vector<double> first(nt), cur(nt);
    Point p = d.points[s];
    require_in_region(sys, p, 0);
    size_t c = 0;
    for (int i = 0; c < nc; ++i) {
      if (i > 0) {
        p = sys.forward(p);
        require_in_region(sys, p, i);
      }
      for (size_t t = 0; t < nt; ++t) cur[t] = tests[t].eval(p);
      if (i == 0) first = cur;
      if (i == checkpoints[c]) {
        const long double n = checkpoints[c];
        for (size_t t = 0; t < nt; ++t) {
          terms[slot(c, 0, t) + s] = w[s] * acc[t] / n;
          terms[slot(c, 1, t) + s] = w[s] * (acc[t] - first[t] + cur[t]) / n;
        }
        ++c;
      }
      for (size_t t = 0; t < nt; ++t) acc[t] += cur[t];
    }
  });
  const double total = pairwise_sum(std::span<const double>(w));
  std::vector<CheckpointIntegrals> out(nc);
  for (size_t c = 0; c < nc; ++c) {
    out[c].n = checkpoints[c];
    out[c].average.total = out[c].pushed.total = total;
    for (size_t t = 0; t < nt; ++t) {
      const std::span<const long double> all(terms);
      out[c].average.values.push_back(static_cast<double>(pairwise_sum(all.subspan(slot(c, 0, t), ns))));
      out[c].pushed.values.push_back(static_cast<double>(pairwise_sum(all.subspan(slot(c, 1, t), ns))));
    }
  }
  return out;
}

inline double birkhoff(const MapSystem& sys, const Point& x, const Observable& obs, int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  long double acc = 0.0L;
  Point p = x;
  require_in_region(sys, p, 0);
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      p = sys.forward(p);
      require_in_region(sys, p, i);
    }
    acc += obs.eval(p);
  }
  return static_cast<double>(acc / n);
}

inline std::vector<double> birkhoff_all(const MapSystem& sys, const Point& x, const std::vector<Observable>& tests,
                                        int n) {
  std::vector<long double> acc(tests.size(), 0.0L);
  Point p = x;
  require_in_region(sys, p, 0);
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      p = sys.forward(p);
      require_in_region(sys, p, i);
    }
    for (size_t t = 0; t < tests.size(); ++t) acc[t] += tests[t].eval(p);
  }
  std::vector<double> out(tests.size());
  for (size_t t = 0; t < tests.size(); ++t) out[t] = static_cast<double>(acc[t] / n);
  return out;
}

// ---------------------------------------------------------------------------
// Disjoint balls

/// Greedy maximal packing in input order: a center is kept iff it is more
/// than 2 radius away from every kept center.
inline std::vector<int> select_disjoint_balls(size_t count, double radius,
                                              const std::function<double(int, int)>& dist) {
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "radius must be > 0");
  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(count); ++i) {
    bool free = true;
    for (int k : kept) {
      if (!(dist(i, k) > 2.0 * radius)) {
        free = false;
        break;
      }
    }
    if (free) kept.push_back(i);
  }
  return kept;
}

inline std::vector<int> select_disjoint_balls(const std::vector<Point>& centers, double radius,
                                              const MapSystem* sys = nullptr) {
  return select_disjoint_balls(centers.size(), radius, [&](int i, int j) {
    return sys ? sys->distance(centers[i], centers[j]) : (centers[i].coords - centers[j].coords).norm();
  });
}

/// Pairwise disjointness and 2r-maximality of a selection.
inline bool verify_disjoint_balls(size_t count, double radius, const std::vector<int>& kept,
                                  const std::function<double(int, int)>& dist) {
  for (size_t a = 0; a < kept.size(); ++a) {
    for (size_t b = a + 1; b < kept.size(); ++b) {
      if (!(dist(kept[a], kept[b]) > 2.0 * radius)) return false;
    }
  }
  for (int i = 0; i < static_cast<int>(count); ++i) {
    bool covered = false;
    for (int k : kept) {
      if (dist(i, k) <= 2.0 * radius) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Hyperbolic-time mass

struct HyperbolicMassOptions {
  double lambda1 = 0.5;  // Lambda_{lambda1,1} surrogate
  int horizon = 0;       // cocycle horizon for the surrogate (>= n; 0 means n)
  double c0 = 0.0;       // for the density floor; 0 uses the system constant
};

struct HyperbolicMassReport {
  double eta = 0.0;
  std::vector<double> per_i;          // selected ball mass at step i
  std::vector<double> hyperbolic_mass; // Leb_D mass of S_i
  std::vector<double> union_mass;     // Leb_D mass of the union of all balls around S_i
  double lambda_fraction = 0.0;       // Leb_D mass of the surrogate Lambda set
  double theta = 0.0;
  double tau = 0.0;                   // selected mass / union mass, summed over i
  double floor = 0.0;                 // tau * theta * lambda_fraction
  double worst_edge_ratio = 0.0;      // longest image edge / ball radius
  int horizon = 0;
};

namespace detail {

/// Parameter measure of {t : |L(t) - L(t_c)| < rho} where L is the
/// piecewise-linear arclength through the samples (1-D disks).
inline double ball_preimage_measure(std::span<const double> arc, std::span<const double> param, int c, double rho) {
  const double lo_val = arc[c] - rho;
  const double hi_val = arc[c] + rho;
  auto invert = [&](double v) {
    if (v <= arc.front()) return param.front();
    if (v >= arc.back()) return param.back();
    const auto it = std::upper_bound(arc.begin(), arc.end(), v);
    const size_t j = static_cast<size_t>(it - arc.begin());
    const double w = (v - arc[j - 1]) / (arc[j] - arc[j - 1]);
    return param[j - 1] + w * (param[j] - param[j - 1]);
  };
  return invert(hi_val) - invert(lo_val);
}

/// Parameter interval of the same ball.
inline std::pair<double, double> ball_preimage(std::span<const double> arc, std::span<const double> param, int c,
                                               double rho) {
  auto invert = [&](double v) {
    if (v <= arc.front()) return param.front();
    if (v >= arc.back()) return param.back();
    const auto it = std::upper_bound(arc.begin(), arc.end(), v);
    const size_t j = static_cast<size_t>(it - arc.begin());
    const double w = (v - arc[j - 1]) / (arc[j] - arc[j - 1]);
    return param[j - 1] + w * (param[j] - param[j - 1]);
  };
  return {invert(arc[c] - rho), invert(arc[c] + rho)};
}

}  // namespace detail

/// For each 1 <= i < n the samples S_i in the Lambda surrogate for which i is
/// a sigma-hyperbolic time are pushed to f^i(D); disjoint intrinsic balls of
/// radius r1/4 are selected greedily and their Leb_D mass accumulated.
/// eta = total / n. 1-D disks use polyline arclength; 2-D disks use the chart
/// metric and sample cell weights.
inline HyperbolicMassReport hyperbolic_mass(const MapSystem& sys, const EmbeddedDisk& d, int n, double sigma,
                                            double r1, const HyperbolicMassOptions& opt) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
  if (!(r1 > 0.0)) throw Error(ErrorKind::InvalidArgument, "r1 must be > 0");
  const int horizon = std::max(n, opt.horizon);
  const auto w = normalized_weights(d);
  const int count = d.size();

  std::vector<char> in_lambda(count, 0);
  std::vector<std::vector<char>> hyper(count, std::vector<char>(n, 0));
  parallel_for(count, [&](size_t s) {
    try {
      const auto logs = expansion_logs(sys, d.points[s], horizon);
      in_lambda[s] = lambda_membership(logs, opt.lambda1, 1);
      const auto rep = hyperbolic_times(std::span<const double>(logs).first(n), sigma);
      for (int t : rep.times) {
        if (t < n) hyper[s][t] = 1;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
    }
  });

  HyperbolicMassReport rep;
  rep.horizon = horizon;
  rep.per_i.assign(n, 0.0);
  rep.hyperbolic_mass.assign(n, 0.0);
  rep.union_mass.assign(n, 0.0);
  for (int s = 0; s < count; ++s) {
    if (in_lambda[s]) rep.lambda_fraction += w[s];
  }

  const double rho = r1 / 4.0;
  const double param_total = d.dim == 1 ? d.params.back()(0) - d.params.front()(0) : 0.0;
  std::vector<double> param;
  if (d.dim == 1) {
    for (const auto& p : d.params) param.push_back(p(0));
  }
  EmbeddedDisk cur = d;
  for (int i = 0; i < n; ++i) {
    if (i > 0) detail::step_disk(sys, cur);
    std::vector<int> cand;
    for (int s = 0; s < count; ++s) {
      if (in_lambda[s] && hyper[s][i]) {
        cand.push_back(s);
        rep.hyperbolic_mass[i] += w[s];
      }
    }
    if (cand.empty()) continue;
    if (d.dim == 1) {
      detail::measure_edges(cur);
      rep.worst_edge_ratio = std::max(rep.worst_edge_ratio, cur.max_edge() / rho);
      const auto arc = cur.arclength();
      const auto kept = select_disjoint_balls(cand.size(), rho, [&](int a, int b) {
        return std::abs(arc[cand[a]] - arc[cand[b]]);
      });
      for (int k : kept) rep.per_i[i] += detail::ball_preimage_measure(arc, param, cand[k], rho) / param_total;
      // arclength is monotone in the index, so the intervals arrive sorted
      double lo = 0.0, hi = 0.0;
      bool open = false;
      for (int c : cand) {
        const auto [a, b] = detail::ball_preimage(arc, param, c, rho);
        if (open && a <= hi) {
          hi = std::max(hi, b);
          continue;
        }
        if (open) rep.union_mass[i] += (hi - lo) / param_total;
        lo = a;
        hi = b;
        open = true;
      }
      if (open) rep.union_mass[i] += (hi - lo) / param_total;
    } else {
      detail::measure_edges(cur);
      rep.worst_edge_ratio = std::max(rep.worst_edge_ratio, cur.max_edge() / rho);
      const auto kept = select_disjoint_balls(cand.size(), rho, [&](int a, int b) {
        return (cur.offsets[cand[a]] - cur.offsets[cand[b]]).norm();
      });
      for (int k : kept) {
        for (int s = 0; s < count; ++s) {
          if ((cur.offsets[s] - cur.offsets[cand[k]]).norm() < rho) rep.per_i[i] += w[s];
        }
      }
      for (int s = 0; s < count; ++s) {
        for (int c : cand) {
          if ((cur.offsets[s] - cur.offsets[c]).norm() < rho) {
            rep.union_mass[i] += w[s];
            break;
          }
        }
      }
    }
  }
  double selected = 0.0, covered = 0.0;
  for (int i = 0; i < n; ++i) {
    selected += rep.per_i[i];
    covered += rep.union_mass[i];
  }
  rep.eta = selected / n;
  rep.tau = covered > 0.0 ? selected / covered : 0.0;
  const double c0 = opt.c0 > 0.0 ? opt.c0 : sys.constants().c0;
  if (opt.lambda1 < sigma && c0 >= -std::log(opt.lambda1)) rep.theta = density_theta(opt.lambda1, sigma, c0);
  rep.floor = rep.tau * rep.theta * rep.lambda_fraction;
  return rep;
}

// ---------------------------------------------------------------------------
// Quasi-uniform sampling and basin fractions

/// Halton point k (bases 2, 3, 5) with a Cranley-Patterson rotation.
inline Vec halton(std::uint64_t k, int dim, const Vec& shift) {
  static constexpr int kBases[] = {2, 3, 5};
  Vec u(dim);
  for (int i = 0; i < dim; ++i) {
    double f = 1.0, r = 0.0;
    std::uint64_t j = k + 1;
    while (j > 0) {
      f /= kBases[i];
      r += f * static_cast<double>(j % kBases[i]);
      j /= kBases[i];
    }
    u(i) = r + shift(i);
    u(i) -= std::floor(u(i));
  }
  return u;
}

inline Vec halton_shift(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec s(dim);
  for (int i = 0; i < dim; ++i) s(i) = uni(rng);
  return s;
}

/// `samples` quasi-uniform points of the region (or pseudo-random ones).
inline std::vector<Point> sample_points(const MapSystem& sys, int samples, std::uint64_t seed,
                                        bool pseudo_random = false) {
  std::vector<Point> out;
  const Vec shift = halton_shift(sys.dim(), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < samples; ++k) {
    Vec u(sys.dim());
    if (pseudo_random) {
      for (int i = 0; i < sys.dim(); ++i) u(i) = uni(rng);
    } else {
      u = halton(static_cast<std::uint64_t>(k), sys.dim(), shift);
    }
    out.push_back(sys.sample_region(u));
  }
  return out;
}

/// Fraction of sampled points whose Birkhoff averages of every test are
/// within tol of the reference integrals. Escaped orbits count as misses.
inline double physical_fraction(const MapSystem& sys, const TestIntegrals& ref, const std::vector<Observable>& tests,
                                 int n, double tol, int samples, std::uint64_t seed = 1) {
  if (samples < 100) throw Error(ErrorKind::InvalidArgument, "need at least 100 samples");
  if (tests.size() != ref.values.size()) throw Error(ErrorKind::InvalidArgument, "reference does not match tests");
  if (!(ref.total > 0.0)) throw Error(ErrorKind::ZeroMass, "reference has zero mass");
  const auto pts = sample_points(sys, samples, seed);
  std::vector<char> hit(pts.size(), 0);
  parallel_for(pts.size(), [&](size_t k) {
    try {
      const auto avg = birkhoff_all(sys, pts[k], tests, n);
      bool ok = true;
      for (size_t t = 0; t < tests.size(); ++t) ok = ok && std::abs(avg[t] - ref.values[t] / ref.total) <= tol;
      hit[k] = ok;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
    }
  });
  const auto hits = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(pts.size());
}

/// Fraction of quasi-uniform samples in the finite-horizon Lambda_{lambda,1}
/// surrogate.
inline double lambda_sample_fraction(const MapSystem& sys, double lambda, int horizon, int samples,
                                     std::uint64_t seed = 1) {
  const auto pts = sample_points(sys, samples, seed);
  std::vector<char> in(pts.size(), 0);
  parallel_for(pts.size(), [&](size_t k) {
    try {
      in[k] = lambda_membership(expansion_logs(sys, pts[k], horizon), lambda, 1);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
    }
  });
  return static_cast<double>(std::count(in.begin(), in.end(), 1)) / static_cast<double>(pts.size());
}

}  // namespace srb
