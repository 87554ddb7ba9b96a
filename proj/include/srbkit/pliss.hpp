// Sequence algorithms behind hyperbolic times: Pliss-time selection,
// hyperbolic-time detection, the infinite-horizon shift, finite-horizon
// membership in Lambda_{lambda,N} and the Pliss density constant.
//
// Indices are 1-based in every returned set, matching sums over f^i(x),
// i = 1..n. Ties count as satisfying an inequality.
#pragma once

#include "srbkit/core.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace srb {

struct PlissParams {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;

  void validate() const {
    if (!(c0 >= c1 && c1 > c2 && c2 >= 0.0)) {
      throw Error(ErrorKind::HypothesisViolated, "Pliss constants must satisfy c0 >= c1 > c2 >= 0");
    }
  }

  /// theta = (c1 - c2) / (c0 - c2); the count of Pliss times is >= theta * N.
  double theta() const { return (c1 - c2) / (c0 - c2); }
};

struct HyperbolicTimeReport {
  std::vector<int> times;
  double sigma = 0.0;
  int horizon = 0;
  double density = 0.0;
};

namespace detail {
inline std::vector<long double> prefix_sums(std::span<const double> a) {
  std::vector<long double> s(a.size() + 1, 0.0L);
  for (size_t i = 0; i < a.size(); ++i) s[i + 1] = s[i] + static_cast<long double>(a[i]);
  return s;
}
}  // namespace detail

/// All n (1-based) with sum_{j=n'+1}^{n} b_j >= c2 (n - n') for every 0 <= n' < n.
/// Runs in O(N) by keeping the running maximum of S(m) - c2 m.
inline std::vector<int> pliss_times(std::span<const double> b, const PlissParams& p) {
  p.validate();
  const int n = static_cast<int>(b.size());
  if (n == 0) throw Error(ErrorKind::HypothesisViolated, "empty sequence");
  long double total = 0.0L;
  for (int j = 0; j < n; ++j) {
    if (b[j] > p.c0) {
      throw Error(ErrorKind::HypothesisViolated,
                  "entry " + std::to_string(j + 1) + " exceeds c0");
    }
    total += b[j];
  }
  if (total < static_cast<long double>(p.c1) * n) {
    throw Error(ErrorKind::HypothesisViolated, "sum of entries is below c1 * N");
  }
  std::vector<int> out;
  long double s = 0.0L;
  long double best = 0.0L;  // max over m < n of S(m) - c2 m, starting with m = 0
  for (int m = 1; m <= n; ++m) {
    s += b[m - 1];
    const long double t = s - static_cast<long double>(p.c2) * m;
    if (t >= best) {
      out.push_back(m);
      best = t;
    }
  }
  return out;
}

/// n is a sigma-hyperbolic time iff S(n) - S(n-k) <= k log sigma for all
/// 1 <= k <= n, i.e. U(n) <= min_{m<n} U(m) with U(m) = S(m) - m log sigma.
inline HyperbolicTimeReport hyperbolic_times(std::span<const double> log_f_inv, double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorKind::InvalidArgument, "sigma must lie in (0,1)");
  HyperbolicTimeReport r;
  r.sigma = sigma;
  r.horizon = static_cast<int>(log_f_inv.size());
  const long double ls = std::log(static_cast<long double>(sigma));
  long double s = 0.0L;
  long double low = 0.0L;
  for (int m = 1; m <= r.horizon; ++m) {
    s += log_f_inv[m - 1];
    const long double u = s - ls * m;
    if (u <= low) {
      r.times.push_back(m);
      low = u;
    }
  }
  r.density = r.horizon > 0 ? static_cast<double>(r.times.size()) / r.horizon : 0.0;
  return r;
}

/// Smallest k <= n_good with sum_{i=k}^{n} a_i >= 0 for all k <= n <= len,
/// given sum_{i=1}^{n} a_i >= 0 for all n_good <= n <= len. Takes the first
/// minimizer l of the prefix sums S(0..n_good) and returns l + 1.
inline int first_nonneg_shift(std::span<const double> a, int n_good) {
  const int len = static_cast<int>(a.size());
  if (n_good < 1 || n_good > len) throw Error(ErrorKind::InvalidArgument, "n_good must lie in 1..length");
  const auto s = detail::prefix_sums(a);
  for (int n = n_good; n <= len; ++n) {
    if (s[n] < 0.0L) {
      throw Error(ErrorKind::HypothesisViolated, "prefix sum negative at n = " + std::to_string(n));
    }
  }
  int arg = 0;
  for (int l = 1; l <= n_good; ++l) {
    if (s[l] < s[arg]) arg = l;
  }
  return arg + 1;
}

/// Finite-horizon surrogate for x in Lambda_{lambda, n_start}:
/// (1/n) S(n) <= log lambda for every n_start <= n <= length.
inline bool lambda_membership(std::span<const double> log_f_inv, double lambda, int n_start) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must lie in (0,1)");
  if (n_start < 1) throw Error(ErrorKind::InvalidArgument, "n_start must be >= 1");
  const long double ll = std::log(static_cast<long double>(lambda));
  long double s = 0.0L;
  for (int n = 1; n <= static_cast<int>(log_f_inv.size()); ++n) {
    s += log_f_inv[n - 1];
    if (n >= n_start && s > ll * n) return false;
  }
  return true;
}

/// Pliss density for sigma2-hyperbolic times of a sigma1-contracting orbit:
/// theta = (log s2 - log s1) / (log s2 + c0).
inline double density_theta(double sigma1, double sigma2, double c0) {
  if (!(sigma1 > 0.0 && sigma1 < sigma2 && sigma2 < 1.0)) {
    throw Error(ErrorKind::HypothesisViolated, "need 0 < sigma1 < sigma2 < 1");
  }
  if (c0 < -std::log(sigma1)) throw Error(ErrorKind::HypothesisViolated, "need c0 >= -log sigma1");
  const PlissParams p{c0, -std::log(sigma1), -std::log(sigma2)};
  return p.theta();
}

}  // namespace srb
