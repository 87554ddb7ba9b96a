// Config-driven experiment runner: config parsing and validation, the ten
// experiments, and deterministic summary / CSV output.
#pragma once

#include "srbkit/cones.hpp"
#include "srbkit/core.hpp"
#include "srbkit/disks.hpp"
#include "srbkit/measures.hpp"
#include "srbkit/models.hpp"
#include "srbkit/pliss.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace srb::harness {

using json = nlohmann::json;

enum class Experiment {
  PlissDemo,
  HyperbolicTimes,
  ConeCheck,
  DiskIterate,
  Contraction,
  Distortion,
  Curvature,
  SrbConverge,
  HyperbolicMass,
  PhysicalBasin,
};

struct ExperimentInfo {
  Experiment id;
  std::string name;
  std::string summary;
  int default_horizon;
  int default_samples;  // 0: not sample based
  std::string details;
};

inline const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> catalog = {
      {Experiment::PlissDemo, "pliss_demo",
       "Pliss times of b_j = -log||Df^-1|F|| along one orbit against the sigma-hyperbolic times", 100, 0,
       "Constants: c0 from the model, c1 = -log lambda1, c2 = -log sigma; theta = (c1-c2)/(c0-c2).\n"
       "Assertions: pliss_equals_hyperbolic_times, count_at_least_theta_n.\n"
       "CSV pliss_demo.csv: n,b,prefix_sum,pliss,hyperbolic"},
      {Experiment::HyperbolicTimes, "hyperbolic_times",
       "Lambda_{lambda1,1} sample fraction (horizon n and 2n) and hyperbolic-time densities on sampled orbits",
       1000, 256,
       "theta = density_theta(lambda1, sigma, c0).\n"
       "Assertions: lambda_fraction_positive, lambda_fraction_stable (relative change <= 20% under horizon\n"
       "doubling), density_floor (>= 90% of Lambda orbits have density >= theta).\n"
       "CSV hyperbolic_times.csv: sample,x0..,in_lambda,in_lambda_doubled,count,density"},
      {Experiment::ConeCheck, "cone_check",
       "gamma-average domination along the orbit of the disk center and cone-width contraction of C_a^F", 50, 64,
       "gamma is the tightest certificate max_i (prod_{j<i} ||Df|E|| / m(Df|F))^{1/i}.\n"
       "Assertions: segment_dominated, cone_width_contracts (width at step i <= gamma^i a).\n"
       "CSV cone_check.csv: i,log_step_ratio,product,gamma_pow_i,max_width_ratio"},
      {Experiment::DiskIterate, "disk_iterate", "Iterates a disk tangent to F and tracks size, resolution and tangency",
       4, 0,
       "Assertions: tangent_to_cone (cone width <= a at every step), tangency_kept.\n"
       "CSV disk_iterate.csv: step,intrinsic_radius,max_edge,tangent_defect,max_width,max_f_distance;\n"
       "disk_initial.csv and disk_final.csv: p0..,x0..,t0_0.. (params, points, tangent frames)"},
      {Experiment::Contraction, "contraction",
       "Backward contraction d_{f^{n-k}D}(x,y) <= sigma^{k/2} d_{f^nD}(f^n x, f^n y) on carved hyperbolic-time disks",
       50, 0,
       "Carves the component of radius r at every hyperbolic time in {1,2,5,10,20,50,100,...} and n.\n"
       "Assertions: backward_contraction (max ratio <= 1 + 5 grid steps), component_in_ball.\n"
       "CSV contraction.csv: n,rho_minus,rho_plus,radius_at_n,max_ratio"},
      {Experiment::Distortion, "distortion",
       "Determinant distortion |det Df^n|T_y| / |det Df^n|T_x| on carved hyperbolic-time disks", 30, 500,
       "Bound: K = exp(2 R1 a / (1 - lambda2) + R2 lambda2^(beta/2) / (1 - lambda2^(beta/2))),\n"
       "with R1 the Lipschitz constant of log|det Df| on planes in the a-cone and R2 the beta-Hoelder\n"
       "constant of log|det Df|F|, both measured on a grid.\n"
       "Assertions: within_distortion_bound (1/K <= ratio <= K); on the cat map also ratio_unity.\n"
       "CSV distortion.csv: n,y,ratio,bound_k"},
      {Experiment::Curvature, "curvature", "Hoelder curvature recursion on carved hyperbolic-time disks", 30, 20,
       "Bound: min(c_0..c_{n-1} H + L (1 + c_{n-1} + ...), lambda4^n H + L / (1 - lambda4)),\n"
       "c_j = (||Df|E|| + 2 alpha) / (m(Df|F) - 2 alpha)^(1+xi), L = 2^(1+xi) L1 / b^(1+xi).\n"
       "Assertions: n_step_bound, flat_initial, large_time_bound, single_step_claim, refinement_stable.\n"
       "CSV curvature.csv: disk,n,initial,measured,bound_induction,bound_closed"},
      {Experiment::SrbConverge, "srb_converge",
       "Pushforward averages mu_n of Lebesgue on an unstable disk, n doubling from 1000 to the horizon", 100000, 0,
       "Tests: 8 trigonometric characters (bound 1).\n"
       "Assertions: cesaro_defect (d(mu_n, f_* mu_n) <= 2B/n), and on tori converged (final distance < 0.03)\n"
       "and distance_decreasing (final < first).\n"
       "CSV srb_converge.csv: n,distance,cesaro_defect,defect_bound; srb_integrals.csv: n,test,value"},
      {Experiment::HyperbolicMass, "hyperbolic_mass",
       "Lower bound eta on the mass of disjoint r1/4-balls around hyperbolic-time points of f^i(D)", 8, 0,
       "Assertions: eta_positive, resolution_adequate (longest image edge <= r1/4).\n"
       "CSV hyperbolic_mass.csv: i,hyperbolic_mass,union_mass,selected_mass"},
      {Experiment::PhysicalBasin, "physical_basin",
       "Fraction of sampled points whose Birkhoff averages match the reference integrals within tol", 100000, 200,
       "Reference: Lebesgue on tori, otherwise mu_n from the default disk.\n"
       "Assertions: basin_fraction (>= 0.99).\n"
       "CSV physical_basin.csv: sample,x0..,max_deviation,hit"},
  };
  return catalog;
}

inline const ExperimentInfo& info(Experiment e) {
  for (const auto& i : experiment_catalog()) {
    if (i.id == e) return i;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown experiment id");
}

inline std::string experiment_names() {
  std::string out;
  for (const auto& i : experiment_catalog()) out += (out.empty() ? "" : ", ") + i.name;
  return out;
}

inline std::optional<Experiment> find_experiment(const std::string& name) {
  for (const auto& i : experiment_catalog()) {
    if (i.name == name) return i.id;
  }
  return std::nullopt;
}

inline std::string list_models() {
  std::ostringstream os;
  for (const auto& m : model_catalog()) {
    os << m.name << ": " << m.summary << "\n";
    os << "  params:";
    if (m.defaults.empty()) os << " none";
    for (const auto& [k, v] : m.defaults) os << " " << k << "=" << v;
    os << "\n";
  }
  return os.str();
}

inline std::string describe(const std::string& name) {
  const auto id = find_experiment(name);
  if (!id) {
    throw Error(ErrorKind::InvalidArgument, "unknown experiment '" + name + "'; valid names: " + experiment_names());
  }
  const auto& i = info(*id);
  std::ostringstream os;
  os << i.name << ": " << i.summary << "\n";
  os << "default horizon: " << i.default_horizon << "\n";
  if (i.default_samples > 0) os << "default samples: " << i.default_samples << "\n";
  os << i.details << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Config

struct DiskConfig {
  std::optional<std::vector<double>> center;
  double radius = 0.1;
  int resolution = 401;
};

struct Overrides {
  std::optional<double> sigma, lambda1, lambda2, lambda3, lambda4, a, r, r1, xi, alpha;
};

struct ExperimentConfig {
  ModelSpec model;
  Experiment experiment = Experiment::PlissDemo;
  int horizon = 0;
  DiskConfig disk;
  Overrides overrides;
  std::uint64_t seed = 1;
  int samples = 0;
  double tolerance = 0.02;
  std::string output_dir = "out";

  /// Normalized echo (defaults filled in). The output directory is left out
  /// so that summaries do not depend on where they are written.
  json echo() const {
    json j;
    j["model"] = {{"name", model.name}, {"params", model.params}};
    j["experiment"] = info(experiment).name;
    j["horizon"] = horizon;
    json d = {{"radius", disk.radius}, {"resolution", disk.resolution}};
    if (disk.center) d["center"] = *disk.center;
    j["disk"] = d;
    json o = json::object();
    auto put = [&](const char* k, const std::optional<double>& v) {
      if (v) o[k] = *v;
    };
    put("sigma", overrides.sigma);
    put("lambda1", overrides.lambda1);
    put("lambda2", overrides.lambda2);
    put("lambda3", overrides.lambda3);
    put("lambda4", overrides.lambda4);
    put("a", overrides.a);
    put("r", overrides.r);
    put("r1", overrides.r1);
    put("xi", overrides.xi);
    put("alpha", overrides.alpha);
    j["overrides"] = o;
    j["seed"] = seed;
    j["samples"] = samples;
    j["tolerance"] = tolerance;
    return j;
  }
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::ConfigInvalid, path + ": " + msg);
}

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) invalid(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      invalid(path + "." + k, "unknown field");
    }
  }
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) invalid(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(path, "must be finite");
  return v;
}

inline long long integer(const json& j, const std::string& path, long long lo, long long hi) {
  if (!j.is_number()) invalid(path, "expected an integer");
  const double v = j.get<double>();
  if (v != std::floor(v) || v < static_cast<double>(lo) || v > static_cast<double>(hi)) {
    invalid(path, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<long long>(v);
}

inline double open_unit(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0 && v < 1.0)) invalid(path, "must lie in (0, 1)");
  return v;
}

inline double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0)) invalid(path, "must be > 0");
  return v;
}

}  // namespace detail

/// Validates everything that can be checked without running the experiment.
inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  only_keys(j, "$", {"model", "experiment", "horizon", "disk", "overrides", "seed", "samples", "tolerance",
                     "output_dir"});
  ExperimentConfig cfg;

  if (!j.contains("model")) invalid("$.model", "required");
  const json& m = j["model"];
  if (m.is_string()) {
    cfg.model.name = m.get<std::string>();
  } else {
    only_keys(m, "$.model", {"name", "params"});
    if (!m.contains("name") || !m["name"].is_string()) invalid("$.model.name", "expected a string");
    cfg.model.name = m["name"].get<std::string>();
    if (m.contains("params")) {
      if (!m["params"].is_object()) invalid("$.model.params", "expected an object");
      for (const auto& [k, v] : m["params"].items()) cfg.model.params[k] = number(v, "$.model.params." + k);
    }
  }
  std::shared_ptr<const MapSystem> sys;
  try {
    sys = build(cfg.model);
  } catch (const Error& e) {
    invalid("$.model", e.what());
  }

  if (!j.contains("experiment") || !j["experiment"].is_string()) invalid("$.experiment", "expected a string");
  const auto id = find_experiment(j["experiment"].get<std::string>());
  if (!id) invalid("$.experiment", "unknown experiment; valid names: " + experiment_names());
  cfg.experiment = *id;
  const auto& ei = info(cfg.experiment);

  cfg.horizon = j.contains("horizon") ? static_cast<int>(integer(j["horizon"], "$.horizon", 1, 10'000'000))
                                      : ei.default_horizon;
  cfg.samples = j.contains("samples") ? static_cast<int>(integer(j["samples"], "$.samples", 1, 1'000'000))
                                      : ei.default_samples;
  if (cfg.experiment == Experiment::PhysicalBasin && cfg.samples < 100) invalid("$.samples", "need at least 100");
  if (j.contains("tolerance")) cfg.tolerance = positive(j["tolerance"], "$.tolerance");
  if (j.contains("seed")) {
    cfg.seed = static_cast<std::uint64_t>(integer(j["seed"], "$.seed", 0, (1LL << 53)));
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string() || j["output_dir"].get<std::string>().empty()) {
      invalid("$.output_dir", "expected a nonempty string");
    }
    cfg.output_dir = j["output_dir"].get<std::string>();
  }

  if (cfg.experiment == Experiment::HyperbolicMass) {
    cfg.disk.radius = 0.002;
    cfg.disk.resolution = 1001;
  }
  if (j.contains("disk")) {
    const json& d = j["disk"];
    only_keys(d, "$.disk", {"center", "radius", "resolution"});
    if (d.contains("center")) {
      if (!d["center"].is_array()) invalid("$.disk.center", "expected an array");
      std::vector<double> c;
      for (size_t i = 0; i < d["center"].size(); ++i) {
        c.push_back(number(d["center"][i], "$.disk.center[" + std::to_string(i) + "]"));
      }
      if (static_cast<int>(c.size()) != sys->dim()) {
        invalid("$.disk.center", "expected " + std::to_string(sys->dim()) + " coordinates");
      }
      Point p;
      p.coords = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
      if (!sys->in_region(p)) invalid("$.disk.center", "outside the model region");
      cfg.disk.center = c;
    }
    if (d.contains("radius")) cfg.disk.radius = positive(d["radius"], "$.disk.radius");
    if (d.contains("resolution")) {
      cfg.disk.resolution = static_cast<int>(integer(d["resolution"], "$.disk.resolution", 3, 100001));
      if (cfg.disk.resolution % 2 == 0) invalid("$.disk.resolution", "must be odd");
    }
  }

  if (j.contains("overrides")) {
    const json& o = j["overrides"];
    only_keys(o, "$.overrides", {"sigma", "lambda1", "lambda2", "lambda3", "lambda4", "a", "r", "r1", "xi", "alpha"});
    auto& ov = cfg.overrides;
    auto unit = [&](const char* k, std::optional<double>& slot) {
      if (o.contains(k)) slot = open_unit(o[k], std::string("$.overrides.") + k);
    };
    unit("sigma", ov.sigma);
    unit("lambda1", ov.lambda1);
    unit("lambda2", ov.lambda2);
    unit("lambda3", ov.lambda3);
    unit("lambda4", ov.lambda4);
    unit("a", ov.a);
    if (o.contains("r")) ov.r = positive(o["r"], "$.overrides.r");
    if (o.contains("r1")) ov.r1 = positive(o["r1"], "$.overrides.r1");
    if (o.contains("alpha")) ov.alpha = positive(o["alpha"], "$.overrides.alpha");
    if (o.contains("xi")) {
      const double xi = number(o["xi"], "$.overrides.xi");
      if (!(xi > 0.0 && xi <= 1.0)) invalid("$.overrides.xi", "must lie in (0, 1]");
      ov.xi = xi;
    }
    if (ov.lambda1 && ov.lambda2 && !(*ov.lambda1 < *ov.lambda2)) invalid("$.overrides.lambda1", "must be < lambda2");
    if (ov.lambda1 && ov.sigma && !(*ov.lambda1 < *ov.sigma)) invalid("$.overrides.lambda1", "must be < sigma");
    if (ov.lambda3 && ov.lambda4 && !(*ov.lambda3 < *ov.lambda4)) invalid("$.overrides.lambda4", "must be > lambda3");
    if (ov.alpha && !(*ov.alpha < sys->constants().b / 4.0)) invalid("$.overrides.alpha", "must be < b/4");
  }
  const double r = cfg.overrides.r.value_or(0.05);
  if ((cfg.experiment == Experiment::Contraction || cfg.experiment == Experiment::Distortion ||
       cfg.experiment == Experiment::Curvature) &&
      !(cfg.disk.radius > r)) {
    invalid("$.disk.radius", "must exceed the carving radius r");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigInvalid, path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigInvalid, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Output

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
    for (size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }

  void row(const std::vector<double>& values) {
    char buf[32];
    for (size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out_ << (i ? "," : "") << buf;
    }
    out_ << "\n";
  }

  void row(const std::string& label, const std::vector<double>& values) {
    out_ << label;
    char buf[32];
    for (double v : values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out_ << "," << buf;
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunSummary {
  json config;
  json measured = json::object();
  std::vector<Assertion> assertions;
  std::vector<std::string> files;
  double wall_seconds = 0.0;

  bool passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
  }

  /// Everything except the wall time, which goes to timing.json.
  json document() const {
    json j;
    j["config"] = config;
    j["measured"] = measured;
    json a = json::object();
    for (const auto& x : assertions) a[x.name] = {{"passed", x.passed}, {"detail", x.detail}};
    j["assertions"] = a;
    j["files"] = files;
    j["passed"] = passed();
    return j;
  }
};

// ---------------------------------------------------------------------------
// Experiments

struct Context {
  const ExperimentConfig& cfg;
  std::shared_ptr<const MapSystem> sys;
  std::filesystem::path out;
  RunSummary& summary;
  std::ostream* log = nullptr;

  void note(const std::string& msg) const {
    if (log) *log << "[" << info(cfg.experiment).name << "] " << msg << "\n";
  }

  CsvFile csv(const std::string& name, const std::vector<std::string>& header) const {
    summary.files.push_back(name);
    return CsvFile(out / name, header);
  }

  void check(const std::string& name, bool ok, const std::string& detail) const {
    summary.assertions.push_back({name, ok, detail});
  }

  GridSpec grid() const { return GridSpec{sys->dim() == 3 ? 8 : 24}; }

  ConstantsH constants() const {
    ConstantsHOptions opt;
    opt.grid = grid();
    opt.xi = cfg.overrides.xi.value_or(1.0);
    return measure_constants_h(*sys, opt);
  }

  Point center() const {
    if (cfg.disk.center) {
      Point p;
      p.coords = Eigen::Map<const Eigen::VectorXd>(cfg.disk.center->data(),
                                                   static_cast<Eigen::Index>(cfg.disk.center->size()));
      return p;
    }
    if (sys->dim() == 3) return iterate(*sys, make_point({1.0, 0.3, -0.2}), 30);
    return make_point({0.31, 0.27});
  }

  EmbeddedDisk disk_at(const Point& x) const {
    return make_disk(*sys, x, sys->f_at(x), cfg.disk.radius, cfg.disk.resolution);
  }
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::vector<std::string> coord_names(int d) {
  std::vector<std::string> out;
  for (int i = 0; i < d; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline std::vector<int> hyperbolic_time_list(const std::vector<double>& logs, double sigma) {
  return hyperbolic_times(logs, sigma).times;
}

inline bool contains(const std::vector<int>& v, int x) { return std::binary_search(v.begin(), v.end(), x); }

}  // namespace detail

inline void run_pliss_demo(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  const double lambda1 = cfg.overrides.lambda1.value_or(h.lambda1);
  const double sigma = cfg.overrides.sigma.value_or(h.lambda2);
  const int n = cfg.horizon;
  const auto logs = expansion_logs(sys, ctx.center(), n);
  std::vector<double> b(logs.size());
  std::transform(logs.begin(), logs.end(), b.begin(), [](double v) { return -v; });
  const PlissParams p{sys.constants().c0, -std::log(lambda1), -std::log(sigma)};
  const auto pliss = pliss_times(b, p);
  const auto hyper = hyperbolic_times(logs, sigma);
  const double theta = p.theta();
  const int count = static_cast<int>(pliss.size());

  auto csv = ctx.csv("pliss_demo.csv", {"n", "b", "prefix_sum", "pliss", "hyperbolic"});
  long double s = 0.0L;
  for (int m = 1; m <= n; ++m) {
    s += b[m - 1];
    csv.row({double(m), b[m - 1], static_cast<double>(s), double(detail::contains(pliss, m)),
             double(detail::contains(hyper.times, m))});
  }
  ctx.summary.measured = {{"n", n},          {"c0", p.c0},     {"c1", p.c1},
                          {"c2", p.c2},      {"theta", theta}, {"pliss_count", count},
                          {"density", static_cast<double>(count) / n},
                          {"hyperbolic_count", static_cast<int>(hyper.times.size())}};
  ctx.check("pliss_equals_hyperbolic_times", pliss == hyper.times,
            std::to_string(count) + " Pliss times, " + std::to_string(hyper.times.size()) + " hyperbolic times");
  // the count bound is strict only when c1 < c0
  const bool strict = p.c1 < p.c0;
  const bool bound = strict ? count > theta * n : count >= theta * n;
  ctx.check("count_at_least_theta_n", bound,
            std::to_string(count) + (strict ? " > " : " >= ") + detail::fmt(theta * n));
}

inline void run_hyperbolic_times(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  const double lambda1 = cfg.overrides.lambda1.value_or(h.lambda1);
  const double sigma = cfg.overrides.sigma.value_or(h.lambda2);
  const double c0 = sys.constants().c0;
  const double theta = density_theta(lambda1, sigma, c0);
  const int n = cfg.horizon;
  const auto pts = sample_points(sys, cfg.samples, cfg.seed);

  struct Row {
    bool escaped = false;
    bool in_lambda = false;
    bool in_lambda_doubled = false;
    int count = 0;
    double density = 0.0;
  };
  std::vector<Row> rows(pts.size());
  parallel_for(pts.size(), [&](size_t k) {
    try {
      const auto logs = expansion_logs(sys, pts[k], 2 * n);
      const std::span<const double> head(logs.data(), static_cast<size_t>(n));
      rows[k].in_lambda = lambda_membership(head, lambda1, 1);
      rows[k].in_lambda_doubled = lambda_membership(logs, lambda1, 1);
      const auto rep = hyperbolic_times(head, sigma);
      rows[k].count = static_cast<int>(rep.times.size());
      rows[k].density = rep.density;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
      rows[k].escaped = true;
    }
  });

  auto csv = ctx.csv("hyperbolic_times.csv",
                     detail::concat(detail::concat({"sample"}, detail::coord_names(sys.dim())),
                                    {"in_lambda", "in_lambda_doubled", "count", "density"}));
  int in = 0, in2 = 0, floor_ok = 0;
  for (size_t k = 0; k < pts.size(); ++k) {
    std::vector<double> v{double(k)};
    for (int i = 0; i < sys.dim(); ++i) v.push_back(pts[k].coords(i));
    v.insert(v.end(), {double(rows[k].in_lambda), double(rows[k].in_lambda_doubled), double(rows[k].count),
                       rows[k].density});
    csv.row(v);
    in += rows[k].in_lambda;
    in2 += rows[k].in_lambda_doubled;
    if (rows[k].in_lambda && rows[k].density >= theta) ++floor_ok;
  }
  const double frac = static_cast<double>(in) / pts.size();
  const double frac2 = static_cast<double>(in2) / pts.size();
  const double change = frac > 0.0 ? std::abs(frac2 - frac) / frac : 1.0;
  const double floor_frac = in > 0 ? static_cast<double>(floor_ok) / in : 0.0;
  ctx.summary.measured = {{"lambda1", lambda1},
                          {"sigma", sigma},
                          {"c0", c0},
                          {"theta", theta},
                          {"samples", static_cast<int>(pts.size())},
                          {"lambda_fraction", frac},
                          {"lambda_fraction_doubled", frac2},
                          {"relative_change", change},
                          {"density_floor_fraction", floor_frac}};
  ctx.check("lambda_fraction_positive", frac > 0.0, "fraction " + detail::fmt(frac));
  ctx.check("lambda_fraction_stable", change <= 0.2, "relative change " + detail::fmt(change));
  ctx.check("density_floor", floor_frac >= 0.9,
            std::to_string(floor_ok) + " of " + std::to_string(in) + " Lambda orbits reach theta");
}

inline void run_cone_check(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const Point x = ctx.center();
  const int n = cfg.horizon;
  const double a = cfg.overrides.a.value_or(0.5);
  const CocycleLog log = cocycle_logs(sys, x, n);
  long double acc = 0.0L;
  long double worst = -std::numeric_limits<long double>::infinity();
  double step_min = std::numeric_limits<double>::infinity(), step_max = -step_min;
  for (int i = 1; i <= n; ++i) {
    const double r = log.log_step_ratio(i - 1);
    step_min = std::min(step_min, r);
    step_max = std::max(step_max, r);
    acc += r;
    worst = std::max(worst, acc / i);
  }
  const double gamma = static_cast<double>(std::exp(worst)) * (1.0 + 1e-9);
  json m = {{"n", n},
            {"a", a},
            {"gamma", gamma},
            {"step_ratio_min", std::exp(step_min)},
            {"step_ratio_max", std::exp(step_max)}};
  const bool dominated = gamma < 1.0 && static_cast<bool>(check_avg_domination(log, gamma, n));
  ctx.check("segment_dominated", dominated, "gamma " + detail::fmt(gamma));
  auto csv = ctx.csv("cone_check.csv", {"i", "log_step_ratio", "product", "gamma_pow_i", "max_width_ratio"});
  if (!dominated) {
    ctx.summary.measured = m;
    ctx.check("cone_width_contracts", false, "no domination certificate");
    return;
  }
  const auto rep = verify_cone_contraction(sys, x, a, gamma, n, std::max(1, cfg.samples), cfg.seed);
  acc = 0.0L;
  for (int i = 1; i <= n; ++i) {
    acc += log.log_step_ratio(i - 1);
    csv.row({double(i), log.log_step_ratio(i - 1), static_cast<double>(std::exp(acc)), std::pow(gamma, i),
             rep.ratio_by_step[i - 1]});
  }
  m["max_width_ratio"] = rep.max_ratio;
  try {
    m["robustness_radius"] = domination_robustness_radius(sys, gamma, std::sqrt(gamma), ctx.grid());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyRadius) throw;
    m["robustness_radius"] = nullptr;
  }
  ctx.summary.measured = m;
  ctx.check("cone_width_contracts", !rep.violation, "max width / (gamma^i a + floor) = " + detail::fmt(rep.max_ratio));
}

inline void run_disk_iterate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const double a = cfg.overrides.a.value_or(0.5);
  const ConeSpec cone = cone_of(sys, a);
  EmbeddedDisk d = ctx.disk_at(ctx.center());
  {
    std::ofstream os(ctx.out / "disk_initial.csv");
    write_disk_csv(os, d);
    ctx.summary.files.push_back("disk_initial.csv");
  }
  auto csv = ctx.csv("disk_iterate.csv",
                     {"step", "intrinsic_radius", "max_edge", "tangent_defect", "max_width", "max_f_distance"});
  double widest = 0.0;
  const double initial_f = tangency_report(d, cone).max_f_distance;
  double final_f = initial_f;
  for (int step = 0; step <= cfg.horizon; ++step) {
    if (step > 0) d = iterate_disk(sys, std::move(d), 1);
    const auto t = tangency_report(d, cone);
    widest = std::max(widest, t.max_width);
    final_f = t.max_f_distance;
    csv.row({double(step), d.intrinsic_radius(), d.max_edge(), d.tangent_defect, t.max_width, t.max_f_distance});
  }
  {
    std::ofstream os(ctx.out / "disk_final.csv");
    write_disk_csv(os, d);
    ctx.summary.files.push_back("disk_final.csv");
  }
  ctx.summary.measured = {{"steps", cfg.horizon},
                          {"final_intrinsic_radius", d.intrinsic_radius()},
                          {"final_max_edge", d.max_edge()},
                          {"max_width", widest},
                          {"initial_f_distance", initial_f},
                          {"final_f_distance", final_f}};
  ctx.check("tangent_to_cone", widest <= a, "max width " + detail::fmt(widest));
  ctx.check("tangency_kept", final_f <= initial_f + 1e-9, "F distance " + detail::fmt(final_f));
}

/// Hyperbolic times of the center among 1, 2, 5, 10, 20, 50, ... and n.
inline std::vector<int> carving_times(const MapSystem& sys, const Point& x, int n, double sigma) {
  const auto hyper = detail::hyperbolic_time_list(expansion_logs(sys, x, n), sigma);
  std::set<int> wanted{n};
  for (int base = 1; base <= n; base *= 10) {
    for (int m : {1, 2, 5}) {
      if (base * m <= n) wanted.insert(base * m);
    }
  }
  std::vector<int> out;
  for (int t : wanted) {
    if (detail::contains(hyper, t)) out.push_back(t);
  }
  return out;
}

inline void run_contraction(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  const double sigma = cfg.overrides.sigma.value_or(h.lambda2);
  const double r = cfg.overrides.r.value_or(0.05);
  const Point x = ctx.center();
  const EmbeddedDisk d0 = ctx.disk_at(x);
  const auto times = carving_times(sys, x, cfg.horizon, sigma);
  if (times.empty()) throw Error(ErrorKind::HypothesisViolated, "no hyperbolic times on the carving schedule");
  const double tol = 1.0 + 5.0 * d0.grid_step();
  auto csv = ctx.csv("contraction.csv", {"n", "rho_minus", "rho_plus", "radius_at_n", "max_ratio"});
  double worst = 0.0, widest = 0.0;
  for (int t : times) {
    const EmbeddedDisk c = hyperbolic_component(sys, d0, t, r);
    const double ratio = backward_contraction_check(sys, c, t, sigma);
    const double radius = iterate_disk(sys, c, t).intrinsic_radius();
    csv.row({double(t), c.domain.minus, c.domain.plus, radius, ratio});
    worst = std::max(worst, ratio);
    widest = std::max(widest, radius);
    ctx.note("n=" + std::to_string(t) + " ratio=" + detail::fmt(ratio));
  }
  ctx.summary.measured = {{"sigma", sigma},
                          {"r", r},
                          {"times", times},
                          {"max_violation", worst},
                          {"tolerance", tol},
                          {"max_radius_at_n", widest}};
  ctx.check("backward_contraction", worst <= tol, "max ratio " + detail::fmt(worst) + " <= " + detail::fmt(tol));
  ctx.check("component_in_ball", widest <= r * tol, "radius " + detail::fmt(widest));
}

inline void run_distortion(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  const double lambda2 = cfg.overrides.lambda2.value_or(cfg.overrides.sigma.value_or(h.lambda2));
  const double a = cfg.overrides.a.value_or(0.1);
  const double r = cfg.overrides.r.value_or(0.05);
  const DistortionConstants dc = measure_distortion_constants(sys, a, ctx.grid(), sys.constants().beta);
  const DistortionSettings set{a, lambda2, r, dc};
  const Point x = ctx.center();
  const EmbeddedDisk d0 = ctx.disk_at(x);
  const auto hyper = detail::hyperbolic_time_list(expansion_logs(sys, x, cfg.horizon), lambda2);
  if (hyper.empty()) throw Error(ErrorKind::HypothesisViolated, "no hyperbolic times up to the horizon");
  const int pairs = std::max(1, cfg.samples);
  const int per_time = (pairs + static_cast<int>(hyper.size()) - 1) / static_cast<int>(hyper.size());

  auto csv = ctx.csv("distortion.csv", {"n", "y", "ratio", "bound_k"});
  int done = 0, inside = 0;
  double lo = 1.0, hi = 1.0, unity = 0.0, bound_k = distortion_bound(a, lambda2, dc.beta, dc.r1, dc.r2);
  for (int t : hyper) {
    if (done >= pairs) break;
    const EmbeddedDisk c = hyperbolic_component(sys, d0, t, r);
    const auto traj = disk_trajectory(sys, c, t);
    const int take = std::min(per_time, pairs - done);
    for (int k = 0; k < take; ++k) {
      const int y = static_cast<int>((k + 0.5) * c.size() / take);
      const auto rep = distortion(sys, traj, y, t, set);
      csv.row({double(t), double(y), rep.ratio, rep.bound_k});
      lo = std::min(lo, rep.ratio);
      hi = std::max(hi, rep.ratio);
      unity = std::max(unity, std::abs(rep.ratio - 1.0));
      inside += rep.within();
      ++done;
    }
  }
  ctx.summary.measured = {{"a", a},      {"lambda2", lambda2}, {"r", r},         {"r1", dc.r1},
                          {"r2", dc.r2}, {"beta", dc.beta},    {"bound_k", bound_k}, {"pairs", done},
                          {"min_ratio", lo}, {"max_ratio", hi}};
  ctx.check("within_distortion_bound", inside == done,
            std::to_string(inside) + " of " + std::to_string(done) + " pairs in [" + detail::fmt(1.0 / bound_k) +
                ", " + detail::fmt(bound_k) + "]");
  if (sys.name() == "cat") {
    ctx.summary.measured["max_abs_ratio_minus_one"] = unity;
    ctx.check("ratio_unity", unity <= 1e-10, "max |ratio - 1| = " + detail::fmt(unity));
  }
}

inline void run_curvature(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  const double sigma = cfg.overrides.sigma.value_or(h.lambda2);
  const double r = cfg.overrides.r.value_or(0.05);
  const CurvatureConstants cc = curvature_constants(sys, h, ctx.grid(), cfg.overrides.alpha, cfg.overrides.lambda4);
  const double grid_tol = 0.05;
  const double large_time = 2.0 * cc.script_l / (1.0 - cc.lambda4);

  std::vector<Point> centers{ctx.center()};
  if (cfg.samples > 1) {
    for (const auto& p : sample_points(sys, cfg.samples - 1, cfg.seed)) centers.push_back(p);
  }
  auto csv = ctx.csv("curvature.csv", {"disk", "n", "initial", "measured", "bound_induction", "bound_closed"});
  int checked = 0, within = 0, flat = 0, large_ok = 0, skipped = 0;
  double worst = 0.0;
  for (size_t k = 0; k < centers.size(); ++k) {
    std::vector<double> logs;
    try {
      logs = expansion_logs(sys, centers[k], 2 * cfg.horizon);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
      ++skipped;
      continue;
    }
    const auto hyper = detail::hyperbolic_time_list(logs, sigma);
    const auto it = std::lower_bound(hyper.begin(), hyper.end(), cfg.horizon);
    if (it == hyper.end()) {
      ++skipped;
      continue;
    }
    const int t = *it;
    const EmbeddedDisk c = hyperbolic_component(sys, ctx.disk_at(centers[k]), t, r);
    const CurvatureReport rep = curvature_recursion(sys, c, t, cc);
    csv.row({double(k), double(t), rep.initial, rep.measured, rep.bound_induction, rep.bound_closed});
    ++checked;
    within += rep.measured <= rep.bound() * (1.0 + grid_tol);
    flat += rep.initial == 0.0;
    large_ok += rep.measured < large_time;
    worst = std::max(worst, rep.bound() > 0.0 ? rep.measured / rep.bound() : rep.measured > 0.0 ? 1e300 : 0.0);
    ctx.note("disk " + std::to_string(k) + " n=" + std::to_string(t) + " measured=" + detail::fmt(rep.measured));
  }

  // Single step on a curved disk, at two resolutions.
  const Point x = ctx.center();
  auto single = [&](int res) {
    const EmbeddedDisk base = make_disk(sys, x, sys.f_at(x), 0.1 * cfg.disk.radius, res);
    const EmbeddedDisk d = iterate_disk(sys, base, 2);
    const EmbeddedDisk fd = iterate_disk(sys, d, 1);
    const double hd = holder_curvature(sys, d, cc.xi);
    const double hfd = holder_curvature(sys, fd, cc.xi);
    const LinearMap df = sys.tangent(d.center);
    const double m = restricted_mininorm(df, sys.f_at(d.center));
    const double rhs =
        curvature_step_factor(sys, d.center, cc) * hd + cc.l1 / std::pow(m - 2.0 * cc.alpha, 1.0 + cc.xi);
    return std::make_pair(hfd, rhs);
  };
  const int coarse_res = std::max(3, (cfg.disk.resolution / 2) | 1);
  const auto [lhs_c, rhs_c] = single(coarse_res);
  const auto [lhs_f, rhs_f] = single(cfg.disk.resolution);
  const double refinement = std::max(lhs_f, lhs_c) > 0.0 ? std::abs(lhs_f - lhs_c) / std::max(lhs_f, lhs_c) : 0.0;

  ctx.summary.measured = {{"lambda4", cc.lambda4},
                          {"script_l", cc.script_l},
                          {"l1", cc.l1},
                          {"alpha", cc.alpha},
                          {"xi", cc.xi},
                          {"b", cc.b},
                          {"disks", checked},
                          {"skipped", skipped},
                          {"max_measured_over_bound", worst},
                          {"single_step_lhs", lhs_f},
                          {"single_step_rhs", rhs_f},
                          {"single_step_refinement", refinement}};
  ctx.check("n_step_bound", checked > 0 && within == checked,
            std::to_string(within) + " of " + std::to_string(checked) + " disks within the bound");
  ctx.check("flat_initial", flat == checked, std::to_string(flat) + " flat carved disks measure 0");
  ctx.check("large_time_bound", large_ok == checked, "measured < 2L/(1-lambda4) = " + detail::fmt(large_time));
  ctx.check("single_step_claim", lhs_f <= rhs_f * (1.0 + grid_tol) && lhs_c <= rhs_c * (1.0 + grid_tol),
            detail::fmt(lhs_f) + " <= " + detail::fmt(rhs_f));
  ctx.check("refinement_stable", refinement <= grid_tol, "relative change " + detail::fmt(refinement));
}

/// 1000, 2000, 4000, ... below n, then n.
inline std::vector<int> doubling_schedule(int n) {
  std::vector<int> out;
  for (long long m = std::min(1000, n); m < n; m *= 2) out.push_back(static_cast<int>(m));
  out.push_back(n);
  return out;
}

inline bool has_references(const std::vector<Observable>& tests) {
  return std::all_of(tests.begin(), tests.end(), [](const Observable& o) { return o.reference_integral.has_value(); });
}

inline void run_srb_converge(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const auto tests = trig_tests(sys, 8);
  const double bound = std::max_element(tests.begin(), tests.end(), [](auto& l, auto& r) { return l.bound < r.bound; })->bound;
  const EmbeddedDisk d = ctx.disk_at(ctx.center());
  const auto schedule = doubling_schedule(cfg.horizon);
  const auto cps = pushforward_checkpoints(sys, d, schedule, tests);
  const bool torus = has_references(tests);
  const TestIntegrals ref = torus ? reference_integrals(tests) : cps.back().average;

  auto csv = ctx.csv("srb_converge.csv", {"n", "distance", "cesaro_defect", "defect_bound"});
  auto ints = ctx.csv("srb_integrals.csv", {"n", "test", "value"});
  bool defect_ok = true;
  std::vector<double> dist;
  for (const auto& cp : cps) {
    const double defect = weak_star_distance(cp.average, cp.pushed);
    const double lim = 2.0 * bound / cp.n;
    defect_ok = defect_ok && defect <= lim;
    dist.push_back(weak_star_distance(cp.average, ref));
    csv.row({double(cp.n), dist.back(), defect, lim});
    for (size_t t = 0; t < tests.size(); ++t) {
      ints.row(std::to_string(cp.n) + "," + tests[t].name, {cp.average.values[t] / cp.average.total});
    }
  }
  ctx.summary.measured = {{"schedule", schedule},
                          {"distance", dist},
                          {"reference", torus ? "lebesgue" : "final_average"},
                          {"final_distance", dist.back()}};
  ctx.check("cesaro_defect", defect_ok, "d(mu_n, f_* mu_n) <= 2B/n at every checkpoint");
  if (torus) {
    ctx.check("converged", dist.back() < 0.03, "final distance " + detail::fmt(dist.back()));
    ctx.check("distance_decreasing", dist.size() < 2 || dist.back() < dist.front(),
              detail::fmt(dist.front()) + " -> " + detail::fmt(dist.back()));
  }
}

inline void run_hyperbolic_mass(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const ConstantsH h = ctx.constants();
  HyperbolicMassOptions opt;
  opt.lambda1 = cfg.overrides.lambda1.value_or(h.lambda1);
  opt.horizon = std::max(cfg.horizon, 1000);
  const double sigma = cfg.overrides.sigma.value_or(h.lambda2);
  const double r1 = cfg.overrides.r1.value_or(0.02);
  const EmbeddedDisk d = ctx.disk_at(ctx.center());
  const auto rep = hyperbolic_mass(sys, d, cfg.horizon, sigma, r1, opt);
  auto csv = ctx.csv("hyperbolic_mass.csv", {"i", "hyperbolic_mass", "union_mass", "selected_mass"});
  for (int i = 0; i < cfg.horizon; ++i) {
    csv.row({double(i), rep.hyperbolic_mass[i], rep.union_mass[i], rep.per_i[i]});
  }
  ctx.summary.measured = {{"eta", rep.eta},
                          {"tau", rep.tau},
                          {"theta", rep.theta},
                          {"lambda_fraction", rep.lambda_fraction},
                          {"floor", rep.floor},
                          {"lambda1", opt.lambda1},
                          {"sigma", sigma},
                          {"r1", r1},
                          {"lambda_horizon", rep.horizon},
                          {"worst_edge_ratio", rep.worst_edge_ratio}};
  ctx.check("eta_positive", rep.eta > 0.0, "eta " + detail::fmt(rep.eta));
  ctx.check("resolution_adequate", rep.worst_edge_ratio <= 1.0,
            "longest edge / (r1/4) = " + detail::fmt(rep.worst_edge_ratio));
}

inline void run_physical_basin(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sys = *ctx.sys;
  const auto tests = trig_tests(sys, 8);
  TestIntegrals ref;
  if (has_references(tests)) {
    ref = reference_integrals(tests);
  } else {
    ref = pushforward_checkpoints(sys, ctx.disk_at(ctx.center()), {cfg.horizon}, tests).back().average;
  }
  const auto pts = sample_points(sys, cfg.samples, cfg.seed);
  std::vector<double> dev(pts.size(), std::numeric_limits<double>::infinity());
  parallel_for(pts.size(), [&](size_t k) {
    try {
      const auto avg = birkhoff_all(sys, pts[k], tests, cfg.horizon);
      double w = 0.0;
      for (size_t t = 0; t < tests.size(); ++t) w = std::max(w, std::abs(avg[t] - ref.values[t] / ref.total));
      dev[k] = w;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrbitEscaped) throw;
    }
  });
  auto csv = ctx.csv("physical_basin.csv", detail::concat(detail::concat({"sample"}, detail::coord_names(sys.dim())),
                                                          {"max_deviation", "hit"}));
  int hits = 0;
  for (size_t k = 0; k < pts.size(); ++k) {
    std::vector<double> v{double(k)};
    for (int i = 0; i < sys.dim(); ++i) v.push_back(pts[k].coords(i));
    const bool hit = dev[k] <= cfg.tolerance;
    v.push_back(dev[k]);
    v.push_back(hit);
    csv.row(v);
    hits += hit;
  }
  const double frac = static_cast<double>(hits) / pts.size();
  ctx.summary.measured = {{"fraction", frac},
                          {"tolerance", cfg.tolerance},
                          {"samples", static_cast<int>(pts.size())},
                          {"n", cfg.horizon},
                          {"max_deviation", *std::max_element(dev.begin(), dev.end())}};
  ctx.check("basin_fraction", frac >= 0.99, "fraction " + detail::fmt(frac));
}

// ---------------------------------------------------------------------------

/// Runs the experiment, writing CSVs, summary.json and timing.json into
/// `out_dir`. Module errors propagate with the experiment name prepended.
inline RunSummary run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  RunSummary summary;
  summary.config = cfg.echo();
  Context ctx{cfg, build(cfg.model), out_dir, summary, log};
  try {
    switch (cfg.experiment) {
      case Experiment::PlissDemo: run_pliss_demo(ctx); break;
      case Experiment::HyperbolicTimes: run_hyperbolic_times(ctx); break;
      case Experiment::ConeCheck: run_cone_check(ctx); break;
      case Experiment::DiskIterate: run_disk_iterate(ctx); break;
      case Experiment::Contraction: run_contraction(ctx); break;
      case Experiment::Distortion: run_distortion(ctx); break;
      case Experiment::Curvature: run_curvature(ctx); break;
      case Experiment::SrbConverge: run_srb_converge(ctx); break;
      case Experiment::HyperbolicMass: run_hyperbolic_mass(ctx); break;
      case Experiment::PhysicalBasin: run_physical_basin(ctx); break;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), info(cfg.experiment).name + " on " + cfg.model.name + ": " + e.what());
  }
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream os(out_dir / "summary.json");
    os << summary.document().dump(2) << "\n";
  }
  {
    std::ofstream os(out_dir / "timing.json");
    os << json{{"wall_seconds", summary.wall_seconds}, {"workers", worker_count()}}.dump(2) << "\n";
  }
  return summary;
}

}  // namespace srb::harness
