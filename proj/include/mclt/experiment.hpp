#ifndef MCLT_EXPERIMENT_HPP
#define MCLT_EXPERIMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mclt/bounds.hpp"
#include "mclt/conditions.hpp"
#include "mclt/corpus.hpp"
#include "mclt/distance.hpp"
#include "mclt/errors.hpp"
#include "mclt/kernel.hpp"
#include "mclt/lipschitz.hpp"
#include "mclt/simulate.hpp"
#include "mclt/transforms.hpp"

namespace mclt {

inline constexpr const char* kToolName = "mclt_lab";
inline constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::json;

/// Malformed or inconsistent experiment configuration (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind { rates, bounds_table, lemma_suite, lipschitz, transforms_check, simulate };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::rates: return "rates";
    case ExperimentKind::bounds_table: return "bounds-table";
    case ExperimentKind::lemma_suite: return "lemma-suite";
    case ExperimentKind::lipschitz: return "lipschitz";
    case ExperimentKind::transforms_check: return "transforms-check";
    case ExperimentKind::simulate: return "simulate";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::rates, ExperimentKind::bounds_table, ExperimentKind::lemma_suite,
                 ExperimentKind::lipschitz, ExperimentKind::transforms_check, ExperimentKind::simulate})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

// Kernel registry.

namespace detail {

inline double param_or(const json& params, const char* key, std::optional<double> fallback = std::nullopt) {
  if (params.contains(key)) {
    if (!params[key].is_number()) throw ConfigError(std::string("parameter '") + key + "' must be a number");
    return params[key].get<double>();
  }
  if (fallback) return *fallback;
  throw ConfigError(std::string("missing kernel parameter '") + key + "'");
}

inline json merged(const json& base, const json& overrides) {
  json out = base.is_object() ? base : json::object();
  if (overrides.is_object())
    for (const auto& [k, v] : overrides.items()) out[k] = v;
  return out;
}

}  // namespace detail

/// Builds a registry kernel with `n` steps. Parameters:
///   iid_rademacher  -
///   iid_scaled      atoms: [[value, prob], ...]  or  family: normal|uniform|laplace [, inner_budget]
///   two_point       a
///   three_point     b, q  or  epsilon (b = epsilon, q = 1/(n epsilon^2), so <X>_n = 1)
///   variance_drift  d
inline KernelPtr make_kernel(const std::string& name, const json& params, std::size_t n) {
  if (n == 0) throw ConfigError("kernel step count n must be positive");
  if (name == "iid_rademacher") return iid_rademacher(n);
  if (name == "iid_scaled") {
    if (params.contains("atoms")) {
      std::vector<Atom> atoms;
      for (const auto& a : params["atoms"]) {
        if (!a.is_array() || a.size() != 2) throw ConfigError("iid_scaled: atoms must be [value, prob] pairs");
        atoms.push_back({a[0].get<double>(), a[1].get<double>()});
      }
      return iid_scaled(atoms, n);
    }
    const std::string fam = params.value("family", std::string("normal"));
    ContinuousFamily f;
    if (fam == "normal") f = ContinuousFamily::normal;
    else if (fam == "uniform") f = ContinuousFamily::uniform;
    else if (fam == "laplace") f = ContinuousFamily::laplace;
    else throw ConfigError("iid_scaled: unknown family '" + fam + "'");
    return iid_scaled(f, n, params.value("inner_budget", std::size_t{100000}));
  }
  if (name == "two_point") return two_point(detail::param_or(params, "a"), n);
  if (name == "three_point") {
    if (params.contains("epsilon")) {
      const double eps = detail::param_or(params, "epsilon");
      return three_point(eps, 1.0 / (static_cast<double>(n) * eps * eps), n);
    }
    return three_point(detail::param_or(params, "b"), detail::param_or(params, "q"), n);
  }
  if (name == "variance_drift") return variance_drift(detail::param_or(params, "d"), n);
  throw ConfigError("unknown kernel '" + name + "'");
}

// Lipschitz model registry.

namespace detail {

inline double resolve_scale(const json& j, std::size_t n) {
  if (!j.contains("scale")) return 1.0;
  if (j["scale"].is_string()) {
    if (j["scale"].get<std::string>() == "1/sqrt(n)") return 1.0 / std::sqrt(static_cast<double>(n));
    throw ConfigError("unknown scale rule '" + j["scale"].get<std::string>() + "'");
  }
  return j["scale"].get<double>();
}

inline Metric parse_metric(const json& j, std::size_t n) {
  const std::string kind = j.value("kind", std::string("abs_diff"));
  if (kind == "abs_diff") return Metric::abs_diff(resolve_scale(j, n));
  if (kind == "zero") return Metric::zero();
  throw ConfigError("unknown metric kind '" + kind + "'");
}

inline CoordinateLaw parse_coordinate(const json& j) {
  CoordinateLaw c;
  c.values = j.at("values").get<std::vector<double>>();
  if (j.contains("probs")) c.probs = j["probs"].get<std::vector<double>>();
  else c = CoordinateLaw::uniform(c.values);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace detail

/// Registry models: rademacher_average, max_of_bits, uniform3_sum, or custom
/// {coordinate | coordinates, f: {kind: sum|max|min|weighted_sum, scale, weights},
///  d1, d2: {kind: abs_diff|zero, scale: number | "1/sqrt(n)"}}.
inline LipschitzModel make_model(const json& spec, std::size_t n, double rho) {
  const std::string name = spec.value("name", std::string("custom"));
  LipschitzModel m;
  if (name == "rademacher_average") m = rademacher_average_model(n, rho);
  else if (name == "max_of_bits") m = max_of_bits_model();
  else if (name == "uniform3_sum") m = uniform3_sum_model(n);
  else if (name == "custom") {
    if (spec.contains("coordinates")) {
      for (const auto& c : spec["coordinates"]) m.coords.push_back(detail::parse_coordinate(c));
      n = m.coords.size();
    } else {
      m.coords.assign(n, detail::parse_coordinate(spec.at("coordinate")));
    }
    const json f = spec.value("f", json::object());
    const std::string kind = f.value("kind", std::string("sum"));
    if (kind == "sum") m.f = Functional::sum(n, detail::resolve_scale(f, n));
    else if (kind == "weighted_sum") m.f = Functional::weighted_sum(f.at("weights").get<std::vector<double>>());
    else if (kind == "max") m.f = Functional::max();
    else if (kind == "min") m.f = Functional::min();
    else throw ConfigError("unknown functional kind '" + kind + "'");
    if (m.f.linear_weights && m.f.linear_weights->size() != n) throw ConfigError("weights must have one entry per coordinate");
    m.d1.assign(n, detail::parse_metric(spec.value("d1", json::object()), n));
    m.d2.assign(n, detail::parse_metric(spec.value("d2", json::object()), n));
    m.label = "custom(n=" + std::to_string(n) + ")";
  } else {
    throw ConfigError("unknown Lipschitz model '" + name + "'");
  }
  m.rho = rho;
  return m;
}

// Configuration.

struct GridPoint {
  std::optional<std::size_t> n;
  std::optional<double> epsilon;
  std::size_t M = 0;
  json params = json::object();  // kernel parameter overrides, or a bound parameter record
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::rates;
  std::uint64_t seed = 0;
  std::string kernel;
  json kernel_params = json::object();
  json model = json::object();
  std::vector<GridPoint> grid;
  double rho = 1.0;
  double p = 1.0;
  double alpha = 0.05;
  std::vector<BoundId> bounds;
  std::vector<BoundId> references;
  std::string abscissa = "n";
  json checks = json::object();
  json extra = json::object();  // kind-specific settings (lemma, dominance, worked example, ...)
  json source;                  // the document as given (with any seed override)
};

inline ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.source = doc;
  try {
    c.kind = experiment_kind_from_string(doc.at("kind").get<std::string>());
    if (!doc.contains("seed") || !doc["seed"].is_number_unsigned())
      throw ConfigError("'seed' is mandatory and must be a non-negative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
    c.rho = doc.value("rho", 1.0);
    c.p = doc.value("p", 1.0);
    c.alpha = doc.value("alpha", 0.05);
    if (!(c.rho > 0.0)) throw ConfigError("rho must be positive");
    if (!(c.p >= 1.0)) throw ConfigError("p must be >= 1");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (doc.contains("kernel")) {
      const auto& k = doc["kernel"];
      if (k.is_string()) c.kernel = k.get<std::string>();
      else {
        c.kernel = k.at("name").get<std::string>();
        c.kernel_params = k.value("params", json::object());
      }
    }
    c.model = doc.value("model", json::object());
    for (const auto& b : doc.value("bounds", json::array())) c.bounds.push_back(bound_from_string(b.get<std::string>()));
    if (doc.contains("reference")) {
      const auto& r = doc["reference"];
      if (r.is_string()) c.references.push_back(bound_from_string(r.get<std::string>()));
      else
        for (const auto& x : r) c.references.push_back(bound_from_string(x.get<std::string>()));
    }
    c.abscissa = doc.value("abscissa", std::string("n"));
    if (c.abscissa != "n" && c.abscissa != "epsilon") throw ConfigError("abscissa must be 'n' or 'epsilon'");
    c.checks = doc.value("checks", json::object());
    for (const char* key : {"lemma", "dominance", "worked_example", "write_samples", "epsilon"})
      if (doc.contains(key)) c.extra[key] = doc[key];

    const bool grid_optional = c.kind == ExperimentKind::lemma_suite;
    if (!doc.contains("grid")) {
      if (!grid_optional) throw ConfigError("'grid' is required");
      c.grid.push_back({});
    } else {
      if (!doc["grid"].is_array() || doc["grid"].empty()) throw ConfigError("'grid' must be a non-empty array");
      for (const auto& g : doc["grid"]) {
        GridPoint gp;
        if (c.kind == ExperimentKind::bounds_table) {
          gp.params = g;
        } else {
          if (g.contains("n")) gp.n = g["n"].get<std::size_t>();
          if (g.contains("epsilon")) gp.epsilon = g["epsilon"].get<double>();
          gp.M = g.value("M", std::size_t{0});
          gp.params = g.value("params", json::object());
        }
        c.grid.push_back(gp);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const bool needs_kernel = c.kind == ExperimentKind::rates || c.kind == ExperimentKind::transforms_check ||
                            c.kind == ExperimentKind::simulate;
  if (needs_kernel && c.kernel.empty()) throw ConfigError("'kernel' is required for " + to_string(c.kind));
  if (c.kind == ExperimentKind::lipschitz && c.model.empty()) throw ConfigError("'model' is required for lipschitz");
  for (const auto& gp : c.grid) {
    if (needs_kernel && !gp.n) throw ConfigError("every grid point needs 'n'");
    if (c.kind == ExperimentKind::rates && gp.M < 1000) throw ConfigError("rates experiments need M >= 1000 per grid point");
    if ((c.kind == ExperimentKind::transforms_check || c.kind == ExperimentKind::simulate) && gp.M == 0)
      throw ConfigError("every grid point needs 'M' >= 1");
  }
  if (c.kind == ExperimentKind::lipschitz)
    for (const auto& gp : c.grid)
      if (!gp.n && c.model.value("name", std::string()) != "max_of_bits" && !c.model.contains("coordinates"))
        throw ConfigError("every grid point needs 'n'");
  return c;
}

// Output helpers.

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct ExperimentOutput {
  json manifest;
  std::string series_csv;
  std::vector<std::pair<std::string, std::string>> extra_files;  // (name, content)
  std::vector<std::string> failed_checks;
};

namespace detail {

struct CheckList {
  json records = json::array();
  std::vector<std::string> failed;
  void add(const std::string& name, bool pass, json value = nullptr) {
    records.push_back({{"name", name}, {"pass", pass}, {"value", value}});
    if (!pass) failed.push_back(name);
  }
};

inline std::uint64_t point_seed(std::uint64_t seed, std::size_t g) {
  Xoshiro256 rng = stream(seed, 0xC0FFEE00ULL + g);
  return rng();
}

inline json bound_params_json(const BoundParams& p) {
  json j = json::object();
  for (const auto& [k, v] : p) j[k] = v;
  return j;
}

inline json fit_json(const RateFit& fit) {
  json used = json::array();
  for (bool u : fit.used) used.push_back(u);
  return {{"slope", fit.slope},
          {"intercept", fit.intercept},
          {"r_squared", std::isnan(fit.r_squared) ? json(nullptr) : json(fit.r_squared)},
          {"ratio_spread", opt_json(fit.ratio_spread)},
          {"used", used},
          {"warnings", fit.warnings}};
}

inline void apply_fit_checks(const json& checks, const RateFit& fit, CheckList& cl) {
  if (checks.contains("slope_range")) {
    const double lo = checks["slope_range"][0].get<double>(), hi = checks["slope_range"][1].get<double>();
    cl.add("fit.slope in [" + fmt(lo) + ", " + fmt(hi) + "]", fit.slope >= lo && fit.slope <= hi, fit.slope);
  }
  if (checks.contains("slope_min")) {
    const double lo = checks["slope_min"].get<double>();
    cl.add("fit.slope >= " + fmt(lo), fit.slope >= lo, fit.slope);
  }
  if (checks.contains("ratio_spread_max")) {
    const double hi = checks["ratio_spread_max"].get<double>();
    cl.add("fit.ratio_spread <= " + fmt(hi), fit.ratio_spread && *fit.ratio_spread <= hi, opt_json(fit.ratio_spread));
  }
}

// Kind runners.

inline ExperimentOutput run_rates(const ExperimentConfig& c, unsigned threads) {
  ExperimentOutput out;
  CheckList cl;
  json points = json::array();
  std::vector<RatePoint> rate_points;
  std::vector<std::string> warnings;

  std::ostringstream csv;
  csv << "grid_point,M,d_hat,dkw_lo,dkw_hi,epsilon,delta";
  for (auto id : c.bounds) csv << "," << to_string(id);
  csv << "\n";

  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const GridPoint& gp = c.grid[g];
    const std::size_t n = *gp.n;
    const std::uint64_t seed = point_seed(c.seed, g);
    const json kparams = merged(c.kernel_params, gp.params);
    const KernelPtr kernel = make_kernel(c.kernel, kparams, n);
    const ConditionReport report = certify(*kernel, c.rho, seed, 10000);

    SimulationOptions opts;
    opts.threads = threads;
    opts.power_exponent = 2.0 * c.p;
    const auto samples = simulate_terminals(*kernel, seed, gp.M, opts);
    const TerminalStatistics stats = terminal_statistics(samples, c.p);
    std::vector<double> xs = stats.terminals();
    const KolmogorovEstimate est = kolmogorov_distance_inplace(xs, c.alpha);

    BoundParams bp;
    if (report.epsilon) bp["epsilon"] = *report.epsilon;
    if (report.delta) bp["delta"] = *report.delta;
    bp["rho"] = c.rho;
    bp["p"] = c.p;
    bp["n"] = static_cast<double>(n);
    bp["E_var_dev_p"] = stats.variance_deviation_moment();
    bp["sum_E_abs_2p"] = stats.power_sum_mean();
    bp["E_max_abs_2p"] = stats.max_increment_moment();
    bp["var_dev_L1"] = stats.variance_deviation_l1();
    bp["var_dev_Linf"] = report.delta && report.delta_mode == CertificationMode::certified
                             ? *report.delta * *report.delta
                             : stats.variance_deviation_max();

    json bound_values = json::object();
    std::vector<std::optional<double>> row_bounds;
    auto eval = [&](BoundId id) -> std::optional<double> {
      try {
        return evaluate_rate(id, bp);
      } catch (const std::exception& e) {
        warnings.push_back("grid point " + std::to_string(g) + ": " + to_string(id) + " not evaluated: " + e.what());
        return std::nullopt;
      }
    };
    for (auto id : c.bounds) {
      row_bounds.push_back(eval(id));
      bound_values[to_string(id)] = opt_json(row_bounds.back());
    }
    json references = json::object();
    std::optional<double> first_reference;
    for (std::size_t r = 0; r < c.references.size(); ++r) {
      const auto v = eval(c.references[r]);
      references[to_string(c.references[r])] = opt_json(v);
      if (r == 0) first_reference = v;
    }
    double abscissa = static_cast<double>(n);
    if (c.abscissa == "epsilon") {
      if (gp.epsilon) abscissa = *gp.epsilon;
      else if (report.epsilon) abscissa = *report.epsilon;
      else throw ConfigError("abscissa 'epsilon' needs a certified or configured epsilon");
    }
    rate_points.push_back({abscissa, est, first_reference});

    csv << g << "," << gp.M << "," << fmt(est.d_hat) << "," << fmt(est.lower()) << "," << fmt(est.upper()) << ","
        << fmt(report.epsilon) << "," << fmt(report.delta);
    for (const auto& v : row_bounds) csv << "," << fmt(v);
    csv << "\n";

    points.push_back({{"grid_point", g},
                      {"n", n},
                      {"M", gp.M},
                      {"seed", seed},
                      {"kernel", kernel->label()},
                      {"kernel_params", kparams},
                      {"abscissa", abscissa},
                      {"d_hat", est.d_hat},
                      {"dkw_band", est.band},
                      {"dkw_lo", est.lower()},
                      {"dkw_hi", est.upper()},
                      {"alpha", est.alpha},
                      {"condition_report", to_json(report)},
                      {"bound_parameters", bound_params_json(bp)},
                      {"E_var_dev_p_se", stats.variance_deviation_moment_se()},
                      {"E_max_abs_2p_se", stats.max_increment_moment_se()},
                      {"bounds", bound_values},
                      {"references", references}});

    if (c.checks.value("d_hat_below_reference", false)) {
      const bool pass = first_reference && est.d_hat <= *first_reference;
      cl.add("grid point " + std::to_string(g) + ": d_hat <= reference", pass,
             {{"d_hat", est.d_hat}, {"reference", opt_json(first_reference)}});
    }
  }

  json fit_summary = nullptr;
  if (rate_points.size() >= 3) {
    const RateFit fit = fit_rate(rate_points);
    fit_summary = fit_json(fit);
    apply_fit_checks(c.checks, fit, cl);
  } else if (c.checks.contains("slope_range") || c.checks.contains("ratio_spread_max") || c.checks.contains("slope_min")) {
    throw ConfigError("rate-fit checks need at least 3 grid points");
  }
  out.manifest["points"] = points;
  out.manifest["fit"] = fit_summary;
  out.manifest["warnings"] = warnings;
  out.manifest["checks"] = cl.records;
  out.series_csv = csv.str();
  out.failed_checks = cl.failed;
  return out;
}

inline ExperimentOutput run_simulate(const ExperimentConfig& c, unsigned threads) {
  ExperimentOutput out;
  json points = json::array();
  std::ostringstream csv;
  csv << "grid_point,n,M,mean_X,var_X,E_var_dev_p,E_var_dev_p_se,E_max_abs_2p,E_max_abs_2p_se,d_hat\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const GridPoint& gp = c.grid[g];
    const std::uint64_t seed = point_seed(c.seed, g);
    const json kparams = merged(c.kernel_params, gp.params);
    const KernelPtr kernel = make_kernel(c.kernel, kparams, *gp.n);
    SimulationOptions opts;
    opts.threads = threads;
    opts.power_exponent = 2.0 * c.p;
    const auto samples = simulate_terminals(*kernel, seed, gp.M, opts);
    const TerminalStatistics stats = terminal_statistics(samples, c.p);
    double mean = 0.0, sq = 0.0;
    for (double x : stats.terminals()) mean += x;
    mean /= static_cast<double>(gp.M);
    for (double x : stats.terminals()) sq += (x - mean) * (x - mean);
    const double var = gp.M > 1 ? sq / static_cast<double>(gp.M - 1) : 0.0;
    std::vector<double> xs = stats.terminals();
    const KolmogorovEstimate est = kolmogorov_distance_inplace(xs, c.alpha);
    csv << g << "," << *gp.n << "," << gp.M << "," << fmt(mean) << "," << fmt(var) << ","
        << fmt(stats.variance_deviation_moment()) << "," << fmt(stats.variance_deviation_moment_se()) << ","
        << fmt(stats.max_increment_moment()) << "," << fmt(stats.max_increment_moment_se()) << "," << fmt(est.d_hat)
        << "\n";
    points.push_back({{"grid_point", g},
                      {"n", *gp.n},
                      {"M", gp.M},
                      {"seed", seed},
                      {"kernel", kernel->label()},
                      {"mean_X", mean},
                      {"var_X", var},
                      {"E_var_dev_p", stats.variance_deviation_moment()},
                      {"E_var_dev_p_se", stats.variance_deviation_moment_se()},
                      {"E_max_abs_2p", stats.max_increment_moment()},
                      {"E_max_abs_2p_se", stats.max_increment_moment_se()},
                      {"d_hat", est.d_hat},
                      {"dkw_band", est.band}});
    if (c.extra.value("write_samples", false)) {
      std::ostringstream s;
      s << "replicate,X_n,variance_n,max_abs_increment\n";
      for (std::size_t j = 0; j < samples.size(); ++j)
        s << j << "," << fmt(samples[j].x) << "," << fmt(samples[j].variance) << ","
          << fmt(samples[j].max_abs_increment) << "\n";
      out.extra_files.emplace_back("samples_" + std::to_string(g) + ".csv", s.str());
    }
  }
  out.manifest["points"] = points;
  out.series_csv = csv.str();
  return out;
}

inline ExperimentOutput run_bounds_table(const ExperimentConfig& c) {
  ExperimentOutput out;
  CheckList cl;
  std::vector<BoundId> ids = c.bounds;
  if (ids.empty()) throw ConfigError("bounds-table needs a non-empty 'bounds' list");
  std::vector<BoundParams> grid;
  for (const auto& gp : c.grid) {
    BoundParams bp;
    for (const auto& [k, v] : gp.params.items()) {
      if (!v.is_number()) throw ConfigError("bound parameter '" + k + "' must be a number");
      bp[k] = v.get<double>();
    }
    grid.push_back(bp);
  }
  BoundTable table;
  try {
    table = compare_table(ids, grid);
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  }
  json rows = json::array();
  for (std::size_t r = 0; r < grid.size(); ++r) {
    json vals = json::object();
    for (std::size_t i = 0; i < ids.size(); ++i) vals[to_string(ids[i])] = table.values[r][i];
    rows.push_back({{"parameters", bound_params_json(grid[r])}, {"values", vals}, {"flags", table.flags[r]}});
  }
  json dominance = json::array();
  for (const auto& d : c.extra.value("dominance", json::array())) {
    const std::string check = d.at("check").get<std::string>();
    const double n = d.at("n").get<double>();
    DominanceCheck dc;
    if (check == "cube_root") dc = dominance_cube_root_regime(n, d.value("factor", 50.0));
    else if (check == "variance_boundary") dc = dominance_variance_boundary(n);
    else throw ConfigError("unknown dominance check '" + check + "'");
    dominance.push_back({{"claim", dc.claim},
                         {"n", dc.n},
                         {"epsilon", dc.epsilon},
                         {"smaller", dc.smaller},
                         {"larger", dc.larger},
                         {"ratio", dc.larger / dc.smaller},
                         {"required_factor", dc.required_factor},
                         {"holds", dc.holds}});
    cl.add(dc.claim + " (n = " + fmt(n) + ")", dc.holds, dc.larger / dc.smaller);
  }
  out.series_csv = table.to_csv();
  out.manifest["rows"] = rows;
  out.manifest["table_csv"] = out.series_csv;
  out.manifest["dominance"] = dominance;
  out.manifest["checks"] = cl.records;
  out.failed_checks = cl.failed;
  return out;
}

inline ExperimentOutput run_lemma_suite(const ExperimentConfig& c) {
  ExperimentOutput out;
  CheckList cl;
  const json lemma = c.extra.value("lemma", json::object());
  const std::size_t count = lemma.value("count", std::size_t{100});
  const double s = lemma.value("s", 4.0);
  const auto t_grid = lemma.value("t_grid", std::vector<double>{2.25, 2.5, 3.0, 3.5});
  const auto p_values = lemma.value("p_values", std::vector<double>{1.0, 2.0});
  std::ostringstream csv;
  csv << "suite,case,parameter,lhs,rhs,margin,holds\n";

  std::size_t interp_fail = 0, cap_fail = 0, smooth_fail = 0, vacuous = 0;
  double worst_interp = std::numeric_limits<double>::infinity(), worst_cap = worst_interp, worst_smooth = worst_interp;
  const auto laws = mean_zero_corpus(c.seed, count);
  for (std::size_t i = 0; i < laws.size(); ++i) {
    const MomentLemmaReport r = verify_moment_lemmas(laws[i], s, t_grid);
    if (r.vacuous) ++vacuous;
    for (const auto& chk : r.interpolation) {
      const double margin = chk.rhs - chk.lhs;
      worst_interp = std::min(worst_interp, margin / std::max(chk.rhs, 1e-300));
      if (!chk.holds) ++interp_fail;
      csv << "moment_interpolation," << i << "," << fmt(chk.t) << "," << fmt(chk.lhs) << "," << fmt(chk.rhs) << ","
          << fmt(margin) << "," << (chk.holds ? 1 : 0) << "\n";
    }
    const double margin = r.variance_cap_rhs - r.m2;
    worst_cap = std::min(worst_cap, margin / std::max(r.variance_cap_rhs, 1e-300));
    if (!r.variance_cap_holds) ++cap_fail;
    csv << "variance_cap," << i << "," << fmt(s) << "," << fmt(r.m2) << "," << fmt(r.variance_cap_rhs) << ","
        << fmt(margin) << "," << (r.variance_cap_holds ? 1 : 0) << "\n";
  }
  const auto joints = joint_law_corpus(c.seed ^ 0x5A5A5A5AULL, count);
  for (std::size_t i = 0; i < joints.size(); ++i)
    for (double p : p_values) {
      const SmoothingCheck sc = verify_smoothing_lemma(joints[i], p);
      const bool holds = sc.margin >= -1e-12;
      worst_smooth = std::min(worst_smooth, sc.margin);
      if (!holds) ++smooth_fail;
      csv << "smoothing," << i << "," << fmt(p) << "," << fmt(sc.lhs) << "," << fmt(sc.rhs) << "," << fmt(sc.margin)
          << "," << (holds ? 1 : 0) << "\n";
    }
  cl.add("moment interpolation m_t <= eps^(t-2) m_2 (relative 1e-12)", interp_fail == 0, interp_fail);
  cl.add("variance cap m_2 <= eps^2 (relative 1e-12)", cap_fail == 0, cap_fail);
  cl.add("smoothing inequality margin >= -1e-12", smooth_fail == 0, smooth_fail);
  out.manifest["summary"] = {{"laws", laws.size()},
                             {"vacuous", vacuous},
                             {"joint_laws", joints.size()},
                             {"worst_relative_interpolation_slack", worst_interp},
                             {"worst_relative_variance_cap_slack", worst_cap},
                             {"worst_smoothing_margin", worst_smooth}};
  out.manifest["checks"] = cl.records;
  out.series_csv = csv.str();
  out.failed_checks = cl.failed;
  return out;
}

inline ExperimentOutput run_lipschitz(const ExperimentConfig& c, unsigned threads) {
  ExperimentOutput out;
  CheckList cl;
  json points = json::array();
  std::vector<RatePoint> rate_points;
  std::ostringstream csv;
  csv << "grid_point,n,M,d_hat,dkw_lo,dkw_hi,epsilon_n,delta_n,variance,lower,upper,lower_holds,reference\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const GridPoint& gp = c.grid[g];
    const LipschitzModel model = make_model(c.model, gp.n.value_or(2), c.rho);
    const std::uint64_t seed = point_seed(c.seed, g);
    const std::string tag = "grid point " + std::to_string(g) + ": ";
    const EpsilonDeltaN ed = epsilon_delta_n(model);
    const bool enumerable = model.product_size() <= static_cast<double>(kEnumerationGuard);
    json rec = {{"grid_point", g},     {"n", model.n()},          {"model", model.label}, {"seed", seed},
                {"epsilon_n", ed.epsilon_n}, {"delta_n", ed.delta_n}, {"degenerate", ed.degenerate}};

    std::optional<VarianceSandwich> sw;
    if (enumerable || model.f.linear_weights) {
      sw = variance_sandwich(model);
      cl.add(tag + "upper variance sandwich", sw->upper_holds, sw->upper - sw->variance);
      rec["sandwich"] = {{"lower", sw->lower},
                         {"variance", sw->variance},
                         {"upper", sw->upper},
                         {"upper_holds", sw->upper_holds},
                         {"lower_holds", sw->lower_holds}};
    }
    if (enumerable) {
      const DoobTables t = build_doob_tables(model, threads);
      const DoobVerification dv = verify_doob(model, t);
      cl.add(tag + "Doob martingale property", dv.martingale, dv.max_conditional_mean);
      cl.add(tag + "Doob telescoping", dv.telescoping, dv.max_telescoping_error);
      cl.add(tag + "Doob orthogonality", dv.orthogonal, opt_json(dv.max_cross_moment));
      const LipschitzA1Report a1 = verify_a1_lipschitz(model);
      cl.add(tag + "moment condition for Doob increments", a1.all_hold());
      json steps = json::array();
      for (const auto& s : a1.steps)
        steps.push_back({{"step", s.step},
                         {"worst_ratio", s.worst_ratio},
                         {"bound", s.bound},
                         {"averaged_constant", s.averaged_constant},
                         {"vacuous", s.vacuous},
                         {"holds", s.holds},
                         {"averaged_constant_holds", s.averaged_constant_holds}});
      rec["doob"] = {{"mean", t.mean()},
                     {"variance", dv.variance},
                     {"variance_from_increments", dv.variance_from_increments},
                     {"max_conditional_mean", dv.max_conditional_mean},
                     {"max_telescoping_error", dv.max_telescoping_error},
                     {"max_cross_moment", opt_json(dv.max_cross_moment)}};
      rec["a1"] = steps;
    }
    const PairCheck pc = check_lipschitz_pairs(model, 10000, seed);
    cl.add(tag + "d1 <= |f(x) - f(x')| <= d2 on coordinate swaps", pc.ok(), pc.first_violation);
    rec["pair_check"] = {{"exhaustive", pc.exhaustive}, {"checked", pc.checked}, {"violations", pc.violations}};

    std::optional<KolmogorovEstimate> est;
    std::optional<double> reference;
    if (gp.M > 0) {
      auto xs = sample_normalized_functional(model, seed, gp.M, threads);
      est = kolmogorov_distance_inplace(xs, c.alpha);
      if (!ed.degenerate && ed.epsilon_n > 0.0 && ed.epsilon_n < 1.0) reference = eps_abs_log(ed.epsilon_n);
      rate_points.push_back({static_cast<double>(model.n()), *est, reference});
      rec["d_hat"] = est->d_hat;
      rec["dkw_band"] = est->band;
      rec["reference"] = opt_json(reference);
      rec["M"] = gp.M;
    }
    csv << g << "," << model.n() << "," << gp.M << "," << (est ? fmt(est->d_hat) : "") << ","
        << (est ? fmt(est->lower()) : "") << "," << (est ? fmt(est->upper()) : "") << "," << fmt(ed.epsilon_n) << ","
        << fmt(ed.delta_n) << "," << (sw ? fmt(sw->variance) : "") << "," << (sw ? fmt(sw->lower) : "") << ","
        << (sw ? fmt(sw->upper) : "") << "," << (sw ? (sw->lower_holds ? "1" : "0") : "") << "," << fmt(reference)
        << "\n";
    points.push_back(rec);
  }
  json fit_summary = nullptr;
  if (rate_points.size() >= 3) {
    const RateFit fit = fit_rate(rate_points);
    fit_summary = fit_json(fit);
    apply_fit_checks(c.checks, fit, cl);
  }
  out.manifest["points"] = points;
  out.manifest["fit"] = fit_summary;
  out.manifest["checks"] = cl.records;
  out.series_csv = csv.str();
  out.failed_checks = cl.failed;
  return out;
}

inline ExperimentOutput run_transforms_check(const ExperimentConfig& c, unsigned threads) {
  ExperimentOutput out;
  CheckList cl;
  json points = json::array();
  std::ostringstream csv;
  csv << "grid_point,n,paths,epsilon,max_unit_variance_error,a1_failures,sup_max_residual,sup_flagged,"
         "inf_max_residual,inf_flagged\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const GridPoint& gp = c.grid[g];
    const std::uint64_t seed = point_seed(c.seed, g);
    const json kparams = merged(c.kernel_params, gp.params);
    const KernelPtr kernel = make_kernel(c.kernel, kparams, *gp.n);
    const ConditionReport report = epsilon_min(*kernel, c.rho);
    double eps = *report.epsilon;
    if (gp.epsilon) {
      if (*gp.epsilon < eps) throw ConfigError("configured epsilon is below the certified one");
      eps = *gp.epsilon;
    }
    if (!(eps > 0.0 && eps <= 0.5)) throw ConfigError("padding needs epsilon in (0, 1/2], got " + fmt(eps));
    const std::string tag = "grid point " + std::to_string(g) + ": ";

    SimulationOptions opts;
    opts.threads = threads;
    const auto paths = sample_paths(*kernel, seed, gp.M, opts);
    const auto padded = pad_paths(paths, eps, seed ^ 0xA5A5A5A5A5A5A5A5ULL, threads);
    double worst_unit = 0.0;
    std::size_t a1_failures = 0;
    for (const auto& pp : padded) {
      const PaddedA1Report r = check_padded_a1(pp, *kernel, c.rho);
      worst_unit = std::max(worst_unit, std::abs(r.terminal_variance - 1.0));
      for (const auto& s : r.steps) a1_failures += s.holds ? 0 : 1;
    }
    cl.add(tag + "padded <X'>_N = 1 within 1e-9", worst_unit <= 1e-9, worst_unit);
    cl.add(tag + "moment condition on every padded step", a1_failures == 0, a1_failures);

    const StoppedSample sup = restrict_to_v(paths, StopVariant::sup_le_1, eps);
    const StoppedSample inf = restrict_to_v(paths, StopVariant::inf_ge_1, eps);
    cl.add(tag + "stopped residual <= eps^2 (sup variant)", sup.residual_violations == 0, sup.max_residual);
    cl.add(tag + "stopped residual <= eps^2 (inf variant)", inf.residual_violations == 0, inf.max_residual);

    csv << g << "," << *gp.n << "," << gp.M << "," << fmt(eps) << "," << fmt(worst_unit) << "," << a1_failures << ","
        << fmt(sup.max_residual) << "," << sup.flagged() << "," << fmt(inf.max_residual) << "," << inf.flagged()
        << "\n";
    points.push_back({{"grid_point", g},
                      {"n", *gp.n},
                      {"paths", gp.M},
                      {"seed", seed},
                      {"kernel", kernel->label()},
                      {"condition_report", to_json(report)},
                      {"epsilon", eps},
                      {"max_unit_variance_error", worst_unit},
                      {"a1_failures", a1_failures},
                      {"sup", {{"max_residual", sup.max_residual}, {"flagged", sup.flagged()}}},
                      {"inf", {{"max_residual", inf.max_residual}, {"flagged", inf.flagged()}}}});
  }
  // The worked example: <X>_tau = v0, padding with eps.
  const json we = c.extra.value("worked_example", json{{"variance", 0.9}, {"epsilon", 0.2}});
  {
    const double v0 = we.value("variance", 0.9), eps = we.value("epsilon", 0.2);
    PathBundle b;
    b.increments = {std::sqrt(v0)};
    b.partial_sums = {0.0, std::sqrt(v0)};
    b.variance = {0.0, v0};
    const PaddedPath pp = pad_to_unit_variance(b, eps, c.seed);
    const double expect_r = std::floor((1.0 - v0) / (eps * eps));
    const double expect_res = std::sqrt(1.0 - v0 - expect_r * eps * eps);
    cl.add("worked example: r", static_cast<double>(pp.r) == expect_r, pp.r);
    cl.add("worked example: residual", std::abs(pp.residual - expect_res) <= 1e-12, pp.residual);
    cl.add("worked example: <X'>_N = 1", std::abs(pp.terminal_variance() - 1.0) <= 1e-12, pp.terminal_variance());
    out.manifest["worked_example"] = {{"variance_at_tau", v0},
                                      {"epsilon", eps},
                                      {"r", pp.r},
                                      {"residual", pp.residual},
                                      {"N", pp.N},
                                      {"terminal_variance", pp.terminal_variance()}};
  }
  out.manifest["points"] = points;
  out.manifest["checks"] = cl.records;
  out.series_csv = csv.str();
  out.failed_checks = cl.failed;
  return out;
}

}  // namespace detail

/// Runs the configured experiment in memory.
inline ExperimentOutput execute(const ExperimentConfig& c, unsigned threads = 1) {
  ExperimentOutput out;
  try {
    switch (c.kind) {
      case ExperimentKind::rates: out = detail::run_rates(c, threads); break;
      case ExperimentKind::simulate: out = detail::run_simulate(c, threads); break;
      case ExperimentKind::bounds_table: out = detail::run_bounds_table(c); break;
      case ExperimentKind::lemma_suite: out = detail::run_lemma_suite(c); break;
      case ExperimentKind::lipschitz: out = detail::run_lipschitz(c, threads); break;
      case ExperimentKind::transforms_check: out = detail::run_transforms_check(c, threads); break;
    }
  } catch (const KernelError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["kind"] = to_string(c.kind);
  m["log_convention"] = std::string(kLogConvention);
  m["config"] = c.source;
  m["series"] = "series.csv";
  for (auto& [k, v] : out.manifest.items()) m[k] = v;
  out.manifest = std::move(m);
  return out;
}

/// Exit codes of run_experiment.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvariant = 1;
inline constexpr int kExitConfig = 2;

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  json manifest;
};

/// Runs an experiment and writes manifest.json and series.csv into `out_dir`.
/// On failure nothing is left behind: a directory created here is removed,
/// files written into a pre-existing directory are deleted.
inline RunResult run_experiment(const json& config_doc, const std::filesystem::path& out_dir, unsigned threads = 1) {
  namespace fs = std::filesystem;
  RunResult res;
  const bool existed = fs::exists(out_dir);
  std::vector<fs::path> written;
  auto cleanup = [&] {
    std::error_code ec;
    if (!existed) fs::remove_all(out_dir, ec);
    else
      for (const auto& p : written) fs::remove(p, ec);
  };
  try {
    const ExperimentConfig cfg = parse_config(config_doc);
    ExperimentOutput out = execute(cfg, threads);
    res.manifest = out.manifest;
    fs::create_directories(out_dir);
    auto write = [&](const std::string& name, const std::string& content) {
      const fs::path p = out_dir / name;
      written.push_back(p);
      std::ofstream f(p, std::ios::binary);
      f << content;
      if (!f) throw std::runtime_error("cannot write " + p.string());
    };
    if (!out.failed_checks.empty()) {
      std::string names;
      for (const auto& n : out.failed_checks) names += (names.empty() ? "" : "; ") + n;
      throw InvariantViolation(out.failed_checks.front(), std::to_string(out.failed_checks.size()) +
                                                              " asserted check(s) failed: " + names);
    }
    write("series.csv", out.series_csv);
    for (const auto& [name, content] : out.extra_files) write(name, content);
    write("manifest.json", out.manifest.dump(2) + "\n");
    res.message = "wrote " + (out_dir / "manifest.json").string();
  } catch (const ConfigError& e) {
    cleanup();
    res.exit_code = kExitConfig;
    res.message = std::string("config error: ") + e.what();
  } catch (const InvariantViolation& e) {
    cleanup();
    res.exit_code = kExitInvariant;
    res.message = e.what();
  } catch (const std::exception& e) {
    cleanup();
    res.exit_code = kExitInvariant;
    res.message = std::string("error: ") + e.what();
  }
  return res;
}

/// Plot-ready CSV from a manifest: (log_abscissa, log_d_hat, log_<reference>...)
/// sorted by abscissa for rate series; the stored table for bounds tables.
/// Rows with d_hat = 0 keep their abscissa, leave the log columns empty and
/// carry a warning.
inline std::string emit_plot_data(const json& manifest) {
  const std::string kind = manifest.value("kind", std::string());
  if (kind == "bounds-table") {
    if (!manifest.contains("table_csv")) throw std::invalid_argument("emit_plot_data: manifest has no table");
    return manifest["table_csv"].get<std::string>();
  }
  if (!manifest.contains("points") || !manifest["points"].is_array() || manifest["points"].empty())
    throw std::invalid_argument("emit_plot_data: manifest has no series");

  struct Row {
    double abscissa;
    std::optional<double> d_hat;
    std::vector<std::optional<double>> refs;
  };
  std::vector<std::string> ref_names;
  if (kind == "rates") {
    const json ref = manifest["config"].value("reference", json::array());
    if (ref.is_string()) ref_names.push_back(ref.get<std::string>());
    else
      for (const auto& r : ref) ref_names.push_back(r.get<std::string>());
  } else if (kind == "lipschitz") {
    ref_names.push_back("eps_n_abs_log_eps_n");
  } else {
    throw std::invalid_argument("emit_plot_data: a " + kind + " manifest has no plottable series");
  }

  std::vector<Row> rows;
  for (const auto& p : manifest["points"]) {
    if (!p.contains("d_hat")) continue;
    Row r;
    r.abscissa = kind == "rates" ? p.at("abscissa").get<double>() : p.at("n").get<double>();
    r.d_hat = p["d_hat"].get<double>();
    if (kind == "rates") {
      for (const auto& name : ref_names) {
        const auto& v = p["references"][name];
        r.refs.push_back(v.is_number() ? std::optional<double>(v.get<double>()) : std::nullopt);
      }
    } else {
      r.refs.push_back(p["reference"].is_number() ? std::optional<double>(p["reference"].get<double>()) : std::nullopt);
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw std::invalid_argument("emit_plot_data: manifest has no series");
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.abscissa < b.abscissa; });

  const bool any_zero = std::any_of(rows.begin(), rows.end(), [](const Row& r) { return *r.d_hat <= 0.0; });
  std::ostringstream os;
  os << "log_abscissa,log_d_hat";
  for (const auto& n : ref_names) os << ",log_" << n;
  if (any_zero) os << ",warning";
  os << "\n";
  auto logf = [](const std::optional<double>& v) {
    return v && *v > 0.0 ? fmt(std::log(*v)) : std::string();
  };
  for (const auto& r : rows) {
    const bool zero = *r.d_hat <= 0.0;
    os << fmt(std::log(r.abscissa)) << "," << logf(r.d_hat);
    for (const auto& v : r.refs) os << "," << (zero ? std::string() : logf(v));
    if (any_zero) os << "," << (zero ? "d_hat = 0 excluded from log scale" : "");
    os << "\n";
  }
  return os.str();
}

}  // namespace mclt

#endif  // MCLT_EXPERIMENT_HPP
