#include "bathlab/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <limits>

#include "bathlab/covariance.hpp"
#include "bathlab/density.hpp"
#include "bathlab/error.hpp"
#include "json.hpp"

namespace bathlab {

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config reading

std::string join_errors(const std::vector<FieldError>& errors) {
  std::string s = "invalid config:";
  for (const auto& e : errors) s += fmt::format(" {}: {};", e.field, e.message);
  if (!errors.empty()) s.pop_back();
  return s;
}

class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  void fail(const std::string& field, const std::string& message) {
    errors_.push_back({field, message});
  }

  // Finite number, or nullopt when absent (or invalid, with an error recorded).
  std::optional<double> number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_number()) {
      fail(key, "must be a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      fail(key, "must be finite");
      return std::nullopt;
    }
    return x;
  }

  double required(const std::string& key) {
    if (!j_.contains(key) || j_.at(key).is_null()) {
      used_.insert(key);
      fail(key, "missing");
      return 0.0;
    }
    return number(key).value_or(0.0);
  }

  std::optional<std::uint64_t> integer(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      fail(key, "must be >= 0");
      return std::nullopt;
    }
    fail(key, "must be a non-negative integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_string()) {
      fail(key, "must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  const json* raw(const std::string& key) {
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  void reject_unknown() {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(it.key(), "unknown key");
    }
  }

  std::vector<FieldError>& errors() { return errors_; }

 private:
  const json& j_;
  std::set<std::string> used_;
  std::vector<FieldError> errors_;
};

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                       static_cast<double>(count - 1);
  }
  return out;
}

// Array of numbers, or {"start", "stop", "count"}.
std::vector<double> read_times(Reader& r, const json& v) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& x : v) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) {
        r.fail("times", "entries must be finite numbers");
        return {};
      }
      out.push_back(x.get<double>());
    }
  } else if (v.is_object()) {
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "start" && it.key() != "stop" && it.key() != "count") {
        r.fail("times." + it.key(), "unknown key");
      }
    }
    const bool ok = v.contains("start") && v.at("start").is_number() && v.contains("stop") &&
                    v.at("stop").is_number() && v.contains("count") &&
                    v.at("count").is_number_unsigned();
    if (!ok) {
      r.fail("times", "grid needs numeric start, stop and an integer count");
      return {};
    }
    const auto count = v.at("count").get<std::uint64_t>();
    const double lo = v.at("start").get<double>();
    const double hi = v.at("stop").get<double>();
    if (count < 1 || !(hi >= lo)) {
      r.fail("times", "grid needs count >= 1 and stop >= start");
      return {};
    }
    out = linspace(lo, hi, count);
  } else {
    r.fail("times", "must be an array or a {start, stop, count} grid");
    return {};
  }
  if (out.empty()) r.fail("times", "must not be empty");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) {
      r.fail("times", "must be >= 0");
      break;
    }
    if (i > 0 && !(out[i] > out[i - 1])) {
      r.fail("times", "must be strictly increasing");
      break;
    }
  }
  return out;
}

std::vector<PhasePoint> read_points(Reader& r, const json& v) {
  std::vector<PhasePoint> out;
  if (!v.is_array() || v.empty()) {
    r.fail("points", "must be a non-empty array of [q, p] pairs");
    return out;
  }
  for (const auto& x : v) {
    if (!x.is_array() || x.size() != 2 || !x[0].is_number() || !x[1].is_number()) {
      r.fail("points", "entries must be [q, p] number pairs");
      return {};
    }
    out.push_back({x[0].get<double>(), x[1].get<double>()});
  }
  return out;
}

bool uses_times(ExperimentKind k) {
  return k == ExperimentKind::Kernel || k == ExperimentKind::Covariance ||
         k == ExperimentKind::Density || k == ExperimentKind::DecayFit ||
         k == ExperimentKind::Ensemble;
}

bool uses_bath(ExperimentKind k) {
  return k == ExperimentKind::Ensemble || k == ExperimentKind::RegimeScan ||
         k == ExperimentKind::Runaway;
}

bool uses_quadrature(ExperimentKind k) {
  return k == ExperimentKind::Covariance || k == ExperimentKind::Density ||
         k == ExperimentKind::DecayFit;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string num(double x) { return fmt::format("{:.17g}", x); }

class Csv {
 public:
  explicit Csv(std::initializer_list<std::string_view> columns) : width_(columns.size()) {
    std::size_t i = 0;
    for (auto c : columns) {
      if (i++) text_ += ',';
      text_ += c;
    }
    text_ += '\n';
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& text() const noexcept { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

struct Report {
  json derived = json::object();
  json checks = json::array();
  json warnings = json::array();
  bool passed = true;

  // value <= tolerance passes.
  void check(const std::string& name, double value, double tolerance) {
    const bool ok = value <= tolerance;
    checks.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"passed", ok}});
    passed = passed && ok;
  }

  void check_flag(const std::string& name, bool ok) {
    checks.push_back({{"name", name}, {"passed", ok}});
    passed = passed && ok;
  }

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

json roots_json(const CubicRoots& cr) {
  json out = json::array();
  for (const auto& r : cr.roots) out.push_back({{"re", r.real()}, {"im", r.imag()}});
  return out;
}

bool has_positive_root(Regime r) {
  return r == Regime::LargeCoupling || r == Regime::LargeCouplingOscillatory;
}

// ---------------------------------------------------------------------------
// Experiments

std::string run_roots(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  const auto cr = characteristic_roots(sd, mp);
  const auto pb = positivity_bound(sd, mp);

  Csv csv{"index", "re", "im"};
  for (std::size_t i = 0; i < 3; ++i) {
    csv.row({std::to_string(i + 1), num(cr.roots[i].real()), num(cr.roots[i].imag())});
  }

  auto& d = rep.derived;
  d["kappa"] = sd.decay_rate();
  d["roots"] = roots_json(cr);
  d["regime"] = std::string(to_string(cr.regime));
  d["critical_eps_sq"] = pb.critical_eps_sq;
  d["positive_definite"] = pb.positive_definite;
  if (cr.regime == Regime::LargeCoupling) {
    const auto rr = runaway_roots(cr);
    d["lambda3"] = rr.l3;
    d["separation_hypothesis"] = rr.l3 < std::min({rr.l1, rr.l2, sd.decay_rate()});
  }

  // Residual and Vieta relations, relative to the size of the terms involved.
  const auto& c = cr.coefficients;
  const double m = cr.max_abs();
  const double poly_scale = m * m * m + std::abs(c[2]) * m * m + std::abs(c[1]) * m + std::abs(c[0]);
  rep.check("cubic_residual", cr.max_residual() / std::max(poly_scale, 1e-300), 1e-12);

  const auto& r = cr.roots;
  const cdouble e1 = r[0] + r[1] + r[2];
  const cdouble e2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
  const cdouble e3 = r[0] * r[1] * r[2];
  const double vieta = std::max({std::abs(e1 + c[2]) / std::max(3.0 * m + std::abs(c[2]), 1e-300),
                                 std::abs(e2 - c[1]) / std::max(3.0 * m * m + std::abs(c[1]), 1e-300),
                                 std::abs(e3 + c[0]) / std::max(m * m * m + std::abs(c[0]), 1e-300)});
  rep.check("vieta", vieta, 1e-12);
  // A positive root exists exactly when the coupling exceeds the positivity bound.
  rep.check_flag("regime_matches_bound",
                 cr.regime == Regime::Boundary || has_positive_root(cr.regime) != pb.positive_definite);
  return csv.text();
}

std::string run_kernel(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto quad = QuadratureSpec::for_tolerance(sd, cfg.tolerance);

  Csv csv{"t", "Q", "Q_numeric", "Q_prime", "error_estimate"};
  double worst = 0.0;
  double worst_estimate = 0.0;
  for (double t : cfg.times) {
    const double q = q_kernel(sd, t);
    const auto est = q_kernel_numeric(sd, t, quad);
    csv.row({num(t), num(q), num(est.value), num(q_kernel_derivative(sd, t)),
             num(est.error_estimate)});
    worst = std::max(worst, std::abs(est.value - q));
    worst_estimate = std::max(worst_estimate, est.error_estimate);
  }
  rep.derived["kappa"] = sd.decay_rate();
  rep.derived["quadrature_nu_max"] = quad.nu_max();
  rep.derived["max_error_estimate"] = worst_estimate;
  rep.check("numeric_vs_closed", worst, cfg.tolerance);
  return csv.text();
}

std::string run_covariance(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  const auto cr = characteristic_roots(sd, mp);
  const auto rs = build_response(cr);
  const auto quad = covariance_quadrature(sd, cfg.quad_nu_max, cfg.quad_tolerance);
  const bool closed = cr.regime == Regime::LargeCoupling;

  Csv csv{"t", "A", "B", "C", "detACB2"};
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_dev = 0.0;
  bool negative_variance = false;
  for (double t : cfg.times) {
    const auto cov = abc_numeric(sd, mp, rs, t, quad);
    csv.row({num(t), num(cov.a_coef), num(cov.b_coef), num(cov.c_coef), num(cov.det())});
    if (cov.a_coef < 0.0 || cov.c_coef < 0.0) negative_variance = true;
    if (t > 0.0 && cov.a_coef > 0.0 && cov.c_coef > 0.0) {
      min_ratio = std::min(min_ratio, cov.det() / (cov.a_coef * cov.c_coef));
      if (closed) {
        const auto cf = abc_closed_form(sd, mp, cr, t);
        const double sac = std::sqrt(cov.a_coef * cov.c_coef);
        max_dev = std::max({max_dev, std::abs(cf.a_coef - cov.a_coef) / cov.a_coef,
                            std::abs(cf.c_coef - cov.c_coef) / cov.c_coef,
                            std::abs(cf.b_coef - cov.b_coef) / sac});
      }
    }
  }

  auto& d = rep.derived;
  d["regime"] = std::string(to_string(cr.regime));
  d["roots"] = roots_json(cr);
  if (closed) {
    d["lambda3"] = runaway_roots(cr).l3;
    d["alpha_limit"] = alpha_limit(cr, sd);
    d["alpha_asymptote"] = alpha_asymptote(cr, sd);
    d["pi_limit"] = pi_limit(cr, sd, mp);
    d["pi_asymptote"] = pi_asymptote(cr, sd, mp);
  }
  rep.check_flag("variances_nonnegative", !negative_variance);
  if (std::isfinite(min_ratio)) {
    d["min_det_over_ac"] = min_ratio;
    rep.check_flag("positive_definite", min_ratio > 0.0);
  }
  if (closed) rep.check("closed_form_agreement", max_dev, 1e-4);
  return csv.text();
}

std::string run_density(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  const auto cr = characteristic_roots(sd, mp);
  const auto rs = build_response(cr);
  const auto quad = covariance_quadrature(sd, cfg.quad_nu_max, cfg.quad_tolerance);
  const auto points = cfg.points.empty() ? std::vector<PhasePoint>{{0.0, 0.0}} : cfg.points;

  Csv csv{"t", "q", "p", "density", "marginal_q", "marginal_p", "q_star", "p_star"};
  double worst_mass = 0.0;
  std::vector<std::vector<double>> series(points.size());
  GaussianState last;
  for (double t : cfg.times) {
    const auto gs = make_state(rs, mp, abc_numeric(sd, mp, rs, t, quad));
    worst_mass = std::max(worst_mass, std::abs(box_mass(gs) - 1.0));
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& pt = points[k];
      const double rho = density_at(gs, pt.q, pt.p);
      series[k].push_back(rho);
      csv.row({num(t), num(pt.q), num(pt.p), num(rho), num(marginal_q(gs, pt.q)),
               num(marginal_p(gs, pt.p)), num(gs.q_star), num(gs.p_star)});
    }
    last = gs;
  }

  auto& d = rep.derived;
  d["regime"] = std::string(to_string(cr.regime));
  const auto mo = moments(last);
  d["final_moments"] = {{"t", last.t},         {"mean_q", mo.mean_q}, {"mean_p", mo.mean_p},
                        {"var_q", mo.var_q},   {"var_p", mo.var_p},   {"cov_qp", mo.cov_qp}};
  if (cr.regime == Regime::SmallCoupling) {
    d["gibbs_distance"] = gibbs_distance(last, mp, gibbs_grid(mp));
  }
  if (cr.regime == Regime::LargeCoupling && cfg.times.size() >= 5) {
    d["lambda3"] = runaway_roots(cr).l3;
    json fits = json::array();
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto fit = decay_rate_fit(cfg.times, series[k]);
      fits.push_back({{"q", points[k].q}, {"p", points[k].p}, {"rate", fit.rate},
                      {"r_squared", fit.r_squared}});
    }
    d["fits"] = std::move(fits);
  }
  rep.check("normalization", worst_mass, 1e-6);
  return csv.text();
}

std::string run_decay_fit(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  const auto cr = characteristic_roots(sd, mp);
  const auto rr = runaway_roots(cr);  // RegimeMismatch outside the runaway regime
  const auto rs = build_response(cr);
  const auto quad = covariance_quadrature(sd, cfg.quad_nu_max, cfg.quad_tolerance);
  const auto points = cfg.points.empty() ? std::vector<PhasePoint>{{0.0, 0.0}} : cfg.points;

  Csv csv{"t", "q", "p", "density"};
  std::vector<std::vector<double>> series(points.size());
  for (double t : cfg.times) {
    const auto gs = make_state(rs, mp, abc_numeric(sd, mp, rs, t, quad));
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double rho = density_at(gs, points[k].q, points[k].p);
      series[k].push_back(rho);
      csv.row({num(t), num(points[k].q), num(points[k].p), num(rho)});
    }
  }

  auto& d = rep.derived;
  d["lambda3"] = rr.l3;
  d["separation_hypothesis"] = rr.l3 < std::min({rr.l1, rr.l2, sd.decay_rate()});
  json fits = json::array();
  double worst = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto fit = decay_rate_fit(cfg.times, series[k]);
    if (k == 0) d["fitted_rate"] = fit.rate;
    fits.push_back({{"q", points[k].q}, {"p", points[k].p}, {"rate", fit.rate},
                    {"intercept", fit.intercept}, {"r_squared", fit.r_squared}});
    worst = std::max(worst, std::abs(fit.rate + rr.l3) / rr.l3);
  }
  d["fits"] = std::move(fits);
  rep.check("decay_rate", worst, 0.02);
  return csv.text();
}

std::string run_ensemble_kind(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  EnsembleConfig ec;
  ec.bath = cfg.bath();
  ec.mp = mp;
  ec.sample_count = cfg.sample_count;
  ec.times = cfg.times;
  ec.seed = cfg.seed;
  ec.method = cfg.method;
  ec.step = cfg.step;
  const auto res = run_ensemble(ec);

  Csv csv{"t", "mean_q", "se_q", "mean_p", "se_p", "var_q", "var_p", "cov_qp"};
  json extra = json::array();
  bool negative_variance = false;
  for (const auto& m : res.moments) {
    csv.row({num(m.t), num(m.mean_q), num(m.se_mean_q), num(m.mean_p), num(m.se_mean_p),
             num(m.var_q), num(m.var_p), num(m.cov_qp)});
    extra.push_back({{"t", m.t},
                     {"se_var_q", m.se_var_q},
                     {"se_var_p", m.se_var_p},
                     {"se_cov_qp", m.se_cov_qp},
                     {"skew_q", m.skew_q},
                     {"skew_p", m.skew_p},
                     {"exkurt_q", m.exkurt_q},
                     {"exkurt_p", m.exkurt_p}});
    if (m.var_q < 0.0 || m.var_p < 0.0) negative_variance = true;
  }

  auto& d = rep.derived;
  const double recurrence = ec.bath.recurrence_time();
  d["bath_size"] = ec.bath.size();
  d["bath_nu_max"] = cfg.bath_nu_max();
  d["recurrence_time"] = recurrence;
  d["higher_moments"] = std::move(extra);
  if (cfg.method == Method::Symplectic) d["max_energy_drift"] = res.max_energy_drift;
  if (cfg.times.back() > recurrence) {
    rep.warn(fmt::format("t = {} exceeds the bath recurrence time {}; finite-bath revivals "
                         "are expected",
                         cfg.times.back(), recurrence));
  }

  // Continuum law at each time and the deviation of the sample moments from it
  // in units of their standard errors.
  const auto cr = characteristic_roots(sd, mp);
  const auto rs = build_response(cr);
  const auto quad = covariance_quadrature(sd);
  json law = json::array();
  double worst_z = 0.0;
  for (const auto& m : res.moments) {
    const auto cov = abc_numeric(sd, mp, rs, m.t, quad);
    const auto mean = mean_trajectory(rs, mp, m.t);
    law.push_back({{"t", m.t}, {"q_star", mean.q}, {"p_star", mean.p}, {"A", cov.a_coef},
                   {"B", cov.b_coef}, {"C", cov.c_coef}});
    const std::pair<double, double> pairs[] = {
        {m.mean_q - mean.q, m.se_mean_q}, {m.mean_p - mean.p, m.se_mean_p},
        {m.var_q - cov.a_coef, m.se_var_q}, {m.var_p - cov.c_coef, m.se_var_p},
        {m.cov_qp - cov.b_coef, m.se_cov_qp}};
    for (const auto& [diff, se] : pairs) {
      if (se > 0.0) worst_z = std::max(worst_z, std::abs(diff) / se);
    }
  }
  d["continuum_law"] = std::move(law);
  d["max_z"] = worst_z;

  rep.check_flag("variances_nonnegative", !negative_variance);
  if (cfg.method == Method::Symplectic) rep.check("energy_drift", res.max_energy_drift, 1e-6);
  if (cfg.sample_count >= 1000) {
    rep.check("continuum_law_3se", worst_z, 3.0);
  } else {
    rep.warn("sample_count < 1000: continuum-law check skipped");
  }
  return csv.text();
}

std::string run_regime_scan(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto base = cfg.model_params();
  const auto bath = cfg.bath();
  const double bound = positivity_bound(sd, base).critical_eps_sq;
  const auto grid = linspace(cfg.eps_sq_min, cfg.eps_sq_max, cfg.scan_points);

  Csv csv{"eps_sq", "coupling_rhs", "root1", "root2", "root3", "regime", "positive_definite",
          "lambda3", "root1_im", "root2_im", "root3_im", "sylvester_positive_definite"};
  std::size_t flips = 0;
  std::optional<double> flip_at;  // midpoint of the first bracketing pair
  std::size_t disagreements = 0;
  std::optional<bool> previous;
  double previous_e2 = 0.0;
  for (double e2 : grid) {
    auto mp = base;
    mp.epsilon = std::sqrt(e2);
    const auto cr = characteristic_roots(sd, mp);
    // The root classifier's zero tolerance decides points on the bound itself.
    const bool pd = cr.regime == Regime::Boundary || positivity_bound(sd, mp).positive_definite;
    const bool positive = has_positive_root(cr.regime);
    const bool sylvester = sylvester_check(bath, mp).positive_definite;
    if (previous && *previous != positive) {
      ++flips;
      if (!flip_at) flip_at = 0.5 * (previous_e2 + e2);
    }
    previous = positive;
    previous_e2 = e2;
    if (sylvester != pd) ++disagreements;

    double l3 = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : cr.roots) {
      if (r.imag() == 0.0 && r.real() > 0.0 && positive) l3 = r.real();
    }
    csv.row({num(e2), num(coupling_rhs(sd, mp)), num(cr.roots[0].real()),
             num(cr.roots[1].real()), num(cr.roots[2].real()), std::string(to_string(cr.regime)),
             pd ? "true" : "false", num(l3), num(cr.roots[0].imag()), num(cr.roots[1].imag()),
             num(cr.roots[2].imag()), sylvester ? "true" : "false"});
  }

  auto& d = rep.derived;
  const double spacing = grid.size() > 1 ? grid[1] - grid[0] : 0.0;
  d["critical_eps_sq"] = bound;
  d["grid_spacing"] = spacing;
  d["flips"] = flips;
  if (flip_at) d["flip_eps_sq"] = *flip_at;
  d["bath_size"] = bath.size();
  d["bath_nu_max"] = cfg.bath_nu_max();
  d["sylvester_disagreements"] = disagreements;

  const bool straddles = cfg.eps_sq_min < bound && bound < cfg.eps_sq_max;
  rep.check("single_flip", std::abs(static_cast<double>(flips) - (straddles ? 1.0 : 0.0)), 0.0);
  if (straddles && flip_at) {
    rep.check("flip_at_bound", std::abs(*flip_at - bound) / spacing, 1.0);
  }
  rep.check("sylvester_agreement", static_cast<double>(disagreements), 0.0);
  return csv.text();
}

std::string run_runaway(const ExperimentConfig& cfg, Report& rep) {
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  const auto cr = characteristic_roots(sd, mp);
  const auto rr = runaway_roots(cr);  // RegimeMismatch outside the runaway regime
  const auto rs = build_response(cr);
  const auto bath = cfg.bath();
  const auto fit = deterministic_runaway(bath, mp, cfg.t_max, cfg.step, cfg.fit_samples);

  Csv csv{"t", "q", "q_continuum"};
  for (std::size_t i = 0; i < fit.t.size(); ++i) {
    csv.row({num(fit.t[i]), num(fit.q[i]), num(mean_trajectory(rs, mp, fit.t[i]).q)});
  }

  auto& d = rep.derived;
  const double recurrence = bath.recurrence_time();
  const double ray = mp.q0 * rr.l3 + mp.p0;
  d["lambda3"] = rr.l3;
  d["rate"] = fit.rate;
  d["intercept"] = fit.intercept;
  d["r_squared"] = fit.r_squared;
  d["growing_amplitude"] = ray;
  d["bath_size"] = bath.size();
  d["bath_nu_max"] = cfg.bath_nu_max();
  d["recurrence_time"] = recurrence;
  if (cfg.t_max > recurrence) {
    rep.warn(fmt::format("t_max = {} exceeds the bath recurrence time {}", cfg.t_max, recurrence));
  }

  const double scale = std::abs(mp.q0) * rr.l3 + std::abs(mp.p0);
  if (std::abs(ray) > 1e-8 * scale) {
    rep.check("growth_rate", std::abs(fit.rate / rr.l3 - 1.0), 0.02);
    const double q_end = fit.q.back();
    const double q_cont = mean_trajectory(rs, mp, fit.t.back()).q;
    rep.check_flag("sign_matches_continuum", std::signbit(q_end) == std::signbit(q_cont));
  } else {
    rep.warn("initial condition lies on the non-growing ray q0*lambda3 + p0 = 0; the growth "
             "rate is not checked");
  }
  return csv.text();
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::Roots: return "roots";
    case ExperimentKind::Kernel: return "kernel";
    case ExperimentKind::Covariance: return "covariance";
    case ExperimentKind::Density: return "density";
    case ExperimentKind::DecayFit: return "decay-fit";
    case ExperimentKind::Ensemble: return "ensemble";
    case ExperimentKind::RegimeScan: return "regime-scan";
    case ExperimentKind::Runaway: return "runaway";
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_kind(std::string_view s) noexcept {
  for (auto k : {ExperimentKind::Roots, ExperimentKind::Kernel, ExperimentKind::Covariance,
                 ExperimentKind::Density, ExperimentKind::DecayFit, ExperimentKind::Ensemble,
                 ExperimentKind::RegimeScan, ExperimentKind::Runaway}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {
  if (errors_.empty()) errors_.push_back({"", "invalid config"});
}

double ExperimentConfig::bath_nu_max() const noexcept {
  return nu_max > 0.0 ? nu_max : 50.0 * std::sqrt(a / b);
}

BathDiscretization ExperimentConfig::bath() const {
  return discretize_bath(spectral_density(), n, bath_nu_max());
}

ExperimentConfig parse_config(std::string_view text, std::optional<ExperimentKind> kind_hint) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  // A run summary carries its canonical config.
  if (!doc.contains("kind") && doc.contains("config") && doc.at("config").is_object()) {
    json inner = doc.at("config");
    doc = std::move(inner);
  }

  Reader r(doc);
  ExperimentConfig cfg;

  const auto kind_text = r.string("kind");
  std::optional<ExperimentKind> kind;
  if (kind_text) {
    kind = parse_kind(*kind_text);
    if (!kind) r.fail("kind", fmt::format("unknown kind '{}'", *kind_text));
  }
  if (kind && kind_hint && *kind != *kind_hint) {
    r.fail("kind", fmt::format("config kind '{}' does not match '{}'", to_string(*kind),
                               to_string(*kind_hint)));
  }
  if (!kind) kind = kind_hint;
  if (!kind) {
    if (!kind_text) r.fail("kind", "missing");
    throw ValidationError(std::move(r.errors()));
  }
  cfg.kind = *kind;
  const auto k = cfg.kind;

  cfg.a = r.required("a");
  if (doc.contains("a") && doc.at("a").is_number() && !(cfg.a > 0.0)) r.fail("a", "must be > 0");
  cfg.b = r.required("b");
  if (doc.contains("b") && doc.at("b").is_number() && !(cfg.b > 0.0)) r.fail("b", "must be > 0");

  const bool has_omega = doc.contains("omega");
  const bool has_omega_sq = doc.contains("omega_sq");
  if (has_omega && has_omega_sq) r.fail("omega_sq", "give omega or omega_sq, not both");
  if (has_omega_sq) {
    if (auto v = r.number("omega_sq")) {
      if (*v > 0.0) {
        cfg.omega_sq = *v;
        cfg.omega = std::sqrt(*v);
      } else {
        r.fail("omega_sq", "must be > 0");
      }
    }
    r.has("omega");
  } else {
    cfg.omega = r.required("omega");
    if (has_omega && doc.at("omega").is_number() && !(cfg.omega > 0.0)) {
      r.fail("omega", "must be > 0");
    }
  }

  const bool has_eps = doc.contains("epsilon");
  const bool has_g = doc.contains("coupling_rhs");
  if (has_eps && has_g) r.fail("coupling_rhs", "give epsilon or coupling_rhs, not both");
  if (has_g) {
    if (auto v = r.number("coupling_rhs")) {
      if (*v >= 0.0) cfg.coupling_rhs = *v;
      else r.fail("coupling_rhs", "must be >= 0");
    }
    r.has("epsilon");
  } else {
    cfg.epsilon = r.required("epsilon");
    if (has_eps && doc.at("epsilon").is_number() && cfg.epsilon < 0.0) {
      r.fail("epsilon", "must be >= 0");
    }
  }

  if (auto v = r.number("kT")) {
    if (*v > 0.0) cfg.kT = *v;
    else r.fail("kT", "must be > 0");
  }
  cfg.q0 = r.number("q0").value_or(0.0);
  cfg.p0 = r.number("p0").value_or(0.0);
  if (auto v = r.string("output")) cfg.output = *v;

  if (uses_times(k)) {
    if (const json* t = r.raw("times")) {
      cfg.times = read_times(r, *t);
      if ((k == ExperimentKind::Density || k == ExperimentKind::DecayFit) && !cfg.times.empty() &&
          !(cfg.times.front() > 0.0)) {
        r.fail("times", "must be > 0 for densities");
      }
      if (k == ExperimentKind::DecayFit && cfg.times.size() < 5) {
        r.fail("times", "a decay fit needs at least 5 times");
      }
    } else if (k != ExperimentKind::DecayFit) {
      r.fail("times", "missing");
    }
  }

  if (k == ExperimentKind::Kernel) {
    if (auto v = r.number("tolerance")) {
      if (*v > 0.0) cfg.tolerance = *v;
      else r.fail("tolerance", "must be > 0");
    }
  }

  if (uses_quadrature(k)) {
    if (auto v = r.number("quad_nu_max")) {
      if (*v > 0.0) cfg.quad_nu_max = *v;
      else r.fail("quad_nu_max", "must be > 0");
    }
    if (auto v = r.number("quad_tolerance")) {
      if (*v > 0.0 && *v < 1.0) cfg.quad_tolerance = *v;
      else r.fail("quad_tolerance", "must be in (0, 1)");
    }
  }

  if (k == ExperimentKind::Density || k == ExperimentKind::DecayFit) {
    if (const json* p = r.raw("points")) cfg.points = read_points(r, *p);
    else cfg.points = {{0.0, 0.0}};
  }

  if (uses_bath(k)) {
    if (auto v = r.integer("n")) {
      if (*v >= 1) cfg.n = *v;
      else r.fail("n", "must be >= 1");
    }
    if (auto v = r.number("nu_max")) {
      if (*v > 0.0) cfg.nu_max = *v;
      else r.fail("nu_max", "must be > 0");
    }
  }

  if (k == ExperimentKind::Ensemble) {
    if (auto v = r.integer("sample_count")) {
      if (*v >= 2) cfg.sample_count = *v;
      else r.fail("sample_count", "must be >= 2");
    }
    if (auto v = r.integer("seed")) cfg.seed = *v;
    if (auto v = r.string("method")) {
      if (*v == to_string(Method::SolutionFormula)) cfg.method = Method::SolutionFormula;
      else if (*v == to_string(Method::Symplectic)) cfg.method = Method::Symplectic;
      else r.fail("method", fmt::format("unknown method '{}'", *v));
    }
  }

  if (k == ExperimentKind::Ensemble || k == ExperimentKind::Runaway) {
    if (auto v = r.number("step")) {
      if (*v >= 0.0) cfg.step = *v;
      else r.fail("step", "must be >= 0 (0 selects the largest stable step)");
    }
  }

  if (k == ExperimentKind::RegimeScan) {
    if (auto v = r.number("eps_sq_min")) {
      if (*v >= 0.0) cfg.eps_sq_min = *v;
      else r.fail("eps_sq_min", "must be >= 0");
    }
    if (auto v = r.number("eps_sq_max")) {
      if (*v > 0.0) cfg.eps_sq_max = *v;
      else r.fail("eps_sq_max", "must be > 0");
    }
    if (auto v = r.integer("scan_points")) {
      if (*v >= 2) cfg.scan_points = *v;
      else r.fail("scan_points", "must be >= 2");
    }
  }

  if (k == ExperimentKind::Runaway) {
    if (auto v = r.number("t_max")) {
      if (*v > 0.0) cfg.t_max = *v;
      else r.fail("t_max", "must be > 0");
    }
    if (auto v = r.integer("fit_samples")) {
      if (*v >= 10) cfg.fit_samples = *v;
      else r.fail("fit_samples", "must be >= 10");
    }
  }

  r.reject_unknown();
  if (!r.errors().empty()) throw ValidationError(std::move(r.errors()));

  // Resolve everything that has a derived default, so the echo is complete.
  const auto sd = cfg.spectral_density();
  if (cfg.coupling_rhs) {
    cfg.epsilon = ModelParams::from_coupling_rhs(sd, cfg.omega, *cfg.coupling_rhs, cfg.kT).epsilon;
  }
  if (uses_bath(k) && cfg.nu_max == 0.0) cfg.nu_max = cfg.bath_nu_max();
  if (k == ExperimentKind::RegimeScan) {
    if (cfg.eps_sq_max == 0.0) {
      cfg.eps_sq_max = 2.0 * positivity_bound(sd, cfg.model_params()).critical_eps_sq;
    }
    if (!(cfg.eps_sq_max > cfg.eps_sq_min)) {
      throw ValidationError(std::vector<FieldError>{{"eps_sq_max", "must exceed eps_sq_min"}});
    }
  }
  if (k == ExperimentKind::DecayFit && cfg.times.empty()) {
    const auto cr = characteristic_roots(sd, cfg.model_params());
    if (cr.regime == Regime::LargeCoupling) {
      const double l3 = runaway_roots(cr).l3;
      cfg.times = linspace(10.0 / l3, 20.0 / l3, 11);
    } else {
      throw ValidationError(std::vector<FieldError>{
          {"times", fmt::format("no default window: regime is {}", to_string(cr.regime))}});
    }
  }
  return cfg;
}

namespace {

json config_json(const ExperimentConfig& cfg) {
  const auto k = cfg.kind;
  json j;
  j["kind"] = std::string(to_string(k));
  j["a"] = cfg.a;
  j["b"] = cfg.b;
  if (cfg.omega_sq) j["omega_sq"] = *cfg.omega_sq;
  else j["omega"] = cfg.omega;
  if (cfg.coupling_rhs) j["coupling_rhs"] = *cfg.coupling_rhs;
  else j["epsilon"] = cfg.epsilon;
  j["kT"] = cfg.kT;
  j["q0"] = cfg.q0;
  j["p0"] = cfg.p0;
  if (uses_times(k)) j["times"] = cfg.times;
  if (k == ExperimentKind::Kernel) j["tolerance"] = cfg.tolerance;
  if (uses_quadrature(k)) {
    j["quad_nu_max"] = cfg.quad_nu_max;
    j["quad_tolerance"] = cfg.quad_tolerance;
  }
  if (k == ExperimentKind::Density || k == ExperimentKind::DecayFit) {
    json pts = json::array();
    for (const auto& p : cfg.points) pts.push_back({p.q, p.p});
    j["points"] = std::move(pts);
  }
  if (uses_bath(k)) {
    j["n"] = cfg.n;
    j["nu_max"] = cfg.bath_nu_max();
  }
  if (k == ExperimentKind::Ensemble) {
    j["sample_count"] = cfg.sample_count;
    j["seed"] = cfg.seed;
    j["method"] = std::string(to_string(cfg.method));
  }
  if (k == ExperimentKind::Ensemble || k == ExperimentKind::Runaway) j["step"] = cfg.step;
  if (k == ExperimentKind::RegimeScan) {
    j["eps_sq_min"] = cfg.eps_sq_min;
    j["eps_sq_max"] = cfg.eps_sq_max;
    j["scan_points"] = cfg.scan_points;
  }
  if (k == ExperimentKind::Runaway) {
    j["t_max"] = cfg.t_max;
    j["fit_samples"] = cfg.fit_samples;
  }
  j["output"] = cfg.output;
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  Report rep;
  const auto sd = cfg.spectral_density();
  const auto mp = cfg.model_params();
  rep.derived["epsilon"] = mp.epsilon;
  rep.derived["eps_sq"] = mp.epsilon * mp.epsilon;
  rep.derived["coupling_rhs"] = coupling_rhs(sd, mp);

  std::string csv;
  switch (cfg.kind) {
    case ExperimentKind::Roots: csv = run_roots(cfg, rep); break;
    case ExperimentKind::Kernel: csv = run_kernel(cfg, rep); break;
    case ExperimentKind::Covariance: csv = run_covariance(cfg, rep); break;
    case ExperimentKind::Density: csv = run_density(cfg, rep); break;
    case ExperimentKind::DecayFit: csv = run_decay_fit(cfg, rep); break;
    case ExperimentKind::Ensemble: csv = run_ensemble_kind(cfg, rep); break;
    case ExperimentKind::RegimeScan: csv = run_regime_scan(cfg, rep); break;
    case ExperimentKind::Runaway: csv = run_runaway(cfg, rep); break;
  }

  json summary;
  summary["config"] = config_json(cfg);
  summary["derived"] = std::move(rep.derived);
  summary["checks"] = std::move(rep.checks);
  summary["warnings"] = std::move(rep.warnings);
  summary["passed"] = rep.passed;
  // NaN/inf are not JSON; they are reported as null.
  return {std::move(csv), summary.dump(2) + "\n", rep.passed};
}

std::vector<std::filesystem::path> write_outputs(const ExperimentOutput& out,
                                                 const ExperimentConfig& cfg,
                                                 const std::filesystem::path& dir,
                                                 OutputFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& ext, const std::string& text) {
    const auto path = dir / (std::string(to_string(cfg.kind)) + ext);
    std::ofstream f(path, std::ios::binary);
    f << text;
    f.close();
    if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
    written.push_back(path);
  };
  if (format != OutputFormat::Json) put(".csv", out.csv);
  if (format != OutputFormat::Csv) put(".json", out.summary);
  return written;
}

}  // namespace bathlab
