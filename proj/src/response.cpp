#include "bathlab/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bathlab/error.hpp"

namespace bathlab {

namespace {

constexpr double kPi = std::numbers::pi;

bool finite(double x) { return std::isfinite(x); }

cdouble eval_cubic(double c2, double c1, double c0, cdouble x) {
  return ((x + c2) * x + c1) * x + c0;
}

cdouble eval_cubic_derivative(double c2, double c1, cdouble x) {
  return (3.0 * x + 2.0 * c2) * x + c1;
}

cdouble newton_polish(double c2, double c1, double c0, cdouble x) {
  const cdouble d = eval_cubic_derivative(c2, c1, x);
  if (std::abs(d) == 0.0) return x;
  const cdouble step = eval_cubic(c2, c1, c0, x) / d;
  const cdouble polished = x - step;
  // Keep the polished value only if it does not make the residual worse.
  if (std::abs(eval_cubic(c2, c1, c0, polished)) <= std::abs(eval_cubic(c2, c1, c0, x))) {
    return polished;
  }
  return x;
}

}  // namespace

// ---------------------------------------------------------------- ModelParams

void ModelParams::validate() const {
  if (!finite(omega) || !(omega > 0.0)) throw std::invalid_argument("omega must be > 0");
  if (!finite(epsilon) || !(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (!finite(kT) || !(kT > 0.0)) throw std::invalid_argument("kT must be > 0");
  if (!finite(q0)) throw std::invalid_argument("q0 must be finite");
  if (!finite(p0)) throw std::invalid_argument("p0 must be finite");
}

ModelParams ModelParams::make(double omega, double epsilon, double kT, double q0, double p0) {
  ModelParams mp{omega, epsilon, kT, q0, p0};
  mp.validate();
  return mp;
}

ModelParams ModelParams::from_coupling_rhs(const SpectralDensity& sd, double omega,
                                           double coupling_rhs, double kT, double q0,
                                           double p0) {
  if (!finite(coupling_rhs) || !(coupling_rhs >= 0.0)) {
    throw std::invalid_argument("coupling_rhs must be >= 0");
  }
  return make(omega, std::sqrt(2.0 * sd.b() * coupling_rhs / kPi), kT, q0, p0);
}

double coupling_rhs(const SpectralDensity& sd, const ModelParams& mp) noexcept {
  return mp.epsilon * mp.epsilon * kPi / (2.0 * sd.b());
}

std::string_view to_string(Regime r) noexcept {
  switch (r) {
    case Regime::SmallCoupling: return "SmallCoupling";
    case Regime::LargeCoupling: return "LargeCoupling";
    case Regime::LargeCouplingOscillatory: return "LargeCouplingOscillatory";
    case Regime::Boundary: return "Boundary";
  }
  return "Unknown";
}

// ------------------------------------------------------------------ the cubic

bool CubicRoots::all_real() const noexcept {
  return std::all_of(roots.begin(), roots.end(), [](cdouble r) { return r.imag() == 0.0; });
}

double CubicRoots::max_abs() const noexcept {
  double m = 0.0;
  for (const auto& r : roots) m = std::max(m, std::abs(r));
  return m;
}

double CubicRoots::max_residual() const noexcept {
  double m = 0.0;
  for (const auto& r : roots) {
    m = std::max(m, std::abs(eval_cubic(coefficients[2], coefficients[1], coefficients[0], r)));
  }
  return m;
}

std::array<cdouble, 3> solve_monic_cubic(double c2, double c1, double c0) {
  const double shift = c2 / 3.0;
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
  const double disc = 0.25 * q * q + p * p * p / 27.0;

  std::array<cdouble, 3> out{};
  if (disc < 0.0) {
    // Three distinct real roots (p < 0 necessarily).
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    std::array<double, 3> x{};
    for (int k = 0; k < 3; ++k) x[k] = m * std::cos(theta - 2.0 * kPi * k / 3.0) - shift;
    std::sort(x.begin(), x.end());
    for (int k = 0; k < 3; ++k) {
      out[k] = newton_polish(c2, c1, c0, cdouble(x[k], 0.0));
      out[k] = cdouble(out[k].real(), 0.0);
    }
    return out;
  }

  double x = 0.0;
  if (p < 0.0) {
    const double m = std::sqrt(-p / 3.0);
    const double arg = std::max(1.0, -1.5 * std::abs(q) / (p * m));
    x = -2.0 * std::copysign(1.0, q) * m * std::cosh(std::acosh(arg) / 3.0);
  } else if (p > 0.0) {
    const double m = std::sqrt(p / 3.0);
    x = -2.0 * m * std::sinh(std::asinh(1.5 * q / (p * m)) / 3.0);
  } else {
    x = std::cbrt(-q);
  }
  double r = newton_polish(c2, c1, c0, cdouble(x - shift, 0.0)).real();

  // Deflate: x³ + c2x² + c1x + c0 = (x − r)(x² + e1 x + e0).
  const double e1 = c2 + r;
  const double e0 = (std::abs(r) > 1.0) ? -c0 / r : c1 + r * e1;
  const double qd = e1 * e1 - 4.0 * e0;
  if (qd < 0.0) {
    cdouble z(-0.5 * e1, 0.5 * std::sqrt(-qd));
    z = newton_polish(c2, c1, c0, z);
    if (z.imag() < 0.0) z = std::conj(z);
    out = {cdouble(r, 0.0), z, std::conj(z)};
    return out;
  }
  // Numerically a (near-)double root: report three reals.
  const double sq = std::sqrt(qd);
  const double z1 = (e1 >= 0.0) ? -0.5 * (e1 + sq) : -0.5 * (e1 - sq);
  const double z2 = (z1 != 0.0) ? e0 / z1 : -0.5 * e1;
  std::array<double, 3> xs{r, z1, z2};
  std::sort(xs.begin(), xs.end());
  for (int k = 0; k < 3; ++k) out[k] = cdouble(newton_polish(c2, c1, c0, xs[k]).real(), 0.0);
  return out;
}

CubicRoots characteristic_roots(const SpectralDensity& sd, const ModelParams& mp) {
  mp.validate();
  const double kappa = sd.decay_rate();
  const double w2 = mp.omega * mp.omega;
  const double g = coupling_rhs(sd, mp);

  CubicRoots cr;
  cr.coefficients = {kappa * w2 - g, w2, kappa};
  cr.roots = solve_monic_cubic(kappa, w2, kappa * w2 - g);

  const double scale = std::max({1.0, kappa, mp.omega, std::cbrt(std::abs(kappa * w2 - g))});
  const double zero_tol = 1e-10 * scale;
  bool has_zero = false;
  int positive = 0;
  for (const auto& r : cr.roots) {
    if (std::abs(r) <= zero_tol) has_zero = true;
    else if (r.real() > 0.0) ++positive;
  }
  if (has_zero) {
    cr.regime = Regime::Boundary;
  } else if (positive > 0) {
    cr.regime = cr.all_real() ? Regime::LargeCoupling : Regime::LargeCouplingOscillatory;
  } else {
    cr.regime = Regime::SmallCoupling;
  }
  return cr;
}

PositivityBound positivity_bound(const SpectralDensity& sd, const ModelParams& mp) {
  mp.validate();
  const double crit = 2.0 * std::sqrt(sd.a() * sd.b()) * mp.omega * mp.omega / kPi;
  return {crit, mp.epsilon * mp.epsilon <= crit};
}

// -------------------------------------------------------------- finite baths

double BathDiscretization::partial_weight(double nu) const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < omegas.size() && omegas[k] < nu; ++k) {
    s += alphas[k] * alphas[k] / (omegas[k] * omegas[k]);
  }
  return s;
}

double BathDiscretization::total_weight() const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    s += alphas[k] * alphas[k] / (omegas[k] * omegas[k]);
  }
  return s;
}

double BathDiscretization::recurrence_time() const noexcept {
  if (omegas.empty()) return std::numeric_limits<double>::infinity();
  const double spacing = omegas.size() > 1 ? omegas[1] - omegas[0] : 2.0 * omegas[0];
  return 2.0 * kPi / spacing;
}

void BathDiscretization::validate() const {
  if (omegas.empty()) throw std::invalid_argument("bath: no modes");
  if (omegas.size() != alphas.size()) throw std::invalid_argument("bath: size mismatch");
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!(omegas[k] > 0.0) || !finite(omegas[k])) throw std::invalid_argument("bath: omega must be > 0");
    if (!(alphas[k] > 0.0) || !finite(alphas[k])) throw std::invalid_argument("bath: alpha must be > 0");
    if (k > 0 && !(omegas[k] > omegas[k - 1])) {
      throw std::invalid_argument("bath: frequencies must be strictly increasing");
    }
  }
}

BathDiscretization discretize_bath(const SpectralDensity& sd, std::size_t n, double nu_max) {
  if (n == 0) throw std::invalid_argument("discretize_bath: n must be >= 1");
  if (!(nu_max > 0.0) || !finite(nu_max)) throw std::invalid_argument("discretize_bath: nu_max must be > 0");
  BathDiscretization bath;
  bath.omegas.resize(n);
  bath.alphas.resize(n);
  const double delta = nu_max / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = (static_cast<double>(k) + 0.5) * delta;
    bath.omegas[k] = w;
    bath.alphas[k] = w * std::sqrt(sd(w) * delta);
  }
  return bath;
}

SylvesterResult sylvester_check(const BathDiscretization& bath, const ModelParams& mp) {
  bath.validate();
  mp.validate();
  double log_prod = 0.0;
  for (double w : bath.omegas) log_prod += 2.0 * std::log(w);
  const double schur = mp.omega * mp.omega - mp.epsilon * mp.epsilon * bath.total_weight();
  SylvesterResult res{};
  res.schur_factor = schur;
  res.log_abs_det = log_prod + std::log(std::abs(schur));
  res.det = std::copysign(std::exp(res.log_abs_det), schur);
  if (schur == 0.0) res.det = 0.0;
  res.positive_definite = schur > 0.0;
  return res;
}

// --------------------------------------------------------- closed-form v(t)

ResponseValue ResponseSolution::operator()(double t) const noexcept {
  cdouble v{}, v1{}, v2{};
  for (int i = 0; i < 3; ++i) {
    const cdouble r = roots_.roots[i];
    const cdouble term = coefficients_[i] * std::exp(r * t);
    v += term;
    v1 += term * r;
    v2 += term * r * r;
  }
  return {v.real(), v1.real(), v2.real()};
}

double ResponseSolution::imaginary_residue(double t) const noexcept {
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    cdouble sum{};
    double mag = 0.0;
    for (int i = 0; i < 3; ++i) {
      const cdouble r = roots_.roots[i];
      const cdouble term = coefficients_[i] * std::pow(r, k) * std::exp(r * t);
      sum += term;
      mag += std::abs(term);
    }
    if (mag > 0.0) worst = std::max(worst, std::abs(sum.imag()) / mag);
  }
  return worst;
}

ResponseSolution build_response(const CubicRoots& roots) {
  const auto& r = roots.roots;
  const double scale = std::max(1.0, roots.max_abs());
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(r[i] - r[j]) < 1e-8 * scale) {
        throw NearDegenerateRoots("build_response: roots " + std::to_string(i) + " and " +
                                  std::to_string(j) + " coincide to 1e-8; parameters sit on a "
                                  "double-root boundary");
      }
    }
  }
  // Solution of Σ Cᵢ rᵢᵏ = δ_{k1}: Cᵢ = (rᵢ − Σr) / Π_{j≠i}(rᵢ − rⱼ).
  const cdouble sum = r[0] + r[1] + r[2];
  std::array<cdouble, 3> c{};
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    c[i] = (r[i] - sum) / ((r[i] - r[j]) * (r[i] - r[k]));
  }
  // Conjugate roots must carry conjugate coefficients; enforce it exactly.
  if (!roots.all_real()) {
    for (int i = 0; i < 3; ++i) {
      if (r[i].imag() == 0.0) c[i] = cdouble(c[i].real(), 0.0);
    }
    c[2] = std::conj(c[1]);
  }
  return ResponseSolution(roots, c);
}

ResponseValue eval_response(const ResponseSolution& rs, double t) noexcept { return rs(t); }

// ------------------------------------------------------------ numeric solvers

double max_volterra_step(const SpectralDensity& sd, const ModelParams& mp) {
  const auto roots = characteristic_roots(sd, mp);
  return std::min(0.01 / roots.max_abs(), 0.01 / sd.decay_rate());
}

namespace {

std::size_t step_count(double t_max, double h) {
  if (!(t_max > 0.0) || !finite(t_max)) throw std::invalid_argument("t_max must be > 0");
  if (!(h > 0.0) || !finite(h)) throw std::invalid_argument("h must be > 0");
  return static_cast<std::size_t>(std::floor(t_max / h + 1e-9));
}

}  // namespace

SampledResponse solve_volterra(const SpectralDensity& sd, const ModelParams& mp, double t_max,
                               double h) {
  mp.validate();
  const double h_max = max_volterra_step(sd, mp);
  if (h > h_max * (1.0 + 1e-12)) {
    throw StepTooLarge("solve_volterra: h = " + std::to_string(h) + " exceeds " +
                       std::to_string(h_max));
  }
  const std::size_t steps = step_count(t_max, h);
  const double kappa = sd.decay_rate();
  const double w2 = mp.omega * mp.omega;
  const double g = coupling_rhs(sd, mp);

  struct State {
    double v, v1, f;
  };
  auto rhs = [&](const State& y) -> State {
    return {y.v1, -w2 * y.v + g * y.f, -kappa * y.f + y.v};
  };
  auto axpy = [](const State& y, double a, const State& k) -> State {
    return {y.v + a * k.v, y.v1 + a * k.v1, y.f + a * k.f};
  };

  SampledResponse out;
  out.h = h;
  out.t.resize(steps + 1);
  out.v.resize(steps + 1);
  out.v1.resize(steps + 1);
  out.v2.resize(steps + 1);

  State y{0.0, 1.0, 0.0};
  for (std::size_t n = 0;; ++n) {
    out.t[n] = h * static_cast<double>(n);
    out.v[n] = y.v;
    out.v1[n] = y.v1;
    out.v2[n] = -w2 * y.v + g * y.f;
    if (n == steps) break;
    const State k1 = rhs(y);
    const State k2 = rhs(axpy(y, 0.5 * h, k1));
    const State k3 = rhs(axpy(y, 0.5 * h, k2));
    const State k4 = rhs(axpy(y, h, k3));
    y.v += h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
    y.v1 += h / 6.0 * (k1.v1 + 2.0 * k2.v1 + 2.0 * k3.v1 + k4.v1);
    y.f += h / 6.0 * (k1.f + 2.0 * k2.f + 2.0 * k3.f + k4.f);
  }
  return out;
}

double finite_kernel(const BathDiscretization& bath, double t) noexcept {
  double s = 0.0;
  for (std::size_t n = 0; n < bath.size(); ++n) {
    s += bath.alphas[n] * bath.alphas[n] * std::sin(bath.omegas[n] * t) / bath.omegas[n];
  }
  return s;
}

double max_finite_step(const BathDiscretization& bath, const ModelParams& mp) {
  return 0.05 / std::max(mp.omega, bath.max_frequency());
}

SampledResponse solve_volterra_convolution(const std::vector<double>& kernel,
                                           const ModelParams& mp, double h) {
  mp.validate();
  if (kernel.empty()) throw std::invalid_argument("solve_volterra_convolution: empty kernel");
  const std::size_t n = kernel.size();
  const double w2 = mp.omega * mp.omega;
  const double e2 = mp.epsilon * mp.epsilon;

  SampledResponse out;
  out.h = h;
  out.t.resize(n);
  out.v.assign(n, 0.0);
  out.v1.assign(n, 0.0);
  out.v2.assign(n, 0.0);
  out.v1[0] = 1.0;

  for (std::size_t k = 0; k + 1 < n; ++k) {
    out.t[k] = h * static_cast<double>(k);
    const std::size_t m = k + 1;
    const double v_next = out.v[k] + h * out.v1[k] + 0.5 * h * h * out.v2[k];
    // Trapezoid: h[½K(t_m)v₀ + Σ_{j=1}^{m−1} K(t_m − t_j)v_j + ½K(0)v_m], v₀ = 0.
    double mem = 0.0;
    for (std::size_t j = 1; j < m; ++j) mem += kernel[m - j] * out.v[j];
    mem = h * (mem + 0.5 * kernel[0] * v_next);
    const double a_next = -w2 * v_next + e2 * mem;
    out.v[m] = v_next;
    out.v2[m] = a_next;
    out.v1[m] = out.v1[k] + 0.5 * h * (out.v2[k] + a_next);
  }
  out.t[n - 1] = h * static_cast<double>(n - 1);
  return out;
}

SampledResponse solve_volterra_finite(const BathDiscretization& bath, const ModelParams& mp,
                                      double t_max, double h) {
  bath.validate();
  mp.validate();
  const double h_max = max_finite_step(bath, mp);
  if (h > h_max * (1.0 + 1e-12)) {
    throw StepTooLarge("solve_volterra_finite: h = " + std::to_string(h) + " exceeds " +
                       std::to_string(h_max));
  }
  const std::size_t steps = step_count(t_max, h);
  const std::size_t modes = bath.size();
  const double w2 = mp.omega * mp.omega;
  const double e2 = mp.epsilon * mp.epsilon;

  // Same trapezoid rule as solve_volterra_convolution, but with K_N split into
  // modes: ∫K_N(t−τ)v dτ = Σ (αₙ²/ωₙ) Im(e^{iωₙt} Σⱼ wⱼ vⱼ e^{−iωₙtⱼ}). K_N(0) = 0,
  // so the end-point term drops and each step costs O(N).
  std::vector<double> weight(modes);
  std::vector<cdouble> phase(modes, cdouble(1.0, 0.0));  // e^{−iωₙ t_k}
  std::vector<cdouble> rot(modes);
  std::vector<cdouble> acc(modes, cdouble(0.0, 0.0));    // Σ_{j<k} vⱼ e^{−iωₙtⱼ}
  for (std::size_t n = 0; n < modes; ++n) {
    weight[n] = bath.alphas[n] * bath.alphas[n] / bath.omegas[n];
    rot[n] = std::polar(1.0, -bath.omegas[n] * h);
  }

  SampledResponse out;
  out.h = h;
  out.t.resize(steps + 1);
  out.v.assign(steps + 1, 0.0);
  out.v1.assign(steps + 1, 0.0);
  out.v2.assign(steps + 1, 0.0);
  out.v1[0] = 1.0;
  out.t[0] = 0.0;

  for (std::size_t m = 1; m <= steps; ++m) {
    const std::size_t k = m - 1;
    out.t[m] = h * static_cast<double>(m);
    const double v_next = out.v[k] + h * out.v1[k] + 0.5 * h * h * out.v2[k];
    double mem = 0.0;
    const bool resync = (m % 512 == 0);
    for (std::size_t n = 0; n < modes; ++n) {
      // Fold in v_k at its own phase, then advance the phase to t_m.
      acc[n] += out.v[k] * phase[n];
      phase[n] = resync ? std::polar(1.0, -bath.omegas[n] * out.t[m]) : phase[n] * rot[n];
      // Im(e^{iωt_m}·acc) = Im(conj(phase)·acc)
      mem += weight[n] * (phase[n].real() * acc[n].imag() - phase[n].imag() * acc[n].real());
    }
    mem *= h;
    const double a_next = -w2 * v_next + e2 * mem;
    out.v[m] = v_next;
    out.v2[m] = a_next;
    out.v1[m] = out.v1[k] + 0.5 * h * (out.v2[k] + a_next);
  }
  return out;
}

}  // namespace bathlab
