// spectral.hpp — Lorentzian bath spectral density J(ν) = 1/(a + bν²) and the
// memory kernel Q(t) = ∫₀^∞ J(ν)(1 − cos νt) dν it induces.

#pragma once

#include <cstddef>

namespace bathlab {

class SpectralDensity {
 public:
  // Throws std::invalid_argument unless a > 0 and b > 0.
  SpectralDensity(double a, double b);

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }

  // √(a/b): pole location of J on the imaginary axis, and the decay rate of Q'.
  double decay_rate() const noexcept { return rate_; }

  double operator()(double nu) const noexcept { return 1.0 / (a_ + b_ * nu * nu); }

  // ∫_x^∞ J(ν) dν for x ≥ 0, evaluated with atan so it stays accurate for large x.
  double tail_integral(double x) const noexcept;

 private:
  double a_;
  double b_;
  double rate_;
};

double eval_j(const SpectralDensity& sd, double nu) noexcept;

// π / (2√(ab))
double j_total_integral(const SpectralDensity& sd) noexcept;

// Closed-form Q(t) = π/(2√(ab)) · (1 − e^{−√(a/b) t}), t ≥ 0.
double q_kernel(const SpectralDensity& sd, double t);

// Q'(t) = π/(2b) · e^{−√(a/b) t} for t > 0 (right limit at t = 0).
double q_kernel_derivative(const SpectralDensity& sd, double t);

// Truncated-frequency quadrature settings. The cutoff must leave an analytic
// tail bound 2/(b·nu_max) for the (1 − cos) integrand within tail_tolerance.
class QuadratureSpec {
 public:
  QuadratureSpec(const SpectralDensity& sd, double nu_max, std::size_t panels,
                 double tail_tolerance);

  // Picks nu_max so the tail bound is half of `tolerance`.
  static QuadratureSpec for_tolerance(const SpectralDensity& sd, double tolerance,
                                      std::size_t panels = 64);

  double nu_max() const noexcept { return nu_max_; }
  std::size_t panels() const noexcept { return panels_; }
  double tail_tolerance() const noexcept { return tail_tolerance_; }
  double tail_bound() const noexcept { return tail_bound_; }

 private:
  double nu_max_;
  std::size_t panels_;
  double tail_tolerance_;
  double tail_bound_;
};

struct KernelEstimate {
  double value;
  double error_estimate;  // tail bound + summed panel (Gauss–Kronrod) estimates
};

// Direct quadrature of the defining integral of Q over [0, nu_max]. Panel
// width never exceeds π/(4t). Throws QuadratureFailure if the error estimate
// exceeds quad.tail_tolerance().
KernelEstimate q_kernel_numeric(const SpectralDensity& sd, double t,
                                const QuadratureSpec& quad);

}  // namespace bathlab
