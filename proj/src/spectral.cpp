#include "bathlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bathlab/error.hpp"

namespace bathlab {

SpectralDensity::SpectralDensity(double a, double b) : a_(a), b_(b), rate_(0.0) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("spectral density: a must be > 0");
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("spectral density: b must be > 0");
  rate_ = std::sqrt(a / b);
}

double SpectralDensity::tail_integral(double x) const noexcept {
  // ∫_x^∞ dν/(a+bν²) = atan(√(a/b)/x)/√(ab) = (π/2 − atan(x√(b/a)))/√(ab)
  const double s = std::sqrt(a_ * b_);
  if (x <= 0.0) return std::numbers::pi / (2.0 * s);
  return std::atan(rate_ / x) / s;
}

double eval_j(const SpectralDensity& sd, double nu) noexcept { return sd(nu); }

double j_total_integral(const SpectralDensity& sd) noexcept {
  return std::numbers::pi / (2.0 * std::sqrt(sd.a() * sd.b()));
}

double q_kernel(const SpectralDensity& sd, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("q_kernel: t must be >= 0");
  return j_total_integral(sd) * -std::expm1(-sd.decay_rate() * t);
}

double q_kernel_derivative(const SpectralDensity& sd, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("q_kernel_derivative: t must be >= 0");
  return std::numbers::pi / (2.0 * sd.b()) * std::exp(-sd.decay_rate() * t);
}

QuadratureSpec::QuadratureSpec(const SpectralDensity& sd, double nu_max, std::size_t panels,
                               double tail_tolerance)
    : nu_max_(nu_max), panels_(panels), tail_tolerance_(tail_tolerance), tail_bound_(0.0) {
  if (!(nu_max > 0.0)) throw std::invalid_argument("quadrature: nu_max must be > 0");
  if (panels == 0) throw std::invalid_argument("quadrature: panels must be > 0");
  if (!(tail_tolerance > 0.0)) throw std::invalid_argument("quadrature: tail_tolerance must be > 0");
  tail_bound_ = 2.0 / (sd.b() * nu_max);
  if (tail_bound_ > tail_tolerance) {
    throw std::invalid_argument("quadrature: tail bound 2/(b*nu_max) = " + std::to_string(tail_bound_) +
                                " exceeds tail_tolerance");
  }
}

QuadratureSpec QuadratureSpec::for_tolerance(const SpectralDensity& sd, double tolerance,
                                             std::size_t panels) {
  return QuadratureSpec(sd, 4.0 / (sd.b() * tolerance), panels, tolerance);
}

KernelEstimate q_kernel_numeric(const SpectralDensity& sd, double t, const QuadratureSpec& quad) {
  if (!(t >= 0.0)) throw std::invalid_argument("q_kernel_numeric: t must be >= 0");
  if (t == 0.0) return {0.0, quad.tail_bound()};

  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  // Below a quarter oscillation per panel, and fine enough near the pole scale.
  const double width = std::min(std::numbers::pi / (4.0 * t), 0.5 * sd.decay_rate());
  const auto n = std::max<std::size_t>(
      quad.panels(), static_cast<std::size_t>(std::ceil(quad.nu_max() / width)));
  const double h = quad.nu_max() / static_cast<double>(n);

  auto integrand = [&](double nu) {
    // 1 − cos x = 2 sin²(x/2) avoids cancellation at small νt
    const double s = std::sin(0.5 * nu * t);
    return 2.0 * s * s / (sd.a() + sd.b() * nu * nu);
  };

  double value = 0.0;
  double panel_error = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = h * static_cast<double>(k);
    double err = 0.0;
    value += GK::integrate(integrand, lo, lo + h, 0, 0.0, &err);
    panel_error += err;
  }
  const double estimate = quad.tail_bound() + panel_error;
  if (estimate > quad.tail_tolerance()) {
    throw QuadratureFailure("q_kernel_numeric: error estimate " + std::to_string(estimate) +
                            " exceeds tolerance " + std::to_string(quad.tail_tolerance()));
  }
  return {value, estimate};
}

}  // namespace bathlab
