// response.hpp — the response function v(t) of the system oscillator.
//
// v solves v'' + ω²v = ε² ∫₀ᵗ Q'(t−τ) v(τ) dτ with v(0) = 0, v'(0) = 1. For the
// Lorentzian density this reduces to a constant-coefficient third-order ODE
// whose characteristic cubic is
//
//   λ³ + κλ² + ω²λ + κω² − g = 0,   κ = √(a/b),  g = ε²π/(2b),
//
// so v is a sum of three exponentials. The finite-bath variant replaces Q' by
// K_N(t) = Σ αₙ² sin(ωₙt)/ωₙ and is solved by direct convolution.

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string_view>
#include <vector>

#include "bathlab/spectral.hpp"

namespace bathlab {

using cdouble = std::complex<double>;

struct ModelParams {
  double omega = 1.0;    // system frequency
  double epsilon = 0.0;  // coupling
  double kT = 1.0;
  double q0 = 0.0;
  double p0 = 0.0;

  // Throws std::invalid_argument on omega <= 0, kT <= 0, epsilon < 0 or
  // non-finite input.
  static ModelParams make(double omega, double epsilon, double kT, double q0 = 0.0,
                          double p0 = 0.0);

  // Same, with ε given through g = ε²π/(2b).
  static ModelParams from_coupling_rhs(const SpectralDensity& sd, double omega,
                                       double coupling_rhs, double kT, double q0 = 0.0,
                                       double p0 = 0.0);

  void validate() const;
};

// g = ε²π/(2b), the constant term's coupling contribution.
double coupling_rhs(const SpectralDensity& sd, const ModelParams& mp) noexcept;

enum class Regime {
  SmallCoupling,              // no root with positive real part
  LargeCoupling,              // three real roots, exactly one positive
  LargeCouplingOscillatory,   // one positive real root and a complex pair
  Boundary,                   // a root at zero
};

std::string_view to_string(Regime r) noexcept;

struct CubicRoots {
  // Real roots ascending, then a conjugate pair with the positive-imaginary
  // member first. In the LargeCoupling regime this is (−λ₁, −λ₂, +λ₃).
  std::array<cdouble, 3> roots{};
  Regime regime = Regime::SmallCoupling;
  // Monic coefficients {c0, c1, c2} of x³ + c2 x² + c1 x + c0.
  std::array<double, 3> coefficients{};

  bool all_real() const noexcept;
  double max_abs() const noexcept;
  // Largest |p(r)| over the three roots.
  double max_residual() const noexcept;
};

// Roots of a monic real cubic via the trigonometric/hyperbolic depressed-cubic
// forms, each polished with one Newton step. Ordering as in CubicRoots.
std::array<cdouble, 3> solve_monic_cubic(double c2, double c1, double c0);

CubicRoots characteristic_roots(const SpectralDensity& sd, const ModelParams& mp);

struct PositivityBound {
  double critical_eps_sq;   // 2√(ab)ω²/π
  bool positive_definite;   // ε² ≤ critical_eps_sq
};

// Continuum positive-definiteness threshold of the full Hamiltonian.
PositivityBound positivity_bound(const SpectralDensity& sd, const ModelParams& mp);

// Finite bath with frequencies ωₙ and couplings αₙ.
struct BathDiscretization {
  std::vector<double> omegas;  // strictly increasing, positive
  std::vector<double> alphas;  // positive

  std::size_t size() const noexcept { return omegas.size(); }
  double max_frequency() const noexcept { return omegas.empty() ? 0.0 : omegas.back(); }
  // Σ_{ωₙ < ν} αₙ²/ωₙ²
  double partial_weight(double nu) const noexcept;
  double total_weight() const noexcept;
  // 2π/Δω, the time after which the discrete bath re-phases.
  double recurrence_time() const noexcept;

  void validate() const;
};

// Midpoint grid ωₖ = (k − ½)Δ, Δ = nu_max/n, with αₖ²/ωₖ² = J(ωₖ)Δ.
BathDiscretization discretize_bath(const SpectralDensity& sd, std::size_t n, double nu_max);

struct SylvesterResult {
  double schur_factor;   // ω² − ε² Σ αᵢ²/ωᵢ²
  double log_abs_det;    // log|D_N| = Σ log ωᵢ² + log|schur_factor|
  double det;            // D_N itself; may over/underflow for large baths
  bool positive_definite;
};

// Leading-minor test of the quadratic form of the full Hamiltonian in
// (q, q₁..q_N, p₁..p_N).
SylvesterResult sylvester_check(const BathDiscretization& bath, const ModelParams& mp);

struct ResponseValue {
  double v;
  double v1;
  double v2;
};

class ResponseSolution {
 public:
  ResponseSolution(const CubicRoots& roots, const std::array<cdouble, 3>& coefficients)
      : roots_(roots), coefficients_(coefficients) {}

  const CubicRoots& roots() const noexcept { return roots_; }
  const std::array<cdouble, 3>& coefficients() const noexcept { return coefficients_; }

  // Σ Cᵢ rᵢᵏ e^{rᵢ t}, k = 0, 1, 2. Imaginary parts are dropped.
  ResponseValue operator()(double t) const noexcept;
  // Largest |Im| among the three sums relative to their magnitude.
  double imaginary_residue(double t) const noexcept;

 private:
  CubicRoots roots_;
  std::array<cdouble, 3> coefficients_;
};

// Coefficients from v(0) = 0, v'(0) = 1, v''(0) = 0. Throws
// NearDegenerateRoots when two roots are closer than 1e-8 (relative).
ResponseSolution build_response(const CubicRoots& roots);

ResponseValue eval_response(const ResponseSolution& rs, double t) noexcept;

struct SampledResponse {
  double h = 0.0;
  std::vector<double> t;
  std::vector<double> v;
  std::vector<double> v1;
  std::vector<double> v2;

  std::size_t size() const noexcept { return t.size(); }
  double t_max() const noexcept { return t.empty() ? 0.0 : t.back(); }
};

// Largest step the continuum solver accepts: min(0.01/max|root|, 0.01/κ).
double max_volterra_step(const SpectralDensity& sd, const ModelParams& mp);

// RK4 on (v, v', F) with F(t) = ∫₀ᵗ v(τ)e^{−κ(t−τ)}dτ, which turns the
// Lorentzian memory into F' = −κF + v. Grid is uniform with spacing h, ending
// at the last node ≤ t_max (+ rounding slack). Throws StepTooLarge.
SampledResponse solve_volterra(const SpectralDensity& sd, const ModelParams& mp, double t_max,
                               double h);

// K_N(t) = Σ αₙ² sin(ωₙt)/ωₙ
double finite_kernel(const BathDiscretization& bath, double t) noexcept;

// Largest step the finite-bath solvers accept: 0.05 / max(ω, max ωₙ).
double max_finite_step(const BathDiscretization& bath, const ModelParams& mp);

// Generic convolution stepper: velocity Verlet on (v, v') with the memory
// integral ε²∫₀ᵗ K(t−τ)v(τ)dτ evaluated by the trapezoid rule on the grid.
// `kernel` holds K at the grid nodes 0, h, 2h, ...
SampledResponse solve_volterra_convolution(const std::vector<double>& kernel,
                                           const ModelParams& mp, double h);

// Same discretization as solve_volterra_convolution with K = K_N, evaluated
// mode by mode in O(N) per step. Throws StepTooLarge.
SampledResponse solve_volterra_finite(const BathDiscretization& bath, const ModelParams& mp,
                                      double t_max, double h);

}  // namespace bathlab
