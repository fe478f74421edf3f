// covariance.hpp — time-dependent Gaussian coefficients A(t), B(t), C(t).
//
// They are defined through the quadratic-form identity
//
//   Aλ² + 2Bλμ + Cμ² = ε²kT ∫₀^∞ J(ν) |∫₀ᵗ (λv(x) + μv'(x)) e^{−iνx} dx|² dν,
//
// computed here two ways: by frequency quadrature of the identity (any regime)
// and by the closed-form P-term expressions (three real roots −λ₁, −λ₂, +λ₃).
//
// In the runaway regime A, B, C each grow like e^{2λ₃t}, so AC and B² grow like
// e^{4λ₃t} while their difference only grows like e^{2λ₃t}; forming AC − B²
// from A, B, C loses everything to cancellation after t ≈ 10/λ₃. Each triple therefore also carries a
// sheared pair B' = B − sA, C' = C − 2sB + s²A, evaluated without
// cancellation, with AC − B² = AC' − B'².

#pragma once

#include <array>

#include "bathlab/response.hpp"
#include "bathlab/spectral.hpp"

namespace bathlab {

struct CovarianceTriple {
  double t = 0.0;
  double a_coef = 0.0;  // ⟨(q − q*)²⟩
  double b_coef = 0.0;  // ⟨(q − q*)(p − p*)⟩
  double c_coef = 0.0;  // ⟨(p − p*)²⟩
  double shear = 0.0;
  double b_sheared = 0.0;  // B − sA
  double c_sheared = 0.0;  // C − 2sB + s²A

  // A, B, C with no shear information (s = 0).
  static CovarianceTriple plain(double t, double a, double b, double c);

  // AC − B², via the sheared pair.
  double det() const noexcept { return a_coef * c_sheared - b_sheared * b_sheared; }
  // Aλ² + 2Bλμ + Cμ²
  double quadratic_form(double lambda, double mu) const noexcept;
};

// Frequency quadrature of the identity. v is a sum of exponentials, so the
// time integrals are exact: ∫₀ᵗ e^{(r−iν)x}dx = (e^{(r−iν)t} − 1)/(r − iν).
// The 3×3 Hermitian Gram matrix of these transforms is integrated against J
// on panels no wider than min(π/(4t), κ/4, min|Re r|/4) up to quad.nu_max() with
// a 15-point Gauss–Kronrod rule; the tail is bounded analytically.
// quad.tail_tolerance() is used as a tolerance relative to A + C; exceeding
// it throws QuadratureFailure. The shear is s = B/A (so B' = 0).
CovarianceTriple abc_numeric(const SpectralDensity& sd, const ModelParams& mp,
                             const ResponseSolution& rs, double t, const QuadratureSpec& quad);

// A cutoff suited to abc_numeric: the integrand falls like ν⁻⁴, so a few
// thousand is plenty; tail_tolerance is relative (see above).
QuadratureSpec covariance_quadrature(const SpectralDensity& sd, double nu_max = 1000.0,
                                     double rel_tolerance = 1e-3);

// The three real roots of the runaway regime: −λ₁ < −λ₂ < 0 < λ₃.
struct RunawayRoots {
  double l1;
  double l2;
  double l3;
};

// Throws RegimeMismatch unless roots.regime is LargeCoupling.
RunawayRoots runaway_roots(const CubicRoots& roots);

// P₁..P₆ at time t: the S-term brackets with their prefactors, so that
// S₁ = (λ − μλ₁)²P₁, S₂ = (λ − μλ₂)²P₂, S₃ = (λ + μλ₃)²P₃,
// S₄ = (λ − μλ₁)(λ − μλ₂)P₄, S₅ = (λ − μλ₂)(λ + μλ₃)P₅,
// S₆ = (λ − μλ₁)(λ + μλ₃)P₆.
// Throws RegimeMismatch outside LargeCoupling and SingularDenominator when
// |a − bλᵢ²| < 1e-8·a.
std::array<double, 6> p_terms(const SpectralDensity& sd, const CubicRoots& roots, double t);

// A, B, C assembled from the P-terms; shear λ₃ with
//   B' = −(λ₁+λ₃)P₁ − (λ₂+λ₃)P₂ − (½(λ₁+λ₂)+λ₃)P₄ − (½(λ₂+λ₃))P₅ − (½(λ₁+λ₃))P₆
//   C' = (λ₁+λ₃)²P₁ + (λ₂+λ₃)²P₂ + (λ₁+λ₃)(λ₂+λ₃)P₄
// (times ε²kT), neither of which involves the growing P₃.
CovarianceTriple abc_closed_form(const SpectralDensity& sd, const ModelParams& mp,
                                 const CubicRoots& roots, double t);

// (AC − B²)/(ε²kT)² from the expanded P-term polynomial (cross terms only;
// the P₃² terms cancel symbolically).
double det_from_p_terms(const std::array<double, 6>& p, const CubicRoots& roots);

// α(t) = (λ₁+λ₃)²P₁ + (λ₂+λ₃)²P₂ + (λ₂+λ₃)(λ₁+λ₃)P₄, the coefficient of P₃ in
// (AC − B²)/(ε²kT)².
double alpha_at(const std::array<double, 6>& p, const CubicRoots& roots);

// P₃(t), the only exponentially growing term.
double p3_growth(const CubicRoots& roots, const SpectralDensity& sd, double t);

// lim P₃e^{−2λ₃t} = πC₃²/(2(a − bλ₃²)) · (1/λ₃ − √(b/a)).
double p3_growth_prefactor(const CubicRoots& roots, const SpectralDensity& sd);

// Printed closed form of lim α: π/(bλ₁λ₂(λ₁ + λ₂)).
double alpha_limit(const CubicRoots& roots, const SpectralDensity& sd);

// lim α assembled from the limits of P₁, P₂, P₄. This is the value the
// covariance actually approaches; it is half of alpha_limit.
double alpha_asymptote(const CubicRoots& roots, const SpectralDensity& sd);

// Printed limiting exponent: (2aλ₃²/(ε²kTπ))·(1/λ₃ + √(b/a))·(q₀λ₃ + p₀)².
double pi_limit(const CubicRoots& roots, const SpectralDensity& sd, const ModelParams& mp);

// Limit of (Cξ² − 2Bξη + Aη²)/(2(AC − B²)) at a fixed point, obtained from
// the Gaussian exponent with its factor ½: half of pi_limit.
double pi_asymptote(const CubicRoots& roots, const SpectralDensity& sd, const ModelParams& mp);

}  // namespace bathlab
