// density.hpp — the limiting Gaussian law of (q(t), p(t)), its marginals and
// moments, the Gibbs reference law, and the diagnostics built on them.

#pragma once

#include <vector>

#include "bathlab/covariance.hpp"
#include "bathlab/response.hpp"

namespace bathlab {

struct PhasePoint {
  double q;
  double p;
};

// q* = q₀v' + p₀v, p* = q₀v'' + p₀v'
PhasePoint mean_trajectory(const ResponseSolution& rs, const ModelParams& mp, double t);

// p* − s·q*, summed per exponential so the e^{λ₃t} parts cancel exactly when
// s is the growing root.
double sheared_mean_momentum(const ResponseSolution& rs, const ModelParams& mp, double t,
                             double s);

struct GaussianState {
  double t = 0.0;
  double q_star = 0.0;
  double p_star = 0.0;
  double p_star_sheared = 0.0;  // p* − cov.shear·q*
  CovarianceTriple cov;

  static GaussianState from_moments(double t, double q_star, double p_star,
                                    const CovarianceTriple& cov);
};

// Mean from the response, covariance supplied (closed form or numeric).
GaussianState make_state(const ResponseSolution& rs, const ModelParams& mp,
                         const CovarianceTriple& cov);

// (Cξ² − 2Bξη + Aη²)/(2(AC − B²)) with ξ = q − q*, η = p − p*. Evaluated in
// sheared form (C'ξ² − 2B'ξη' + Aη'²)/(2(AC' − B'²)), η' = η − sξ.
// Throws DegenerateCovariance if AC − B² ≤ 0.
double density_exponent(const GaussianState& gs, double q, double p);

// exp(−exponent)/(2π√(AC − B²)). Throws DegenerateCovariance.
double density_at(const GaussianState& gs, double q, double p);

// N(q*, A) and N(p*, C). Throw DegenerateCovariance if the variance is ≤ 0.
double marginal_q(const GaussianState& gs, double q);
double marginal_p(const GaussianState& gs, double p);

struct Moments {
  double mean_q;
  double mean_p;
  double var_q;
  double var_p;
  double cov_qp;
};

Moments moments(const GaussianState& gs) noexcept;

// (ω/(2πkT))·exp(−(p² + ω²q²)/(2kT))
double gibbs_density(const ModelParams& mp, double q, double p);

// Probability mass of the state inside ±half_width standard deviations, by a
// composite Gauss–Legendre tensor rule in (ξ, η − sξ), which keeps the
// near-degenerate ridge of the runaway regime resolvable.
double box_mass(const GaussianState& gs, double half_width = 8.0);

struct Grid2D {
  std::vector<double> q;
  std::vector<double> p;

  static Grid2D uniform(double q_lo, double q_hi, std::size_t nq, double p_lo, double p_hi,
                        std::size_t np);
};

// 41×41 over (q* ± 6√A) × (p* ± 6√C)
Grid2D diagnostic_grid(const GaussianState& gs);
// 41×41 over ±6√(kT)/ω × ±6√(kT), centred on the Gibbs peak
Grid2D gibbs_grid(const ModelParams& mp);

// max over the grid of |density_at − gibbs_density|
double gibbs_distance(const GaussianState& gs, const ModelParams& mp, const Grid2D& grid);

struct DecayFit {
  double rate;
  double intercept;
  double r_squared;
};

// Least squares of log(values) against times. Throws std::invalid_argument
// for fewer than five samples or mismatched sizes, NonPositiveValue if any
// value is ≤ 0.
DecayFit decay_rate_fit(const std::vector<double>& times, const std::vector<double>& values);

}  // namespace bathlab
