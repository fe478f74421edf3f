#include "bathlab/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss.hpp>

#include "bathlab/error.hpp"

namespace bathlab {

namespace {

constexpr double kPi = std::numbers::pi;

double checked_det(const GaussianState& gs) {
  const double d = gs.cov.det();
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw DegenerateCovariance("AC − B² = " + std::to_string(d) + " at t = " +
                               std::to_string(gs.t));
  }
  return d;
}

double normal_pdf(double x, double mean, double var) {
  if (!(var > 0.0)) throw DegenerateCovariance("non-positive variance " + std::to_string(var));
  const double z = x - mean;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * kPi * var);
}

// Composite 8-point Gauss–Legendre nodes/weights on [lo, hi].
void composite_gauss(double lo, double hi, int panels, std::vector<double>& x,
                     std::vector<double>& w) {
  using G8 = boost::math::quadrature::gauss<double, 8>;
  const auto& xa = G8::abscissa();
  const auto& wa = G8::weights();
  x.clear();
  w.clear();
  const double h = (hi - lo) / panels;
  for (int k = 0; k < panels; ++k) {
    const double mid = lo + h * (k + 0.5);
    for (std::size_t i = 0; i < xa.size(); ++i) {
      x.push_back(mid + 0.5 * h * xa[i]);
      w.push_back(0.5 * h * wa[i]);
      if (xa[i] != 0.0) {
        x.push_back(mid - 0.5 * h * xa[i]);
        w.push_back(0.5 * h * wa[i]);
      }
    }
  }
}

}  // namespace

PhasePoint mean_trajectory(const ResponseSolution& rs, const ModelParams& mp, double t) {
  const auto v = rs(t);
  return {mp.q0 * v.v1 + mp.p0 * v.v, mp.q0 * v.v2 + mp.p0 * v.v1};
}

double sheared_mean_momentum(const ResponseSolution& rs, const ModelParams& mp, double t,
                             double s) {
  cdouble sum{};
  for (int i = 0; i < 3; ++i) {
    const cdouble r = rs.roots().roots[i];
    sum += rs.coefficients()[i] * (r - s) * (mp.q0 * r + mp.p0) * std::exp(r * t);
  }
  return sum.real();
}

GaussianState GaussianState::from_moments(double t, double q_star, double p_star,
                                          const CovarianceTriple& cov) {
  GaussianState gs;
  gs.t = t;
  gs.q_star = q_star;
  gs.p_star = p_star;
  gs.p_star_sheared = p_star - cov.shear * q_star;
  gs.cov = cov;
  return gs;
}

GaussianState make_state(const ResponseSolution& rs, const ModelParams& mp,
                         const CovarianceTriple& cov) {
  const auto m = mean_trajectory(rs, mp, cov.t);
  GaussianState gs;
  gs.t = cov.t;
  gs.q_star = m.q;
  gs.p_star = m.p;
  gs.p_star_sheared = sheared_mean_momentum(rs, mp, cov.t, cov.shear);
  gs.cov = cov;
  return gs;
}

double density_exponent(const GaussianState& gs, double q, double p) {
  const double d = checked_det(gs);
  const double xi = q - gs.q_star;
  const double eta = (p - gs.cov.shear * q) - gs.p_star_sheared;
  return (gs.cov.c_sheared * xi * xi - 2.0 * gs.cov.b_sheared * xi * eta +
          gs.cov.a_coef * eta * eta) /
         (2.0 * d);
}

double density_at(const GaussianState& gs, double q, double p) {
  const double d = checked_det(gs);
  return std::exp(-density_exponent(gs, q, p)) / (2.0 * kPi * std::sqrt(d));
}

double marginal_q(const GaussianState& gs, double q) {
  return normal_pdf(q, gs.q_star, gs.cov.a_coef);
}

double marginal_p(const GaussianState& gs, double p) {
  return normal_pdf(p, gs.p_star, gs.cov.c_coef);
}

Moments moments(const GaussianState& gs) noexcept {
  return {gs.q_star, gs.p_star, gs.cov.a_coef, gs.cov.c_coef, gs.cov.b_coef};
}

double gibbs_density(const ModelParams& mp, double q, double p) {
  mp.validate();
  const double e = 0.5 * (p * p + mp.omega * mp.omega * q * q);
  return mp.omega / (2.0 * kPi * mp.kT) * std::exp(-e / mp.kT);
}

double box_mass(const GaussianState& gs, double half_width) {
  checked_det(gs);
  const double sq = std::sqrt(gs.cov.a_coef);
  const double se = std::sqrt(gs.cov.c_sheared);
  std::vector<double> xq, wq, xe, we;
  composite_gauss(-half_width * sq, half_width * sq, 16, xq, wq);
  composite_gauss(-half_width * se, half_width * se, 16, xe, we);
  double mass = 0.0;
  for (std::size_t i = 0; i < xq.size(); ++i) {
    const double q = gs.q_star + xq[i];
    double row = 0.0;
    for (std::size_t j = 0; j < xe.size(); ++j) {
      // p chosen so that η − sξ = xe[j]
      const double p = gs.cov.shear * q + gs.p_star_sheared + xe[j];
      row += we[j] * density_at(gs, q, p);
    }
    mass += wq[i] * row;
  }
  return mass;
}

Grid2D Grid2D::uniform(double q_lo, double q_hi, std::size_t nq, double p_lo, double p_hi,
                       std::size_t np) {
  if (nq < 2 || np < 2) throw std::invalid_argument("grid needs at least 2 points per axis");
  Grid2D g;
  g.q.resize(nq);
  g.p.resize(np);
  for (std::size_t i = 0; i < nq; ++i) {
    g.q[i] = q_lo + (q_hi - q_lo) * static_cast<double>(i) / static_cast<double>(nq - 1);
  }
  for (std::size_t j = 0; j < np; ++j) {
    g.p[j] = p_lo + (p_hi - p_lo) * static_cast<double>(j) / static_cast<double>(np - 1);
  }
  return g;
}

Grid2D diagnostic_grid(const GaussianState& gs) {
  const double sq = 6.0 * std::sqrt(gs.cov.a_coef);
  const double sp = 6.0 * std::sqrt(gs.cov.c_coef);
  return Grid2D::uniform(gs.q_star - sq, gs.q_star + sq, 41, gs.p_star - sp, gs.p_star + sp, 41);
}

Grid2D gibbs_grid(const ModelParams& mp) {
  mp.validate();
  const double sq = 6.0 * std::sqrt(mp.kT) / mp.omega;
  const double sp = 6.0 * std::sqrt(mp.kT);
  return Grid2D::uniform(-sq, sq, 41, -sp, sp, 41);
}

double gibbs_distance(const GaussianState& gs, const ModelParams& mp, const Grid2D& grid) {
  double worst = 0.0;
  for (double q : grid.q) {
    for (double p : grid.p) {
      worst = std::max(worst, std::abs(density_at(gs, q, p) - gibbs_density(mp, q, p)));
    }
  }
  return worst;
}

DecayFit decay_rate_fit(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size()) throw std::invalid_argument("decay_rate_fit: size mismatch");
  if (times.size() < 5) throw std::invalid_argument("decay_rate_fit: need at least 5 samples");
  const double n = static_cast<double>(times.size());
  double mt = 0.0, my = 0.0;
  std::vector<double> y(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) {
      throw NonPositiveValue("decay_rate_fit: value " + std::to_string(values[i]) +
                             " at index " + std::to_string(i));
    }
    y[i] = std::log(values[i]);
    mt += times[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    stt += (times[i] - mt) * (times[i] - mt);
    sty += (times[i] - mt) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(stt > 0.0)) throw std::invalid_argument("decay_rate_fit: times are all equal");
  DecayFit fit{};
  fit.rate = sty / stt;
  fit.intercept = my - fit.rate * mt;
  double ssr = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.rate * times[i]);
    ssr += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

}  // namespace bathlab
