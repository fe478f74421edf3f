#include "bathlab/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bathlab/error.hpp"

namespace bathlab {

namespace {

constexpr double kPi = std::numbers::pi;

// (e^{zt} − 1)/z without cancellation for small |z t|.
cdouble exp_ramp(cdouble z, double t) {
  const double x = z.real() * t;
  const double y = z.imag() * t;
  if (z == cdouble(0.0, 0.0)) return {t, 0.0};
  const double s = std::sin(0.5 * y);
  const cdouble num(std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y));
  return num / z;
}

// Hermitian 3×3 accumulator, upper triangle stored row-major.
struct Gram {
  std::array<cdouble, 6> g{};
  static constexpr int idx(int i, int j) { return i == 0 ? j : (i == 1 ? 2 + j : 5); }
  cdouble at(int i, int j) const { return i <= j ? g[idx(i, j)] : std::conj(g[idx(j, i)]); }
  void add_outer(const std::array<cdouble, 3>& x, double w) {
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) g[idx(i, j)] += w * x[i] * std::conj(x[j]);
  }
  // Σ u_i conj(w_j) G_ij, real part
  double form(const std::array<cdouble, 3>& u, const std::array<cdouble, 3>& w) const {
    cdouble s{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += u[i] * std::conj(w[j]) * at(i, j);
    return s.real();
  }
};

}  // namespace

CovarianceTriple CovarianceTriple::plain(double t, double a, double b, double c) {
  CovarianceTriple ct;
  ct.t = t;
  ct.a_coef = a;
  ct.b_coef = b;
  ct.c_coef = c;
  ct.shear = 0.0;
  ct.b_sheared = b;
  ct.c_sheared = c;
  return ct;
}

double CovarianceTriple::quadratic_form(double lambda, double mu) const noexcept {
  // Evaluate in sheared coordinates: λ' = λ + sμ.
  const double lp = lambda + shear * mu;
  return a_coef * lp * lp + 2.0 * b_sheared * lp * mu + c_sheared * mu * mu;
}

QuadratureSpec covariance_quadrature(const SpectralDensity& sd, double nu_max,
                                     double rel_tolerance) {
  return QuadratureSpec(sd, nu_max, 64, std::max(rel_tolerance, 2.0 / (sd.b() * nu_max)));
}

CovarianceTriple abc_numeric(const SpectralDensity& sd, const ModelParams& mp,
                             const ResponseSolution& rs, double t, const QuadratureSpec& quad) {
  mp.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("abc_numeric: t must be >= 0");
  if (t == 0.0) return CovarianceTriple::plain(0.0, 0.0, 0.0, 0.0);

  const auto& r = rs.roots().roots;
  const auto& c = rs.coefficients();
  // Each |Xᵢ|² is a Lorentzian-like bump of width ~max(|Re rᵢ|, 1/t); panels
  // must resolve the narrowest one.
  double rho = 0.0, rmin = std::numeric_limits<double>::infinity();
  for (const auto& ri : r) {
    rho = std::max(rho, std::abs(ri));
    if (ri.real() != 0.0) rmin = std::min(rmin, std::abs(ri.real()));
  }
  const double nu_max = quad.nu_max();
  if (nu_max <= 2.0 * rho) {
    throw QuadratureFailure("abc_numeric: nu_max must exceed twice the largest root modulus");
  }

  double width = std::min(kPi / (4.0 * t), 0.25 * sd.decay_rate());
  width = std::min(width, 0.25 * rmin);
  const auto panels = std::max<std::size_t>(
      quad.panels(), static_cast<std::size_t>(std::ceil(nu_max / width)));
  const double h = nu_max / static_cast<double>(panels);

  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  using G7 = boost::math::quadrature::gauss<double, 7>;
  const auto& xk = GK::abscissa();
  const auto& wk = GK::weights();
  const auto& wg = G7::weights();

  std::array<cdouble, 3> cu{}, cw{};
  for (int i = 0; i < 3; ++i) {
    cu[i] = c[i];
    cw[i] = c[i] * r[i];
  }

  Gram kron;
  double err_a = 0.0, err_c = 0.0;
  std::array<cdouble, 3> x{};
  auto transforms = [&](double nu) {
    for (int i = 0; i < 3; ++i) x[i] = exp_ramp(r[i] - cdouble(0.0, nu), t);
  };
  for (std::size_t p = 0; p < panels; ++p) {
    const double mid = h * (static_cast<double>(p) + 0.5);
    const double half = 0.5 * h;
    Gram panel_k;
    double ga = 0.0, gc = 0.0, ka = 0.0, kc = 0.0;
    for (std::size_t k = 0; k < xk.size(); ++k) {
      for (int side = (k == 0 ? 1 : -1); side <= 1; side += 2) {
        const double nu = mid + side * half * xk[k];
        transforms(nu);
        const double j = sd(nu) * half;
        cdouble u{}, w{};
        for (int i = 0; i < 3; ++i) {
          u += cu[i] * x[i];
          w += cw[i] * x[i];
        }
        const double fa = j * std::norm(u);
        const double fc = j * std::norm(w);
        panel_k.add_outer(x, j * wk[k]);
        ka += wk[k] * fa;
        kc += wk[k] * fc;
        if (k % 2 == 0) {
          ga += wg[k / 2] * fa;
          gc += wg[k / 2] * fc;
        }
      }
    }
    for (int e = 0; e < 6; ++e) kron.g[e] += panel_k.g[e];
    err_a += std::abs(ka - ga);
    err_c += std::abs(kc - gc);
  }

  const double scale = mp.epsilon * mp.epsilon * mp.kT;
  const double a = scale * kron.form(cu, cu);
  const double b = scale * kron.form(cu, cw);
  const double cc = scale * kron.form(cw, cw);

  // Tail: |X_i| ≤ (1 + e^{Re rᵢ t})/(ν − ρ), so ∫_{ν_max}^∞ J|U|² ≤ M₀²/(3b(ν_max − ρ)³).
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double g = 1.0 + std::exp(r[i].real() * t);
    m0 += std::abs(c[i]) * g;
    m1 += std::abs(c[i]) * std::abs(r[i]) * g;
  }
  const double tail_den = 3.0 * sd.b() * std::pow(nu_max - rho, 3);
  const double estimate = scale * ((m0 * m0 + m1 * m1) / tail_den + err_a + err_c);
  if (estimate > quad.tail_tolerance() * (a + cc)) {
    throw QuadratureFailure("abc_numeric: error estimate " + std::to_string(estimate) +
                            " exceeds relative tolerance at t = " + std::to_string(t));
  }

  CovarianceTriple ct;
  ct.t = t;
  ct.a_coef = a;
  ct.b_coef = b;
  ct.c_coef = cc;
  ct.shear = a > 0.0 ? b / a : 0.0;
  std::array<cdouble, 3> cs{};
  for (int i = 0; i < 3; ++i) cs[i] = c[i] * (r[i] - ct.shear);
  ct.b_sheared = scale * kron.form(cu, cs);
  ct.c_sheared = scale * kron.form(cs, cs);
  return ct;
}

RunawayRoots runaway_roots(const CubicRoots& roots) {
  if (roots.regime != Regime::LargeCoupling) {
    throw RegimeMismatch(std::string("expected LargeCoupling roots, got ") +
                         std::string(to_string(roots.regime)));
  }
  return {-roots.roots[0].real(), -roots.roots[1].real(), roots.roots[2].real()};
}

std::array<double, 6> p_terms(const SpectralDensity& sd, const CubicRoots& roots, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("p_terms: t must be >= 0");
  const auto [l1, l2, l3] = runaway_roots(roots);
  const double a = sd.a(), b = sd.b();
  const double k = sd.decay_rate();     // √(a/b)
  const double rb = 1.0 / k;            // √(b/a)
  const double sab = std::sqrt(a * b);
  const double b32 = b * std::sqrt(b / a);  // b^{3/2}/√a

  for (double l : {l1, l2, l3}) {
    if (std::abs(a - b * l * l) < 1e-8 * a) {
      throw SingularDenominator("p_terms: a − bλ² vanishes for λ = " + std::to_string(l));
    }
  }
  const auto rs = build_response(roots);
  const double c1 = rs.coefficients()[0].real();
  const double c2 = rs.coefficients()[1].real();
  const double c3 = rs.coefficients()[2].real();
  const double d1 = a - b * l1 * l1, d2 = a - b * l2 * l2, d3 = a - b * l3 * l3;
  const double ek = std::exp(-k * t);
  const double e1 = std::exp(-l1 * t), e2 = std::exp(-l2 * t), e3 = std::exp(l3 * t);

  std::array<double, 6> p{};
  p[0] = kPi * c1 * c1 / (2.0 * d1) *
         ((1.0 + e1 * e1) * (1.0 / l1 - rb) - 2.0 * e1 * (e1 / l1 - rb * ek));
  p[1] = kPi * c2 * c2 / (2.0 * d2) *
         ((1.0 + e2 * e2) * (1.0 / l2 - rb) - 2.0 * e2 * (e2 / l2 - rb * ek));
  p[2] = kPi * c3 * c3 / (2.0 * d3) *
         ((1.0 + e3 * e3) * (1.0 / l3 - rb) - 2.0 * e3 * (1.0 / (e3 * l3) - rb * ek));
  p[3] = kPi * c1 * c2 / (d1 * d2) *
         ((1.0 - e1 * e2) * (2.0 * a - b * (l1 * l1 + l2 * l2)) / (l1 + l2) +
          (l1 * l2 * b32 - sab) * (1.0 + e1 * e2 - e1 * ek - e2 * ek) -
          b * ek * (e2 - e1) * (l2 - l1));
  p[4] = kPi * c2 * c3 / (d2 * d3) *
         ((1.0 - e3 * e2) * (2.0 * a - b * (l2 * l2 + l3 * l3)) / (l2 - l3) -
          (l2 * l3 * b32 + sab) * (1.0 + e3 * e2 - e2 * ek - e3 * ek) -
          b * ek * (e2 - e3) * (l2 + l3));
  p[5] = kPi * c1 * c3 / (d1 * d3) *
         ((1.0 - e3 * e1) * (2.0 * a - b * (l1 * l1 + l3 * l3)) / (l1 - l3) -
          (l1 * l3 * b32 + sab) * (1.0 + e3 * e1 - e1 * ek - e3 * ek) -
          b * ek * (e1 - e3) * (l1 + l3));
  return p;
}

CovarianceTriple abc_closed_form(const SpectralDensity& sd, const ModelParams& mp,
                                 const CubicRoots& roots, double t) {
  mp.validate();
  const auto p = p_terms(sd, roots, t);
  const auto [l1, l2, l3] = runaway_roots(roots);
  const double s = mp.epsilon * mp.epsilon * mp.kT;

  CovarianceTriple ct;
  ct.t = t;
  ct.a_coef = s * (p[0] + p[1] + p[2] + p[3] + p[4] + p[5]);
  ct.b_coef = s * (-l1 * p[0] - l2 * p[1] + l3 * p[2] - 0.5 * (l1 + l2) * p[3] -
                   0.5 * (l2 - l3) * p[4] - 0.5 * (l1 - l3) * p[5]);
  ct.c_coef = s * (l1 * l1 * p[0] + l2 * l2 * p[1] + l3 * l3 * p[2] + l1 * l2 * p[3] -
                   l2 * l3 * p[4] - l1 * l3 * p[5]);
  ct.shear = l3;
  ct.b_sheared = s * (-(l1 + l3) * p[0] - (l2 + l3) * p[1] - (0.5 * (l1 + l2) + l3) * p[3] -
                      0.5 * (l2 + l3) * p[4] - 0.5 * (l1 + l3) * p[5]);
  ct.c_sheared = s * alpha_at(p, roots);
  return ct;
}

double det_from_p_terms(const std::array<double, 6>& p, const CubicRoots& roots) {
  const auto [l1, l2, l3] = runaway_roots(roots);
  const double P1 = p[0], P2 = p[1], P3 = p[2], P4 = p[3], P5 = p[4], P6 = p[5];
  return -0.25 * (l1 - l2) * (l1 - l2) * P4 * P4 - 0.25 * (l2 + l3) * (l2 + l3) * P5 * P5 -
         0.25 * (l1 + l3) * (l1 + l3) * P6 * P6 + (l1 - l2) * (l1 - l2) * P1 * P2 +
         (l1 + l3) * (l1 + l3) * P1 * P3 + (l1 + l3) * (l1 - l2) * P1 * P5 +
         (l2 + l3) * (l2 + l3) * P2 * P3 + (l2 + l3) * (l2 - l1) * P2 * P6 +
         (l2 + l3) * (l1 + l3) * P3 * P4 + 0.5 * (l1 - l2) * (l2 + l3) * P4 * P5 +
         0.5 * (l2 - l1) * (l1 + l3) * P4 * P6 - 0.5 * (l1 + l3) * (l2 + l3) * P5 * P6;
}

double alpha_at(const std::array<double, 6>& p, const CubicRoots& roots) {
  const auto [l1, l2, l3] = runaway_roots(roots);
  return (l1 + l3) * (l1 + l3) * p[0] + (l2 + l3) * (l2 + l3) * p[1] +
         (l2 + l3) * (l1 + l3) * p[3];
}

double p3_growth(const CubicRoots& roots, const SpectralDensity& sd, double t) {
  return p_terms(sd, roots, t)[2];
}

double p3_growth_prefactor(const CubicRoots& roots, const SpectralDensity& sd) {
  const double l3 = runaway_roots(roots).l3;
  const double c3 = build_response(roots).coefficients()[2].real();
  return kPi * c3 * c3 / (2.0 * (sd.a() - sd.b() * l3 * l3)) * (1.0 / l3 - 1.0 / sd.decay_rate());
}

double alpha_limit(const CubicRoots& roots, const SpectralDensity& sd) {
  const auto [l1, l2, l3] = runaway_roots(roots);
  return kPi / (sd.b() * l1 * l2 * (l1 + l2));
}

double alpha_asymptote(const CubicRoots& roots, const SpectralDensity& sd) {
  const auto [l1, l2, l3] = runaway_roots(roots);
  const double a = sd.a(), b = sd.b(), rb = 1.0 / sd.decay_rate();
  const auto rs = build_response(roots);
  const double c1 = rs.coefficients()[0].real();
  const double c2 = rs.coefficients()[1].real();
  const double d1 = a - b * l1 * l1, d2 = a - b * l2 * l2;
  const double p1 = kPi * c1 * c1 / (2.0 * d1) * (1.0 / l1 - rb);
  const double p2 = kPi * c2 * c2 / (2.0 * d2) * (1.0 / l2 - rb);
  const double p4 = kPi * c1 * c2 / (d1 * d2) *
                    ((2.0 * a - b * (l1 * l1 + l2 * l2)) / (l1 + l2) +
                     l1 * l2 * b * std::sqrt(b / a) - std::sqrt(a * b));
  return (l1 + l3) * (l1 + l3) * p1 + (l2 + l3) * (l2 + l3) * p2 + (l2 + l3) * (l1 + l3) * p4;
}

double pi_limit(const CubicRoots& roots, const SpectralDensity& sd, const ModelParams& mp) {
  mp.validate();
  const double l3 = runaway_roots(roots).l3;
  const double lead = mp.q0 * l3 + mp.p0;
  return 2.0 * sd.a() * l3 * l3 / (mp.epsilon * mp.epsilon * mp.kT * kPi) *
         (1.0 / l3 + std::sqrt(sd.b() / sd.a())) * lead * lead;
}

double pi_asymptote(const CubicRoots& roots, const SpectralDensity& sd, const ModelParams& mp) {
  mp.validate();
  const double l3 = runaway_roots(roots).l3;
  const double lead = mp.q0 * l3 + mp.p0;
  return sd.a() * l3 * l3 / (mp.epsilon * mp.epsilon * mp.kT * kPi) *
         (1.0 / l3 + std::sqrt(sd.b() / sd.a())) * lead * lead;
}

}  // namespace bathlab
