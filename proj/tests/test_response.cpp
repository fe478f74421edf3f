#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "bathlab/error.hpp"
#include "bathlab/response.hpp"
#include "oracles.hpp"

using namespace bathlab;
constexpr double pi = std::numbers::pi;

namespace {

SpectralDensity example_sd() { return SpectralDensity(9.0, 1.0); }
ModelParams example_mp() {
  return ModelParams::from_coupling_rhs(example_sd(), std::sqrt(1.0 / 3.0), 4.0, 1.0, 1.0, 0.0);
}

double cubic_residual_scale(const CubicRoots& cr) {
  const auto& c = cr.coefficients;
  return std::max({1.0, std::abs(c[0]), std::abs(c[1]), std::abs(c[2])});
}

}  // namespace

TEST_CASE("model parameters validate") {
  CHECK_THROWS_AS(ModelParams::make(0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams::make(1.0, -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams::make(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams::make(1.0, 1.0, 1.0, INFINITY), std::invalid_argument);
  auto mp = example_mp();
  CHECK(coupling_rhs(example_sd(), mp) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("worked example: roots, ordering, regime, Vieta") {
  auto sd = example_sd();
  auto cr = characteristic_roots(sd, example_mp());
  CHECK(cr.regime == Regime::LargeCoupling);
  CHECK(cr.all_real());
  CHECK(cr.roots[0].real() == doctest::Approx(-2.2723).epsilon(1e-4));
  CHECK(cr.roots[1].real() == doctest::Approx(-1.5691).epsilon(1e-4));
  CHECK(cr.roots[2].real() == doctest::Approx(0.8414).epsilon(1e-4));
  CHECK(std::abs(cr.roots[0].real() + 2.27227008) <= 1e-8);
  CHECK(std::abs(cr.roots[1].real() + 1.56912979) <= 1e-8);
  CHECK(std::abs(cr.roots[2].real() - 0.84139987) <= 1e-8);

  const double l1 = -cr.roots[0].real(), l2 = -cr.roots[1].real(), l3 = cr.roots[2].real();
  const double kappa = sd.decay_rate(), w2 = 1.0 / 3.0;
  CHECK(std::abs(l3 - l1 - l2 + kappa) <= 1e-9);
  CHECK(std::abs(l1 * l2 - l2 * l3 - l1 * l3 - w2) <= 1e-9);
  CHECK(std::abs(l1 * l2 * l3 - 4.0 + kappa * w2) <= 1e-9);
  CHECK(cr.max_residual() <= 1e-9 * cubic_residual_scale(cr));
}

TEST_CASE("zero coupling factors the cubic") {
  auto sd = SpectralDensity(4.0, 1.0);
  auto cr = characteristic_roots(sd, ModelParams::make(1.5, 0.0, 1.0));
  CHECK(cr.regime == Regime::SmallCoupling);
  CHECK(cr.roots[0] == cdouble(-2.0, 0.0));
  CHECK(std::abs(cr.roots[1] - cdouble(0.0, 1.5)) <= 1e-14);
  CHECK(std::abs(cr.roots[2] - cdouble(0.0, -1.5)) <= 1e-14);
}

TEST_CASE("roots agree with a bisection-plus-deflation oracle") {
  auto sd = SpectralDensity(1.0, 1.0);
  auto mp = ModelParams::from_coupling_rhs(sd, 1.0, 1.5, 1.0);
  auto cr = characteristic_roots(sd, mp);
  auto ref = oracle::cubic_by_bisection(1.0, 1.0, 1.0 - 1.5);
  for (const auto& r : ref) {
    const double d = std::min({std::abs(r - cr.roots[0]), std::abs(r - cr.roots[1]),
                               std::abs(r - cr.roots[2])});
    CHECK(d <= 1e-9);
  }

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lu(-2.0, 2.0);
  for (int i = 0; i < 300; ++i) {
    SpectralDensity s(std::exp(lu(rng)), std::exp(lu(rng)));
    const double omega = std::exp(lu(rng));
    const double g = std::exp(2.0 * lu(rng)) * s.decay_rate() * omega * omega;
    auto c = characteristic_roots(s, ModelParams::from_coupling_rhs(s, omega, g, 1.0));
    auto o = oracle::cubic_by_bisection(c.coefficients[2], c.coefficients[1], c.coefficients[0]);
    const double scale = std::max(1.0, c.max_abs());
    for (const auto& r : o) {
      const double d = std::min({std::abs(r - c.roots[0]), std::abs(r - c.roots[1]),
                                 std::abs(r - c.roots[2])});
      CHECK(d <= 1e-8 * scale);
    }
    CHECK(c.max_residual() <= 1e-9 * cubic_residual_scale(c));
    CHECK(std::abs(c.roots[0] + c.roots[1] + c.roots[2] + s.decay_rate()) <= 1e-9 * scale);
    // Ordering contract
    if (c.all_real()) {
      CHECK(c.roots[0].real() <= c.roots[1].real());
      CHECK(c.roots[1].real() <= c.roots[2].real());
    } else {
      CHECK(c.roots[0].imag() == 0.0);
      CHECK(c.roots[1].imag() > 0.0);
      CHECK(c.roots[2] == std::conj(c.roots[1]));
    }
  }
}

TEST_CASE("a positive root exists exactly beyond the positivity bound") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lu(-1.5, 1.5);
  std::uniform_real_distribution<double> frac(0.0, 2.0);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    SpectralDensity s(std::exp(lu(rng)), std::exp(lu(rng)));
    const double omega = std::exp(lu(rng));
    const double crit = positivity_bound(s, ModelParams::make(omega, 0.0, 1.0)).critical_eps_sq;
    const double f = frac(rng);
    if (std::abs(f - 1.0) < 1e-6) continue;
    auto mp = ModelParams::make(omega, std::sqrt(f * crit), 1.0);
    auto cr = characteristic_roots(s, mp);
    const bool positive_root = std::any_of(cr.roots.begin(), cr.roots.end(), [](cdouble r) {
      return r.imag() == 0.0 && r.real() > 0.0;
    });
    CHECK(positive_root == !positivity_bound(s, mp).positive_definite);
    CHECK((cr.regime == Regime::SmallCoupling) == (f < 1.0));
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("positivity bound: worked example, zero coupling, boundary") {
  auto sd = example_sd();
  auto mp = example_mp();
  auto pb = positivity_bound(sd, mp);
  CHECK(pb.critical_eps_sq * pi / (2 * sd.b()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_FALSE(pb.positive_definite);
  CHECK(positivity_bound(sd, ModelParams::make(1.0, 0.0, 1.0)).positive_definite);

  auto at = ModelParams::make(mp.omega, std::sqrt(pb.critical_eps_sq), 1.0);
  CHECK(positivity_bound(sd, at).positive_definite);
  auto cr = characteristic_roots(sd, at);
  CHECK(cr.regime == Regime::Boundary);
  CHECK(std::abs(cr.roots[2]) <= 1e-12);
}

TEST_CASE("very strong coupling gives a positive root with a complex pair") {
  auto sd = SpectralDensity(1.0, 1.0);
  auto cr = characteristic_roots(sd, ModelParams::from_coupling_rhs(sd, 1.0, 50.0, 1.0));
  CHECK(cr.regime == Regime::LargeCouplingOscillatory);
  CHECK(cr.roots[0].real() > 0.0);
  CHECK(to_string(cr.regime) == "LargeCouplingOscillatory");
}

TEST_CASE("bath discretization") {
  SpectralDensity s11(1, 1);
  auto one = discretize_bath(s11, 1, 1.0);
  CHECK(one.omegas[0] == 0.5);
  CHECK(one.alphas[0] == doctest::Approx(0.5 * std::sqrt(1.0 / 1.25)).epsilon(1e-15));
  CHECK(one.alphas[0] == doctest::Approx(0.4472).epsilon(1e-4));
  CHECK_THROWS_AS(discretize_bath(s11, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(discretize_bath(s11, 3, -1.0), std::invalid_argument);

  SpectralDensity sd(9, 1);
  const double nu_max = 20.0;
  auto b1000 = discretize_bath(sd, 1000, nu_max);
  const double full = j_total_integral(sd) - sd.tail_integral(nu_max);
  CHECK(std::abs(b1000.total_weight() / full - 1.0) <= 1e-4);
  CHECK(b1000.recurrence_time() == doctest::Approx(2 * pi / 0.02));

  // Partial sums track partial integrals; midpoint grid means the error at a
  // grid edge is O(1/n²) and at an arbitrary ν at most one cell's weight.
  for (std::size_t n : {250u, 500u, 1000u}) {
    auto b = discretize_bath(sd, n, nu_max);
    const double delta = nu_max / static_cast<double>(n);
    for (int k = 1; k <= 10; ++k) {
      const double nu = 1.9 * k + 0.013;
      const double exact = j_total_integral(sd) - sd.tail_integral(0.0) + 
                           (sd.tail_integral(0.0) - sd.tail_integral(nu));
      CHECK(std::abs(b.partial_weight(nu) - exact) <= delta * sd(0.0));
    }
  }
}

TEST_CASE("finite kernel") {
  BathDiscretization b{{2.0}, {1.0}};
  CHECK(finite_kernel(b, 0.0) == 0.0);
  CHECK(finite_kernel(b, pi / 4) == doctest::Approx(0.5).epsilon(1e-15));

  // K_N approximates Q' = ∫ νJ(ν) sin(νt) dν; its running integral tracks Q.
  SpectralDensity sd(4, 1);
  auto bath = discretize_bath(sd, 2000, 400.0);
  for (double t : {0.5, 1.0, 2.0}) {
    const double cum = oracle::integrate([&](double x) { return finite_kernel(bath, x); }, 0.0, t, 1e-10);
    CHECK(std::abs(cum - q_kernel(sd, t)) <= 0.01 * q_kernel(sd, t));
  }
}

TEST_CASE("Sylvester check matches the dense determinant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 12;
    BathDiscretization b;
    double w = 0.0;
    for (int k = 0; k < n; ++k) {
      w += u(rng);
      b.omegas.push_back(w);
      b.alphas.push_back(u(rng));
    }
    auto mp = ModelParams::make(u(rng), u(rng), 1.0);
    auto res = sylvester_check(b, mp);
    Eigen::MatrixXd m = oracle::hamiltonian_matrix(mp.omega, mp.epsilon, b.omegas, b.alphas);
    const double det = m.determinant();
    CHECK((det > 0.0) == res.positive_definite);
    CHECK(res.det == doctest::Approx(det).epsilon(1e-9));
    // Positive definite iff all eigenvalues are positive.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    CHECK((es.eigenvalues().minCoeff() > 0.0) == res.positive_definite);
  }
  BathDiscretization b2{{1.0, 2.0}, {0.5, 0.7}};
  CHECK(sylvester_check(b2, ModelParams::make(1.0, 0.0, 1.0)).positive_definite);
  Eigen::MatrixXd m5 = oracle::hamiltonian_matrix(1.0, 3.0, b2.omegas, b2.alphas);
  CHECK(m5.rows() == 5);
  CHECK((m5.determinant() > 0.0) == sylvester_check(b2, ModelParams::make(1.0, 3.0, 1.0)).positive_definite);

  auto sd = example_sd();
  auto big = discretize_bath(sd, 2000, 50.0 * sd.decay_rate());
  auto r = sylvester_check(big, example_mp());
  CHECK_FALSE(r.positive_definite);
  CHECK(std::isfinite(r.log_abs_det));
}

TEST_CASE("response coefficients") {
  auto cr = characteristic_roots(example_sd(), example_mp());
  auto rs = build_response(cr);
  const double l1 = -cr.roots[0].real(), l2 = -cr.roots[1].real(), l3 = cr.roots[2].real();
  const double c3 = (l1 + l2) / ((l2 + l3) * (l1 + l3));
  CHECK(rs.coefficients()[2].real() == doctest::Approx(c3).epsilon(1e-13));
  CHECK(c3 == doctest::Approx(0.511805).epsilon(1e-5));
  CHECK(rs.coefficients()[0].real() == doctest::Approx(0.332396).epsilon(1e-5));
  CHECK(rs.coefficients()[1].real() == doctest::Approx(-0.844201).epsilon(1e-5));

  // Cross-check against a dense solve of the initial-condition system.
  Eigen::Matrix3cd vm;
  for (int i = 0; i < 3; ++i) {
    vm(0, i) = 1.0;
    vm(1, i) = cr.roots[i];
    vm(2, i) = cr.roots[i] * cr.roots[i];
  }
  Eigen::Vector3cd rhs(0.0, 1.0, 0.0);
  Eigen::Vector3cd sol = vm.partialPivLu().solve(rhs);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(sol(i) - rs.coefficients()[i]) <= 1e-12);

  auto v0 = eval_response(rs, 0.0);
  CHECK(std::abs(v0.v) <= 1e-12);
  CHECK(std::abs(v0.v1 - 1.0) <= 1e-12);
  CHECK(std::abs(v0.v2) <= 1e-12);
}

TEST_CASE("free oscillator response") {
  SpectralDensity sd(4, 1);
  const double w = 1.7;
  auto rs = build_response(characteristic_roots(sd, ModelParams::make(w, 0.0, 1.0)));
  CHECK(std::abs(rs.coefficients()[0]) <= 1e-15);
  CHECK(std::abs(rs.coefficients()[1] - 1.0 / cdouble(0.0, 2.0 * w)) <= 1e-14);
  CHECK(eval_response(rs, pi / (2 * w)).v == doctest::Approx(1.0 / w).epsilon(1e-13));
  for (double t = 0.0; t < 20.0; t += 0.37) {
    auto r = rs(t);
    CHECK(std::abs(r.v - std::sin(w * t) / w) <= 1e-13);
    CHECK(std::abs(r.v1 - std::cos(w * t)) <= 1e-13);
    CHECK(std::abs(r.v2 + w * std::sin(w * t)) <= 1e-13);
  }
}

TEST_CASE("random roots: initial conditions and realness") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lu(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    SpectralDensity s(std::exp(lu(rng)), std::exp(lu(rng)));
    const double omega = std::exp(lu(rng));
    const double g = std::exp(2.5 * lu(rng)) * s.decay_rate() * omega * omega;
    auto cr = characteristic_roots(s, ModelParams::from_coupling_rhs(s, omega, g, 1.0));
    ResponseSolution rs = build_response(cr);
    auto v0 = rs(0.0);
    CHECK(std::abs(v0.v) <= 1e-12);
    CHECK(std::abs(v0.v1 - 1.0) <= 1e-12);
    CHECK(std::abs(v0.v2) <= 1e-12);
    for (double t = 0.0; t <= 10.0; t += 0.5) CHECK(rs.imaginary_residue(t) <= 1e-10);
  }
}

TEST_CASE("near-double roots are rejected") {
  // (x + 1)²(x + 3) = x³ + 5x² + 7x + 3
  CubicRoots cr;
  cr.roots = {cdouble(-3, 0), cdouble(-1, 0), cdouble(-1 + 1e-10, 0)};
  CHECK_THROWS_AS(build_response(cr), NearDegenerateRoots);
}

TEST_CASE("Volterra solver: step guard and free oscillator") {
  auto sd = example_sd();
  auto mp = example_mp();
  const double hmax = max_volterra_step(sd, mp);
  CHECK(hmax == doctest::Approx(0.01 / 3.0));
  CHECK_THROWS_AS(solve_volterra(sd, mp, 1.0, 2 * hmax), StepTooLarge);

  auto free = ModelParams::make(2.0, 0.0, 1.0);
  auto s = solve_volterra(sd, free, 10.0, max_volterra_step(sd, free));
  for (std::size_t k = 0; k < s.size(); k += 100) {
    CHECK(std::abs(s.v[k] - std::sin(2.0 * s.t[k]) / 2.0) <= 1e-9);
  }
}

TEST_CASE("Volterra solver converges to the closed form") {
  auto sd = example_sd();
  auto mp = example_mp();
  auto rs = build_response(characteristic_roots(sd, mp));
  const double h = max_volterra_step(sd, mp);
  auto coarse = solve_volterra(sd, mp, 10.0, h);
  auto fine = solve_volterra(sd, mp, 10.0, h / 2);
  double vmax = 0.0, err_c = 0.0, err_r = 0.0;
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    const double exact = rs(coarse.t[k]).v;
    vmax = std::max(vmax, std::abs(exact));
    err_c = std::max(err_c, std::abs(coarse.v[k] - exact));
    // RK4: Richardson with factor 2⁴
    const double rich = (16.0 * fine.v[2 * k] - coarse.v[k]) / 15.0;
    err_r = std::max(err_r, std::abs(rich - exact));
  }
  CHECK(err_c / vmax <= 1e-6);
  CHECK(err_r / vmax <= 1e-8);
  CHECK(eval_response(rs, 5.0).v == doctest::Approx(coarse.v[static_cast<std::size_t>(std::lround(5.0 / h))]).epsilon(1e-6));
}

TEST_CASE("sampled response satisfies the third-order equation") {
  auto sd = example_sd();
  auto mp = example_mp();
  const double kappa = sd.decay_rate(), w2 = mp.omega * mp.omega, g = coupling_rhs(sd, mp);
  double prev = 0.0;
  for (double h : {0.02, 0.01}) {
    // Step guard is for accuracy; the residual test wants larger steps, so use
    // the generic stepper with the exact kernel.
    const std::size_t n = static_cast<std::size_t>(std::lround(8.0 / h)) + 1;
    std::vector<double> kernel(n);
    for (std::size_t k = 0; k < n; ++k) kernel[k] = q_kernel_derivative(sd, h * k);
    auto s = solve_volterra_convolution(kernel, mp, h);
    double res = 0.0, scale = 0.0;
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
      const double v3 = (s.v2[k + 1] - s.v2[k - 1]) / (2 * h);
      res = std::max(res, std::abs(v3 + kappa * s.v2[k] + w2 * s.v1[k] + kappa * w2 * s.v[k] - g * s.v[k]));
      scale = std::max(scale, std::abs(g * s.v[k]));
    }
    CHECK(res / scale <= 50.0 * h * h);
    if (prev > 0.0) CHECK(res / prev <= 0.3);
    prev = res;
  }
}

TEST_CASE("generic convolution stepper is second order against the closed form") {
  auto sd = SpectralDensity(2.0, 1.0);
  auto mp = ModelParams::make(1.3, 0.6, 1.0);
  auto rs = build_response(characteristic_roots(sd, mp));
  std::vector<double> errs;
  for (double h : {0.02, 0.01, 0.005}) {
    const std::size_t n = static_cast<std::size_t>(std::lround(6.0 / h)) + 1;
    std::vector<double> kernel(n);
    for (std::size_t k = 0; k < n; ++k) kernel[k] = q_kernel_derivative(sd, h * k);
    auto s = solve_volterra_convolution(kernel, mp, h);
    double e = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) e = std::max(e, std::abs(s.v[k] - rs(s.t[k]).v));
    errs.push_back(e);
  }
  CHECK(errs[0] <= 1e-3);
  CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.15));
  CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("finite-bath solver") {
  auto sd = example_sd();
  SUBCASE("no coupling") {
    auto bath = discretize_bath(sd, 50, 30.0);
    auto free = ModelParams::make(1.1, 0.0, 1.0);
    auto s = solve_volterra_finite(bath, free, 5.0, max_finite_step(bath, free));
    for (std::size_t k = 0; k < s.size(); k += 50) {
      CHECK(std::abs(s.v[k] - std::sin(1.1 * s.t[k]) / 1.1) <= 1e-5);
    }
    CHECK_THROWS_AS(solve_volterra_finite(bath, free, 5.0, 1.0), StepTooLarge);
  }
  SUBCASE("mode recursion equals the direct convolution") {
    auto bath = discretize_bath(sd, 40, 20.0);
    auto mp = example_mp();
    const double h = max_finite_step(bath, mp);
    auto fast = solve_volterra_finite(bath, mp, 3.0, h);
    std::vector<double> kernel(fast.size());
    for (std::size_t k = 0; k < kernel.size(); ++k) kernel[k] = finite_kernel(bath, h * k);
    auto direct = solve_volterra_convolution(kernel, mp, h);
    for (std::size_t k = 0; k < fast.size(); ++k) {
      CHECK(std::abs(fast.v[k] - direct.v[k]) <= 1e-11 * (1.0 + std::abs(direct.v[k])));
    }
  }
  SUBCASE("large baths approach the continuum response") {
    // With Δ fixed, the error is dominated by the static weight of the cut
    // tail ∫_{ν_max}^∞ J ≈ 1/(bν_max), so it falls like 1/ν_max; one
    // Richardson step in ν_max removes it.
    auto mp = example_mp();
    auto rs = build_response(characteristic_roots(sd, mp));
    std::vector<SampledResponse> runs;
    for (auto [n, nu_max] : {std::pair{1000, 500.0}, {2000, 1000.0}}) {
      auto bath = discretize_bath(sd, n, nu_max);
      runs.push_back(solve_volterra_finite(bath, mp, 5.0, 0.05 / 1000.0));
    }
    double e500 = 0.0, e1000 = 0.0, extrap = 0.0, vmax = 0.0;
    for (std::size_t k = 0; k < runs[0].size(); ++k) {
      const double exact = rs(runs[0].t[k]).v;
      vmax = std::max(vmax, std::abs(exact));
      e500 = std::max(e500, std::abs(runs[0].v[k] - exact));
      e1000 = std::max(e1000, std::abs(runs[1].v[k] - exact));
      extrap = std::max(extrap, std::abs(2.0 * runs[1].v[k] - runs[0].v[k] - exact));
    }
    CHECK(e500 / e1000 == doctest::Approx(2.0).epsilon(0.05));
    CHECK(e1000 / vmax <= 6e-3);
    CHECK(extrap / vmax <= 1e-4);
  }
}
