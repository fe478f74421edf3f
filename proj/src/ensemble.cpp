#include "bathlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <memory>
#include <thread>

#include "bathlab/density.hpp"
#include "bathlab/error.hpp"

namespace bathlab {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr double kMaxPhaseStep = 0.05;

double max_angular_frequency(const BathDiscretization& bath, const ModelParams& mp) {
  return std::max(mp.omega, bath.max_frequency());
}

// Leapfrog state of the whole system.
struct State {
  double q = 0.0, p = 0.0;
  std::vector<double> qn, pn;
};

struct Rotation {
  double c0 = 1.0, s0 = 0.0;
  std::vector<double> c, s;
};

Rotation make_rotation(const BathDiscretization& bath, const ModelParams& mp, double dt) {
  Rotation r;
  r.c0 = std::cos(mp.omega * dt);
  r.s0 = std::sin(mp.omega * dt);
  r.c.resize(bath.size());
  r.s.resize(bath.size());
  for (std::size_t n = 0; n < bath.size(); ++n) {
    r.c[n] = std::cos(bath.omegas[n] * dt);
    r.s[n] = std::sin(bath.omegas[n] * dt);
  }
  return r;
}

void rotate(State& st, const Rotation& r, const BathDiscretization& bath, double omega) {
  const double q = st.q, p = st.p;
  st.q = r.c0 * q + r.s0 / omega * p;
  st.p = -omega * r.s0 * q + r.c0 * p;
  for (std::size_t n = 0; n < bath.size(); ++n) {
    const double w = bath.omegas[n];
    const double qn = st.qn[n], pn = st.pn[n];
    st.qn[n] = r.c[n] * qn + r.s[n] / w * pn;
    st.pn[n] = -w * r.s[n] * qn + r.c[n] * pn;
  }
}

void kick(State& st, const BathDiscretization& bath, double epsilon, double dt) {
  double sum = 0.0;
  for (std::size_t n = 0; n < bath.size(); ++n) sum += bath.alphas[n] * st.qn[n];
  const double eq = epsilon * st.q;
  st.p -= dt * epsilon * sum;
  for (std::size_t n = 0; n < bath.size(); ++n) st.pn[n] -= dt * eq * bath.alphas[n];
}

void strang_step(State& st, const Rotation& half, const BathDiscretization& bath,
                 const ModelParams& mp, double dt) {
  rotate(st, half, bath, mp.omega);
  kick(st, bath, mp.epsilon, dt);
  rotate(st, half, bath, mp.omega);
}

// Fourth-order triple jump built from three Strang stages.
const double kYoshidaW1 = 1.0 / (2.0 - std::cbrt(2.0));
const double kYoshidaW0 = 1.0 - 2.0 * kYoshidaW1;

struct Stepper {
  Rotation outer, inner;
  double dt;
};

Stepper make_stepper(const BathDiscretization& bath, const ModelParams& mp, double dt) {
  return {make_rotation(bath, mp, 0.5 * kYoshidaW1 * dt),
          make_rotation(bath, mp, 0.5 * kYoshidaW0 * dt), dt};
}

void yoshida_step(State& st, const Stepper& s, const BathDiscretization& bath,
                  const ModelParams& mp) {
  strang_step(st, s.outer, bath, mp, kYoshidaW1 * s.dt);
  strang_step(st, s.inner, bath, mp, kYoshidaW0 * s.dt);
  strang_step(st, s.outer, bath, mp, kYoshidaW1 * s.dt);
}

double energy_scale(const BathDiscretization& bath, const ModelParams& mp, const State& st) {
  double bath_e = 0.0, coupling = 0.0;
  for (std::size_t n = 0; n < bath.size(); ++n) {
    const double w = bath.omegas[n];
    bath_e += 0.5 * (st.pn[n] * st.pn[n] + w * w * st.qn[n] * st.qn[n]);
    coupling += bath.alphas[n] * st.qn[n];
  }
  return 0.5 * (st.p * st.p + mp.omega * mp.omega * st.q * st.q) + bath_e +
         std::abs(mp.epsilon * st.q * coupling);
}

}  // namespace

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed;
  const std::uint64_t a = splitmix64(x);
  x ^= index * 0xd1b54a32d192ed03ULL;
  const std::uint64_t b = splitmix64(x);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

BathInitials sample_bath_initials(const BathDiscretization& bath, double kT,
                                  std::mt19937_64& rng) {
  if (!(kT >= 0.0) || !std::isfinite(kT)) throw std::invalid_argument("kT must be >= 0");
  BathInitials init;
  init.q.assign(bath.size(), 0.0);
  init.p.assign(bath.size(), 0.0);
  if (kT == 0.0) return init;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = std::sqrt(kT);
  for (std::size_t n = 0; n < bath.size(); ++n) {
    init.q[n] = s / bath.omegas[n] * normal(rng);
    init.p[n] = s * normal(rng);
  }
  return init;
}

double forcing(const BathDiscretization& bath, const BathInitials& init, double t) {
  double f = 0.0;
  for (std::size_t n = 0; n < bath.size(); ++n) {
    const double w = bath.omegas[n];
    f -= bath.alphas[n] * (init.q[n] * std::cos(w * t) + init.p[n] / w * std::sin(w * t));
  }
  return f;
}

double total_energy(const BathDiscretization& bath, const ModelParams& mp, double q, double p,
                    const std::vector<double>& qn, const std::vector<double>& pn) {
  double e = 0.5 * (p * p + mp.omega * mp.omega * q * q);
  double coupling = 0.0;
  for (std::size_t n = 0; n < bath.size(); ++n) {
    const double w = bath.omegas[n];
    e += 0.5 * (pn[n] * pn[n] + w * w * qn[n] * qn[n]);
    coupling += bath.alphas[n] * qn[n];
  }
  return e + mp.epsilon * q * coupling;
}

// ------------------------------------------------------------ solution formula

SolutionFormula::SolutionFormula(const BathDiscretization& bath, const ModelParams& mp,
                                 const SampledResponse& v_n, const std::vector<double>& times)
    : times_(times), epsilon_(mp.epsilon), alphas_(bath.alphas), omegas_(bath.omegas) {
  bath.validate();
  mp.validate();
  const double h = v_n.h;
  if (v_n.size() < 2 || !(h > 0.0)) throw GridTooCoarse("solution formula: empty v_N grid");
  if (h * max_angular_frequency(bath, mp) > kMaxPhaseStep * (1.0 + 1e-12)) {
    throw GridTooCoarse("solution formula: h·max ω = " +
                        std::to_string(h * max_angular_frequency(bath, mp)) + " exceeds 0.05");
  }
  std::vector<std::size_t> nodes;
  for (double t : times) {
    if (!(t >= 0.0)) throw std::invalid_argument("solution formula: times must be >= 0");
    const double m = std::round(t / h);
    if (std::abs(m * h - t) > 1e-9 * std::max(1.0, t)) {
      throw GridTooCoarse("solution formula: t = " + std::to_string(t) + " is not a grid node");
    }
    if (m >= static_cast<double>(v_n.size())) {
      throw GridTooCoarse("solution formula: t = " + std::to_string(t) + " is beyond v_N");
    }
    nodes.push_back(static_cast<std::size_t>(m));
  }

  const std::size_t modes = bath.size();
  const std::size_t nt = times.size();
  q_det_.resize(nt);
  p_det_.resize(nt);
  zr_.assign(nt, std::vector<double>(modes));
  zi_.assign(nt, std::vector<double>(modes));
  wr_.assign(nt, std::vector<double>(modes));
  wi_.assign(nt, std::vector<double>(modes));
  for (std::size_t k = 0; k < nt; ++k) {
    const std::size_t m = nodes[k];
    q_det_[k] = mp.q0 * v_n.v1[m] + mp.p0 * v_n.v[m];
    p_det_[k] = mp.q0 * v_n.v2[m] + mp.p0 * v_n.v1[m];
  }

  // Order requested nodes so one sweep over the grid serves all of them.
  std::vector<std::size_t> order(nt);
  for (std::size_t k = 0; k < nt; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return nodes[x] < nodes[y]; });
  const std::size_t last = nt ? nodes[order.back()] : 0;

  for (std::size_t n = 0; n < modes; ++n) {
    const double w = bath.omegas[n];
    const cdouble rot = std::polar(1.0, -w * h);
    cdouble phase(1.0, 0.0);                 // e^{−iω x_j}
    cdouble sv(0.0, 0.0), sw(0.0, 0.0);      // trapezoid partial sums excluding node j
    std::size_t next = 0;
    for (std::size_t j = 0; j <= last; ++j) {
      if (j % 512 == 0) phase = std::polar(1.0, -w * h * static_cast<double>(j));
      const cdouble fv = v_n.v[j] * phase;
      const cdouble fw = v_n.v1[j] * phase;
      while (next < nt && nodes[order[next]] == j) {
        const std::size_t k = order[next];
        // Y = h(½f₀ + f₁ + … + ½f_j); Z = e^{iωt}Y = conj(phase)·Y
        const cdouble y = j == 0 ? cdouble(0.0, 0.0) : h * (sv + 0.5 * fv);
        const cdouble yw = j == 0 ? cdouble(0.0, 0.0) : h * (sw + 0.5 * fw);
        const cdouble z = std::conj(phase) * y;
        const cdouble zw = std::conj(phase) * yw;
        zr_[k][n] = z.real();
        zi_[k][n] = z.imag();
        wr_[k][n] = zw.real();
        wi_[k][n] = zw.imag();
        ++next;
      }
      const double weight = j == 0 ? 0.5 : 1.0;
      sv += weight * fv;
      sw += weight * fw;
      phase *= rot;
    }
  }
}

Trajectory SolutionFormula::operator()(const BathInitials& init) const {
  Trajectory tr;
  tr.t = times_;
  tr.q.resize(times_.size());
  tr.p.resize(times_.size());
  for (std::size_t k = 0; k < times_.size(); ++k) {
    double bq = 0.0, bp = 0.0;
    const auto& zr = zr_[k];
    const auto& zi = zi_[k];
    const auto& wr = wr_[k];
    const auto& wi = wi_[k];
    for (std::size_t n = 0; n < alphas_.size(); ++n) {
      const double cq = alphas_[n] * init.q[n];
      const double cp = alphas_[n] * init.p[n] / omegas_[n];
      bq += cq * zr[n] + cp * zi[n];
      bp += cq * wr[n] + cp * wi[n];
    }
    tr.q[k] = q_det_[k] - epsilon_ * bq;
    tr.p[k] = p_det_[k] - epsilon_ * bp;
  }
  return tr;
}

std::vector<CovarianceTriple> SolutionFormula::gibbs_covariance(double kT) const {
  std::vector<CovarianceTriple> out;
  for (std::size_t k = 0; k < times_.size(); ++k) {
    double a = 0.0, b = 0.0, c = 0.0;
    for (std::size_t n = 0; n < alphas_.size(); ++n) {
      const double w = alphas_[n] * alphas_[n] / (omegas_[n] * omegas_[n]);
      a += w * (zr_[k][n] * zr_[k][n] + zi_[k][n] * zi_[k][n]);
      b += w * (zr_[k][n] * wr_[k][n] + zi_[k][n] * wi_[k][n]);
      c += w * (wr_[k][n] * wr_[k][n] + wi_[k][n] * wi_[k][n]);
    }
    const double s = epsilon_ * epsilon_ * kT;
    out.push_back(CovarianceTriple::plain(times_[k], s * a, s * b, s * c));
  }
  return out;
}

Trajectory trajectory_solution_formula(const BathDiscretization& bath, const ModelParams& mp,
                                       const BathInitials& init, const SampledResponse& v_n,
                                       const std::vector<double>& times) {
  return SolutionFormula(bath, mp, v_n, times)(init);
}

// ------------------------------------------------------------------ symplectic

Trajectory trajectory_symplectic(const BathDiscretization& bath, const ModelParams& mp,
                                 const BathInitials& init, const std::vector<double>& times,
                                 double h) {
  bath.validate();
  mp.validate();
  if (!(h > 0.0)) throw std::invalid_argument("trajectory_symplectic: h must be > 0");
  if (h * max_angular_frequency(bath, mp) > kMaxPhaseStep * (1.0 + 1e-12)) {
    throw StepTooLarge("trajectory_symplectic: h·max ω = " +
                       std::to_string(h * max_angular_frequency(bath, mp)) + " exceeds 0.05");
  }
  if (init.q.size() != bath.size() || init.p.size() != bath.size()) {
    throw std::invalid_argument("trajectory_symplectic: initials do not match the bath");
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || (k > 0 && times[k] < times[k - 1])) {
      throw std::invalid_argument("trajectory_symplectic: times must be nonnegative and sorted");
    }
  }

  State st;
  st.q = mp.q0;
  st.p = mp.p0;
  st.qn = init.q;
  st.pn = init.p;
  const double e0 = total_energy(bath, mp, st.q, st.p, st.qn, st.pn);
  const Stepper stepper = make_stepper(bath, mp, h);

  Trajectory tr;
  tr.t = times;
  tr.q.resize(times.size());
  tr.p.resize(times.size());
  std::size_t done = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto target = static_cast<std::size_t>(std::floor(times[k] / h + 1e-9));
    for (; done < target; ++done) yoshida_step(st, stepper, bath, mp);
    const double rem = times[k] - h * static_cast<double>(done);
    const State* out = &st;
    State tail;
    if (rem > 1e-12 * h) {
      tail = st;
      yoshida_step(tail, make_stepper(bath, mp, rem), bath, mp);
      out = &tail;
    }
    tr.q[k] = out->q;
    tr.p[k] = out->p;
    const double e = total_energy(bath, mp, out->q, out->p, out->qn, out->pn);
    const double scale = std::max(energy_scale(bath, mp, *out), std::abs(e0));
    if (scale > 0.0) tr.energy_drift = std::max(tr.energy_drift, std::abs(e - e0) / scale);
  }
  return tr;
}

// -------------------------------------------------------------------- ensemble

std::string_view to_string(Method m) noexcept {
  return m == Method::SolutionFormula ? "SolutionFormula" : "Symplectic";
}

void EnsembleConfig::validate() const {
  bath.validate();
  mp.validate();
  if (sample_count < 2) throw std::invalid_argument("ensemble: sample_count must be >= 2");
  if (times.empty()) throw std::invalid_argument("ensemble: times must be nonempty");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || !std::isfinite(times[k])) {
      throw std::invalid_argument("ensemble: times must be finite and >= 0");
    }
    if (k > 0 && times[k] < times[k - 1]) {
      throw std::invalid_argument("ensemble: times must be nondecreasing");
    }
  }
  if (!(step >= 0.0)) throw std::invalid_argument("ensemble: step must be >= 0");
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("BATHLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Largest step ≤ h_max that puts every requested time on the grid.
double aligned_step(const std::vector<double>& times, double h_max) {
  const double t_max = times.back();
  if (t_max <= 0.0) return h_max;
  const auto m0 = static_cast<std::size_t>(std::ceil(t_max / h_max));
  for (std::size_t m = m0; m < m0 + 200000; ++m) {
    const double h = t_max / static_cast<double>(m);
    bool ok = true;
    for (double t : times) {
      const double k = t / h;
      if (std::abs(k - std::round(k)) > 1e-6) {
        ok = false;
        break;
      }
    }
    if (ok) return h;
  }
  throw GridTooCoarse("ensemble: no common grid step puts all requested times on nodes");
}

}  // namespace

EnsembleResult run_ensemble(const EnsembleConfig& cfg) {
  cfg.validate();
  const double h_max = cfg.step > 0.0 ? cfg.step : max_finite_step(cfg.bath, cfg.mp);
  const std::size_t nt = cfg.times.size();
  const std::size_t ns = cfg.sample_count;

  std::unique_ptr<SolutionFormula> formula;
  double h = h_max;
  if (cfg.method == Method::SolutionFormula) {
    h = aligned_step(cfg.times, h_max);
    const double t_end = std::max(cfg.times.back(), h);
    const auto v_n = solve_volterra_finite(cfg.bath, cfg.mp, t_end, h);
    formula = std::make_unique<SolutionFormula>(cfg.bath, cfg.mp, v_n, cfg.times);
  }

  std::vector<double> qs(ns * nt), ps(ns * nt), drift(ns, 0.0);
  auto run_one = [&](std::size_t i) {
    auto rng = sample_stream(cfg.seed, i);
    const auto init = sample_bath_initials(cfg.bath, cfg.mp.kT, rng);
    const Trajectory tr = formula ? (*formula)(init)
                                  : trajectory_symplectic(cfg.bath, cfg.mp, init, cfg.times, h);
    for (std::size_t k = 0; k < nt; ++k) {
      qs[i * nt + k] = tr.q[k];
      ps[i * nt + k] = tr.p[k];
    }
    drift[i] = tr.energy_drift;
  };

  const unsigned workers = std::max(
      1u, std::min<unsigned>(cfg.threads ? cfg.threads : default_thread_count(),
                             static_cast<unsigned>(std::min<std::size_t>(ns, 1u << 16))));
  if (workers == 1) {
    for (std::size_t i = 0; i < ns; ++i) run_one(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < ns; i += workers) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EnsembleResult res;
  res.sample_count = ns;
  res.seed = cfg.seed;
  res.method = cfg.method;
  for (double d : drift) res.max_energy_drift = std::max(res.max_energy_drift, d);

  const double n = static_cast<double>(ns);
  for (std::size_t k = 0; k < nt; ++k) {
    double mq = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      mq += qs[i * nt + k];
      mp += ps[i * nt + k];
    }
    mq /= n;
    mp /= n;
    double q2 = 0, p2 = 0, qp = 0, q3 = 0, p3 = 0, q4 = 0, p4 = 0, q2p2 = 0;
    for (std::size_t i = 0; i < ns; ++i) {
      const double dq = qs[i * nt + k] - mq;
      const double dp = ps[i * nt + k] - mp;
      q2 += dq * dq;
      p2 += dp * dp;
      qp += dq * dp;
      q3 += dq * dq * dq;
      p3 += dp * dp * dp;
      q4 += dq * dq * dq * dq;
      p4 += dp * dp * dp * dp;
      q2p2 += dq * dq * dp * dp;
    }
    // Biased (1/n) central moments for the standard errors and shape statistics.
    const double vq = q2 / n, vp = p2 / n, cqp = qp / n;
    TimeMoments tm{};
    tm.t = cfg.times[k];
    tm.mean_q = mq;
    tm.mean_p = mp;
    tm.var_q = q2 / (n - 1.0);
    tm.var_p = p2 / (n - 1.0);
    tm.cov_qp = qp / (n - 1.0);
    tm.se_mean_q = std::sqrt(tm.var_q / n);
    tm.se_mean_p = std::sqrt(tm.var_p / n);
    tm.se_var_q = std::sqrt(std::max(q4 / n - vq * vq, 0.0) / n);
    tm.se_var_p = std::sqrt(std::max(p4 / n - vp * vp, 0.0) / n);
    tm.se_cov_qp = std::sqrt(std::max(q2p2 / n - cqp * cqp, 0.0) / n);
    tm.skew_q = vq > 0.0 ? (q3 / n) / std::pow(vq, 1.5) : 0.0;
    tm.skew_p = vp > 0.0 ? (p3 / n) / std::pow(vp, 1.5) : 0.0;
    tm.exkurt_q = vq > 0.0 ? (q4 / n) / (vq * vq) - 3.0 : 0.0;
    tm.exkurt_p = vp > 0.0 ? (p4 / n) / (vp * vp) - 3.0 : 0.0;
    res.moments.push_back(tm);
  }
  return res;
}

RunawayFit deterministic_runaway(const BathDiscretization& bath, const ModelParams& mp,
                                 double t_max, double h, std::size_t samples) {
  if (!(t_max > 0.0)) throw std::invalid_argument("deterministic_runaway: t_max must be > 0");
  if (samples < 10) throw std::invalid_argument("deterministic_runaway: need >= 10 samples");
  if (h <= 0.0) h = max_finite_step(bath, mp);
  BathInitials rest;
  rest.q.assign(bath.size(), 0.0);
  rest.p.assign(bath.size(), 0.0);
  std::vector<double> times(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    times[k] = t_max * static_cast<double>(k + 1) / static_cast<double>(samples);
  }
  const auto tr = trajectory_symplectic(bath, mp, rest, times, h);

  std::vector<double> ft, fv;
  for (std::size_t k = 0; k < samples; ++k) {
    if (times[k] >= 0.5 * t_max) {
      ft.push_back(times[k]);
      fv.push_back(std::abs(tr.q[k]));
    }
  }
  const auto fit = decay_rate_fit(ft, fv);
  return {fit.rate, fit.intercept, fit.r_squared, tr.t, tr.q};
}

}  // namespace bathlab
