#include <cmath>
#include <numeric>

#include <boost/random/binomial_distribution.hpp>

#include "criteria.hpp"
#include "doctest.h"
#include "oracles.hpp"

#include "bcm/alarm.hpp"
#include "bcm/outputs.hpp"
#include "bcm/simulate.hpp"

using namespace bcm;

namespace {

Scenario small_scenario() {
  Scenario s = default_scenario();
  s.population = 3000;
  s.tau = 15;
  return s;
}

/// Degenerate posterior: every retained draw equals `params`.
PosteriorSamples point_mass(const ModelSpec& spec, const ParamVector& params, int draws, int tau) {
  PosteriorSamples post;
  post.spec = spec;
  post.params = active_params(spec);
  post.tau = tau;
  ChainSamples ch;
  ch.draws.resize(draws, static_cast<Eigen::Index>(post.params.size()));
  for (std::size_t k = 0; k < post.params.size(); ++k) ch.draws.col(static_cast<Eigen::Index>(k)).setConstant(params[post.params[k]]);
  ch.log_posterior = Eigen::VectorXd::Zero(draws);
  post.chains.push_back(ch);
  return post;
}

struct Fitted {
  Scenario scenario;
  ObservedData data;
  PosteriorSamples samples;
};

const Fitted& small_fit() {
  static const Fitted f = [] {
    Fitted out;
    out.scenario = small_scenario();
    RngStream rng(14, 0);
    out.data = observe(simulate_sihrd(out.scenario, rng));
    const FitContext ctx(out.data, out.scenario.spec, PriorConfig::defaults());
    SamplerConfig c;
    c.chains = 2;
    c.burn_in = 300;
    c.iterations = 600;
    c.thin = 3;
    c.seed = 15;
    c.workers = 1;
    out.samples = run_chains(ctx, c);
    return out;
  }();
  return f;
}

double waic_oracle(const std::vector<std::vector<double>>& ll, double& lppd, double& p) {
  const std::size_t draws = ll.size(), points = ll[0].size();
  lppd = p = 0.0;
  for (std::size_t t = 0; t < points; ++t) {
    double s = 0.0, m = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      s += std::exp(ll[d][t]);
      m += ll[d][t];
    }
    m /= static_cast<double>(draws);
    double v = 0.0;
    for (std::size_t d = 0; d < draws; ++d) v += (ll[d][t] - m) * (ll[d][t] - m);
    lppd += std::log(s / static_cast<double>(draws));
    p += v / static_cast<double>(draws - 1);
  }
  return -2.0 * (lppd - p);
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& ll) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ll.size()), static_cast<Eigen::Index>(ll[0].size()));
  for (std::size_t d = 0; d < ll.size(); ++d)
    for (std::size_t t = 0; t < ll[d].size(); ++t) m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = ll[d][t];
  return m;
}

}  // namespace

TEST_CASE("R0 trivial cases") {
  const Scenario s = small_scenario();
  RngStream rng(1, 0);
  const Trajectory traj = simulate_sihrd(s, rng);
  const auto obs = observe(traj);
  const auto alarm = alarm_series(s.spec, s.params, obs.cases, obs.deaths, s.population);
  ParamVector p = s.params;

  p.set(Param::Beta, 0.0);
  CHECK(r0_sihrd(3, traj, p, alarm) == 0.0);
  CHECK(r0_sihrd(3, traj, s.params, std::vector<double>(alarm.size(), 1.0)) == 0.0);

  // Exits certain after one day: a single term.
  p = s.params;
  p.set(Param::Lambda, 50.0).set(Param::Gamma1, 0.0);
  const auto f = exit_probabilities(p);
  REQUIRE(f.to_hospital + f.infectious_recovery == doctest::Approx(1.0).epsilon(1e-12));
  const double single = static_cast<double>(traj.states[5].susceptible) *
                        -std::expm1(-p[Param::Beta] * (1.0 - alarm[5]) / static_cast<double>(s.population));
  CHECK(r0_sihrd(5, traj, p, alarm) == doctest::Approx(single).epsilon(1e-6));

  CHECK_THROWS_AS(r0_sihrd(s.tau + 1, traj, s.params, alarm), std::out_of_range);

  ModelSpec sir{Compartments::SirIdd, AlarmKind::PowerCases, false, 30, 5};
  ParamVector q;
  q.set(Param::Beta, 0.0).set(Param::K, 0.1).set(Param::W0, 3.0).set(Param::NuIdd, 1.0);
  const Trajectory flat = build_trajectory(initial_state(100, 2, sir), std::vector<TransitionRecord>(4), sir);
  CHECK(r0_sir_idd(0, flat, q, std::vector<double>(5, 0.0)) == 0.0);
}

TEST_CASE("R0 refuses a non-decaying SIHRD stay") {
  const Scenario s = small_scenario();
  const Trajectory traj = build_trajectory(s.initial(), std::vector<TransitionRecord>(3), s.spec);
  ParamVector p = s.params;
  // Exit rates this small round the stay probability to exactly 1.
  p.set(Param::Lambda, 1e-300).set(Param::Gamma1, 1e-300);
  CHECK_THROWS_AS(r0_sihrd(0, traj, p, std::vector<double>(4, 0.0)), std::domain_error);
}

TEST_CASE("SIR R0 sums the infectious ages") {
  ModelSpec sir{Compartments::SirIdd, AlarmKind::None, false, 30, 3};
  ParamVector q;
  q.set(Param::Beta, 2.0).set(Param::W0, 2.0).set(Param::NuIdd, 1.0);
  const Trajectory flat = build_trajectory(initial_state(100, 2, sir), std::vector<TransitionRecord>(4), sir);
  double expected = 0.0;
  for (int w = 1; w <= 3; ++w) expected += 98.0 * -std::expm1(-2.0 * oracle::idd(w, q) / 100.0);
  CHECK(r0_sir_idd(1, flat, q, std::vector<double>(5, 0.0)) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("R0 does not increase when the alarm rises") {
  const Scenario s = small_scenario();
  RngStream rng(2, 0);
  const Trajectory traj = simulate_sihrd(s, rng);
  const auto susceptible = traj.susceptible();
  RngStream u(3, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(susceptible.size());
    for (auto& v : a) v = 0.5 * u.uniform();
    auto raised = a;
    const auto j = static_cast<std::size_t>(u.uniform_int(0, static_cast<std::int64_t>(a.size()) - 1));
    raised[j] += 0.4 * u.uniform();
    const auto base = r0_path(s.spec, susceptible, s.params, a, s.population);
    const auto high = r0_path(s.spec, susceptible, s.params, raised, s.population);
    for (std::size_t t = 0; t <= j; ++t) CHECK(high[t] <= base[t]);
  }
}

TEST_CASE("R0 matches simulated secondary infections") {
  const auto v = criteria::r0_oracle(20000);
  INFO(v.detail);
  CHECK(v.pass);
}

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({7.0}, 0.975) == 7.0);
  CHECK(quantile({1.0, 2.0}, 1.0) == 2.0);
  CHECK_THROWS(quantile({}, 0.5));
  CHECK_THROWS(quantile({1.0}, 1.5));
}

TEST_CASE("WAIC examples") {
  const double l = std::log(0.5);
  const auto one = waic(to_matrix({{l}, {l}}));
  CHECK(one.lppd == doctest::Approx(l));
  CHECK(one.p_waic == 0.0);

  const std::vector<std::vector<double>> same{{-1.0, -2.0, -0.5}, {-1.0, -2.0, -0.5}};
  const auto w = waic(to_matrix(same));
  CHECK(w.p_waic == 0.0);
  CHECK(w.waic == doctest::Approx(7.0));

  const std::vector<std::vector<double>> m{{-1.3, -0.2}, {-2.7, -0.9}, {-0.4, -1.6}};
  double lppd = 0.0, p = 0.0;
  const double expected = waic_oracle(m, lppd, p);
  const auto r = waic(to_matrix(m));
  CHECK(std::abs(r.lppd - lppd) < 1e-10);
  CHECK(std::abs(r.p_waic - p) < 1e-10);
  CHECK(std::abs(r.waic - expected) < 1e-10);
}

TEST_CASE("WAIC refuses non-finite entries and too few draws") {
  Eigen::MatrixXd m(2, 3);
  m << -1, -2, -3, -1, -std::numeric_limits<double>::infinity(), -3;
  try {
    waic(m);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("draw 1") != std::string::npos);
    CHECK(what.find("time 1") != std::string::npos);
  }
  CHECK_THROWS(waic(Eigen::MatrixXd::Constant(1, 3, -1.0)));
}

TEST_CASE("WAIC is invariant to column order and stable under large shifts") {
  RngStream rng(4, 0);
  Eigen::MatrixXd m(200, 12);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = -5.0 + rng.normal();
  const auto base = waic(m);
  Eigen::MatrixXd perm(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) perm.col(j) = m.col(m.cols() - 1 - j);
  CHECK(waic(perm).waic == doctest::Approx(base.waic).epsilon(1e-12));
  // Far below exp's range: a naive log-mean-exp would underflow to -inf.
  const double c = -2000.0;
  const auto shifted = waic((m.array() + c).matrix());
  CHECK(std::isfinite(shifted.lppd));
  CHECK(shifted.lppd - c * static_cast<double>(m.cols()) == doctest::Approx(base.lppd).epsilon(1e-10));
  CHECK(shifted.p_waic == doctest::Approx(base.p_waic).epsilon(1e-10));
}

TEST_CASE("RMSE") {
  CHECK(rmse_r0(std::vector<double>{2.0, 2.0}, 2.0) == 0.0);
  CHECK(rmse_r0(std::vector<double>{1.5}, 2.0) == 0.5);
  CHECK(rmse_r0(std::vector<double>{4.0, 5.0}, 1.0) == doctest::Approx(3.53553).epsilon(1e-5));
  CHECK(rmse_r0(std::vector<double>{4.0, 5.0}, std::vector<double>{1.0, 1.0}) == doctest::Approx(std::sqrt(12.5)));
  CHECK_THROWS(rmse_r0(std::vector<double>{4.0, 5.0}, std::vector<double>{1.0}));
  CHECK_THROWS(rmse_r0(std::vector<double>{}, 1.0));
}

TEST_CASE("pointwise log-likelihood") {
  const Fitted& f = small_fit();
  const auto day = pointwise_loglik(f.samples, f.data, Granularity::Day);
  const auto stream = pointwise_loglik(f.samples, f.data, Granularity::StreamDay);
  const int tau = f.data.tau();
  REQUIRE(day.rows() == f.samples.total_draws());
  REQUIRE(day.cols() == tau);
  REQUIRE(stream.cols() == 3 * tau);
  const auto cached = f.samples.pooled_day_loglik();
  CHECK((day - cached).cwiseAbs().maxCoeff() < 1e-9);
  for (int t = 0; t < tau; ++t) {
    const Eigen::VectorXd sum = stream.col(t) + stream.col(tau + t) + stream.col(2 * tau + t);
    CHECK((sum - day.col(t)).cwiseAbs().maxCoeff() < 1e-9);
  }

  // Row sums are the complete-data log-likelihood of each retained draw.
  const auto& ch = f.samples.chains[0];
  for (long row : {0L, ch.draws.rows() / 2, ch.draws.rows() - 1}) {
    std::vector<TransitionRecord> recs(static_cast<std::size_t>(tau));
    for (int t = 0; t < tau; ++t) {
      auto& r = recs[static_cast<std::size_t>(t)];
      r.infections = ch.infections(row, t);
      r.detected = f.data.cases[static_cast<std::size_t>(t)];
      r.undetected = r.infections - r.detected;
      r.admissions = ch.admissions(row, t);
      r.recoveries_infectious = ch.recoveries_infectious(row, t);
      r.recoveries_hospital = ch.recoveries_hospital(row, t);
      r.deaths = f.data.deaths[static_cast<std::size_t>(t)];
    }
    const AugmentedState st{build_trajectory(f.data.initial, recs, f.scenario.spec), f.samples.draw(row), {}};
    CHECK(day.row(row).sum() == doctest::Approx(loglik(st, f.scenario.spec)).epsilon(1e-10));
  }
  CHECK(parse_granularity(to_string(Granularity::StreamDay)) == Granularity::StreamDay);
}

TEST_CASE("a day without events contributes its no-event probability") {
  ModelSpec spec{Compartments::Sihrd, AlarmKind::None, false, 30, 14};
  ParamVector p;
  p.set(Param::Beta, 0.4).set(Param::Lambda, 0.1).set(Param::Gamma1, 0.2).set(Param::Gamma2, 0.1).set(Param::Phi, 0.05);
  const Trajectory traj = build_trajectory(initial_state(50, 2, spec, 1), std::vector<TransitionRecord>(1), spec);
  const auto f = exit_probabilities(p);
  const double expected = -0.4 * 2.0 / 50.0 * 47.0 + 2.0 * std::log(1.0 - f.to_hospital - f.infectious_recovery) +
                          std::log(1.0 - f.death - f.hospital_recovery);
  const LogFactorial lf(50);
  const auto terms = day_terms(traj, p, spec, std::vector<double>(2, 0.0), lf);
  CHECK(terms[0].total() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("posterior predictive") {
  const Scenario s = small_scenario();
  const RngStream rng(16, 0);

  SUBCASE("SIR with a cases+deaths alarm is refused") {
    ModelSpec sir{Compartments::SirIdd, AlarmKind::MultiCasesDeaths, false, 30, 5};
    ParamVector q;
    q.set(Param::Beta, 0.5).set(Param::K, 0.1).set(Param::Alpha, 0.5).set(Param::W0, 3.0).set(Param::NuIdd, 1.0);
    CHECK_THROWS_AS(posterior_predictive(point_mass(sir, q, 5, 10), initial_state(100, 2, sir), 10, 5, rng),
                    UnsupportedError);
  }
  SUBCASE("one draw gives a band equal to its trajectory") {
    const auto e = posterior_predictive(point_mass(s.spec, s.params, 4, s.tau), s.initial(), s.tau, 1, rng);
    REQUIRE(e.draws() == 1);
    REQUIRE(e.streams == std::vector<std::string>{"cases", "hospitalizations", "deaths"});
    for (std::size_t k = 0; k < e.streams.size(); ++k)
      for (int t = 0; t < s.tau; ++t) {
        const auto v = static_cast<double>(e.members[k](0, t));
        CHECK(e.bands[k].mean[static_cast<std::size_t>(t)] == v);
        CHECK(e.bands[k].lower[static_cast<std::size_t>(t)] == v);
        CHECK(e.bands[k].upper[static_cast<std::size_t>(t)] == v);
      }
  }
  SUBCASE("no transmission gives no cases") {
    Scenario q = s;
    q.initial_infectious = 0;
    const auto e = posterior_predictive(point_mass(q.spec, q.params, 20, q.tau), q.initial(), q.tau, 20, rng);
    CHECK(e.members[0].maxCoeff() == 0);
  }
  SUBCASE("draw count is capped and draws are distinct") {
    const auto e = posterior_predictive(point_mass(s.spec, s.params, 30, s.tau), s.initial(), s.tau, 1000, rng);
    CHECK(e.draws() == 30);
    auto idx = e.draw_indices;
    std::sort(idx.begin(), idx.end());
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    const auto again = posterior_predictive(point_mass(s.spec, s.params, 30, s.tau), s.initial(), s.tau, 1000, rng);
    CHECK(again.members[0] == e.members[0]);
  }
}

TEST_CASE("predictive under the true parameters matches an independent simulator") {
  const Scenario s = small_scenario();
  const auto& p = s.params;
  const auto f = exit_probabilities(p);
  const int tau = s.tau;
  const double n = static_cast<double>(s.population);

  const long reps = 100000;
  std::vector<std::array<double, 3>> sum(static_cast<std::size_t>(tau), {0, 0, 0}), sum2 = sum;
  std::mt19937_64 g(17);
  using Binom = boost::random::binomial_distribution<Count, double>;
  for (long r = 0; r < reps; ++r) {
    Count S = s.population - s.initial_infectious, I = s.initial_infectious, H = 0;
    std::vector<Count> cases, deaths;
    for (int t = 0; t < tau; ++t) {
      const double a = oracle::alarm(s.spec, p, cases, deaths, s.population, t);
      const Count inf = Binom(S, 1.0 - std::exp(-p[Param::Beta] * (1.0 - a) * static_cast<double>(I) / n))(g);
      const Count det = Binom(inf, p[Param::PiDetect])(g);
      const Count adm = Binom(I, f.to_hospital)(g);
      const Count rec = Binom(I - adm, f.infectious_recovery / (1.0 - f.to_hospital))(g);
      const Count die = Binom(H, f.death)(g);
      const Count rh = Binom(H - die, f.hospital_recovery / (1.0 - f.death))(g);
      S -= inf;
      I += inf - adm - rec;
      H += adm - die - rh;
      cases.push_back(det);
      deaths.push_back(die);
      const std::array<double, 3> x{static_cast<double>(det), static_cast<double>(adm), static_cast<double>(die)};
      for (int k = 0; k < 3; ++k) {
        sum[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] += x[static_cast<std::size_t>(k)];
        sum2[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
      }
    }
  }

  const int members = 20000;
  const auto e = predictive_ensemble(std::vector<ParamVector>(members, p), s.spec, s.initial(), tau, RngStream(18, 0));
  int outside = 0;
  for (int k = 0; k < 3; ++k)
    for (int t = 0; t < tau; ++t) {
      const auto& a = sum[static_cast<std::size_t>(t)];
      const auto& b = sum2[static_cast<std::size_t>(t)];
      const double m = a[static_cast<std::size_t>(k)] / reps;
      const double v = b[static_cast<std::size_t>(k)] / reps - m * m;
      const Eigen::VectorXd col = e.members[static_cast<std::size_t>(k)].col(t).cast<double>();
      const double pm = col.mean();
      const double se = std::sqrt(v / reps + v / members);
      if (v == 0.0) {
        CHECK(pm == m);
        continue;
      }
      if (std::abs(pm - m) > 4.0 * se) {
        ++outside;
        MESSAGE("stream " << k << " day " << t << ": predictive " << pm << " vs " << m << " (se " << se << ")");
      }
    }
  CHECK(outside == 0);
}
