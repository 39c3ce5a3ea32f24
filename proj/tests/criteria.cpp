#include "criteria.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "bcm/alarm.hpp"
#include "bcm/cli.hpp"
#include "bcm/likelihood.hpp"
#include "bcm/mcmc.hpp"
#include "bcm/outputs.hpp"
#include "bcm/simulate.hpp"
#include "oracles.hpp"

namespace criteria {

using namespace bcm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double library_loglik(const oracle::Instance& x) {
  const Trajectory traj = build_trajectory(x.initial, x.records, x.spec);
  if (x.spec.compartments == Compartments::Sihrd) return loglik_sihrd({traj, x.params, {}}, x.spec);
  if (alarm_uses_deaths(x.spec.alarm)) return loglik({traj, x.params, x.alarm_deaths}, x.spec);
  return loglik_sir_idd(traj, x.params, x.spec);
}

}  // namespace

Verdict likelihood_oracle(int instances_per_family) {
  const auto start = Clock::now();
  double worst = 0.0;
  int finite = 0, mismatches = 0;
  for (auto c : {Compartments::Sihrd, Compartments::SirIdd}) {
    for (int i = 0; i < instances_per_family; ++i) {
      const auto x = oracle::random_instance(c, 1000u * static_cast<unsigned>(c) + static_cast<unsigned>(i));
      const double lib = library_loglik(x), ref = oracle::loglik(x);
      if (std::isinf(ref) && lib == ref) continue;
      ++finite;
      const double diff = std::abs(lib - ref);
      if (!(diff <= 1e-9)) ++mismatches;
      worst = std::max(worst, std::isnan(diff) ? INFINITY : diff);
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 1.0,
          fmt("%d instances (%d finite), max |diff| %.2e, %d mismatches, %.3fs", 2 * instances_per_family, finite,
              worst, mismatches, secs)};
}

Verdict likelihood_normalization() {
  const auto start = Clock::now();
  double worst = 0.0;
  int cases = 0;
  ParamVector p;
  p.set(Param::Beta, 1.3).set(Param::K, 0.7).set(Param::Alpha, 0.4).set(Param::Lambda, 0.3).set(Param::Gamma1, 0.45);
  p.set(Param::Gamma2, 0.2).set(Param::Phi, 0.35).set(Param::PiDetect, 0.3).set(Param::W0, 2.0).set(Param::NuIdd, 0.8);

  struct SihrdCase {
    Count s, i, h;
    bool undetected;
  };
  for (const auto& c : {SihrdCase{12, 4, 3, true}, SihrdCase{12, 2, 1, false}, SihrdCase{7, 3, 2, true},
                        SihrdCase{0, 2, 2, true}, SihrdCase{1, 1, 0, true}}) {
    ModelSpec spec{Compartments::Sihrd, AlarmKind::MultiCasesDeaths, c.undetected, 3, 14};
    const auto init = initial_state(c.s + c.i + c.h, c.i, spec, c.h);
    double total = 0.0;
    for (Count inf = 0; inf <= c.s; ++inf)
      for (Count det = c.undetected ? 0 : inf; det <= inf; ++det)
        for (Count adm = 0; adm <= c.i; ++adm)
          for (Count ri = 0; adm + ri <= c.i; ++ri)
            for (Count d = 0; d <= c.h; ++d)
              for (Count rh = 0; d + rh <= c.h; ++rh) {
                TransitionRecord r{0, inf, det, inf - det, adm, ri, rh, d};
                const auto traj = build_trajectory(init, std::span(&r, 1), spec);
                total += std::exp(loglik_sihrd({traj, p, {}}, spec));
              }
    worst = std::max(worst, std::abs(total - 1.0));
    ++cases;
  }
  struct SirCase {
    Count s, i;
    int period;
    bool undetected;
  };
  for (const auto& c : {SirCase{12, 3, 2, true}, SirCase{12, 1, 1, false}, SirCase{5, 2, 3, true}, SirCase{0, 1, 2, true}}) {
    ModelSpec spec{Compartments::SirIdd, AlarmKind::PowerCases, c.undetected, 3, c.period};
    const auto init = initial_state(c.s + c.i, c.i, spec);
    double total = 0.0;
    for (Count inf = 0; inf <= c.s; ++inf)
      for (Count det = c.undetected ? 0 : inf; det <= inf; ++det) {
        TransitionRecord r{0, inf, det, inf - det, 0, 0, 0, 0};
        total += std::exp(loglik_sir_idd(build_trajectory(init, std::span(&r, 1), spec), p, spec));
      }
    worst = std::max(worst, std::abs(total - 1.0));
    ++cases;
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-10 && secs < 1.0, fmt("%d one-step models, max |sum - 1| %.2e, %.3fs", cases, worst, secs)};
}

Verdict r0_oracle(long replicates) {
  const auto start = Clock::now();
  bool ok = true;
  std::ostringstream detail;
  double worst = 0.0;

  Scenario sihrd = default_scenario();
  sihrd.population = 100000;
  RngStream rng_a(11, 0);
  const Trajectory ta = simulate_sihrd(sihrd, rng_a);
  const auto alarm_a = alarm_series(sihrd.spec, sihrd.params, ta.detected(), ta.deaths(), ta.population);

  Scenario sir;
  sir.population = 100000;
  sir.tau = 40;
  sir.spec = ModelSpec{Compartments::SirIdd, AlarmKind::PowerCases, true, 30, 14};
  sir.params.set(Param::Beta, 0.35).set(Param::K, 0.02).set(Param::PiDetect, 0.25).set(Param::W0, 7.0).set(Param::NuIdd, 1.0);
  RngStream rng_b(12, 0);
  const Trajectory tb = simulate_sir_idd(sir, rng_b);
  const auto alarm_b = alarm_series(sir.spec, sir.params, tb.detected(), {}, tb.population);

  for (int family = 0; family < 2; ++family) {
    const Trajectory& traj = family == 0 ? ta : tb;
    const auto& params = family == 0 ? sihrd.params : sir.params;
    oracle::SecondaryInfections mc;
    mc.susceptible = traj.susceptible();
    mc.alarm = family == 0 ? alarm_a : alarm_b;
    mc.beta = params[Param::Beta];
    mc.population = static_cast<double>(traj.population);
    mc.params = params;
    if (family == 0) {
      mc.leave = (1.0 - std::exp(-params[Param::Lambda])) + (1.0 - std::exp(-params[Param::Gamma1]));
    } else {
      mc.period = sir.spec.infectious_period;
    }
    for (int t : {0, traj.tau() / 2, traj.tau()}) {
      const double analytic = family == 0 ? r0_sihrd(t, traj, params, mc.alarm) : r0_sir_idd(t, traj, params, mc.alarm);
      const auto [mean, se] = mc.estimate(t, replicates, 100 + static_cast<unsigned>(t) + 1000u * static_cast<unsigned>(family));
      const double rel = std::abs(analytic - mean) / mean;
      worst = std::max(worst, rel);
      ok = ok && rel <= 0.02;
      detail << (family == 0 ? " SIHRD" : " SIR") << " t=" << t << " " << fmt("%.4f/%.4f(se %.4f)", analytic, mean, se);
    }
  }
  const double secs = seconds_since(start);
  return {ok && secs < 60.0, fmt("max rel err %.4f, %.1fs;", worst, secs) + detail.str()};
}

// ---------------------------------------------------------------------------
// Enumerable toys for the latent kernels.

namespace {

struct Slot {
  int day;
  Count TransitionRecord::*field;
  Series series;
  Count lo, hi;
};

struct Toy {
  std::string name;
  oracle::Instance base;  // records carry the observed counts
  std::vector<Slot> slots;
  bool exits = false, undetected = false;
};

ObservedData toy_data(const oracle::Instance& x) {
  ObservedData d;
  d.population = x.initial.total();
  d.initial = x.initial;
  for (const auto& r : x.records) {
    d.cases.push_back(r.detected);
    d.hospitalizations.push_back(r.admissions);
    d.hospitalization_missing.push_back(false);
    d.deaths.push_back(r.deaths);
  }
  return d;
}

oracle::Distribution enumerate(const Toy& toy) {
  oracle::Distribution out;
  std::vector<Count> key(toy.slots.size());
  std::function<void(std::size_t, oracle::Instance&)> rec = [&](std::size_t k, oracle::Instance& x) {
    if (k == toy.slots.size()) {
      const double ll = oracle::loglik(x);
      if (std::isfinite(ll)) out[key] = std::exp(ll);
      return;
    }
    const auto& s = toy.slots[k];
    for (Count v = s.lo; v <= s.hi; ++v) {
      auto& r = x.records[static_cast<std::size_t>(s.day)];
      r.*(s.field) = v;
      r.undetected = r.infections - r.detected;
      key[k] = v;
      rec(k + 1, x);
    }
  };
  oracle::Instance x = toy.base;
  rec(0, x);
  oracle::normalize(out);
  return out;
}

std::pair<double, std::size_t> run_toy(const Toy& toy, long sweeps, std::uint64_t seed) {
  const auto exact = enumerate(toy);
  // Start from the mode.
  auto mode = exact.begin();
  for (auto it = exact.begin(); it != exact.end(); ++it)
    if (it->second > mode->second) mode = it;

  const ObservedData data = toy_data(toy.base);
  const FitContext ctx(data, toy.base.spec, PriorConfig::defaults());
  LatentSeries latent;
  latent.infections = data.cases;
  latent.admissions = data.hospitalizations;
  latent.recoveries_infectious.assign(data.cases.size(), 0);
  latent.recoveries_hospital.assign(data.cases.size(), 0);
  for (std::size_t k = 0; k < toy.slots.size(); ++k) {
    const auto& s = toy.slots[k];
    auto& series = s.series == Series::Infections             ? latent.infections
                   : s.series == Series::RecoveriesInfectious ? latent.recoveries_infectious
                                                              : latent.recoveries_hospital;
    series[static_cast<std::size_t>(s.day)] = mode->first[k];
  }
  ChainState state(ctx, toy.base.params, latent);
  SamplerConfig config;
  Tuning tuning = make_tuning(state, config);
  tuning.frozen = true;
  AcceptanceLedger ledger;
  RngStream rng(seed, 0);

  oracle::Distribution empirical;
  std::vector<Count> key(toy.slots.size());
  for (long i = 0; i < sweeps; ++i) {
    if (toy.exits) update_latent_exits(state, tuning, rng, ledger);
    if (toy.undetected) update_undetected(state, tuning, rng, ledger);
    for (std::size_t k = 0; k < toy.slots.size(); ++k) key[k] = state.get(toy.slots[k].series, toy.slots[k].day);
    empirical[key] += 1.0;
  }
  oracle::normalize(empirical);
  return {oracle::total_variation(empirical, exact), exact.size()};
}

ParamVector toy_params() {
  ParamVector p;
  p.set(Param::Beta, 1.2).set(Param::K, 0.5).set(Param::Alpha, 0.5).set(Param::Lambda, 0.2).set(Param::Gamma1, 0.3);
  p.set(Param::Gamma2, 0.25).set(Param::Phi, 0.15).set(Param::PiDetect, 0.4).set(Param::W0, 1.5).set(Param::NuIdd, 1.0);
  return p;
}

TransitionRecord observed_day(Count cases, Count admissions, Count deaths) {
  TransitionRecord r;
  r.infections = r.detected = cases;
  r.admissions = admissions;
  r.deaths = deaths;
  return r;
}

std::vector<Toy> toys() {
  using TR = TransitionRecord;
  std::vector<Toy> out;
  {
    Toy t;
    t.name = "exits";
    t.base.spec = ModelSpec{Compartments::Sihrd, AlarmKind::None, false, 3, 14};
    t.base.initial = initial_state(30, 4, t.base.spec, 2);
    t.base.records = {observed_day(1, 1, 0), observed_day(1, 1, 1)};
    t.base.params = toy_params();
    t.slots = {{0, &TR::recoveries_infectious, Series::RecoveriesInfectious, 0, 4},
               {1, &TR::recoveries_infectious, Series::RecoveriesInfectious, 0, 6},
               {0, &TR::recoveries_hospital, Series::RecoveriesHospital, 0, 2},
               {1, &TR::recoveries_hospital, Series::RecoveriesHospital, 0, 4}};
    t.exits = true;
    out.push_back(t);
  }
  {
    Toy t;
    t.name = "undetected, one day";
    t.base.spec = ModelSpec{Compartments::Sihrd, AlarmKind::None, true, 3, 14};
    t.base.initial = initial_state(9, 2, t.base.spec, 1);
    t.base.records = {observed_day(1, 0, 0)};
    t.base.params = toy_params();
    t.base.params.set(Param::Beta, 1.5);
    t.slots = {{0, &TR::infections, Series::Infections, 1, 6}};
    t.undetected = true;
    out.push_back(t);
  }
  {
    Toy t;
    t.name = "undetected, SIR";
    t.base.spec = ModelSpec{Compartments::SirIdd, AlarmKind::PowerCases, true, 2, 2};
    t.base.initial = initial_state(10, 2, t.base.spec);
    t.base.records = {observed_day(1, 0, 0), observed_day(1, 0, 0), observed_day(0, 0, 0)};
    t.base.params = toy_params();
    t.base.params.set(Param::Beta, 1.5);
    t.slots = {{0, &TR::infections, Series::Infections, 1, 8},
               {1, &TR::infections, Series::Infections, 1, 8},
               {2, &TR::infections, Series::Infections, 0, 8}};
    t.undetected = true;
    out.push_back(t);
  }
  {
    Toy t;
    t.name = "exits and undetected";
    t.base.spec = ModelSpec{Compartments::Sihrd, AlarmKind::MultiCasesDeaths, true, 2, 14};
    t.base.initial = initial_state(12, 3, t.base.spec, 1);
    t.base.records = {observed_day(1, 1, 0), observed_day(0, 1, 1)};
    t.base.params = toy_params();
    t.slots = {{0, &TR::infections, Series::Infections, 1, 8},
               {1, &TR::infections, Series::Infections, 0, 8},
               {0, &TR::recoveries_infectious, Series::RecoveriesInfectious, 0, 3},
               {1, &TR::recoveries_infectious, Series::RecoveriesInfectious, 0, 11},
               {0, &TR::recoveries_hospital, Series::RecoveriesHospital, 0, 1},
               {1, &TR::recoveries_hospital, Series::RecoveriesHospital, 0, 2}};
    t.exits = t.undetected = true;
    out.push_back(t);
  }
  return out;
}

}  // namespace

Verdict sampler_stationarity(long sweeps) {
  const auto start = Clock::now();
  bool ok = true;
  std::ostringstream detail;
  std::uint64_t seed = 41;
  for (const auto& toy : toys()) {
    const auto [tv, states] = run_toy(toy, sweeps, seed++);
    ok = ok && tv <= 0.02 && states <= 5000;
    detail << " " << toy.name << ": " << states << " states, TV " << fmt("%.4f", tv) << ";";
  }
  const double secs = seconds_since(start);
  return {ok && secs < 300.0, fmt("%ld sweeps, %.1fs;", sweeps, secs) + detail.str()};
}

// ---------------------------------------------------------------------------

namespace {

// Batch-means standard error of the mean with floor(sqrt(n)) batches.
double batch_se(const std::vector<double>& x) {
  const auto n = x.size();
  const auto b = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const std::size_t len = n / b;
  double grand = 0.0;
  std::vector<double> means(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < len; ++j) means[i] += x[i * len + j];
    means[i] /= static_cast<double>(len);
    grand += means[i];
  }
  grand /= static_cast<double>(b);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return std::sqrt(static_cast<double>(len) * ss / static_cast<double>(b - 1) / static_cast<double>(n));
}

}  // namespace

Verdict prior_recovery(long iterations) {
  const auto start = Clock::now();
  Scenario sc = default_scenario();
  sc.population = 2000;
  sc.tau = 12;
  RngStream sim(3, 0);
  const ObservedData data = observe(simulate_sihrd(sc, sim));

  // Closed-form moments, written out rather than taken from the library.
  struct Target {
    Param param;
    Prior prior;
    double mean, variance;
  };
  const std::vector<Target> targets{
      {Param::Beta, GammaPrior{4.0, 8.0}, 0.5, 4.0 / 64.0},
      {Param::K, GammaPrior{3.0, 3000.0}, 1e-3, 3.0 / 9e6},
      {Param::Alpha, UniformPrior{0.0, 1.0}, 0.5, 1.0 / 12.0},
      {Param::Lambda, GammaPrior{5.0, 100.0}, 0.05, 5.0 / 1e4},
      {Param::Gamma1, GammaPrior{5.0, 20.0}, 0.25, 5.0 / 400.0},
      {Param::Gamma2, GammaPrior{5.0, 30.0}, 1.0 / 6.0, 5.0 / 900.0},
      {Param::Phi, GammaPrior{5.0, 50.0}, 0.1, 5.0 / 2500.0},
      {Param::PiDetect, BetaPrior{25.0, 75.0}, 0.25, 25.0 * 75.0 / (100.0 * 100.0 * 101.0)},
  };
  PriorConfig priors = PriorConfig::defaults();
  for (const auto& t : targets) priors.set(t.param, t.prior);
  const FitContext ctx(data, sc.spec, priors, 0.0);

  SamplerConfig config;
  config.chains = 2;
  config.burn_in = 5000;
  config.iterations = iterations;
  config.thin = 1;
  config.seed = 17;
  config.store_latent = false;
  const auto post = run_chains(ctx, config);

  bool ok = true;
  std::ostringstream detail;
  for (const auto& t : targets) {
    double se_mean2 = 0.0, se_var2 = 0.0, mean = 0.0, var = 0.0;
    const auto chains = post.chain_values(t.param);
    for (const auto& c : chains) {
      std::vector<double> sq(c.size());
      for (std::size_t i = 0; i < c.size(); ++i) sq[i] = (c[i] - t.mean) * (c[i] - t.mean);
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        m += c[i];
        v += sq[i];
      }
      mean += m / static_cast<double>(c.size());
      var += v / static_cast<double>(c.size());
      se_mean2 += std::pow(batch_se(c), 2);
      se_var2 += std::pow(batch_se(sq), 2);
    }
    const double n = static_cast<double>(chains.size());
    mean /= n;
    var /= n;
    const double z_mean = (mean - t.mean) / (std::sqrt(se_mean2) / n);
    const double z_var = (var - t.variance) / (std::sqrt(se_var2) / n);
    ok = ok && std::abs(z_mean) <= 3.0 && std::abs(z_var) <= 3.0;
    detail << " " << param_name(t.param) << fmt(" z %.2f/%.2f", z_mean, z_var);
  }
  const double secs = seconds_since(start);
  return {ok && secs < 120.0, fmt("%.1fs;", secs) + detail.str()};
}

// ---------------------------------------------------------------------------

StudyResult acceptance_study(bool verbose) {
  Scenario base = default_scenario();
  base.population = 100000;
  StudyOptions options;
  options.alpha_values = default_alpha_values();
  options.replicates = 10;
  for (const char* name : {kCorrectModel, kCasesOnlyModel, kSirCasesModel, kSirMultiModel})
    options.models.push_back(parse_model_name(name, base.spec));
  // The misspecified models are only needed on the high-death-importance scenario.
  options.include = [](int alpha_index, const std::string& model) { return alpha_index == 2 || model == kCorrectModel; };
  options.sampler.chains = 3;
  options.sampler.burn_in = 10000;
  options.sampler.iterations = 30000;
  options.sampler.thin = 10;
  if (verbose)
    options.on_fit = [](const StudyFit& f) {
      std::cerr << fmt("  alpha %.2f rep %d %-26s beta %.3f k %.2e alpha %s max R-hat %.3f WAIC %.1f (%.0fs)\n", f.alpha,
                       f.replicate, f.model.c_str(), f.beta->mean, f.k ? f.k->mean : NAN,
                       f.alpha_post ? fmt("%.3f", f.alpha_post->mean).c_str() : "-", f.max_rhat, f.waic, f.seconds);
    };
  return run_study(base, options, RngStream(7, 0));
}

namespace {

std::vector<const StudyFit*> select(const StudyResult& s, int alpha_index, const std::string& model) {
  std::vector<const StudyFit*> out;
  for (const auto& f : s.fits)
    if (f.alpha_index == alpha_index && f.model == model) out.push_back(&f);
  return out;
}

const ScenarioRun& run_of(const StudyResult& s, const StudyFit& f) {
  for (const auto& r : s.runs)
    if (r.alpha_index == f.alpha_index && r.replicate == f.replicate) return r;
  throw std::logic_error("fit without a run");
}

}  // namespace

Verdict parameter_recovery(const StudyResult& study) {
  bool ok = true;
  std::ostringstream detail;
  for (int a = 0; a < 3; ++a) {
    const auto fits = select(study, a, kCorrectModel);
    int beta = 0, k = 0, alpha = 0, rhat = 0;
    double worst = 0.0, truth_alpha = NAN;
    for (const auto* f : fits) {
      const auto& truth = run_of(study, *f).scenario.params;
      truth_alpha = truth[Param::Alpha];
      beta += f->beta->covers(truth[Param::Beta]);
      k += f->k->covers(truth[Param::K]);
      alpha += f->alpha_post->covers(truth_alpha);
      rhat += f->max_rhat < 1.1;
      worst = std::max(worst, std::isnan(f->max_rhat) ? INFINITY : f->max_rhat);
    }
    const int n = static_cast<int>(fits.size());
    ok = ok && n == 10 && beta >= 8 && k >= 8 && alpha >= 8 && rhat == n;
    detail << fmt(" alpha=%.2f: cover beta %d/%d k %d/%d alpha %d/%d, max R-hat %.3f;", truth_alpha, beta, n, k, n, alpha,
                  n, worst);
  }
  return {ok, detail.str()};
}

Verdict r0_rmse_direction(const StudyResult& study) {
  const int end_day = study.runs.front().scenario.tau - 1;
  double sir = NAN, sihrd = NAN;
  for (const auto& r : rmse_table(study)) {
    if (r.alpha != default_alpha_values()[2] || r.day != end_day) continue;
    if (r.model == kSirCasesModel) sir = r.rmse;
    if (r.model == kCorrectModel) sihrd = r.rmse;
  }
  return {sir > sihrd, fmt("end-day R0 RMSE: SIR cases-only %.4f vs SIHRD cases+deaths %.4f", sir, sihrd)};
}

Verdict alpha_bias_direction(const StudyResult& study) {
  auto pooled = [&](const char* model) {
    double sum = 0.0;
    const auto fits = select(study, 2, model);
    for (const auto* f : fits) sum += f->alpha_post->mean;
    return fits.empty() ? NAN : sum / static_cast<double>(fits.size());
  };
  const double sir = pooled(kSirMultiModel), sihrd = pooled(kCorrectModel);
  return {sir >= sihrd, fmt("mean posterior alpha at truth 0.15: SIR %.3f vs SIHRD %.3f", sir, sihrd)};
}

Verdict waic_discrimination(const StudyResult& study) {
  const auto multi = select(study, 2, kCorrectModel), cases = select(study, 2, kCasesOnlyModel);
  int wins = 0, n = 0;
  std::ostringstream gaps;
  for (const auto* m : multi)
    for (const auto* c : cases)
      if (m->replicate == c->replicate) {
        ++n;
        wins += m->waic < c->waic;
        gaps << fmt(" %.1f", c->waic - m->waic);
      }
  return {n == 10 && wins >= 8, fmt("cases+deaths lower in %d/%d; cases-only minus cases+deaths:", wins, n) + gaps.str()};
}

// ---------------------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

Verdict cli_determinism(const fs::path& work) {
  using nlohmann::json;
  const auto start = Clock::now();
  fs::remove_all(work);
  const fs::path cfg = work / "configs";
  const json model = {{"compartments", "SIHRD"}, {"alarm", "MULTI_CASES_DEATHS"}, {"undetected", true}, {"smoothing_window", 30}};
  const json scenario = {{"population", 20000},
                         {"initial_infectious", 5},
                         {"tau", 25},
                         {"start_date", "2020-03-01"},
                         {"params",
                          {{"beta", 0.7}, {"k", 0.001}, {"alpha", 0.3}, {"lambda", 0.05}, {"gamma1", 0.25},
                           {"gamma2", 0.15}, {"phi", 0.1}, {"pi_detect", 0.25}}}};
  const json sampler = {{"chains", 2}, {"burn_in", 200}, {"iterations", 400}, {"thin", 2}};
  const json data = {{"path", (work / "A" / "sim" / "observed.csv").string()},
                     {"population", 20000},
                     {"initial", {{"infectious", 5}}}};
  write_text(cfg / "sim.json", json{{"seed", 5}, {"model", model}, {"scenario", scenario}}.dump(2));
  json fit = {{"seed", 6}, {"model", model}, {"sampler", sampler}, {"data", data}, {"priors", {{"detection_mean", 0.25}}}};
  write_text(cfg / "fit.json", fit.dump(2));
  fit["model"]["alarm"] = "POWER_CASES";
  write_text(cfg / "fit_cases.json", fit.dump(2));
  write_text(cfg / "study.json",
             json{{"seed", 8},
                  {"model", model},
                  {"scenario", scenario},
                  {"sampler", sampler},
                  {"study", {{"alpha_values", {0.5}}, {"replicates", 1}, {"models", {"SIHRD/MULTI_CASES_DEATHS", "SIR_IDD/POWER_CASES"}}}}}
                 .dump(2));

  std::ostringstream sink;
  std::vector<std::string> failures;
  for (const char* side : {"A", "B"}) {
    const fs::path d = work / side;
    const std::vector<std::vector<std::string>> commands{
        {"simulate", "--config", (cfg / "sim.json").string(), "--out", (d / "sim").string()},
        {"fit", "--config", (cfg / "fit.json").string(), "--out", (d / "fit").string()},
        {"fit", "--config", (cfg / "fit_cases.json").string(), "--out", (d / "fit_cases").string()},
        {"diagnose", "--fit", (d / "fit").string(), "--out", (d / "diagnose").string()},
        {"r0", "--fit", (d / "fit").string(), "--out", (d / "r0").string()},
        {"postpred", "--fit", (d / "fit").string(), "--out", (d / "postpred").string(), "--draws", "50"},
        {"waic", "--fit", (d / "fit").string(), "--fit", (d / "fit_cases").string(), "--out", (d / "waic").string()},
        {"simstudy", "--config", (cfg / "study.json").string(), "--out", (d / "simstudy").string()},
    };
    for (const auto& c : commands) {
      const int code = run_cli(c, sink, sink);
      if (code != kExitOk) failures.push_back(std::string(side) + " " + c.front() + " exited " + std::to_string(code));
    }
  }
  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "A")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), work / "A");
    ++files;
    const fs::path other = work / "B" / rel;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differing;
      failures.push_back("differs: " + rel.string());
    }
  }
  std::string detail = fmt("%d files compared, %d differ, %.1fs", files, differing, seconds_since(start));
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty() && files > 0, detail};
}

}  // namespace criteria
