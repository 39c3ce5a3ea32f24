#include "bcm/simulate.hpp"

#include <algorithm>
#include <cstdio>

#include "bcm/alarm.hpp"
#include "bcm/transmission.hpp"

namespace bcm {

Scenario default_scenario() {
  Scenario s;
  s.population = 1'000'000;
  s.initial_infectious = 5;
  s.tau = 40;
  s.spec = ModelSpec{Compartments::Sihrd, AlarmKind::MultiCasesDeaths, true, 30, 14};
  s.params.set(Param::Beta, 0.7)
      .set(Param::K, 2e-4)
      .set(Param::Alpha, 0.5)
      .set(Param::Lambda, 0.05)
      .set(Param::Gamma1, 0.25)
      .set(Param::Gamma2, 0.15)
      .set(Param::Phi, 0.1)
      .set(Param::PiDetect, 0.25);
  return s;
}

std::vector<double> default_alpha_values() { return {0.85, 0.5, 0.15}; }

namespace {

// Running m-day sums of the observed streams feeding the alarm.
class AlarmTracker {
 public:
  AlarmTracker(const ModelSpec& spec, const ParamVector& params, Count population,
               const SimulationOptions& options)
      : spec_(spec), params_(params), n_(static_cast<double>(population)), options_(options) {}

  double current(int t) const {
    if (t == 0 || spec_.alarm == AlarmKind::None) return 0.0;
    if (options_.fixed_alarm) return *options_.fixed_alarm;
    const double m = spec_.smoothing_window;
    return alarm_value(spec_.alarm, params_, case_sum_ / m, death_sum_ / m, n_);
  }

  void push(Count cases, Count deaths) {
    cases_.push_back(cases);
    deaths_.push_back(deaths);
    case_sum_ += static_cast<double>(cases);
    death_sum_ += static_cast<double>(deaths);
    const auto m = static_cast<std::size_t>(spec_.smoothing_window);
    if (cases_.size() > m) {
      case_sum_ -= static_cast<double>(cases_[cases_.size() - 1 - m]);
      death_sum_ -= static_cast<double>(deaths_[deaths_.size() - 1 - m]);
    }
  }

 private:
  const ModelSpec& spec_;
  const ParamVector& params_;
  double n_;
  const SimulationOptions& options_;
  std::vector<Count> cases_, deaths_;
  double case_sum_ = 0.0, death_sum_ = 0.0;
};

Count detect(Count infections, const ParamVector& params, const ModelSpec& spec, RngStream& rng) {
  return spec.undetected ? rng.binomial(infections, params[Param::PiDetect]) : infections;
}

Trajectory run_sihrd(const PopulationState& initial, int tau, const ParamVector& params,
                     const ModelSpec& spec, RngStream& rng, const SimulationOptions& options) {
  const Count n = initial.total();
  const auto ep = exit_probabilities(params);
  const double beta = params[Param::Beta];
  // Sequential binomials realise the three-way multinomials.
  const double recover_given_stay =
      ep.to_hospital < 1.0 ? std::min(1.0, ep.infectious_recovery / (1.0 - ep.to_hospital)) : 0.0;
  const double hrecover_given_stay =
      ep.death < 1.0 ? std::min(1.0, ep.hospital_recovery / (1.0 - ep.death)) : 0.0;

  AlarmTracker alarm(spec, params, n, options);
  std::vector<TransitionRecord> recs;
  recs.reserve(static_cast<std::size_t>(tau));
  Count s = initial.susceptible, i = initial.infectious, h = initial.hospitalized;
  for (int t = 0; t < tau; ++t) {
    const double a = alarm.current(t);
    TransitionRecord r;
    r.t = t;
    r.infections = rng.binomial(s, infection_prob(beta, a, static_cast<double>(i), static_cast<double>(n)));
    r.admissions = rng.binomial(i, ep.to_hospital);
    r.recoveries_infectious = rng.binomial(i - r.admissions, recover_given_stay);
    r.deaths = rng.binomial(h, ep.death);
    r.recoveries_hospital = rng.binomial(h - r.deaths, hrecover_given_stay);
    r.detected = detect(r.infections, params, spec, rng);
    r.undetected = r.infections - r.detected;
    s -= r.infections;
    i += r.infections - r.admissions - r.recoveries_infectious;
    h += r.admissions - r.recoveries_hospital - r.deaths;
    alarm.push(r.detected, r.deaths);
    recs.push_back(r);
  }
  return build_trajectory(initial, recs, spec);
}

Trajectory run_sir_idd(const PopulationState& initial, int tau, const ParamVector& params,
                       const ModelSpec& spec, RngStream& rng, const SimulationOptions& options) {
  if (alarm_uses_deaths(spec.alarm))
    throw UnsupportedError("SIR structure does not generate deaths for a cases+deaths alarm");
  const Count n = initial.total();
  const double beta = params[Param::Beta];
  const auto weights = idd_weights(IddCurve::from(params, spec));

  std::vector<Count> ages = initial.infectious_by_age;
  if (ages.empty()) {
    ages.assign(static_cast<std::size_t>(spec.infectious_period), 0);
    ages.front() = initial.infectious;
  }
  AlarmTracker alarm(spec, params, n, options);
  std::vector<TransitionRecord> recs;
  recs.reserve(static_cast<std::size_t>(tau));
  Count s = initial.susceptible;
  for (int t = 0; t < tau; ++t) {
    double eff = 0.0;
    for (std::size_t w = 0; w < ages.size(); ++w) eff += weights[w] * static_cast<double>(ages[w]);
    TransitionRecord r;
    r.t = t;
    r.infections = rng.binomial(s, infection_prob(beta, alarm.current(t), eff, static_cast<double>(n)));
    r.detected = detect(r.infections, params, spec, rng);
    r.undetected = r.infections - r.detected;
    std::rotate(ages.rbegin(), ages.rbegin() + 1, ages.rend());
    ages.front() = r.infections;
    s -= r.infections;
    alarm.push(r.detected, 0);
    recs.push_back(r);
  }
  return build_trajectory(initial, recs, spec);
}

}  // namespace

Trajectory simulate(const PopulationState& initial, int tau, const ParamVector& params,
                    const ModelSpec& spec, RngStream& rng, const SimulationOptions& options) {
  check_spec(spec);
  require_valid(params, spec);
  if (tau < 0) throw std::invalid_argument("tau must be >= 0");
  return spec.compartments == Compartments::Sihrd ? run_sihrd(initial, tau, params, spec, rng, options)
                                                  : run_sir_idd(initial, tau, params, spec, rng, options);
}

Trajectory simulate_sihrd(const Scenario& scenario, RngStream& rng, const SimulationOptions& options) {
  if (scenario.spec.compartments != Compartments::Sihrd)
    throw std::invalid_argument("simulate_sihrd needs an SIHRD spec");
  if (scenario.initial_infectious > scenario.population || scenario.tau < 1)
    throw std::invalid_argument("scenario needs I0 <= N and tau >= 1");
  return simulate(scenario.initial(), scenario.tau, scenario.params, scenario.spec, rng, options);
}

Trajectory simulate_sir_idd(const Scenario& scenario, RngStream& rng,
                            const SimulationOptions& options) {
  if (scenario.spec.compartments != Compartments::SirIdd)
    throw std::invalid_argument("simulate_sir_idd needs an SIR_IDD spec");
  if (scenario.initial_infectious > scenario.population || scenario.tau < 1)
    throw std::invalid_argument("scenario needs I0 <= N and tau >= 1");
  return simulate(scenario.initial(), scenario.tau, scenario.params, scenario.spec, rng, options);
}

std::string scenario_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "alpha=%.2f", alpha);
  return buf;
}

std::vector<ScenarioRun> generate_scenarios(const std::vector<double>& alpha_values, int replicates,
                                            const Scenario& base, const RngStream& rng) {
  if (base.spec.compartments != Compartments::Sihrd || base.spec.alarm != AlarmKind::MultiCasesDeaths ||
      !base.spec.undetected)
    throw std::invalid_argument("scenario generation expects SIHRD + cases/deaths alarm + undetected");
  std::vector<ScenarioRun> out;
  if (replicates <= 0) return out;
  for (std::size_t ai = 0; ai < alpha_values.size(); ++ai) {
    for (int r = 0; r < replicates; ++r) {
      ScenarioRun run;
      run.alpha = alpha_values[ai];
      run.alpha_index = static_cast<int>(ai);
      run.replicate = r;
      run.label = scenario_label(run.alpha);
      run.scenario = base;
      run.scenario.params.set(Param::Alpha, run.alpha);
      auto stream = rng.derive((static_cast<std::uint64_t>(ai) << 32) | static_cast<std::uint32_t>(r));
      run.trajectory = simulate_sihrd(run.scenario, stream);
      out.push_back(std::move(run));
    }
  }
  return out;
}

}  // namespace bcm
