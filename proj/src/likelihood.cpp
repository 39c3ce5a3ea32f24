#include "bcm/likelihood.hpp"

#include <stdexcept>

#include "bcm/alarm.hpp"

namespace bcm {

LogFactorial::LogFactorial(Count max_n) : table_(static_cast<std::size_t>(std::max<Count>(max_n, 1)) + 1) {
  for (std::size_t n = 0; n < table_.size(); ++n) table_[n] = std::lgamma(static_cast<double>(n) + 1.0);
}

namespace {
double safe_log(double x) { return x > 0.0 ? std::log(x) : kImpossible; }
}  // namespace

TransitionLogProbs TransitionLogProbs::from(const ParamVector& params, const ModelSpec& spec) {
  TransitionLogProbs lp;
  if (spec.compartments == Compartments::Sihrd) {
    const double lambda = params[Param::Lambda], g1 = params[Param::Gamma1];
    const double g2 = params[Param::Gamma2], phi = params[Param::Phi];
    lp.to_hospital = safe_log(-std::expm1(-lambda));
    lp.infectious_recovery = safe_log(-std::expm1(-g1));
    lp.infectious_stay = safe_log(std::exp(-lambda) + std::exp(-g1) - 1.0);
    lp.death = safe_log(-std::expm1(-phi));
    lp.hospital_recovery = safe_log(-std::expm1(-g2));
    lp.hospital_stay = safe_log(std::exp(-phi) + std::exp(-g2) - 1.0);
  }
  if (spec.undetected) {
    const double p = params[Param::PiDetect];
    lp.detect = {safe_log(p), p < 1.0 ? std::log1p(-p) : kImpossible};
  }
  return lp;
}

DayTerms sihrd_day_terms(const SihrdDay& d, double pressure, const TransitionLogProbs& lp,
                         bool undetected, const LogFactorial& lf) {
  DayTerms out;
  out.infection = binomial_logpmf(d.susceptible, d.infections, log_prob_from_pressure(pressure), lf);
  out.infectious_exit = multinomial3_logpmf(d.infectious, d.admissions, d.recoveries_infectious,
                                            lp.to_hospital, lp.infectious_recovery, lp.infectious_stay, lf);
  out.hospital_exit = multinomial3_logpmf(d.hospitalized, d.deaths, d.recoveries_hospital, lp.death,
                                          lp.hospital_recovery, lp.hospital_stay, lf);
  if (undetected) out.detection = binomial_logpmf(d.infections, d.detected, lp.detect, lf);
  return out;
}

DayTerms sir_day_terms(Count susceptible, Count infections, Count detected, double pressure,
                       const TransitionLogProbs& lp, bool undetected, const LogFactorial& lf) {
  DayTerms out;
  out.infection = binomial_logpmf(susceptible, infections, log_prob_from_pressure(pressure), lf);
  if (undetected) out.detection = binomial_logpmf(infections, detected, lp.detect, lf);
  return out;
}

std::vector<DayTerms> day_terms(const Trajectory& traj, const ParamVector& params,
                                const ModelSpec& spec, std::span<const double> alarm,
                                const LogFactorial& lf) {
  const auto tau = static_cast<std::size_t>(traj.tau());
  if (alarm.size() < tau) throw std::invalid_argument("alarm series shorter than trajectory");
  if (traj.compartments != spec.compartments)
    throw std::invalid_argument("trajectory and spec disagree on compartments");
  const auto lp = TransitionLogProbs::from(params, spec);
  const double beta = params[Param::Beta];
  const auto n = static_cast<double>(traj.population);
  std::vector<DayTerms> out(tau);
  if (spec.compartments == Compartments::Sihrd) {
    for (std::size_t t = 0; t < tau; ++t) {
      const auto& s = traj.states[t];
      const auto& r = traj.transitions[t];
      const SihrdDay d{s.susceptible, s.infectious, s.hospitalized, r.infections, r.detected,
                       r.admissions, r.recoveries_infectious, r.recoveries_hospital, r.deaths};
      out[t] = sihrd_day_terms(d, infection_pressure(beta, alarm[t], static_cast<double>(s.infectious), n),
                               lp, spec.undetected, lf);
    }
  } else {
    const auto curve = IddCurve::from(params, spec);
    for (std::size_t t = 0; t < tau; ++t) {
      const auto& s = traj.states[t];
      const auto& r = traj.transitions[t];
      const double eff = weighted_infectious(s.infectious_by_age, curve);
      out[t] = sir_day_terms(s.susceptible, r.infections, r.detected,
                             infection_pressure(beta, alarm[t], eff, n), lp, spec.undetected, lf);
    }
  }
  return out;
}

namespace {
double sum_terms(const std::vector<DayTerms>& terms) {
  double total = 0.0;
  for (const auto& d : terms) total += d.total();
  return total;
}
}  // namespace

double loglik_sir_idd(const Trajectory& traj, const ParamVector& params, const ModelSpec& spec,
                      std::span<const double> alarm) {
  if (spec.compartments != Compartments::SirIdd) throw std::invalid_argument("loglik_sir_idd needs SIR_IDD");
  LogFactorial lf(traj.population);
  return sum_terms(day_terms(traj, params, spec, alarm, lf));
}

double loglik_sir_idd(const Trajectory& traj, const ParamVector& params, const ModelSpec& spec) {
  if (alarm_uses_deaths(spec.alarm))
    throw std::invalid_argument("cases+deaths alarm needs an explicit alarm series in SIR mode");
  const auto cases = traj.detected();
  const auto alarm = alarm_series(spec, params, cases, {}, traj.population);
  return loglik_sir_idd(traj, params, spec, alarm);
}

// ---------------------------------------------------------------------------

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
}  // namespace

double log_density(const Prior& prior, double x) {
  return std::visit(
      overloaded{
          [x](const GammaPrior& g) {
            if (!(x > 0.0)) return kImpossible;
            return g.shape * std::log(g.rate) - std::lgamma(g.shape) + (g.shape - 1.0) * std::log(x) - g.rate * x;
          },
          [x](const NormalPrior& n) {
            const double z = (x - n.mean) / n.sd;
            return -0.5 * z * z - std::log(n.sd) - kLogSqrt2Pi;
          },
          [x](const BetaPrior& b) {
            if (!(x > 0.0 && x <= 1.0)) return kImpossible;
            if (x == 1.0) return b.b == 1.0 ? std::lgamma(b.a + b.b) - std::lgamma(b.a) - std::lgamma(b.b) : kImpossible;
            return (b.a - 1.0) * std::log(x) + (b.b - 1.0) * std::log1p(-x) + std::lgamma(b.a + b.b) -
                   std::lgamma(b.a) - std::lgamma(b.b);
          },
          [x](const UniformPrior& u) { return x >= u.lo && x <= u.hi ? -std::log(u.hi - u.lo) : kImpossible; },
      },
      prior);
}

double prior_mean(const Prior& prior) {
  return std::visit(overloaded{
                        [](const GammaPrior& g) { return g.shape / g.rate; },
                        [](const NormalPrior& n) { return n.mean; },
                        [](const BetaPrior& b) { return b.a / (b.a + b.b); },
                        [](const UniformPrior& u) { return 0.5 * (u.lo + u.hi); },
                    },
                    prior);
}

double prior_variance(const Prior& prior) {
  return std::visit(overloaded{
                        [](const GammaPrior& g) { return g.shape / (g.rate * g.rate); },
                        [](const NormalPrior& n) { return n.sd * n.sd; },
                        [](const BetaPrior& b) {
                          const double s = b.a + b.b;
                          return b.a * b.b / (s * s * (s + 1.0));
                        },
                        [](const UniformPrior& u) { return (u.hi - u.lo) * (u.hi - u.lo) / 12.0; },
                    },
                    prior);
}

double coefficient_of_variation(const Prior& prior) {
  return std::sqrt(prior_variance(prior)) / std::abs(prior_mean(prior));
}

double draw(const Prior& prior, RngStream& rng) {
  return std::visit(overloaded{
                        [&](const GammaPrior& g) { return rng.gamma(g.shape, g.rate); },
                        [&](const NormalPrior& n) { return rng.normal(n.mean, n.sd); },
                        [&](const BetaPrior& b) { return rng.beta(b.a, b.b); },
                        [&](const UniformPrior& u) { return u.lo + (u.hi - u.lo) * rng.uniform(); },
                    },
                    prior);
}

void check_prior(const Prior& prior) {
  const bool ok = std::visit(overloaded{
                                 [](const GammaPrior& g) { return g.shape > 0.0 && g.rate > 0.0; },
                                 [](const NormalPrior& n) { return n.sd > 0.0 && std::isfinite(n.mean); },
                                 [](const BetaPrior& b) { return b.a > 0.0 && b.b > 0.0; },
                                 [](const UniformPrior& u) { return u.hi > u.lo; },
                             },
                             prior);
  if (!ok) throw std::invalid_argument("invalid prior hyperparameters");
}

PriorConfig PriorConfig::defaults(double infectious_duration, double detection_mean) {
  PriorConfig pc;
  const GammaPrior vague{0.1, 0.1};
  pc.set(Param::Beta, vague).set(Param::K, vague);
  pc.set(Param::Alpha, UniformPrior{0.0, 1.0});
  pc.set(Param::Lambda, vague).set(Param::Gamma1, vague).set(Param::Gamma2, vague).set(Param::Phi, vague);
  pc.set(Param::PiDetect, BetaPrior{100.0 * detection_mean, 100.0 * (1.0 - detection_mean)});
  pc.set(Param::W0, NormalPrior{infectious_duration, 0.5});
  pc.set(Param::NuIdd, GammaPrior{100.0, 100.0});
  pc.set(Param::DeltaCp, UniformPrior{0.0, 1.0}).set(Param::HCp, GammaPrior{1.0, 0.01});
  pc.set(Param::DeltaHill, UniformPrior{0.0, 1.0}).set(Param::X0Hill, GammaPrior{1.0, 0.01});
  pc.set(Param::NuHill, GammaPrior{1.0, 1.0});
  return pc;
}

const Prior& PriorConfig::operator[](Param p) const {
  const auto& slot = priors_[static_cast<std::size_t>(p)];
  if (!slot) throw std::out_of_range("no prior for '" + std::string(param_name(p)) + "'");
  return *slot;
}

PriorConfig& PriorConfig::set(Param p, Prior prior) {
  check_prior(prior);
  priors_[static_cast<std::size_t>(p)] = prior;
  return *this;
}

double log_prior(const ParamVector& params, const PriorConfig& priors, const ModelSpec& spec) {
  double total = 0.0;
  for (Param p : active_params(spec)) {
    if (!params.has(p)) return kImpossible;
    const double lp = log_density(priors[p], params[p]);
    if (is_impossible(lp)) return kImpossible;
    total += lp;
  }
  return total;
}

// ---------------------------------------------------------------------------

std::vector<double> state_alarm(const AugmentedState& state, const ModelSpec& spec) {
  const auto& traj = state.trajectory;
  const auto cases = traj.detected();
  std::vector<Count> deaths;
  if (alarm_uses_deaths(spec.alarm)) {
    deaths = spec.compartments == Compartments::Sihrd ? traj.deaths() : state.alarm_deaths;
    if (deaths.size() < cases.size()) throw std::invalid_argument("missing death stream for the alarm");
  }
  return alarm_series(spec, state.params, cases, deaths, traj.population);
}

double loglik_sihrd(const AugmentedState& state, const ModelSpec& spec) {
  if (spec.compartments != Compartments::Sihrd) throw std::invalid_argument("loglik_sihrd needs SIHRD");
  LogFactorial lf(state.trajectory.population);
  return sum_terms(day_terms(state.trajectory, state.params, spec, state_alarm(state, spec), lf));
}

double loglik(const AugmentedState& state, const ModelSpec& spec) {
  if (spec.compartments == Compartments::Sihrd) return loglik_sihrd(state, spec);
  return loglik_sir_idd(state.trajectory, state.params, spec, state_alarm(state, spec));
}

double log_posterior(const AugmentedState& state, const PriorConfig& priors, const ModelSpec& spec,
                     double likelihood_weight) {
  const double lp = log_prior(state.params, priors, spec);
  if (is_impossible(lp) || likelihood_weight == 0.0) return lp;
  const double ll = loglik(state, spec);
  if (is_impossible(ll)) return kImpossible;
  return likelihood_weight * ll + lp;
}

}  // namespace bcm
