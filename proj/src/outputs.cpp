#include "bcm/outputs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bcm/alarm.hpp"
#include "bcm/likelihood.hpp"
#include "bcm/simulate.hpp"
#include "bcm/transmission.hpp"

namespace bcm {

namespace {

constexpr double kWeightFloor = 1e-6;

double r0_sihrd_core(int t, std::span<const Count> susceptible, const ParamVector& params,
                     std::span<const double> alarm, double n) {
  const auto last = static_cast<int>(susceptible.size()) - 1;
  if (t < 0 || t > last) throw std::out_of_range("R0 day outside 0..tau");
  const auto ep = exit_probabilities(params);
  const double stay = 1.0 - ep.to_hospital - ep.infectious_recovery;
  if (stay >= 1.0) throw std::domain_error("infectious stay probability is 1; R0 sum does not converge");
  if (stay < 0.0) throw std::domain_error("exit probabilities exceed 1");
  const double beta = params[Param::Beta];
  double sum = 0.0, weight = 1.0;
  for (int j = t; weight >= kWeightFloor; ++j) {
    const auto d = static_cast<std::size_t>(std::min(j, last));
    sum += weight * static_cast<double>(susceptible[d]) * infection_prob(beta, alarm[d], 1.0, n);
    weight *= stay;
  }
  return sum;
}

double r0_sir_core(int t, std::span<const Count> susceptible, const ParamVector& params,
                   std::span<const double> alarm, double n, int period) {
  const auto last = static_cast<int>(susceptible.size()) - 1;
  if (t < 0 || t > last) throw std::out_of_range("R0 day outside 0..tau");
  const IddCurve curve{params[Param::W0], params[Param::NuIdd], period};
  const double beta = params[Param::Beta];
  double sum = 0.0;
  for (int w = 1; w <= period; ++w) {
    const auto d = static_cast<std::size_t>(std::min(t + w - 1, last));
    sum += static_cast<double>(susceptible[d]) * infection_prob(beta, alarm[d], idd_weight(w, curve), n);
  }
  return sum;
}

void check_alarm_length(const Trajectory& traj, std::span<const double> alarm) {
  if (alarm.size() < static_cast<std::size_t>(traj.tau()) + 1)
    throw std::invalid_argument("alarm series needs tau + 1 entries");
}

}  // namespace

double r0_sihrd(int t, const Trajectory& traj, const ParamVector& params, std::span<const double> alarm) {
  if (traj.compartments != Compartments::Sihrd) throw std::invalid_argument("r0_sihrd needs an SIHRD trajectory");
  check_alarm_length(traj, alarm);
  const auto s = traj.susceptible();
  return r0_sihrd_core(t, s, params, alarm, static_cast<double>(traj.population));
}

double r0_sir_idd(int t, const Trajectory& traj, const ParamVector& params, std::span<const double> alarm) {
  if (traj.compartments != Compartments::SirIdd) throw std::invalid_argument("r0_sir_idd needs an SIR_IDD trajectory");
  check_alarm_length(traj, alarm);
  const auto s = traj.susceptible();
  return r0_sir_core(t, s, params, alarm, static_cast<double>(traj.population), traj.infectious_period);
}

std::vector<double> r0_path(const ModelSpec& spec, std::span<const Count> susceptible, const ParamVector& params,
                            std::span<const double> alarm, Count population) {
  if (alarm.size() < susceptible.size()) throw std::invalid_argument("alarm series shorter than susceptible path");
  std::vector<double> out(susceptible.size());
  const auto n = static_cast<double>(population);
  for (std::size_t t = 0; t < out.size(); ++t)
    out[t] = spec.compartments == Compartments::Sihrd
                 ? r0_sihrd_core(static_cast<int>(t), susceptible, params, alarm, n)
                 : r0_sir_core(static_cast<int>(t), susceptible, params, alarm, n, spec.infectious_period);
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

BandSeries summarize_columns(const Eigen::MatrixXd& draws) {
  if (draws.rows() == 0) throw std::invalid_argument("no draws to summarize");
  BandSeries out;
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    const Eigen::VectorXd col = draws.col(c);
    std::vector<double> v(col.data(), col.data() + col.size());
    out.mean.push_back(col.mean());
    out.lower.push_back(quantile(v, 0.025));
    out.upper.push_back(quantile(std::move(v), 0.975));
  }
  return out;
}

namespace {

struct ObservedSmoothing {
  std::vector<double> cases, deaths;
  ObservedSmoothing(const ObservedData& data, const ModelSpec& spec)
      : cases(smooth_all(std::span<const Count>(data.cases), spec.smoothing_window)),
        deaths(smooth_all(std::span<const Count>(data.deaths), spec.smoothing_window)) {}
  std::vector<double> alarm(const ModelSpec& spec, const ParamVector& p, Count n) const {
    return alarm_from_smoothed(spec.alarm, p, cases, deaths, n);
  }
};

void check_fit_data(const PosteriorSamples& samples, const ObservedData& data) {
  if (data.tau() != samples.tau) throw std::invalid_argument("data length differs from the fitted series");
}

}  // namespace

Eigen::MatrixXd r0_draws(const PosteriorSamples& samples, const ObservedData& data) {
  check_fit_data(samples, data);
  const ObservedSmoothing smooth(data, samples.spec);
  const CountMatrix infections = samples.pooled(&ChainSamples::infections);
  const int tau = samples.tau;
  Eigen::MatrixXd out(infections.rows(), tau + 1);
  std::vector<Count> s(static_cast<std::size_t>(tau) + 1);
  for (Eigen::Index d = 0; d < infections.rows(); ++d) {
    s[0] = data.initial.susceptible;
    for (int t = 0; t < tau; ++t) s[static_cast<std::size_t>(t) + 1] = s[static_cast<std::size_t>(t)] - infections(d, t);
    const ParamVector p = samples.draw(d);
    const auto r = r0_path(samples.spec, s, p, smooth.alarm(samples.spec, p, data.population), data.population);
    for (int t = 0; t <= tau; ++t) out(d, t) = r[static_cast<std::size_t>(t)];
  }
  return out;
}

R0Series posterior_r0(const PosteriorSamples& samples, const ObservedData& data) {
  return summarize_columns(r0_draws(samples, data));
}

Eigen::MatrixXd alarm_draws(const PosteriorSamples& samples, const ObservedData& data) {
  check_fit_data(samples, data);
  const ObservedSmoothing smooth(data, samples.spec);
  const long n = samples.total_draws();
  Eigen::MatrixXd out(n, samples.tau + 1);
  for (long d = 0; d < n; ++d) {
    const auto a = smooth.alarm(samples.spec, samples.draw(d), data.population);
    for (int t = 0; t <= samples.tau; ++t) out(d, t) = a[static_cast<std::size_t>(t)];
  }
  return out;
}

WaicResult waic(const Eigen::MatrixXd& pointwise) {
  if (pointwise.rows() < 2) throw std::invalid_argument("WAIC needs at least two draws");
  for (Eigen::Index t = 0; t < pointwise.cols(); ++t)
    for (Eigen::Index d = 0; d < pointwise.rows(); ++d)
      if (!std::isfinite(pointwise(d, t)))
        throw NumericalError("non-finite log-likelihood at draw " + std::to_string(d) + ", time " + std::to_string(t));
  WaicResult r;
  const double n = static_cast<double>(pointwise.rows());
  for (Eigen::Index t = 0; t < pointwise.cols(); ++t) {
    const auto col = pointwise.col(t);
    const double peak = col.maxCoeff();
    r.lppd += peak + std::log((col.array() - peak).exp().sum() / n);
    const double mean = col.mean();
    r.p_waic += (col.array() - mean).square().sum() / (n - 1.0);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

std::string_view to_string(Granularity g) { return g == Granularity::Day ? "day" : "stream-day"; }

Granularity parse_granularity(std::string_view s) {
  if (s == "day") return Granularity::Day;
  if (s == "stream-day") return Granularity::StreamDay;
  throw std::invalid_argument("unknown granularity '" + std::string(s) + "' (day, stream-day)");
}

Eigen::MatrixXd pointwise_loglik(const PosteriorSamples& samples, const ObservedData& data, Granularity granularity) {
  check_fit_data(samples, data);
  const auto& spec = samples.spec;
  const bool sihrd = spec.compartments == Compartments::Sihrd;
  const ObservedSmoothing smooth(data, spec);
  const LogFactorial lf(data.population);
  const CountMatrix inf = samples.pooled(&ChainSamples::infections);
  const CountMatrix adm = samples.pooled(&ChainSamples::admissions);
  const CountMatrix ri = samples.pooled(&ChainSamples::recoveries_infectious);
  const CountMatrix rh = samples.pooled(&ChainSamples::recoveries_hospital);
  const int tau = samples.tau;
  const int blocks = granularity == Granularity::Day ? 1 : (sihrd ? 3 : 1);
  Eigen::MatrixXd out(inf.rows(), tau * blocks);
  std::vector<TransitionRecord> recs(static_cast<std::size_t>(tau));
  for (Eigen::Index d = 0; d < inf.rows(); ++d) {
    for (int t = 0; t < tau; ++t) {
      auto& r = recs[static_cast<std::size_t>(t)];
      r = {};
      r.t = t;
      r.infections = inf(d, t);
      r.detected = data.cases[static_cast<std::size_t>(t)];
      r.undetected = spec.undetected ? r.infections - r.detected : 0;
      if (sihrd) {
        r.admissions = adm(d, t);
        r.recoveries_infectious = ri(d, t);
        r.recoveries_hospital = rh(d, t);
        r.deaths = data.deaths[static_cast<std::size_t>(t)];
      }
    }
    const Trajectory traj = build_trajectory(data.initial, recs, spec);
    const ParamVector p = samples.draw(d);
    const auto terms = day_terms(traj, p, spec, smooth.alarm(spec, p, data.population), lf);
    for (int t = 0; t < tau; ++t) {
      const auto& x = terms[static_cast<std::size_t>(t)];
      if (blocks == 1) {
        out(d, t) = x.total();
      } else {
        out(d, t) = x.infection + x.detection;
        out(d, tau + t) = x.infectious_exit;
        out(d, 2 * tau + t) = x.hospital_exit;
      }
    }
  }
  return out;
}

PostPredEnsemble predictive_ensemble(const std::vector<ParamVector>& params, const ModelSpec& spec,
                                     const PopulationState& initial, int tau, const RngStream& rng) {
  if (spec.compartments == Compartments::SirIdd && alarm_uses_deaths(spec.alarm))
    throw UnsupportedError("posterior prediction needs every alarm input inside the model; SIR has no deaths");
  if (params.empty()) throw std::invalid_argument("posterior prediction needs at least one draw");
  const bool sihrd = spec.compartments == Compartments::Sihrd;
  PostPredEnsemble out;
  out.streams = sihrd ? std::vector<std::string>{"cases", "hospitalizations", "deaths"} : std::vector<std::string>{"cases"};
  const auto n = static_cast<Eigen::Index>(params.size());
  out.members.assign(out.streams.size(), CountMatrix(n, tau));
  for (Eigen::Index i = 0; i < n; ++i) out.draw_indices.push_back(i);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto member_rng = rng.derive(static_cast<std::uint64_t>(i));
    const Trajectory traj = simulate(initial, tau, params[static_cast<std::size_t>(i)], spec, member_rng);
    for (int t = 0; t < tau; ++t) {
      const auto& r = traj.transitions[static_cast<std::size_t>(t)];
      out.members[0](i, t) = r.detected;
      if (sihrd) {
        out.members[1](i, t) = r.admissions;
        out.members[2](i, t) = r.deaths;
      }
    }
  }
  for (const auto& m : out.members) out.bands.push_back(summarize_columns(m.cast<double>()));
  return out;
}

PostPredEnsemble posterior_predictive(const PosteriorSamples& samples, const PopulationState& initial, int tau,
                                      int draws, const RngStream& rng) {
  if (draws < 1) throw std::invalid_argument("posterior prediction needs draws >= 1");
  const long total = samples.total_draws();
  if (total < 1) throw std::invalid_argument("no retained draws");
  const long count = std::min<long>(draws, total);
  std::vector<long> pool(static_cast<std::size_t>(total));
  for (long i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = i;
  auto pick = rng.derive(~std::uint64_t{0});
  for (long i = 0; i < count; ++i) {
    const auto j = pick.uniform_int(i, total - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::vector<ParamVector> params;
  for (long i : pool) params.push_back(samples.draw(i));
  auto out = predictive_ensemble(params, samples.spec, initial, tau, rng);
  out.draw_indices = std::move(pool);
  return out;
}

double rmse_r0(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.empty()) throw std::invalid_argument("RMSE needs at least one simulation");
  if (estimates.size() != truth.size()) throw std::invalid_argument("estimates and truth differ in length");
  double ss = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) ss += (estimates[k] - truth[k]) * (estimates[k] - truth[k]);
  return std::sqrt(ss / static_cast<double>(estimates.size()));
}

double rmse_r0(std::span<const double> estimates, double truth) {
  const std::vector<double> t(estimates.size(), truth);
  return rmse_r0(estimates, t);
}

}  // namespace bcm
