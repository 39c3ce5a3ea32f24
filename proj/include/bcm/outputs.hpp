#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcm/mcmc.hpp"
#include "bcm/model.hpp"
#include "bcm/rng.hpp"

namespace bcm {

/// R0(t) for an SIHRD trajectory: expected infections caused by one individual
/// infectious on day t, over its geometric stay. Days past tau reuse S and a at tau.
double r0_sihrd(int t, const Trajectory& traj, const ParamVector& params, std::span<const double> alarm);

/// R0(t) for an SIR-IDD trajectory: one individual at age 1 on day t, ages 1..T_I.
double r0_sir_idd(int t, const Trajectory& traj, const ParamVector& params, std::span<const double> alarm);

/// R0(t) for t = 0..tau from a susceptible path (length tau + 1) and alarm (length >= tau + 1).
std::vector<double> r0_path(const ModelSpec& spec, std::span<const Count> susceptible, const ParamVector& params,
                            std::span<const double> alarm, Count population);

/// Per-day posterior mean with 2.5% / 97.5% quantiles.
struct BandSeries {
  std::vector<double> mean, lower, upper;
};
using R0Series = BandSeries;

/// Quantile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double prob);
/// Column-wise mean and 95% band of a draws x days matrix.
BandSeries summarize_columns(const Eigen::MatrixXd& draws);

/// R0(t) draws (draws x (tau + 1)) computed from each retained latent path.
Eigen::MatrixXd r0_draws(const PosteriorSamples& samples, const ObservedData& data);
R0Series posterior_r0(const PosteriorSamples& samples, const ObservedData& data);
/// Alarm draws (draws x (tau + 1)) from each retained parameter draw and the observed streams.
Eigen::MatrixXd alarm_draws(const PosteriorSamples& samples, const ObservedData& data);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// WAIC from a draws x points log-likelihood matrix. Throws NumericalError
/// naming the first non-finite entry.
WaicResult waic(const Eigen::MatrixXd& pointwise);

enum class Granularity { Day, StreamDay };
std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view s);

/// Observed-data log-likelihood per point, recomputed from each retained draw.
/// Day: one column per day. StreamDay: cases block (infection + detection), then
/// admissions (infectious exits) and deaths (hospital exits) for SIHRD.
Eigen::MatrixXd pointwise_loglik(const PosteriorSamples& samples, const ObservedData& data,
                                 Granularity granularity = Granularity::Day);

struct PostPredEnsemble {
  std::vector<std::string> streams;  // "cases", then "hospitalizations", "deaths" for SIHRD
  std::vector<CountMatrix> members;  // per stream: draws x tau
  std::vector<BandSeries> bands;
  std::vector<long> draw_indices;    // pooled draw used by each member
  int draws() const { return static_cast<int>(draw_indices.size()); }
};

/// Forward simulations from the initial state under subsampled posterior draws
/// (uniform without replacement, capped at the number retained). Member i uses
/// stream i of `rng`. Refuses SIR with a cases+deaths alarm.
PostPredEnsemble posterior_predictive(const PosteriorSamples& samples, const PopulationState& initial, int tau,
                                      int draws, const RngStream& rng);

/// Same, for an explicit list of parameter draws.
PostPredEnsemble predictive_ensemble(const std::vector<ParamVector>& params, const ModelSpec& spec,
                                     const PopulationState& initial, int tau, const RngStream& rng);

/// sqrt(mean((estimate_k - truth_k)^2)).
double rmse_r0(std::span<const double> estimates, std::span<const double> truth);
/// Same against a single truth value.
double rmse_r0(std::span<const double> estimates, double truth);

}  // namespace bcm
