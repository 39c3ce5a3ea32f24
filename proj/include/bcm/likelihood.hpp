#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "bcm/model.hpp"
#include "bcm/rng.hpp"
#include "bcm/transmission.hpp"

namespace bcm {

/// Log-density of an impossible configuration. Every log term is <= 0, so
/// sums involving it stay at -inf and never produce NaN.
inline constexpr double kImpossible = -std::numeric_limits<double>::infinity();
inline bool is_impossible(double log_density) { return log_density == kImpossible; }

/// log(n!) with a lookup table for n <= max_n and lgamma beyond.
class LogFactorial {
 public:
  explicit LogFactorial(Count max_n = 0);
  double operator()(Count n) const {
    return static_cast<std::size_t>(n) < table_.size() ? table_[static_cast<std::size_t>(n)]
                                                       : std::lgamma(static_cast<double>(n) + 1.0);
  }

 private:
  std::vector<double> table_;
};

/// k * log_p with 0 * log 0 = 0.
inline double xlogp(Count k, double log_p) { return k == 0 ? 0.0 : static_cast<double>(k) * log_p; }

/// log Binomial(k; n, p).
inline double binomial_logpmf(Count n, Count k, LogProb lp, const LogFactorial& lf) {
  if (k < 0 || k > n) return kImpossible;
  return lf(n) - lf(k) - lf(n - k) + xlogp(k, lp.log_p) + xlogp(n - k, lp.log_1mp);
}

/// log Multinomial(a, b, n - a - b; n, {p_a, p_b, p_rest}).
inline double multinomial3_logpmf(Count n, Count a, Count b, double log_pa, double log_pb,
                                  double log_prest, const LogFactorial& lf) {
  const Count rest = n - a - b;
  if (a < 0 || b < 0 || rest < 0) return kImpossible;
  return lf(n) - lf(a) - lf(b) - lf(rest) + xlogp(a, log_pa) + xlogp(b, log_pb) + xlogp(rest, log_prest);
}

/// Per-day log-likelihood contributions.
struct DayTerms {
  double infection = 0.0;
  double infectious_exit = 0.0;
  double hospital_exit = 0.0;
  double detection = 0.0;

  double total() const { return infection + infectious_exit + hospital_exit + detection; }
};

/// Log transition probabilities derived from the SIHRD exit rates and detection.
struct TransitionLogProbs {
  double to_hospital = kImpossible, infectious_recovery = kImpossible, infectious_stay = 0.0;
  double death = kImpossible, hospital_recovery = kImpossible, hospital_stay = 0.0;
  LogProb detect{0.0, kImpossible};

  static TransitionLogProbs from(const ParamVector& params, const ModelSpec& spec);
};

/// Counts entering one day's SIHRD terms.
struct SihrdDay {
  Count susceptible, infectious, hospitalized;
  Count infections, detected, admissions, recoveries_infectious, recoveries_hospital, deaths;
};

/// One day's SIHRD terms; `pressure` is beta (1 - a_t) I_t / N.
DayTerms sihrd_day_terms(const SihrdDay& d, double pressure, const TransitionLogProbs& lp,
                         bool undetected, const LogFactorial& lf);

/// One day's SIR-IDD terms; `pressure` is beta (1 - a_t) sum_w f(w) I_wt / N.
DayTerms sir_day_terms(Count susceptible, Count infections, Count detected, double pressure,
                       const TransitionLogProbs& lp, bool undetected, const LogFactorial& lf);

/// Day terms along a trajectory with the given alarm series (length >= tau).
std::vector<DayTerms> day_terms(const Trajectory& traj, const ParamVector& params,
                                const ModelSpec& spec, std::span<const double> alarm,
                                const LogFactorial& lf);

double loglik_sir_idd(const Trajectory& traj, const ParamVector& params, const ModelSpec& spec,
                      std::span<const double> alarm);

/// Alarm computed from the trajectory's detected cases; refuses alarms that
/// need a death stream (use the overload taking an alarm series).
double loglik_sir_idd(const Trajectory& traj, const ParamVector& params, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Priors

struct GammaPrior {
  double shape, rate;
};
struct NormalPrior {
  double mean, sd;
};
struct BetaPrior {
  double a, b;
};
struct UniformPrior {
  double lo, hi;
};
using Prior = std::variant<GammaPrior, NormalPrior, BetaPrior, UniformPrior>;

double log_density(const Prior& prior, double x);
double prior_mean(const Prior& prior);
double prior_variance(const Prior& prior);
double draw(const Prior& prior, RngStream& rng);
/// Throws std::invalid_argument on invalid hyperparameters.
void check_prior(const Prior& prior);

class PriorConfig {
 public:
  /// Defaults: vague Gamma(0.1, 0.1) on transmission and exit rates, Gamma(100, 100) on
  /// the IDD decay, Normal(duration, 0.5) on the IDD inflection, Beta with the given
  /// mean and 100 pseudo-observations on detection, Uniform(0, 1) on alpha and the
  /// alarm asymptotes, Gamma(1, 0.01) on alarm thresholds/midpoints, Gamma(1, 1) on the
  /// Hill slope.
  static PriorConfig defaults(double infectious_duration = 7.0, double detection_mean = 0.25);

  const Prior& operator[](Param p) const;
  bool has(Param p) const { return priors_[static_cast<std::size_t>(p)].has_value(); }
  PriorConfig& set(Param p, Prior prior);

 private:
  std::array<std::optional<Prior>, kParamCount> priors_;
};

/// Sum of independent log densities over the parameters active in `spec`.
double log_prior(const ParamVector& params, const PriorConfig& priors, const ModelSpec& spec);

/// Coefficient of variation of a prior (sd / mean).
double coefficient_of_variation(const Prior& prior);

// ---------------------------------------------------------------------------

/// Complete-data state: a latent trajectory with parameters. `alarm_deaths`
/// carries the observed death stream when an SIR model uses a cases+deaths alarm.
struct AugmentedState {
  Trajectory trajectory;
  ParamVector params;
  std::vector<Count> alarm_deaths;
};

/// Alarm series implied by the state's observed streams.
std::vector<double> state_alarm(const AugmentedState& state, const ModelSpec& spec);

double loglik_sihrd(const AugmentedState& state, const ModelSpec& spec);
double loglik(const AugmentedState& state, const ModelSpec& spec);

/// likelihood_weight scales the log-likelihood; 0 gives the prior alone.
double log_posterior(const AugmentedState& state, const PriorConfig& priors, const ModelSpec& spec,
                     double likelihood_weight = 1.0);

}  // namespace bcm
