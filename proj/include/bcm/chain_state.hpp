#pragma once

#include <array>
#include <memory>
#include <vector>

#include "bcm/likelihood.hpp"
#include "bcm/model.hpp"

namespace bcm {

/// Immutable inputs shared by every chain of one fit.
class FitContext {
 public:
  FitContext(ObservedData data, ModelSpec spec, PriorConfig priors, double likelihood_weight = 1.0);

  const ObservedData& data() const { return data_; }
  const ModelSpec& spec() const { return spec_; }
  const PriorConfig& priors() const { return priors_; }
  const LogFactorial& log_factorial() const { return *log_factorial_; }
  std::span<const double> cases_smoothed() const { return cases_smoothed_; }
  std::span<const double> deaths_smoothed() const { return deaths_smoothed_; }
  const std::vector<int>& missing_days() const { return missing_days_; }
  double likelihood_weight() const { return likelihood_weight_; }
  int tau() const { return data_.tau(); }
  Count population() const { return data_.population; }

 private:
  ObservedData data_;
  ModelSpec spec_;
  PriorConfig priors_;
  double likelihood_weight_;
  std::shared_ptr<const LogFactorial> log_factorial_;
  std::vector<double> cases_smoothed_, deaths_smoothed_;
  std::vector<int> missing_days_;
};

/// Latent series a sampler may edit.
enum class Series { Infections, Admissions, RecoveriesInfectious, RecoveriesHospital };

/// Initial latent series for a fit.
struct LatentSeries {
  std::vector<Count> infections, admissions, recoveries_infectious, recoveries_hospital;
};

/// Chain-owned augmented state: flat latent series, derived compartments,
/// cached per-day likelihood terms. Edits are journaled until commit() or
/// rollback(), so a rejected proposal restores exactly the touched days.
class ChainState {
 public:
  ChainState(const FitContext& ctx, const ParamVector& params, LatentSeries latent);

  const FitContext& context() const { return *ctx_; }
  const ParamVector& params() const { return params_; }
  int tau() const { return tau_; }

  Count infections(int t) const { return series_[idx(Series::Infections)][static_cast<std::size_t>(t)]; }
  Count admissions(int t) const { return series_[idx(Series::Admissions)][static_cast<std::size_t>(t)]; }
  Count recoveries_infectious(int t) const;  // SIR-IDD: deterministic removals
  Count recoveries_hospital(int t) const {
    return series_[idx(Series::RecoveriesHospital)][static_cast<std::size_t>(t)];
  }
  Count detected(int t) const { return ctx_->data().cases[static_cast<std::size_t>(t)]; }
  Count deaths(int t) const { return ctx_->data().deaths[static_cast<std::size_t>(t)]; }
  Count get(Series s, int t) const { return series_[idx(s)][static_cast<std::size_t>(t)]; }

  Count susceptible(int t) const { return states_[static_cast<std::size_t>(t)].susceptible; }
  Count infectious(int t) const { return states_[static_cast<std::size_t>(t)].infectious; }
  Count hospitalized(int t) const { return states_[static_cast<std::size_t>(t)].hospitalized; }

  const std::vector<DayTerms>& terms() const { return terms_; }
  std::span<const double> alarm() const { return alarm_; }
  double loglik() const { return loglik_; }
  double logprior() const { return logprior_; }
  /// likelihood_weight * loglik + logprior; kImpossible when either is.
  double log_posterior() const;

  /// Adds `delta` to a latent series entry (journaled). Follow with refresh().
  void add(Series s, int t, Count delta);
  /// Re-derives compartments and day terms from day `from` onwards, stopping
  /// once the state re-joins its previous path. False when a count bound is
  /// violated; the caller must roll back.
  bool refresh(int from);
  /// Replaces the parameters and recomputes only the affected caches (journaled).
  void set_params(const ParamVector& params);

  void commit();
  void rollback();

  Trajectory to_trajectory() const;
  AugmentedState to_augmented() const;

 private:
  struct Compartment {
    Count susceptible = 0, infectious = 0, hospitalized = 0;
    bool operator==(const Compartment&) const = default;
  };
  struct Edit {
    Series series;
    int t;
    Count old_value;
  };
  struct ParamBackup {
    ParamVector params;
    std::vector<double> alarm, idd;
    TransitionLogProbs log_probs;
    std::vector<DayTerms> terms;
    double logprior;
    bool valid;
  };
  enum TermMask : unsigned { kInfection = 1, kInfectiousExit = 2, kHospitalExit = 4, kDetection = 8, kAll = 15 };

  static constexpr std::size_t idx(Series s) { return static_cast<std::size_t>(s); }
  bool sir() const { return ctx_->spec().compartments == Compartments::SirIdd; }
  Count removal(int t) const;
  double pressure(int t) const;
  DayTerms compute_terms(int t, unsigned mask, const DayTerms& previous) const;
  bool bounds_ok(int t) const;
  void recompute_terms(unsigned mask);
  void sum_loglik();

  const FitContext* ctx_;
  int tau_;
  ParamVector params_;
  std::array<std::vector<Count>, 4> series_;
  std::vector<Compartment> states_;  // tau + 1
  std::vector<double> alarm_;        // tau + 1
  std::vector<double> idd_;          // T_I weights (SIR-IDD)
  TransitionLogProbs log_probs_;
  std::vector<DayTerms> terms_;
  double loglik_ = 0.0;
  double logprior_ = 0.0;
  bool params_valid_ = true;

  std::vector<Edit> edits_;
  std::vector<std::pair<int, Compartment>> state_journal_;
  std::vector<std::pair<int, DayTerms>> term_journal_;
  std::unique_ptr<ParamBackup> param_backup_;
  double journal_loglik_ = 0.0;
  bool journal_open_ = false;
  int min_edit_ = 0, max_edit_ = -1;
};

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Consistent starting latent series: infections from observed cases scaled by
/// the expected detection probability, exits forward-filled with the given
/// fractions, then repaired so every count bound holds. Throws
/// InitializationError when the observations admit no consistent path.
LatentSeries initial_latent(const FitContext& ctx, const ExitProbabilities& fractions, double detection_mean);

}  // namespace bcm
