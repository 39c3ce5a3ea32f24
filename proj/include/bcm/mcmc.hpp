#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcm/chain_state.hpp"
#include "bcm/rng.hpp"

namespace bcm {

struct ProgressRecord {
  int chain = 0;
  long iteration = 0;
  double log_posterior = 0.0;
  double param_acceptance = 0.0;   // mean over scalar parameter updates so far
  double latent_acceptance = 0.0;  // pooled over latent moves so far
};

struct SamplerConfig {
  int chains = 3;
  long iterations = 30000;  // after burn-in
  long burn_in = 10000;
  int thin = 10;
  std::uint64_t seed = 1;
  int workers = 0;  // 0: BCM_WORKERS, else hardware concurrency

  double target_acceptance = 0.44;  // scalar parameter updates
  double block_target = 0.234;      // joint parameter block
  double latent_target = 0.3;
  int adapt_interval = 50;
  bool joint_block = true;

  int block_days = 5;
  int max_shift = 7;  // largest lag of paired infection/recovery moves

  int initial_candidates = 50;
  double overdispersion = 0.5;  // chain starts spread over exp([-0.5, 0.5]) multipliers
  ParamVector initial;          // explicit start values; entries for `fixed` are required
  std::vector<Param> fixed;
  bool store_latent = true;

  /// Called every `progress_every` iterations (from the chain's worker thread).
  std::function<void(const ProgressRecord&)> progress;
  long progress_every = 0;

  void check() const;
  long retained() const { return iterations / thin; }
};

struct MoveStats {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
  void record(bool ok) {
    ++proposed;
    accepted += ok;
  }
};
using AcceptanceLedger = std::map<std::string, MoveStats>;

enum class LatentMove {
  RecoverInfectious,  // R^I*_t +- j
  ShiftInfectious,    // R^I* moved between t and t+1
  RecoverHospital,    // R^H*_t +- j
  ShiftHospital,      // R^H* moved between t and t+1
  Undetected,         // U*_t +- j
  ShiftUndetected,    // U* moved between t and t+1
  InfectAndRecover,   // U*_t and R^I*_{t+d} together
  MissingAdmission,   // missing H*_t +- j
  SwapAdmission,      // missing H*_t against R^I*_t
};
inline constexpr int kLatentMoveCount = 9;
std::string_view to_string(LatentMove m);

/// Proposal scales of one chain. Adapted during burn-in only.
struct Tuning {
  std::vector<Param> updated;   // parameters moved by the sampler
  std::vector<double> scale;    // random-walk sd on the log / logit scale
  std::vector<MoveStats> window;

  bool joint = false;
  double joint_scale = 1.0;
  Eigen::MatrixXd joint_factor;  // lower Cholesky factor of the proposal covariance
  MoveStats joint_window;
  Eigen::VectorXd moment_sum;
  Eigen::MatrixXd moment_outer;
  long moment_count = 0;

  std::array<double, kLatentMoveCount> latent_step{};
  std::array<MoveStats, kLatentMoveCount> latent_window{};
  std::array<std::vector<double>, 4> reference;  // per Series day counts behind step sizes

  int adaptations = 0;
  bool frozen = false;
  int max_shift = 7;
  int block_days = 5;
  double target = 0.44, block_target = 0.234, latent_target = 0.3;
};

Tuning make_tuning(const ChainState& state, const SamplerConfig& config);

/// Unconstrained coordinate of a parameter (log or logit) and the log-Jacobian
/// of the inverse map.
double to_unconstrained(Param p, double value);
double from_unconstrained(Param p, double u);
double log_jacobian(Param p, double value);

/// One sweep of scalar random-walk updates plus, when enabled, one joint block move.
void update_params(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger);
/// Recovery-count moves over a random block of days.
void update_latent_exits(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger);
/// Undetected-infection moves over a random block of days.
void update_undetected(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger);
/// Imputation moves for missing admissions inside a random block of days.
void update_missing_observations(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger);

/// A single Metropolis-Hastings latent move at `day`; returns whether it was accepted.
bool latent_move(ChainState& state, LatentMove move, int day, Tuning& tuning, RngStream& rng);

/// Adjusts scales from the acceptance windows and re-reads reference counts.
/// No-op once frozen.
void adapt(Tuning& tuning, const ChainState& state);

using CountMatrix = Eigen::Matrix<Count, Eigen::Dynamic, Eigen::Dynamic>;

struct ChainSamples {
  int chain = 0;
  Eigen::MatrixXd draws;          // retained draws x parameters
  Eigen::VectorXd log_posterior;
  std::vector<long> iterations;
  CountMatrix infections, admissions, recoveries_infectious, recoveries_hospital;  // draws x tau
  // Per-day log-likelihood pieces: infection + detection, infectious exits, hospital exits.
  Eigen::MatrixXd loglik_cases, loglik_admissions, loglik_deaths;
  ParamVector start;
  AcceptanceLedger acceptance;
  Tuning tuning_after_burn_in;
  Tuning tuning_final;
};

struct PosteriorSamples {
  ModelSpec spec;
  std::vector<Param> params;  // column order of the draw matrices
  std::vector<ChainSamples> chains;
  SamplerConfig config;
  int tau = 0;

  long draws_per_chain() const { return chains.empty() ? 0 : chains.front().draws.rows(); }
  long total_draws() const;
  int column(Param p) const;
  /// Per-chain series of one parameter.
  std::vector<std::vector<double>> chain_values(Param p) const;
  Eigen::VectorXd pooled(Param p) const;
  /// Parameters of pooled draw `index` (chain-major order).
  ParamVector draw(long index) const;
  /// Per-day log-likelihood of every pooled draw (draws x tau).
  Eigen::MatrixXd pooled_day_loglik() const;
  Eigen::MatrixXd pooled(const Eigen::MatrixXd ChainSamples::*field) const;
  CountMatrix pooled(const CountMatrix ChainSamples::*field) const;
};

/// Starting point of one chain: latent series plus parameters chosen as the
/// best of `initial_candidates` prior draws, then spread by the chain's
/// overdispersion multiplier.
ChainState initialize_chain(const FitContext& ctx, const SamplerConfig& config, int chain, RngStream& rng);

ChainSamples run_chain(const FitContext& ctx, const SamplerConfig& config, int chain);
/// Independent chains on a worker pool; chain c uses stream c of the seed, so
/// results do not depend on the worker count.
PosteriorSamples run_chains(const FitContext& ctx, const SamplerConfig& config);

/// Potential scale reduction; nullopt when it is undefined (fewer than two
/// chains, fewer than two draws, or zero within-chain variance).
std::optional<double> gelman_rubin(const std::vector<std::vector<double>>& chains);
/// Multi-chain effective sample size (Geyer initial positive sequence).
double effective_sample_size(const std::vector<std::vector<double>>& chains);
/// Monte Carlo standard error of the mean by batch means (sqrt(n) batches).
double batch_means_se(std::span<const double> x);

struct Diagnostics {
  std::vector<Param> params;
  std::vector<std::optional<double>> rhat;
  std::vector<double> ess;
  bool converged = false;  // every R-hat available and below the threshold
  double threshold = 1.1;
};

Diagnostics diagnose(const PosteriorSamples& samples, double threshold = 1.1);

}  // namespace bcm
