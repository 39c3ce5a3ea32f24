#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bcm/likelihood.hpp"
#include "bcm/mcmc.hpp"
#include "bcm/simulate.hpp"

namespace bcm {

/// A model fitted in the simulation study.
struct StudyModel {
  std::string name;  // e.g. "SIHRD/MULTI_CASES_DEATHS"
  ModelSpec spec;
};

std::string model_name(const ModelSpec& spec);
/// Parses "SIHRD/POWER_CASES" style names onto `base` (window, period, undetected kept).
StudyModel parse_model_name(std::string_view name, const ModelSpec& base);

/// SIHRD and SIR-IDD, each with no alarm, a cases alarm and the cases+deaths alarm.
std::vector<StudyModel> six_models(const ModelSpec& base);

/// Priors for fitting any study model to data from `truth`: vague Gamma(0.1, 0.1) on
/// beta and k, Uniform(0, 1) on alpha, Beta(25, 75) on detection, Gamma priors
/// with shape 100 centred on the true hospitalization and recovery rates and
/// shape 10 on the death rate, Normal(mean infectious stay, 0.5) on the IDD
/// inflection.
PriorConfig study_priors(const Scenario& truth);

/// Mean number of days an SIHRD individual stays infectious under `params`.
double mean_infectious_stay(const ParamVector& params);

struct ParamSummary {
  double mean = 0.0, lower = 0.0, upper = 0.0;  // posterior mean, 2.5% and 97.5% quantiles
  bool covers(double truth) const { return lower <= truth && truth <= upper; }
};
ParamSummary summarize_param(const PosteriorSamples& samples, Param p);

struct StudyFit {
  int alpha_index = 0;
  double alpha = 0.0;
  int replicate = 0;
  std::string model;
  std::vector<int> r0_days;
  std::vector<double> r0_estimate;  // posterior mean R0 at r0_days
  std::vector<double> r0_truth;
  std::optional<ParamSummary> beta, k, alpha_post;
  double max_rhat = 0.0;  // NaN when unavailable
  bool converged = false;
  double waic = 0.0;
  double seconds = 0.0;
};

struct StudyOptions {
  std::vector<double> alpha_values = default_alpha_values();
  int replicates = 10;
  std::vector<StudyModel> models;
  /// Subset of (alpha index, model name) pairs to fit; empty fits everything.
  std::function<bool(int alpha_index, const std::string& model)> include;
  SamplerConfig sampler;
  std::vector<int> r0_days;  // default {0, tau / 2, tau - 1}
  std::function<void(const StudyFit&)> on_fit;
};

struct StudyResult {
  std::vector<ScenarioRun> runs;
  std::vector<StudyFit> fits;
};

/// Simulates the scenario battery and fits every requested model to every
/// run. Each fit's sampler seed is derived from (alpha index, replicate).
StudyResult run_study(const Scenario& base, const StudyOptions& options, const RngStream& rng);

struct RmseRow {
  double alpha = 0.0;
  std::string model;
  int day = 0;
  double rmse = 0.0;
  int fits = 0;
};
std::vector<RmseRow> rmse_table(const StudyResult& result);

struct AlphaRow {
  double alpha = 0.0;
  std::string model;
  double mean_of_means = 0.0;
  double coverage = 0.0;
  int fits = 0;
};
std::vector<AlphaRow> alpha_table(const StudyResult& result);

}  // namespace bcm
