#pragma once

// Checks shared by the unit tests and the acceptance runner. Each returns a
// verdict plus a one-line summary of the numbers behind it.

#include <filesystem>
#include <string>

#include "bcm/study.hpp"

namespace criteria {

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict likelihood_oracle(int instances_per_family = 20);
Verdict likelihood_normalization();
Verdict r0_oracle(long replicates = 100000);
Verdict sampler_stationarity(long sweeps = 1000000);
Verdict prior_recovery(long iterations = 200000);

/// Desk-scale study behind the recovery and model-comparison checks: the
/// correct model on every alpha scenario, plus three misspecified models on
/// the high-death-importance scenario.
bcm::StudyResult acceptance_study(bool verbose);
Verdict parameter_recovery(const bcm::StudyResult& study);
Verdict r0_rmse_direction(const bcm::StudyResult& study);
Verdict alpha_bias_direction(const bcm::StudyResult& study);
Verdict waic_discrimination(const bcm::StudyResult& study);

/// Runs every subcommand twice into sibling directories under `work` and
/// compares the outputs byte for byte.
Verdict cli_determinism(const std::filesystem::path& work);

inline constexpr const char* kCorrectModel = "SIHRD/MULTI_CASES_DEATHS";
inline constexpr const char* kCasesOnlyModel = "SIHRD/POWER_CASES";
inline constexpr const char* kSirCasesModel = "SIR_IDD/POWER_CASES";
inline constexpr const char* kSirMultiModel = "SIR_IDD/MULTI_CASES_DEATHS";

}  // namespace criteria
