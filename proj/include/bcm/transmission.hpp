#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "bcm/model.hpp"

namespace bcm {

/// Logistic decay of infectiousness over the infectious period.
struct IddCurve {
  double w0 = 0.0;   // inflection day
  double nu = 0.0;   // decay rate
  int support = 0;   // T_I

  static IddCurve from(const ParamVector& params, const ModelSpec& spec) {
    return {params[Param::W0], params[Param::NuIdd], spec.infectious_period};
  }
};

/// f(w) = 1 / (1 + exp(nu (w - w0))), w = 1..T_I.
inline double idd_weight(int w, const IddCurve& curve) {
  if (w < 1 || w > curve.support) throw std::domain_error("infectious age outside 1..T_I");
  return 1.0 / (1.0 + std::exp(curve.nu * (w - curve.w0)));
}

/// f(1..T_I) as a vector (index w-1).
std::vector<double> idd_weights(const IddCurve& curve);

/// Sum over ages of f(w) I_w; `by_age[w-1]` holds I_w.
double weighted_infectious(std::span<const Count> by_age, const IddCurve& curve);

/// Exponent of the per-susceptible escape probability: beta (1 - a) I_eff / N.
template <std::floating_point S>
S infection_pressure(S beta, S alarm, S effective_infectious, S population) {
  return beta * (S(1) - alarm) * effective_infectious / population;
}

/// 1 - exp(-beta (1 - a) I_eff / N).
template <std::floating_point S>
S infection_prob(S beta, S alarm, S effective_infectious, S population) {
  return -std::expm1(-infection_pressure(beta, alarm, effective_infectious, population));
}

/// 1 - exp(-rate).
template <std::floating_point S>
S rate_to_prob(S rate) {
  if (rate < 0) throw std::domain_error("negative rate");
  return -std::expm1(-rate);
}

/// log p and log(1 - p) for p = 1 - exp(-x), computed from x without forming p.
struct LogProb {
  double log_p;
  double log_1mp;
};

inline LogProb log_prob_from_pressure(double x) {
  if (x <= 0.0) return {-std::numeric_limits<double>::infinity(), 0.0};
  return {std::log(-std::expm1(-x)), -x};
}

}  // namespace bcm
