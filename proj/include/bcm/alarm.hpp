#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <vector>

#include "bcm/model.hpp"

namespace bcm {

/// Smoothed observed inputs to a multivariable alarm, in persons/day.
struct AlarmInput {
  double cases_smoothed = 0.0;
  double deaths_smoothed = 0.0;
  double population = 0.0;
};

/// Mean of x over days t-m .. t-1; days before 0 count as zero.
template <typename T>
double smooth_series(std::span<const T> x, int t, int m) {
  if (t < 1) throw std::domain_error("smoothing requires t >= 1");
  if (m < 1) throw std::domain_error("smoothing window must be >= 1");
  if (static_cast<std::size_t>(t) > x.size()) throw std::domain_error("t beyond series end");
  double sum = 0.0;
  for (int i = std::max(0, t - m); i < t; ++i) sum += static_cast<double>(x[static_cast<std::size_t>(i)]);
  return sum / m;
}

/// Smoothed values for every t = 0..x.size(); entry 0 is 0.
template <typename T>
std::vector<double> smooth_all(std::span<const T> x, int m) {
  if (m < 1) throw std::domain_error("smoothing window must be >= 1");
  std::vector<double> out(x.size() + 1, 0.0);
  double window = 0.0;
  for (std::size_t t = 1; t <= x.size(); ++t) {
    window += static_cast<double>(x[t - 1]);
    if (t > static_cast<std::size_t>(m)) window -= static_cast<double>(x[t - 1 - m]);
    out[t] = window / m;
  }
  return out;
}

/// 1 - (1 - x/N)^(1/k), evaluated as -expm1(log1p(-x/N)/k).
template <std::floating_point S>
S power_alarm(S x, S population, S k) {
  if (!(x >= 0) || x > population) throw std::domain_error("alarm input outside [0, N]");
  if (x == 0) return S(0);
  return -std::expm1(std::log1p(-x / population) / k);
}

template <std::floating_point S>
S multivariable_alarm(S cases_smoothed, S deaths_smoothed, S population, S k, S alpha) {
  const S x = alpha * cases_smoothed + (S(1) - alpha) * deaths_smoothed;
  return power_alarm(x, population, k);
}

inline double multivariable_alarm(const AlarmInput& in, double k, double alpha) {
  return multivariable_alarm(in.cases_smoothed, in.deaths_smoothed, in.population, k, alpha);
}

template <std::floating_point S>
S changepoint_alarm(S x, S delta, S threshold) {
  return x > threshold ? delta : S(0);
}

/// delta / (1 + (x0/x)^nu), continuous extension 0 at x = 0.
template <std::floating_point S>
S hill_alarm(S x, S delta, S x0, S nu) {
  if (x <= 0) return S(0);
  return delta / (S(1) + std::pow(x0 / x, nu));
}

/// Alarm value for pre-smoothed inputs under the model's alarm choice.
double alarm_value(AlarmKind kind, const ParamVector& params, double cases_smoothed,
                   double deaths_smoothed, double population);

/// a_t for t = 0..tau where tau = cases.size(); a_0 = 0.
std::vector<double> alarm_series(const ModelSpec& spec, const ParamVector& params,
                                 std::span<const Count> cases, std::span<const Count> deaths,
                                 Count population);

/// Same as alarm_series but from series already smoothed by smooth_all.
std::vector<double> alarm_from_smoothed(AlarmKind kind, const ParamVector& params,
                                        std::span<const double> cases_smoothed,
                                        std::span<const double> deaths_smoothed,
                                        Count population);

/// True when `kind` reads the death stream.
constexpr bool alarm_uses_deaths(AlarmKind kind) { return kind == AlarmKind::MultiCasesDeaths; }

}  // namespace bcm
