#include "bcm/alarm.hpp"

#include <algorithm>

namespace bcm {

double alarm_value(AlarmKind kind, const ParamVector& params, double cases_smoothed,
                   double deaths_smoothed, double population) {
  switch (kind) {
    case AlarmKind::None: return 0.0;
    case AlarmKind::PowerCases: return power_alarm(cases_smoothed, population, params[Param::K]);
    case AlarmKind::MultiCasesDeaths:
      return multivariable_alarm(cases_smoothed, deaths_smoothed, population, params[Param::K],
                                 params[Param::Alpha]);
    case AlarmKind::ChangepointCases:
      return changepoint_alarm(cases_smoothed, params[Param::DeltaCp], params[Param::HCp]);
    case AlarmKind::HillCases:
      return hill_alarm(cases_smoothed, params[Param::DeltaHill], params[Param::X0Hill],
                        params[Param::NuHill]);
  }
  return 0.0;
}

std::vector<double> alarm_from_smoothed(AlarmKind kind, const ParamVector& params,
                                        std::span<const double> cases_smoothed,
                                        std::span<const double> deaths_smoothed,
                                        Count population) {
  std::vector<double> a(cases_smoothed.size(), 0.0);
  if (kind == AlarmKind::None) return a;
  const auto n = static_cast<double>(population);
  for (std::size_t t = 1; t < a.size(); ++t) {
    const double d = alarm_uses_deaths(kind) ? deaths_smoothed[t] : 0.0;
    a[t] = alarm_value(kind, params, cases_smoothed[t], d, n);
  }
  return a;
}

std::vector<double> alarm_series(const ModelSpec& spec, const ParamVector& params,
                                 std::span<const Count> cases, std::span<const Count> deaths,
                                 Count population) {
  if (spec.alarm == AlarmKind::None) return std::vector<double>(cases.size() + 1, 0.0);
  const auto cs = smooth_all(cases, spec.smoothing_window);
  std::vector<double> ds(cs.size(), 0.0);
  if (alarm_uses_deaths(spec.alarm)) {
    if (deaths.size() < cases.size()) throw std::invalid_argument("death series shorter than cases");
    ds = smooth_all(deaths.first(cases.size()), spec.smoothing_window);
  }
  return alarm_from_smoothed(spec.alarm, params, cs, ds, population);
}

}  // namespace bcm
