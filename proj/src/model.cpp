#include "bcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bcm {

namespace {

struct ParamInfo {
  Param param;
  std::string_view name;
  Support support;
};

constexpr std::array<ParamInfo, kParamCount> kParams{{
    {Param::Beta, "beta", Support::Positive},
    {Param::K, "k", Support::Positive},
    {Param::Alpha, "alpha", Support::UnitInterval},
    {Param::Lambda, "lambda", Support::Positive},
    {Param::Gamma1, "gamma1", Support::Positive},
    {Param::Gamma2, "gamma2", Support::Positive},
    {Param::Phi, "phi", Support::Positive},
    {Param::PiDetect, "pi_detect", Support::UnitInterval},
    {Param::W0, "w0", Support::Positive},
    {Param::NuIdd, "nu_idd", Support::Positive},
    {Param::DeltaCp, "delta_cp", Support::UnitInterval},
    {Param::HCp, "H_cp", Support::Positive},
    {Param::DeltaHill, "delta_hill", Support::UnitInterval},
    {Param::X0Hill, "x0_hill", Support::Positive},
    {Param::NuHill, "nu_hill", Support::Positive},
}};

const ParamInfo& info(Param p) { return kParams[static_cast<std::size_t>(p)]; }

}  // namespace

std::string_view to_string(Compartments c) {
  return c == Compartments::SirIdd ? "SIR_IDD" : "SIHRD";
}

std::string_view to_string(AlarmKind a) {
  switch (a) {
    case AlarmKind::None: return "NONE";
    case AlarmKind::PowerCases: return "POWER_CASES";
    case AlarmKind::MultiCasesDeaths: return "MULTI_CASES_DEATHS";
    case AlarmKind::ChangepointCases: return "CHANGEPOINT_CASES";
    case AlarmKind::HillCases: return "HILL_CASES";
  }
  return "NONE";
}

Compartments parse_compartments(std::string_view s) {
  if (s == "SIR_IDD" || s == "SIR") return Compartments::SirIdd;
  if (s == "SIHRD") return Compartments::Sihrd;
  throw std::invalid_argument("unknown compartment structure '" + std::string(s) + "'");
}

AlarmKind parse_alarm(std::string_view s) {
  for (auto a : {AlarmKind::None, AlarmKind::PowerCases, AlarmKind::MultiCasesDeaths,
                 AlarmKind::ChangepointCases, AlarmKind::HillCases}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown alarm '" + std::string(s) + "'");
}

void check_spec(const ModelSpec& spec) {
  if (spec.smoothing_window < 1) throw std::invalid_argument("smoothing window must be >= 1");
  if (spec.compartments == Compartments::SirIdd && spec.infectious_period < 1)
    throw std::invalid_argument("infectious period must be >= 1");
}

std::string_view param_name(Param p) { return info(p).name; }

std::optional<Param> param_from_name(std::string_view name) {
  for (const auto& pi : kParams)
    if (pi.name == name) return pi.param;
  return std::nullopt;
}

Support param_support(Param p) { return info(p).support; }

std::vector<Param> active_params(const ModelSpec& spec) {
  std::vector<Param> out{Param::Beta};
  switch (spec.alarm) {
    case AlarmKind::None: break;
    case AlarmKind::PowerCases: out.push_back(Param::K); break;
    case AlarmKind::MultiCasesDeaths:
      out.push_back(Param::K);
      out.push_back(Param::Alpha);
      break;
    case AlarmKind::ChangepointCases:
      out.push_back(Param::DeltaCp);
      out.push_back(Param::HCp);
      break;
    case AlarmKind::HillCases:
      out.push_back(Param::DeltaHill);
      out.push_back(Param::X0Hill);
      out.push_back(Param::NuHill);
      break;
  }
  if (spec.compartments == Compartments::Sihrd) {
    out.insert(out.end(), {Param::Lambda, Param::Gamma1, Param::Gamma2, Param::Phi});
  } else {
    out.insert(out.end(), {Param::W0, Param::NuIdd});
  }
  if (spec.undetected) out.push_back(Param::PiDetect);
  std::sort(out.begin(), out.end());
  return out;
}

double ParamVector::operator[](Param p) const {
  const double v = values_[index(p)];
  if (std::isnan(v))
    throw std::out_of_range("parameter '" + std::string(param_name(p)) + "' is not set");
  return v;
}

bool ParamVector::operator==(const ParamVector& o) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const bool a = std::isnan(values_[i]), b = std::isnan(o.values_[i]);
    if (a != b) return false;
    if (!a && values_[i] != o.values_[i]) return false;
  }
  return true;
}

ExitProbabilities exit_probabilities(const ParamVector& params) {
  auto prob = [&](Param p) { return params.has(p) ? -std::expm1(-params[p]) : 0.0; };
  return {prob(Param::Lambda), prob(Param::Gamma1), prob(Param::Gamma2), prob(Param::Phi)};
}

std::vector<std::string> validate_params(const ParamVector& params, const ModelSpec& spec) {
  std::vector<std::string> out;
  for (Param p : active_params(spec)) {
    const auto name = std::string(param_name(p));
    if (!params.has(p)) {
      out.push_back(name + " missing");
      continue;
    }
    const double v = params[p];
    if (!std::isfinite(v)) {
      out.push_back(name + " not finite");
      continue;
    }
    if (param_support(p) == Support::Positive) {
      if (v <= 0.0) out.push_back(name + " must be > 0");
    } else if (p == Param::PiDetect) {
      if (v <= 0.0 || v > 1.0) out.push_back(name + " out of (0,1]");
    } else if (v < 0.0 || v > 1.0) {
      out.push_back(name + " out of [0,1]");
    }
  }
  if (spec.compartments == Compartments::Sihrd) {
    const auto ep = exit_probabilities(params);
    if (ep.to_hospital + ep.infectious_recovery > 1.0)
      out.push_back("pi_IH + pi_IR exceeds 1");
    if (ep.death + ep.hospital_recovery > 1.0) out.push_back("pi_HD + pi_HR exceeds 1");
  }
  return out;
}

namespace {
std::string join_violations(const std::vector<std::string>& v) {
  std::string s = "invalid parameters: ";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
  return s;
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::invalid_argument(join_violations(violations)), violations_(std::move(violations)) {}

void require_valid(const ParamVector& params, const ModelSpec& spec) {
  auto v = validate_params(params, spec);
  if (!v.empty()) throw ValidationError(std::move(v));
}

PopulationState initial_state(Count population, Count infectious, const ModelSpec& spec,
                              Count hospitalized, Count removed, Count dead) {
  PopulationState s;
  s.infectious = infectious;
  s.hospitalized = hospitalized;
  s.removed = removed;
  s.dead = dead;
  s.susceptible = population - infectious - hospitalized - removed - dead;
  if (spec.compartments == Compartments::SirIdd) {
    s.infectious_by_age.assign(static_cast<std::size_t>(spec.infectious_period), 0);
    s.infectious_by_age.front() = infectious;
  }
  return s;
}

InconsistencyError::InconsistencyError(int day, const std::string& what)
    : std::runtime_error("inconsistent trajectory at day " + std::to_string(day) + ": " + what),
      day_(day) {}

namespace {
template <typename F>
std::vector<Count> collect_transitions(const Trajectory& tr, F f) {
  std::vector<Count> out;
  out.reserve(tr.transitions.size());
  for (const auto& r : tr.transitions) out.push_back(f(r));
  return out;
}
}  // namespace

std::vector<Count> Trajectory::infections() const {
  return collect_transitions(*this, [](const auto& r) { return r.infections; });
}
std::vector<Count> Trajectory::detected() const {
  return collect_transitions(*this, [](const auto& r) { return r.detected; });
}
std::vector<Count> Trajectory::admissions() const {
  return collect_transitions(*this, [](const auto& r) { return r.admissions; });
}
std::vector<Count> Trajectory::deaths() const {
  return collect_transitions(*this, [](const auto& r) { return r.deaths; });
}
std::vector<Count> Trajectory::susceptible() const {
  std::vector<Count> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.susceptible);
  return out;
}

Trajectory build_trajectory(const PopulationState& initial,
                            std::span<const TransitionRecord> transitions, const ModelSpec& spec) {
  check_spec(spec);
  const bool sir = spec.compartments == Compartments::SirIdd;
  if (initial.susceptible < 0 || initial.infectious < 0 || initial.hospitalized < 0 ||
      initial.removed < 0 || initial.dead < 0)
    throw InconsistencyError(0, "negative initial count");

  Trajectory tr;
  tr.population = initial.total();
  tr.compartments = spec.compartments;
  tr.infectious_period = sir ? spec.infectious_period : 0;
  tr.states.reserve(transitions.size() + 1);
  tr.transitions.reserve(transitions.size());

  PopulationState cur = initial;
  cur.t = 0;
  if (sir) {
    const auto ti = static_cast<std::size_t>(spec.infectious_period);
    if (cur.infectious_by_age.empty()) {
      cur.infectious_by_age.assign(ti, 0);
      cur.infectious_by_age.front() = cur.infectious;
    }
    if (cur.infectious_by_age.size() != ti)
      throw InconsistencyError(0, "age ledger length differs from infectious period");
    Count sum = 0;
    for (Count c : cur.infectious_by_age) sum += c;
    if (sum != cur.infectious) throw InconsistencyError(0, "age ledger does not sum to I");
    if (cur.hospitalized != 0 || cur.dead != 0)
      throw InconsistencyError(0, "SIR state with hospital or death counts");
  } else {
    cur.infectious_by_age.clear();
  }
  tr.states.push_back(cur);

  for (std::size_t i = 0; i < transitions.size(); ++i) {
    TransitionRecord rec = transitions[i];
    const int day = static_cast<int>(i);
    rec.t = day;
    if (rec.infections < 0 || rec.detected < 0 || rec.undetected < 0 || rec.admissions < 0 ||
        rec.recoveries_infectious < 0 || rec.recoveries_hospital < 0 || rec.deaths < 0)
      throw InconsistencyError(day, "negative transition count");
    if (rec.detected > rec.infections) throw InconsistencyError(day, "detected exceeds infections");
    if (spec.undetected) {
      if (rec.detected + rec.undetected != rec.infections)
        throw InconsistencyError(day, "detected + undetected != infections");
    } else if (rec.detected != rec.infections || rec.undetected != 0) {
      throw InconsistencyError(day, "undetected infections present with detection off");
    }
    if (rec.infections > cur.susceptible) throw InconsistencyError(day, "infections exceed S");

    PopulationState next = cur;
    next.t = day + 1;
    next.susceptible = cur.susceptible - rec.infections;
    if (sir) {
      if (rec.admissions != 0 || rec.recoveries_hospital != 0 || rec.deaths != 0)
        throw InconsistencyError(day, "hospital transitions in SIR mode");
      auto& ages = next.infectious_by_age;
      rec.recoveries_infectious = ages.back();
      std::rotate(ages.rbegin(), ages.rbegin() + 1, ages.rend());
      ages.front() = rec.infections;
      next.infectious = cur.infectious + rec.infections - rec.recoveries_infectious;
      next.removed = cur.removed + rec.recoveries_infectious;
    } else {
      if (rec.admissions + rec.recoveries_infectious > cur.infectious)
        throw InconsistencyError(day, "exits from I exceed I");
      if (rec.deaths + rec.recoveries_hospital > cur.hospitalized)
        throw InconsistencyError(day, "exits from H exceed H");
      next.infectious = cur.infectious + rec.infections - rec.admissions - rec.recoveries_infectious;
      next.hospitalized = cur.hospitalized + rec.admissions - rec.recoveries_hospital - rec.deaths;
      next.removed = cur.removed + rec.recoveries_infectious + rec.recoveries_hospital;
      next.dead = cur.dead + rec.deaths;
    }
    tr.transitions.push_back(rec);
    tr.states.push_back(next);
    cur = std::move(next);
  }
  return tr;
}

bool ObservedData::any_missing() const {
  return std::find(hospitalization_missing.begin(), hospitalization_missing.end(), true) !=
         hospitalization_missing.end();
}

void check_observed(const ObservedData& data) {
  const auto tau = data.cases.size();
  if (data.deaths.size() != tau || data.hospitalizations.size() != tau ||
      data.hospitalization_missing.size() != tau)
    throw std::invalid_argument("observed series have different lengths");
  for (std::size_t t = 0; t < tau; ++t) {
    if (data.cases[t] < 0 || data.deaths[t] < 0 ||
        (!data.hospitalization_missing[t] && data.hospitalizations[t] < 0))
      throw std::invalid_argument("negative count at day " + std::to_string(t));
  }
  const auto& s = data.initial;
  if (s.susceptible < 0 || s.infectious < 0 || s.hospitalized < 0 || s.removed < 0 || s.dead < 0)
    throw std::invalid_argument("negative initial count");
  if (s.total() != data.population)
    throw std::invalid_argument("initial counts do not sum to the population");
}

ObservedData observe(const Trajectory& traj) {
  ObservedData d;
  d.population = traj.population;
  d.cases = traj.detected();
  d.hospitalizations = traj.admissions();
  d.deaths = traj.deaths();
  d.hospitalization_missing.assign(d.cases.size(), false);
  d.initial = traj.initial();
  return d;
}

}  // namespace bcm
