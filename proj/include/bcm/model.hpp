#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bcm {

using Count = std::int64_t;

enum class Compartments { SirIdd, Sihrd };

enum class AlarmKind { None, PowerCases, MultiCasesDeaths, ChangepointCases, HillCases };

std::string_view to_string(Compartments c);
std::string_view to_string(AlarmKind a);
Compartments parse_compartments(std::string_view s);
AlarmKind parse_alarm(std::string_view s);

struct ModelSpec {
  Compartments compartments = Compartments::Sihrd;
  AlarmKind alarm = AlarmKind::MultiCasesDeaths;
  bool undetected = true;
  int smoothing_window = 30;    // m, days
  int infectious_period = 14;   // T_I, days (SIR-IDD only)

  bool operator==(const ModelSpec&) const = default;
};

/// Throws std::invalid_argument when the window or infectious period is not positive.
void check_spec(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Parameters

enum class Param : int {
  Beta,
  K,
  Alpha,
  Lambda,
  Gamma1,
  Gamma2,
  Phi,
  PiDetect,
  W0,
  NuIdd,
  DeltaCp,
  HCp,
  DeltaHill,
  X0Hill,
  NuHill,
};
inline constexpr int kParamCount = 15;

std::string_view param_name(Param p);
std::optional<Param> param_from_name(std::string_view name);

/// How a parameter is constrained; drives validation and the sampler's
/// unconstraining transform.
enum class Support { Positive, UnitInterval };
Support param_support(Param p);

/// Parameters active under `spec`, in canonical order.
std::vector<Param> active_params(const ModelSpec& spec);

/// Sparse parameter vector: parameters irrelevant to a model are absent.
class ParamVector {
 public:
  ParamVector() { values_.fill(kAbsent); }

  bool has(Param p) const { return !std::isnan(values_[index(p)]); }
  double operator[](Param p) const;
  double get_or(Param p, double fallback) const { return has(p) ? values_[index(p)] : fallback; }
  ParamVector& set(Param p, double v) {
    values_[index(p)] = v;
    return *this;
  }
  void erase(Param p) { values_[index(p)] = kAbsent; }

  bool operator==(const ParamVector& o) const;

 private:
  static constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
  static constexpr std::size_t index(Param p) { return static_cast<std::size_t>(p); }
  std::array<double, kParamCount> values_;
};

/// Per-day transition probabilities implied by the SIHRD exit rates.
struct ExitProbabilities {
  double to_hospital = 0.0;         // pi^(IH)
  double infectious_recovery = 0.0; // pi^(IR)
  double hospital_recovery = 0.0;   // pi^(HR)
  double death = 0.0;               // pi^(HD)
};
ExitProbabilities exit_probabilities(const ParamVector& params);

/// Full list of invariant violations; empty means valid.
std::vector<std::string> validate_params(const ParamVector& params, const ModelSpec& spec);

class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Throws ValidationError when validate_params reports anything.
void require_valid(const ParamVector& params, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// State and transitions

struct PopulationState {
  int t = 0;
  Count susceptible = 0;
  Count infectious = 0;
  Count hospitalized = 0;
  Count removed = 0;
  Count dead = 0;
  /// SIR-IDD only: entry w-1 holds the infectious individuals on day w of
  /// their infectious period.
  std::vector<Count> infectious_by_age;

  Count total() const { return susceptible + infectious + hospitalized + removed + dead; }
  bool operator==(const PopulationState&) const = default;
};

/// Initial state with every infectious individual at age 1 (SIR-IDD) and the
/// remainder susceptible.
PopulationState initial_state(Count population, Count infectious, const ModelSpec& spec,
                              Count hospitalized = 0, Count removed = 0, Count dead = 0);

struct TransitionRecord {
  int t = 0;
  Count infections = 0;             // I*
  Count detected = 0;               // C*
  Count undetected = 0;             // U*
  Count admissions = 0;             // H*
  Count recoveries_infectious = 0;  // R^I* (SIR-IDD: deterministic removals)
  Count recoveries_hospital = 0;    // R^H*
  Count deaths = 0;                 // D*

  bool operator==(const TransitionRecord&) const = default;
};

/// Model/operation combination the toolkit refuses (e.g. simulating deaths
/// for an SIR structure).
class UnsupportedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InconsistencyError : public std::runtime_error {
 public:
  InconsistencyError(int day, const std::string& what);
  int day() const { return day_; }

 private:
  int day_;
};

struct Trajectory {
  Count population = 0;
  Compartments compartments = Compartments::Sihrd;
  int infectious_period = 0;
  std::vector<TransitionRecord> transitions;  // t = 0..tau-1
  std::vector<PopulationState> states;        // t = 0..tau

  int tau() const { return static_cast<int>(transitions.size()); }
  const PopulationState& initial() const { return states.front(); }

  std::vector<Count> infections() const;
  std::vector<Count> detected() const;
  std::vector<Count> admissions() const;
  std::vector<Count> deaths() const;
  std::vector<Count> susceptible() const;  // length tau + 1

  bool operator==(const Trajectory&) const = default;
};

/// Applies the difference equations to `initial`. In SIR-IDD mode the removal
/// stream is derived from the infection stream (an individual infected on day
/// t has infectious age 1 on day t+1 and leaves after age T_I); any removal
/// counts supplied by the caller are ignored.
Trajectory build_trajectory(const PopulationState& initial,
                            std::span<const TransitionRecord> transitions, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Observations

struct ObservedData {
  Count population = 0;
  std::vector<Count> cases;
  std::vector<Count> hospitalizations;
  std::vector<bool> hospitalization_missing;
  std::vector<Count> deaths;
  PopulationState initial;
  std::vector<std::string> dates;  // metadata only

  int tau() const { return static_cast<int>(cases.size()); }
  bool any_missing() const;
};

/// Throws std::invalid_argument on negative counts, ragged series or an
/// initial state that does not sum to the population.
void check_observed(const ObservedData& data);

/// Observed streams of a trajectory (cases, admissions, deaths), nothing missing.
ObservedData observe(const Trajectory& traj);

}  // namespace bcm
