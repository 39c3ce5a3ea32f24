#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bcm/model.hpp"
#include "bcm/rng.hpp"

namespace bcm {

struct Scenario {
  Count population = 1'000'000;
  Count initial_infectious = 5;
  int tau = 40;
  ParamVector params;
  ModelSpec spec;

  PopulationState initial() const { return initial_state(population, initial_infectious, spec); }
};

/// Desk-scale stand-in for the simulation-study generator: SIHRD with
/// undetected infections and the cases+deaths alarm, N = 1e6, five initial
/// infections, 40 days, 25% detection, 30-day smoothing. Rates and alarm
/// growth are implementation-chosen so that epidemics peak inside the window.
Scenario default_scenario();

/// Alpha values of the three generating scenarios (high case, equal, high
/// death importance).
std::vector<double> default_alpha_values();

struct SimulationOptions {
  /// Replaces a_t for t >= 1 (a_0 stays 0). Test hook.
  std::optional<double> fixed_alarm;
};

/// Forward simulation from an arbitrary initial state; dispatches on the
/// compartment structure. Validates parameters before drawing anything.
Trajectory simulate(const PopulationState& initial, int tau, const ParamVector& params,
                    const ModelSpec& spec, RngStream& rng, const SimulationOptions& options = {});

Trajectory simulate_sihrd(const Scenario& scenario, RngStream& rng,
                          const SimulationOptions& options = {});
Trajectory simulate_sir_idd(const Scenario& scenario, RngStream& rng,
                            const SimulationOptions& options = {});

struct ScenarioRun {
  std::string label;
  double alpha = 0.0;
  int alpha_index = 0;
  int replicate = 0;
  Scenario scenario;
  Trajectory trajectory;
};

/// One trajectory per (alpha, replicate); the stream of each run is derived
/// from (alpha index, replicate) so runs are independent of ordering.
std::vector<ScenarioRun> generate_scenarios(const std::vector<double>& alpha_values, int replicates,
                                            const Scenario& base, const RngStream& rng);

std::string scenario_label(double alpha);

}  // namespace bcm
