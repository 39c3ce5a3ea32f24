#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcm/likelihood.hpp"
#include "bcm/mcmc.hpp"
#include "bcm/simulate.hpp"

namespace bcm {

/// Bad config, data file or command line. Maps to exit code 1.
class UserError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::filesystem::path path;  // resolved against the config file's directory
  Count population = 0;
  Count infectious = 0, hospitalized = 0, removed = 0, dead = 0;
  std::string start_date;      // first day kept; empty keeps the first row
  int window_days = 0;         // 0 keeps every row from start_date on

  PopulationState initial(const ModelSpec& spec) const;
};

struct StudyConfig {
  std::vector<double> alpha_values = default_alpha_values();
  int replicates = 10;
  std::vector<std::string> models;  // empty: all six
  std::vector<int> r0_days;
};

struct RunConfig {
  nlohmann::json source;  // config as used, --seed applied
  std::string digest;     // SHA-256 of the canonical dump of `source`
  std::uint64_t seed = 1;
  ModelSpec model;
  PriorConfig priors;
  SamplerConfig sampler;
  std::optional<DataConfig> data;
  Scenario scenario;
  std::string scenario_start = "2020-01-01";
  StudyConfig study;
  int postpred_draws = 1000;
};

/// Builds a RunConfig from JSON. Unknown keys are rejected. `base_dir`
/// anchors relative data paths.
RunConfig parse_config(nlohmann::json j, std::optional<std::uint64_t> seed_override = std::nullopt,
                       const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

std::string sha256_hex(std::string_view bytes);
/// Digest of the canonical (sorted-key, compact) dump; independent of key order.
std::string config_digest(const nlohmann::json& j);

/// Reads `date,cases,hospitalizations,deaths`. Lines starting with '#' are
/// skipped; row numbers count physical lines with the header as row 1.
ObservedData read_observed_csv(std::istream& in, Count population, const PopulationState& initial);
ObservedData ingest_csv(const std::filesystem::path& path, const DataConfig& data, const ModelSpec& spec);
/// Keeps rows from `start_date` (if set) and at most `window_days` of them (if positive).
ObservedData select_window(const ObservedData& data, const std::string& start_date, int window_days);

/// Consecutive ISO dates starting at `start`.
std::vector<std::string> date_range(const std::string& start, int days);

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" for non-finite values.
std::string format_number(double x);

/// CSV file with a leading `# digest=... seed=...` provenance line.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const RunConfig& config, const std::vector<std::string>& header);
  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(double x);
  CsvWriter& cell(long long x);
  CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
  CsvWriter& cell(long x) { return cell(static_cast<long long>(x)); }
  void end_row();
  void close();
  ~CsvWriter();

 private:
  std::filesystem::path path_;
  std::string buffer_;
  bool row_started_ = false;
  bool closed_ = false;
};

void write_observed(const std::filesystem::path& path, const ObservedData& data, const RunConfig& config);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, const RunConfig& config);

/// manifest.json next to the outputs. Wall time is only written when given.
void write_manifest(const std::filesystem::path& dir, const RunConfig& config, const std::string& command,
                    const std::vector<std::string>& files, std::optional<double> wall_seconds);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// A fit directory: samples, latent draws, acceptance, diagnostics, the
/// config and data used.
struct FitRecord {
  RunConfig config;
  ObservedData data;
  PosteriorSamples samples;
};

std::vector<std::string> save_fit(const std::filesystem::path& dir, const FitRecord& fit);
FitRecord load_fit(const std::filesystem::path& dir);

void write_diagnostics(const std::filesystem::path& path, const Diagnostics& d, const RunConfig& config);

}  // namespace bcm
