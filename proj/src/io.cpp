#include "bcm/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>

namespace bcm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw UserError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw UserError("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UserError(where + "." + key + " has the wrong type");
  }
}

Param param_key(const std::string& name, const std::string& where) {
  const auto p = param_from_name(name);
  if (!p) throw UserError("unknown parameter '" + name + "' in " + where);
  return *p;
}

Prior parse_prior(const json& j, const std::string& where) {
  const auto dist = get<std::string>(j, "dist", where, "");
  auto num = [&](const char* key) {
    if (!j.contains(key)) throw UserError(where + " needs '" + key + "'");
    return get<double>(j, key, where, 0.0);
  };
  Prior p;
  if (dist == "gamma") {
    check_keys(j, {"dist", "shape", "rate"}, where);
    p = GammaPrior{num("shape"), num("rate")};
  } else if (dist == "normal") {
    check_keys(j, {"dist", "mean", "sd"}, where);
    p = NormalPrior{num("mean"), num("sd")};
  } else if (dist == "beta") {
    check_keys(j, {"dist", "a", "b"}, where);
    p = BetaPrior{num("a"), num("b")};
  } else if (dist == "uniform") {
    check_keys(j, {"dist", "lo", "hi"}, where);
    p = UniformPrior{num("lo"), num("hi")};
  } else {
    throw UserError(where + ".dist must be gamma, normal, beta or uniform");
  }
  try {
    check_prior(p);
  } catch (const std::invalid_argument& e) {
    throw UserError(where + ": " + e.what());
  }
  return p;
}

ParamVector parse_param_values(const json& j, const std::string& where, ParamVector base = {}) {
  if (!j.is_object()) throw UserError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw UserError(where + "." + key + " must be a number");
    base.set(param_key(key, where), value.get<double>());
  }
  return base;
}

ModelSpec parse_model(const json& j) {
  check_keys(j, {"compartments", "alarm", "undetected", "smoothing_window", "infectious_period"}, "model");
  ModelSpec spec;
  try {
    spec.compartments = parse_compartments(get<std::string>(j, "compartments", "model", "SIHRD"));
    spec.alarm = parse_alarm(get<std::string>(j, "alarm", "model", "MULTI_CASES_DEATHS"));
  } catch (const std::invalid_argument& e) {
    throw UserError(std::string("model: ") + e.what());
  }
  spec.undetected = get<bool>(j, "undetected", "model", true);
  spec.smoothing_window = get<int>(j, "smoothing_window", "model", 30);
  spec.infectious_period = get<int>(j, "infectious_period", "model", 14);
  try {
    check_spec(spec);
  } catch (const std::invalid_argument& e) {
    throw UserError(std::string("model: ") + e.what());
  }
  return spec;
}

PriorConfig parse_priors(const json& j) {
  check_keys(j, {"detection_mean", "infectious_duration", "params"}, "priors");
  const double detect = get<double>(j, "detection_mean", "priors", 0.25);
  const double duration = get<double>(j, "infectious_duration", "priors", 7.0);
  if (!(detect > 0.0 && detect < 1.0)) throw UserError("priors.detection_mean must lie in (0, 1)");
  if (!(duration > 0.0)) throw UserError("priors.infectious_duration must be positive");
  PriorConfig pc = PriorConfig::defaults(duration, detect);
  if (j.contains("params")) {
    const auto& ps = j.at("params");
    if (!ps.is_object()) throw UserError("priors.params must be an object");
    for (const auto& [key, value] : ps.items()) pc.set(param_key(key, "priors.params"), parse_prior(value, "priors.params." + key));
  }
  return pc;
}

SamplerConfig parse_sampler(const json& j) {
  const std::string w = "sampler";
  check_keys(j,
             {"chains", "iterations", "burn_in", "thin", "block_days", "max_shift", "joint_block", "adapt_interval",
              "target_acceptance", "block_target", "latent_target", "initial_candidates", "overdispersion", "initial",
              "fixed", "store_latent"},
             w);
  SamplerConfig c;
  c.chains = get<int>(j, "chains", w, c.chains);
  c.iterations = get<long>(j, "iterations", w, c.iterations);
  c.burn_in = get<long>(j, "burn_in", w, c.burn_in);
  c.thin = get<int>(j, "thin", w, c.thin);
  c.block_days = get<int>(j, "block_days", w, c.block_days);
  c.max_shift = get<int>(j, "max_shift", w, c.max_shift);
  c.joint_block = get<bool>(j, "joint_block", w, c.joint_block);
  c.adapt_interval = get<int>(j, "adapt_interval", w, c.adapt_interval);
  c.target_acceptance = get<double>(j, "target_acceptance", w, c.target_acceptance);
  c.block_target = get<double>(j, "block_target", w, c.block_target);
  c.latent_target = get<double>(j, "latent_target", w, c.latent_target);
  c.initial_candidates = get<int>(j, "initial_candidates", w, c.initial_candidates);
  c.overdispersion = get<double>(j, "overdispersion", w, c.overdispersion);
  c.store_latent = get<bool>(j, "store_latent", w, c.store_latent);
  if (j.contains("initial")) c.initial = parse_param_values(j.at("initial"), "sampler.initial");
  if (j.contains("fixed")) {
    for (const auto& name : get<std::vector<std::string>>(j, "fixed", w, {}))
      c.fixed.push_back(param_key(name, "sampler.fixed"));
  }
  try {
    c.check();
  } catch (const std::invalid_argument& e) {
    throw UserError(std::string("sampler: ") + e.what());
  }
  return c;
}

DataConfig parse_data(const json& j, const fs::path& base_dir) {
  check_keys(j, {"path", "population", "initial", "start_date", "window_days"}, "data");
  DataConfig d;
  const auto path = get<std::string>(j, "path", "data", "");
  if (path.empty()) throw UserError("data.path is required");
  d.path = fs::path(path).is_absolute() || base_dir.empty() ? fs::path(path) : base_dir / path;
  d.population = get<Count>(j, "population", "data", 0);
  if (d.population <= 0) throw UserError("data.population must be positive");
  if (j.contains("initial")) {
    const auto& init = j.at("initial");
    check_keys(init, {"infectious", "hospitalized", "removed", "dead"}, "data.initial");
    d.infectious = get<Count>(init, "infectious", "data.initial", 0);
    d.hospitalized = get<Count>(init, "hospitalized", "data.initial", 0);
    d.removed = get<Count>(init, "removed", "data.initial", 0);
    d.dead = get<Count>(init, "dead", "data.initial", 0);
  }
  if (d.infectious < 0 || d.hospitalized < 0 || d.removed < 0 || d.dead < 0)
    throw UserError("data.initial counts must be non-negative");
  if (d.infectious + d.hospitalized + d.removed + d.dead > d.population)
    throw UserError("data.initial exceeds data.population");
  d.start_date = get<std::string>(j, "start_date", "data", "");
  d.window_days = get<int>(j, "window_days", "data", 0);
  if (d.window_days < 0) throw UserError("data.window_days must be non-negative");
  return d;
}

Scenario parse_scenario(const json& j, const ModelSpec& spec, std::string& start) {
  check_keys(j, {"population", "initial_infectious", "tau", "start_date", "params"}, "scenario");
  Scenario s = default_scenario();
  s.spec = spec;
  s.population = get<Count>(j, "population", "scenario", s.population);
  s.initial_infectious = get<Count>(j, "initial_infectious", "scenario", s.initial_infectious);
  s.tau = get<int>(j, "tau", "scenario", s.tau);
  start = get<std::string>(j, "start_date", "scenario", start);
  if (j.contains("params")) s.params = parse_param_values(j.at("params"), "scenario.params", s.params);
  if (s.population <= 0 || s.initial_infectious < 0 || s.initial_infectious > s.population || s.tau < 1)
    throw UserError("scenario needs population > 0, 0 <= initial_infectious <= population and tau >= 1");
  return s;
}

StudyConfig parse_study(const json& j) {
  check_keys(j, {"alpha_values", "replicates", "models", "r0_days"}, "study");
  StudyConfig s;
  s.alpha_values = get<std::vector<double>>(j, "alpha_values", "study", s.alpha_values);
  s.replicates = get<int>(j, "replicates", "study", s.replicates);
  s.models = get<std::vector<std::string>>(j, "models", "study", {});
  s.r0_days = get<std::vector<int>>(j, "r0_days", "study", {});
  if (s.replicates < 1) throw UserError("study.replicates must be >= 1");
  for (double a : s.alpha_values)
    if (!(a >= 0.0 && a <= 1.0)) throw UserError("study.alpha_values must lie in [0, 1]");
  return s;
}

std::optional<std::chrono::sys_days> parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto num = [&](std::size_t from, std::size_t len, auto& out) {
    const auto r = std::from_chars(s.data() + from, s.data() + from + len, out);
    return r.ec == std::errc{} && r.ptr == s.data() + from + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UserError("cannot write " + path.string());
  f << bytes;
  if (!f) throw UserError("failed writing " + path.string());
}

std::string provenance(const RunConfig& config) {
  return "# digest=" + config.digest + " seed=" + std::to_string(config.seed) + "\n";
}

// Data lines of a CSV written by CsvWriter, header included.
std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::vector<std::string>& expected_prefix) {
  std::ifstream f(path);
  if (!f) throw UserError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(split(line));
  }
  if (rows.empty()) throw UserError(path.string() + " is empty");
  const auto& head = rows.front();
  if (head.size() < expected_prefix.size() || !std::equal(expected_prefix.begin(), expected_prefix.end(), head.begin()))
    throw UserError(path.string() + " has an unexpected header");
  return rows;
}

double to_double(const std::string& s, const fs::path& path) {
  double x = 0.0;
  if (!parse_number(s, x)) throw UserError("bad number '" + s + "' in " + path.string());
  return x;
}

long long to_integer(const std::string& s, const fs::path& path) {
  long long x = 0;
  if (!parse_number(s, x)) throw UserError("bad integer '" + s + "' in " + path.string());
  return x;
}

constexpr std::array<const char*, 4> kSeriesNames{"infections", "admissions", "recoveries_infectious",
                                                  "recoveries_hospital"};
constexpr std::array<CountMatrix ChainSamples::*, 4> kSeriesFields{
    &ChainSamples::infections, &ChainSamples::admissions, &ChainSamples::recoveries_infectious,
    &ChainSamples::recoveries_hospital};

}  // namespace

PopulationState DataConfig::initial(const ModelSpec& spec) const {
  return initial_state(population, infectious, spec, hospitalized, removed, dead);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string config_digest(const json& j) { return sha256_hex(j.dump()); }

RunConfig parse_config(json j, std::optional<std::uint64_t> seed_override, const fs::path& base_dir) {
  check_keys(j, {"seed", "model", "priors", "sampler", "data", "scenario", "study", "postpred"}, "config");
  if (seed_override) j["seed"] = *seed_override;
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "config", 1);
  c.model = parse_model(j.value("model", json::object()));
  c.priors = parse_priors(j.value("priors", json::object()));
  c.sampler = parse_sampler(j.value("sampler", json::object()));
  c.sampler.seed = c.seed;
  if (j.contains("data")) c.data = parse_data(j.at("data"), base_dir);
  c.scenario = parse_scenario(j.value("scenario", json::object()), c.model, c.scenario_start);
  c.study = parse_study(j.value("study", json::object()));
  if (j.contains("postpred")) {
    const auto& pp = j.at("postpred");
    check_keys(pp, {"draws"}, "postpred");
    c.postpred_draws = get<int>(pp, "draws", "postpred", c.postpred_draws);
  }
  if (c.postpred_draws < 1) throw UserError("postpred.draws must be >= 1");
  if (!parse_date(c.scenario_start)) throw UserError("scenario.start_date must be YYYY-MM-DD");
  if (c.data && !c.data->start_date.empty() && !parse_date(c.data->start_date))
    throw UserError("data.start_date must be YYYY-MM-DD");
  c.digest = config_digest(j);
  c.source = std::move(j);
  return c;
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream f(path);
  if (!f) throw UserError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw UserError("config " + path.string() + ": " + e.what());
  }
  return parse_config(std::move(j), seed_override, path.parent_path());
}

ObservedData read_observed_csv(std::istream& in, Count population, const PopulationState& initial) {
  ObservedData d;
  d.population = population;
  d.initial = initial;
  std::string line;
  int row = 0;
  bool header = false;
  std::optional<std::chrono::sys_days> prev;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (!line.empty() && line.front() == '#') continue;
    const std::string where = "row " + std::to_string(row) + ": ";
    if (!header) {
      if (line != "date,cases,hospitalizations,deaths")
        throw UserError(where + "expected header date,cases,hospitalizations,deaths");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 4) throw UserError(where + "expected 4 cells, found " + std::to_string(cells.size()));
    const auto day = parse_date(cells[0]);
    if (!day) throw UserError(where + "unparseable date '" + cells[0] + "'");
    if (prev && *day != *prev + std::chrono::days{1})
      throw UserError(where + "date " + cells[0] + " does not follow " + format_date(*prev));
    prev = day;
    Count values[3] = {0, 0, 0};
    static constexpr const char* names[3] = {"cases", "hospitalizations", "deaths"};
    bool missing = false;
    for (int k = 0; k < 3; ++k) {
      const auto& cell = cells[static_cast<std::size_t>(k) + 1];
      if (k == 1 && cell.empty()) {
        missing = true;
        continue;
      }
      if (!parse_number(cell, values[k])) throw UserError(where + "unparseable " + names[k] + " '" + cell + "'");
      if (values[k] < 0) throw UserError(where + "negative count");
    }
    d.dates.push_back(cells[0]);
    d.cases.push_back(values[0]);
    d.hospitalizations.push_back(values[1]);
    d.hospitalization_missing.push_back(missing);
    d.deaths.push_back(values[2]);
  }
  if (!header) throw UserError("missing header row");
  if (d.cases.empty()) throw UserError("no data rows");
  return d;
}

ObservedData select_window(const ObservedData& data, const std::string& start_date, int window_days) {
  std::size_t from = 0;
  if (!start_date.empty()) {
    const auto it = std::find(data.dates.begin(), data.dates.end(), start_date);
    if (it == data.dates.end()) throw UserError("start date " + start_date + " is not in the data");
    from = static_cast<std::size_t>(it - data.dates.begin());
  }
  std::size_t to = data.cases.size();
  if (window_days > 0) to = std::min(to, from + static_cast<std::size_t>(window_days));
  ObservedData out = data;
  auto cut = [&](auto& v) { v = std::decay_t<decltype(v)>(v.begin() + from, v.begin() + to); };
  cut(out.cases);
  cut(out.hospitalizations);
  cut(out.hospitalization_missing);
  cut(out.deaths);
  if (!out.dates.empty()) cut(out.dates);
  return out;
}

ObservedData ingest_csv(const fs::path& path, const DataConfig& data, const ModelSpec& spec) {
  std::ifstream f(path);
  if (!f) throw UserError("cannot open data file " + path.string());
  ObservedData d = read_observed_csv(f, data.population, data.initial(spec));
  d = select_window(d, data.start_date, data.window_days);
  try {
    check_observed(d);
  } catch (const std::invalid_argument& e) {
    throw UserError(path.string() + ": " + e.what());
  }
  return d;
}

std::vector<std::string> date_range(const std::string& start, int days) {
  const auto first = parse_date(start);
  if (!first) throw UserError("bad date '" + start + "'");
  std::vector<std::string> out;
  for (int i = 0; i < days; ++i) out.push_back(format_date(*first + std::chrono::days{i}));
  return out;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(const fs::path& path, const RunConfig& config, const std::vector<std::string>& header)
    : path_(path), buffer_(provenance(config)) {
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (row_started_) buffer_.push_back(',');
  buffer_ += s;
  row_started_ = true;
  return *this;
}

CsvWriter& CsvWriter::cell(double x) { return cell(format_number(x)); }
CsvWriter& CsvWriter::cell(long long x) { return cell(std::to_string(x)); }

void CsvWriter::end_row() {
  buffer_.push_back('\n');
  row_started_ = false;
}

void CsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  write_file(path_, buffer_);
}

CsvWriter::~CsvWriter() {
  // Destruction during unwinding must not throw; explicit close() reports errors.
  if (!closed_ && std::uncaught_exceptions() == 0) {
    try {
      close();
    } catch (...) {
    }
  }
}

void write_observed(const fs::path& path, const ObservedData& data, const RunConfig& config) {
  const auto dates = data.dates.size() == data.cases.size() ? data.dates : date_range(config.scenario_start, data.tau());
  CsvWriter w(path, config, {"date", "cases", "hospitalizations", "deaths"});
  for (int t = 0; t < data.tau(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    w.cell(dates[i]).cell(static_cast<long long>(data.cases[i]));
    if (i < data.hospitalization_missing.size() && data.hospitalization_missing[i])
      w.cell(std::string());
    else
      w.cell(static_cast<long long>(i < data.hospitalizations.size() ? data.hospitalizations[i] : 0));
    w.cell(static_cast<long long>(i < data.deaths.size() ? data.deaths[i] : 0));
    w.end_row();
  }
  w.close();
}

void write_trajectory(const fs::path& path, const Trajectory& traj, const RunConfig& config) {
  CsvWriter w(path, config,
              {"t", "susceptible", "infectious", "hospitalized", "removed", "dead", "infections", "detected",
               "undetected", "admissions", "recoveries_infectious", "recoveries_hospital", "deaths"});
  for (int t = 0; t < traj.tau(); ++t) {
    const auto& s = traj.states[static_cast<std::size_t>(t)];
    const auto& r = traj.transitions[static_cast<std::size_t>(t)];
    for (Count v : {static_cast<Count>(t), s.susceptible, s.infectious, s.hospitalized, s.removed, s.dead,
                        r.infections, r.detected, r.undetected, r.admissions, r.recoveries_infectious,
                        r.recoveries_hospital, r.deaths})
      w.cell(static_cast<long long>(v));
    w.end_row();
  }
  w.close();
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void write_manifest(const fs::path& dir, const RunConfig& config, const std::string& command,
                    const std::vector<std::string>& files, std::optional<double> wall_seconds) {
  json m;
  m["command"] = command;
  m["digest"] = config.digest;
  m["seed"] = config.seed;
  m["files"] = files;
  m["versions"] = {{"bcm", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  if (wall_seconds) m["wall_seconds"] = *wall_seconds;
  write_json(dir / "manifest.json", m);
}

void write_diagnostics(const fs::path& path, const Diagnostics& d, const RunConfig& config) {
  CsvWriter w(path, config, {"param", "rhat", "ess", "below_threshold"});
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    w.cell(std::string(param_name(d.params[i])));
    w.cell(d.rhat[i] ? format_number(*d.rhat[i]) : std::string("NA"));
    w.cell(d.ess[i]);
    w.cell(std::string(d.rhat[i] && *d.rhat[i] < d.threshold ? "yes" : "no"));
    w.end_row();
  }
  w.close();
}

std::vector<std::string> save_fit(const fs::path& dir, const FitRecord& fit) {
  fs::create_directories(dir);
  const auto& cfg = fit.config;
  const auto& s = fit.samples;
  std::vector<std::string> files;

  write_json(dir / "config.json", cfg.source);
  files.push_back("config.json");
  write_observed(dir / "data.csv", fit.data, cfg);
  files.push_back("data.csv");

  std::vector<std::string> header{"chain", "iteration", "log_posterior"};
  for (Param p : s.params) header.emplace_back(param_name(p));
  {
    CsvWriter w(dir / "samples.csv", cfg, header);
    for (const auto& c : s.chains) {
      for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
        w.cell(c.chain).cell(c.iterations[static_cast<std::size_t>(r)]).cell(c.log_posterior(r));
        for (Eigen::Index k = 0; k < c.draws.cols(); ++k) w.cell(c.draws(r, k));
        w.end_row();
      }
    }
    w.close();
    files.push_back("samples.csv");
  }

  if (s.config.store_latent) {
    std::vector<std::string> lh{"chain", "iteration", "series"};
    for (int t = 0; t < s.tau; ++t) lh.push_back("d" + std::to_string(t));
    CsvWriter w(dir / "latent_draws.csv", cfg, lh);
    for (const auto& c : s.chains) {
      for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
        for (std::size_t k = 0; k < kSeriesFields.size(); ++k) {
          const auto& m = c.*kSeriesFields[k];
          w.cell(c.chain).cell(c.iterations[static_cast<std::size_t>(r)]).cell(std::string(kSeriesNames[k]));
          for (int t = 0; t < s.tau; ++t) w.cell(static_cast<long long>(m(r, t)));
          w.end_row();
        }
      }
    }
    w.close();
    files.push_back("latent_draws.csv");
  }

  {
    CsvWriter w(dir / "acceptance.csv", cfg, {"chain", "move", "proposed", "accepted", "rate"});
    for (const auto& c : s.chains) {
      for (const auto& [move, stats] : c.acceptance) {
        w.cell(c.chain).cell(move).cell(stats.proposed).cell(stats.accepted).cell(stats.rate());
        w.end_row();
      }
    }
    w.close();
    files.push_back("acceptance.csv");
  }

  write_diagnostics(dir / "diagnostics.csv", diagnose(s), cfg);
  files.push_back("diagnostics.csv");
  return files;
}

FitRecord load_fit(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UserError("fit directory " + dir.string() + " does not exist");
  FitRecord fit;
  fit.config = load_config(dir / "config.json");
  const auto& cfg = fit.config;
  if (!cfg.data) throw UserError(dir.string() + "/config.json has no data section");
  {
    std::ifstream f(dir / "data.csv");
    if (!f) throw UserError("cannot open " + (dir / "data.csv").string());
    fit.data = read_observed_csv(f, cfg.data->population, cfg.data->initial(cfg.model));
  }

  auto& s = fit.samples;
  s.spec = cfg.model;
  s.params = active_params(cfg.model);
  s.config = cfg.sampler;
  s.tau = fit.data.tau();
  s.chains.resize(static_cast<std::size_t>(cfg.sampler.chains));
  for (int c = 0; c < cfg.sampler.chains; ++c) s.chains[static_cast<std::size_t>(c)].chain = c;

  std::vector<std::string> header{"chain", "iteration", "log_posterior"};
  for (Param p : s.params) header.emplace_back(param_name(p));
  const auto samples_path = dir / "samples.csv";
  const auto rows = read_table(samples_path, header);
  if (rows.front().size() != header.size()) throw UserError(samples_path.string() + " has extra columns");
  std::vector<std::vector<std::vector<double>>> per_chain(s.chains.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) throw UserError(samples_path.string() + ": ragged row " + std::to_string(i + 1));
    const auto c = to_integer(r[0], samples_path);
    if (c < 0 || c >= static_cast<long long>(s.chains.size())) throw UserError(samples_path.string() + ": bad chain index");
    std::vector<double> v;
    for (std::size_t k = 1; k < r.size(); ++k) v.push_back(to_double(r[k], samples_path));
    per_chain[static_cast<std::size_t>(c)].push_back(std::move(v));
  }
  for (std::size_t c = 0; c < s.chains.size(); ++c) {
    auto& ch = s.chains[c];
    const auto& rs = per_chain[c];
    const auto n = static_cast<Eigen::Index>(rs.size());
    ch.draws.resize(n, static_cast<Eigen::Index>(s.params.size()));
    ch.log_posterior.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& v = rs[static_cast<std::size_t>(r)];
      ch.iterations.push_back(static_cast<long>(v[0]));
      ch.log_posterior(r) = v[1];
      for (std::size_t k = 0; k < s.params.size(); ++k) ch.draws(r, static_cast<Eigen::Index>(k)) = v[k + 2];
    }
    if (n != s.chains.front().draws.rows()) throw UserError(samples_path.string() + ": chains differ in length");
  }

  const auto latent_path = dir / "latent_draws.csv";
  if (fs::exists(latent_path)) {
    const auto lrows = read_table(latent_path, {"chain", "iteration", "series"});
    if (lrows.front().size() != static_cast<std::size_t>(3 + s.tau))
      throw UserError(latent_path.string() + " does not match the data window");
    for (auto& ch : s.chains)
      for (auto field : kSeriesFields) (ch.*field).setZero(ch.draws.rows(), s.tau);
    std::vector<std::array<Eigen::Index, 4>> next(s.chains.size(), {0, 0, 0, 0});
    for (std::size_t i = 1; i < lrows.size(); ++i) {
      const auto& r = lrows[i];
      if (r.size() != static_cast<std::size_t>(3 + s.tau)) throw UserError(latent_path.string() + ": ragged row");
      const auto c = to_integer(r[0], latent_path);
      if (c < 0 || c >= static_cast<long long>(s.chains.size())) throw UserError(latent_path.string() + ": bad chain index");
      const auto it = std::find(kSeriesNames.begin(), kSeriesNames.end(), r[2]);
      if (it == kSeriesNames.end()) throw UserError(latent_path.string() + ": unknown series '" + r[2] + "'");
      const auto k = static_cast<std::size_t>(it - kSeriesNames.begin());
      auto& ch = s.chains[static_cast<std::size_t>(c)];
      auto& row = next[static_cast<std::size_t>(c)][k];
      auto& m = ch.*kSeriesFields[k];
      if (row >= m.rows()) throw UserError(latent_path.string() + ": more latent draws than samples");
      for (int t = 0; t < s.tau; ++t) m(row, t) = to_integer(r[static_cast<std::size_t>(3 + t)], latent_path);
      ++row;
    }
    for (std::size_t c = 0; c < s.chains.size(); ++c)
      for (auto n : next[c])
        if (n != s.chains[c].draws.rows()) throw UserError(latent_path.string() + ": fewer latent draws than samples");
  } else {
    s.config.store_latent = false;
  }

  const auto acc_path = dir / "acceptance.csv";
  if (fs::exists(acc_path)) {
    const auto arows = read_table(acc_path, {"chain", "move", "proposed", "accepted", "rate"});
    for (std::size_t i = 1; i < arows.size(); ++i) {
      const auto& r = arows[i];
      if (r.size() != 5) throw UserError(acc_path.string() + ": ragged row");
      const auto c = to_integer(r[0], acc_path);
      if (c < 0 || c >= static_cast<long long>(s.chains.size())) throw UserError(acc_path.string() + ": bad chain index");
      auto& st = s.chains[static_cast<std::size_t>(c)].acceptance[r[1]];
      st.proposed = to_integer(r[2], acc_path);
      st.accepted = to_integer(r[3], acc_path);
    }
  }
  return fit;
}

}  // namespace bcm
