#include "bcm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "bcm/chain_state.hpp"
#include "bcm/io.hpp"
#include "bcm/outputs.hpp"
#include "bcm/study.hpp"

namespace bcm {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> fits;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  long progress = 0;
  bool record_timing = false;
  int draws = 0;
  std::string granularity = "day";
  int replicates = 0;
};

using Clock = std::chrono::steady_clock;

std::optional<double> elapsed(const Common& o, Clock::time_point start) {
  if (!o.record_timing) return std::nullopt;
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path out_dir(const Common& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

std::string prior_text(const Prior& p) {
  std::ostringstream s;
  std::visit(
      [&](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, GammaPrior>) s << "Gamma(" << q.shape << ", " << q.rate << ")";
        if constexpr (std::is_same_v<T, NormalPrior>) s << "Normal(" << q.mean << ", " << q.sd << ")";
        if constexpr (std::is_same_v<T, BetaPrior>) s << "Beta(" << q.a << ", " << q.b << ")";
        if constexpr (std::is_same_v<T, UniformPrior>) s << "Uniform(" << q.lo << ", " << q.hi << ")";
      },
      p);
  return s.str();
}

// Undetected infections and infectious recoveries trade off against each
// other; vague priors on the exit rates leave the latent counts poorly pinned.
void warn_weak_exit_priors(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.model.undetected || cfg.model.compartments != Compartments::Sihrd) return;
  for (Param p : {Param::Gamma1, Param::Lambda}) {
    const auto& prior = cfg.priors[p];
    const double cv = std::sqrt(prior_variance(prior)) / std::abs(prior_mean(prior));
    if (!(cv <= 0.5))
      err << "warning: prior on " << param_name(p) << " is " << prior_text(prior) << " (cv " << format_number(cv)
          << "); with undetected infections the exit rates should be informative\n";
  }
}

SamplerConfig sampler_for(const RunConfig& cfg, const Common& o, std::ostream& err) {
  SamplerConfig s = cfg.sampler;
  s.workers = o.workers;
  if (o.progress > 0) {
    auto mutex = std::make_shared<std::mutex>();
    s.progress_every = o.progress;
    s.progress = [mutex, &err](const ProgressRecord& r) {
      std::lock_guard lock(*mutex);
      err << "chain " << r.chain << " iter " << r.iteration << " logpost " << format_number(r.log_posterior)
          << " accept params " << format_number(r.param_acceptance) << " latent "
          << format_number(r.latent_acceptance) << "\n";
    };
  }
  return s;
}

ObservedData load_data(const RunConfig& cfg) {
  if (!cfg.data) throw UserError("config has no data section");
  return ingest_csv(cfg.data->path, *cfg.data, cfg.model);
}

int cmd_simulate(const Common& o, std::ostream& out) {
  const auto start = Clock::now();
  const RunConfig cfg = load_config(o.config, o.seed);
  const fs::path dir = out_dir(o);
  RngStream rng(cfg.seed, 0);
  const auto& sc = cfg.scenario;
  const Trajectory traj = simulate(sc.initial(), sc.tau, sc.params, sc.spec, rng);
  ObservedData obs = observe(traj);
  obs.dates = date_range(cfg.scenario_start, obs.tau());
  write_trajectory(dir / "trajectory.csv", traj, cfg);
  write_observed(dir / "observed.csv", obs, cfg);
  write_manifest(dir, cfg, "simulate", {"trajectory.csv", "observed.csv"}, elapsed(o, start));
  out << "simulated " << traj.tau() << " days into " << dir.string() << "\n";
  return kExitOk;
}

int cmd_fit(const Common& o, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const RunConfig cfg = load_config(o.config, o.seed);
  const ObservedData data = load_data(cfg);
  warn_weak_exit_priors(cfg, err);
  const FitContext ctx(data, cfg.model, cfg.priors);
  FitRecord fit{cfg, data, run_chains(ctx, sampler_for(cfg, o, err))};
  const fs::path dir = out_dir(o);
  auto files = save_fit(dir, fit);
  write_manifest(dir, cfg, "fit", files, elapsed(o, start));
  const auto d = diagnose(fit.samples);
  out << "fit " << model_name(cfg.model) << ": " << fit.samples.total_draws() << " draws, "
      << (d.converged ? "converged" : "NOT converged") << " (R-hat < " << format_number(d.threshold) << ")\n";
  return kExitOk;
}

void print_diagnostics(const Diagnostics& d, std::ostream& out) {
  out << "param        rhat      ess\n";
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    std::string name(param_name(d.params[i]));
    name.resize(std::max<std::size_t>(name.size(), 12), ' ');
    std::string rhat = d.rhat[i] ? format_number(std::round(*d.rhat[i] * 1000.0) / 1000.0) : "NA";
    rhat.resize(std::max<std::size_t>(rhat.size(), 9), ' ');
    out << name << ' ' << rhat << ' ' << format_number(std::round(d.ess[i])) << "\n";
  }
  out << (d.converged ? "converged\n" : "not converged\n");
}

int cmd_diagnose(const Common& o, std::ostream& out) {
  const auto start = Clock::now();
  if (o.fits.size() != 1) throw UserError("diagnose takes exactly one --fit");
  const FitRecord fit = load_fit(o.fits.front());
  const auto d = diagnose(fit.samples);
  print_diagnostics(d, out);
  if (!o.out.empty()) {
    const fs::path dir = out_dir(o);
    write_diagnostics(dir / "diagnostics.csv", d, fit.config);
    write_manifest(dir, fit.config, "diagnose", {"diagnostics.csv"}, elapsed(o, start));
  }
  return kExitOk;
}

FitRecord single_fit(const Common& o, const char* command) {
  if (o.fits.size() != 1) throw UserError(std::string(command) + " takes exactly one --fit");
  FitRecord fit = load_fit(o.fits.front());
  if (o.seed) fit.config = parse_config(fit.config.source, o.seed);
  return fit;
}

void write_band(const fs::path& path, const BandSeries& b, const std::vector<std::string>& dates,
                const RunConfig& cfg, const std::vector<Count>* observed = nullptr) {
  std::vector<std::string> header{"t", "date"};
  if (observed) header.emplace_back("observed");
  for (const char* h : {"mean", "lower", "upper"}) header.emplace_back(h);
  CsvWriter w(path, cfg, header);
  for (std::size_t t = 0; t < b.mean.size(); ++t) {
    w.cell(static_cast<long long>(t)).cell(t < dates.size() ? dates[t] : std::string());
    if (observed) w.cell(static_cast<long long>((*observed)[t]));
    w.cell(b.mean[t]).cell(b.lower[t]).cell(b.upper[t]);
    w.end_row();
  }
  w.close();
}

std::vector<std::string> dates_of(const ObservedData& data, const RunConfig& cfg, int days) {
  if (static_cast<int>(data.dates.size()) >= days) return data.dates;
  return date_range(data.dates.empty() ? cfg.scenario_start : data.dates.front(), days);
}

int cmd_r0(const Common& o, std::ostream& out) {
  const auto start = Clock::now();
  const FitRecord fit = single_fit(o, "r0");
  if (!fit.samples.config.store_latent) throw UserError("fit has no latent draws; R0 needs them");
  const fs::path dir = out_dir(o);
  const auto dates = dates_of(fit.data, fit.config, fit.samples.tau + 1);
  write_band(dir / "r0.csv", posterior_r0(fit.samples, fit.data), dates, fit.config);
  write_band(dir / "alarm.csv", summarize_columns(alarm_draws(fit.samples, fit.data)), dates, fit.config);
  write_manifest(dir, fit.config, "r0", {"r0.csv", "alarm.csv"}, elapsed(o, start));
  out << "wrote R0 and alarm bands to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_postpred(const Common& o, std::ostream& out) {
  const auto start = Clock::now();
  const FitRecord fit = single_fit(o, "postpred");
  const int draws = o.draws > 0 ? o.draws : fit.config.postpred_draws;
  const RngStream rng = RngStream(fit.config.seed, 0).derive(0x706f73747072ULL);
  const auto ens = posterior_predictive(fit.samples, fit.data.initial, fit.samples.tau, draws, rng);
  const fs::path dir = out_dir(o);
  const auto dates = dates_of(fit.data, fit.config, fit.samples.tau);
  std::vector<std::string> files;
  for (std::size_t k = 0; k < ens.streams.size(); ++k) {
    const auto& name = ens.streams[k];
    const std::vector<Count>* observed = name == "cases"              ? &fit.data.cases
                                         : name == "hospitalizations" ? &fit.data.hospitalizations
                                                                      : &fit.data.deaths;
    const std::string file = "postpred_" + name + ".csv";
    write_band(dir / file, ens.bands[k], dates, fit.config, observed);
    files.push_back(file);
  }
  write_manifest(dir, fit.config, "postpred", files, elapsed(o, start));
  out << "posterior predictive from " << ens.draws() << " draws written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_waic(const Common& o, std::ostream& out) {
  const auto start = Clock::now();
  if (o.fits.empty()) throw UserError("waic needs at least one --fit");
  Granularity gran;
  try {
    gran = parse_granularity(o.granularity);
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  std::vector<FitRecord> fits;
  for (const auto& f : o.fits) fits.push_back(load_fit(f));
  for (const auto& f : fits) {
    if (f.samples.spec.compartments != fits.front().samples.spec.compartments)
      throw UserError("WAIC is not comparable across compartmental structures (" +
                      std::string(to_string(fits.front().samples.spec.compartments)) + " vs " +
                      std::string(to_string(f.samples.spec.compartments)) + ")");
    if (!f.samples.config.store_latent) throw UserError("fit without latent draws cannot be scored");
  }
  // Provenance of a comparison: the digests of every fit, in order.
  RunConfig prov = fits.front().config;
  std::string joined;
  for (const auto& f : fits) joined += f.config.digest;
  prov.digest = sha256_hex(joined);

  const fs::path dir = out_dir(o);
  CsvWriter w(dir / "waic.csv", prov, {"fit", "model", "granularity", "waic", "lppd", "p_waic"});
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto r = waic(pointwise_loglik(fits[i].samples, fits[i].data, gran));
    const std::string label = fs::path(o.fits[i]).lexically_normal().filename().string();
    w.cell(label).cell(model_name(fits[i].samples.spec)).cell(std::string(to_string(gran)));
    w.cell(r.waic).cell(r.lppd).cell(r.p_waic);
    w.end_row();
    out << label << " " << model_name(fits[i].samples.spec) << " WAIC " << format_number(r.waic) << "\n";
  }
  w.close();
  write_manifest(dir, prov, "waic", {"waic.csv"}, elapsed(o, start));
  return kExitOk;
}

int cmd_simstudy(const Common& o, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const RunConfig cfg = load_config(o.config, o.seed);
  StudyOptions opt;
  opt.alpha_values = cfg.study.alpha_values;
  opt.replicates = o.replicates > 0 ? o.replicates : cfg.study.replicates;
  for (const auto& m : cfg.study.models) {
    try {
      opt.models.push_back(parse_model_name(m, cfg.model));
    } catch (const std::invalid_argument& e) {
      throw UserError(std::string("study.models: ") + e.what());
    }
  }
  opt.sampler = sampler_for(cfg, o, err);
  opt.r0_days = cfg.study.r0_days;
  std::mutex mutex;
  opt.on_fit = [&](const StudyFit& f) {
    std::lock_guard lock(mutex);
    err << scenario_label(f.alpha) << " replicate " << f.replicate << " " << f.model << " WAIC "
        << format_number(f.waic) << " max R-hat " << format_number(f.max_rhat) << "\n";
  };
  const auto result = run_study(cfg.scenario, opt, RngStream(cfg.seed, 0));
  const fs::path dir = out_dir(o);

  {
    std::vector<std::string> header{"alpha", "replicate", "model"};
    const auto& days = result.fits.empty() ? std::vector<int>{} : result.fits.front().r0_days;
    for (int d : days) {
      header.push_back("r0_" + std::to_string(d));
      header.push_back("r0_true_" + std::to_string(d));
    }
    for (const char* p : {"beta", "k", "alpha"})
      for (const char* s : {"_mean", "_lower", "_upper"}) header.push_back(std::string(p) + s);
    for (const char* h : {"max_rhat", "converged", "waic"}) header.emplace_back(h);
    CsvWriter w(dir / "fits.csv", cfg, header);
    for (const auto& f : result.fits) {
      w.cell(f.alpha).cell(f.replicate).cell(f.model);
      for (std::size_t i = 0; i < f.r0_days.size(); ++i) w.cell(f.r0_estimate[i]).cell(f.r0_truth[i]);
      for (const auto* s : {&f.beta, &f.k, &f.alpha_post}) {
        if (*s)
          w.cell((*s)->mean).cell((*s)->lower).cell((*s)->upper);
        else
          w.cell(std::string("NA")).cell(std::string("NA")).cell(std::string("NA"));
      }
      w.cell(f.max_rhat).cell(std::string(f.converged ? "yes" : "no")).cell(f.waic);
      w.end_row();
    }
    w.close();
  }
  {
    CsvWriter w(dir / "rmse.csv", cfg, {"alpha", "model", "day", "rmse", "fits"});
    for (const auto& r : rmse_table(result)) {
      w.cell(r.alpha).cell(r.model).cell(r.day).cell(r.rmse).cell(r.fits);
      w.end_row();
    }
    w.close();
  }
  {
    CsvWriter w(dir / "alpha.csv", cfg, {"alpha", "model", "mean_of_means", "coverage", "fits"});
    for (const auto& r : alpha_table(result)) {
      w.cell(r.alpha).cell(r.model).cell(r.mean_of_means).cell(r.coverage).cell(r.fits);
      w.end_row();
    }
    w.close();
  }
  write_manifest(dir, cfg, "simstudy", {"fits.csv", "rmse.csv", "alpha.csv"}, elapsed(o, start));
  out << result.fits.size() << " fits written to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian chain-binomial epidemic models with behavioural alarms", "bcm"};
  app.require_subcommand(1);
  Common o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Overrides the config seed"); };
  auto add_timing = [&](CLI::App* c) {
    c->add_flag("--record-timing", o.record_timing, "Write wall time into manifest.json");
  };
  auto add_workers = [&](CLI::App* c) {
    c->add_option("--workers", o.workers, "Chain worker threads (default: BCM_WORKERS or all cores)")
        ->check(CLI::NonNegativeNumber);
    c->add_option("--progress", o.progress, "Report every N iterations on stderr")->check(CLI::NonNegativeNumber);
  };

  auto* sim = app.add_subcommand("simulate", "Simulate one epidemic from the scenario section");
  sim->add_option("--config", o.config, "Run config (JSON)")->required();
  sim->add_option("--out", o.out, "Output directory")->required();
  add_seed(sim);
  add_timing(sim);

  auto* study = app.add_subcommand("simstudy", "Simulation study: alpha scenarios x replicates x models");
  study->add_option("--config", o.config, "Run config (JSON)")->required();
  study->add_option("--out", o.out, "Output directory")->required();
  study->add_option("--replicates", o.replicates, "Overrides study.replicates")->check(CLI::PositiveNumber);
  add_seed(study);
  add_timing(study);
  add_workers(study);

  auto* fit = app.add_subcommand("fit", "Fit a model to the data in the config");
  fit->add_option("--config", o.config, "Run config (JSON)")->required();
  fit->add_option("--out", o.out, "Fit directory")->required();
  add_seed(fit);
  add_timing(fit);
  add_workers(fit);

  auto* pp = app.add_subcommand("postpred", "Posterior predictive bands of a fit");
  pp->add_option("--fit", o.fits, "Fit directory")->required()->expected(1);
  pp->add_option("--out", o.out, "Output directory")->required();
  pp->add_option("--draws", o.draws, "Posterior draws to simulate (default postpred.draws)")
      ->check(CLI::PositiveNumber);
  add_seed(pp);
  add_timing(pp);

  auto* r0 = app.add_subcommand("r0", "Posterior R0(t) and alarm bands of a fit");
  r0->add_option("--fit", o.fits, "Fit directory")->required()->expected(1);
  r0->add_option("--out", o.out, "Output directory")->required();
  add_timing(r0);

  auto* wa = app.add_subcommand("waic", "WAIC of fits sharing one compartmental structure");
  wa->add_option("--fit", o.fits, "Fit directory (repeatable)")->required();
  wa->add_option("--out", o.out, "Output directory")->required();
  wa->add_option("--granularity", o.granularity, "Pointwise unit: day or stream-day")
      ->check(CLI::IsMember({"day", "stream-day"}));
  add_timing(wa);

  auto* dg = app.add_subcommand("diagnose", "R-hat and effective sample sizes of a fit");
  dg->add_option("--fit", o.fits, "Fit directory")->required()->expected(1);
  dg->add_option("--out", o.out, "Also write diagnostics.csv here");
  add_timing(dg);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (study->parsed()) return cmd_simstudy(o, out, err);
    if (fit->parsed()) return cmd_fit(o, out, err);
    if (pp->parsed()) return cmd_postpred(o, out);
    if (r0->parsed()) return cmd_r0(o, out);
    if (wa->parsed()) return cmd_waic(o, out);
    if (dg->parsed()) return cmd_diagnose(o, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InitializationError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUser;
}

}  // namespace bcm
