#include "bcm/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "bcm/alarm.hpp"
#include "bcm/outputs.hpp"

namespace bcm {

std::string model_name(const ModelSpec& spec) {
  return std::string(to_string(spec.compartments)) + "/" + std::string(to_string(spec.alarm));
}

StudyModel parse_model_name(std::string_view name, const ModelSpec& base) {
  const auto slash = name.find('/');
  if (slash == std::string_view::npos) throw std::invalid_argument("model name '" + std::string(name) + "' needs STRUCTURE/ALARM");
  ModelSpec spec = base;
  spec.compartments = parse_compartments(name.substr(0, slash));
  spec.alarm = parse_alarm(name.substr(slash + 1));
  return {model_name(spec), spec};
}

std::vector<StudyModel> six_models(const ModelSpec& base) {
  std::vector<StudyModel> out;
  for (auto c : {Compartments::Sihrd, Compartments::SirIdd}) {
    for (auto a : {AlarmKind::None, AlarmKind::PowerCases, AlarmKind::MultiCasesDeaths}) {
      ModelSpec spec = base;
      spec.compartments = c;
      spec.alarm = a;
      out.push_back({model_name(spec), spec});
    }
  }
  return out;
}

double mean_infectious_stay(const ParamVector& params) {
  const auto ep = exit_probabilities(params);
  const double leave = ep.to_hospital + ep.infectious_recovery;
  if (!(leave > 0.0)) throw std::invalid_argument("infectious exits need a positive probability");
  return 1.0 / leave;
}

PriorConfig study_priors(const Scenario& truth) {
  const auto& p = truth.params;
  PriorConfig pc = PriorConfig::defaults(mean_infectious_stay(p), p[Param::PiDetect]);
  pc.set(Param::Beta, GammaPrior{0.1, 0.1}).set(Param::K, GammaPrior{0.1, 0.1});
  pc.set(Param::Alpha, UniformPrior{0.0, 1.0});
  pc.set(Param::PiDetect, BetaPrior{25.0, 75.0});
  for (Param q : {Param::Lambda, Param::Gamma1, Param::Gamma2}) pc.set(q, GammaPrior{100.0, 100.0 / p[q]});
  pc.set(Param::Phi, GammaPrior{10.0, 10.0 / p[Param::Phi]});
  return pc;
}

ParamSummary summarize_param(const PosteriorSamples& samples, Param p) {
  const Eigen::VectorXd v = samples.pooled(p);
  std::vector<double> values(v.data(), v.data() + v.size());
  if (values.empty()) throw std::invalid_argument("no draws to summarize");
  return {v.mean(), quantile(values, 0.025), quantile(values, 0.975)};
}

namespace {

bool fits_param(const PosteriorSamples& s, Param p) {
  return std::find(s.params.begin(), s.params.end(), p) != s.params.end();
}

std::vector<int> resolve_days(const std::vector<int>& days, int tau) {
  if (days.empty()) return {0, tau / 2, tau - 1};
  for (int d : days)
    if (d < 0 || d >= tau) throw std::invalid_argument("R0 day outside the observed window");
  return days;
}

}  // namespace

StudyResult run_study(const Scenario& base, const StudyOptions& options, const RngStream& rng) {
  options.sampler.check();
  StudyResult out;
  out.runs = generate_scenarios(options.alpha_values, options.replicates, base, rng);
  const auto models = options.models.empty() ? six_models(base.spec) : options.models;
  const auto days = resolve_days(options.r0_days, base.tau);

  for (const auto& run : out.runs) {
    const ObservedData data = observe(run.trajectory);
    const auto truth_alarm = alarm_series(run.scenario.spec, run.scenario.params, data.cases, data.deaths, data.population);
    std::vector<double> truth;
    for (int d : days) truth.push_back(r0_sihrd(d, run.trajectory, run.scenario.params, truth_alarm));

    // Same sampler seed for every model fitted to this run.
    RngStream seeder = rng.derive((std::uint64_t{1} << 62) | (static_cast<std::uint64_t>(run.alpha_index) << 32) |
                                  static_cast<std::uint32_t>(run.replicate));
    SamplerConfig config = options.sampler;
    config.seed = seeder.engine()();

    for (const auto& model : models) {
      if (options.include && !options.include(run.alpha_index, model.name)) continue;
      const auto start = std::chrono::steady_clock::now();
      FitContext ctx(data, model.spec, study_priors(run.scenario));
      const PosteriorSamples post = run_chains(ctx, config);

      StudyFit fit;
      fit.alpha_index = run.alpha_index;
      fit.alpha = run.alpha;
      fit.replicate = run.replicate;
      fit.model = model.name;
      fit.r0_days = days;
      fit.r0_truth = truth;
      const auto r0 = posterior_r0(post, data);
      for (int d : days) fit.r0_estimate.push_back(r0.mean[static_cast<std::size_t>(d)]);
      fit.beta = summarize_param(post, Param::Beta);
      if (fits_param(post, Param::K)) fit.k = summarize_param(post, Param::K);
      if (fits_param(post, Param::Alpha)) fit.alpha_post = summarize_param(post, Param::Alpha);
      const auto diag = diagnose(post);
      fit.converged = diag.converged;
      fit.max_rhat = diag.rhat.empty() ? std::nan("") : 0.0;
      for (const auto& r : diag.rhat) fit.max_rhat = r ? std::max(fit.max_rhat, *r) : std::nan("");
      fit.waic = waic(pointwise_loglik(post, data)).waic;
      fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (options.on_fit) options.on_fit(fit);
      out.fits.push_back(std::move(fit));
    }
  }
  return out;
}

std::vector<RmseRow> rmse_table(const StudyResult& result) {
  struct Acc {
    double alpha = 0.0;
    std::vector<double> est, truth;
  };
  std::map<std::tuple<int, std::string, int>, Acc> groups;
  for (const auto& f : result.fits) {
    for (std::size_t i = 0; i < f.r0_days.size(); ++i) {
      auto& g = groups[{f.alpha_index, f.model, f.r0_days[i]}];
      g.alpha = f.alpha;
      g.est.push_back(f.r0_estimate[i]);
      g.truth.push_back(f.r0_truth[i]);
    }
  }
  std::vector<RmseRow> out;
  for (const auto& [key, g] : groups)
    out.push_back({g.alpha, std::get<1>(key), std::get<2>(key), rmse_r0(g.est, g.truth), static_cast<int>(g.est.size())});
  return out;
}

std::vector<AlphaRow> alpha_table(const StudyResult& result) {
  struct Acc {
    double alpha = 0.0, sum = 0.0;
    int covered = 0, n = 0;
  };
  std::map<std::pair<int, std::string>, Acc> groups;
  for (const auto& f : result.fits) {
    if (!f.alpha_post) continue;
    auto& g = groups[{f.alpha_index, f.model}];
    g.alpha = f.alpha;
    g.sum += f.alpha_post->mean;
    g.covered += f.alpha_post->covers(f.alpha);
    ++g.n;
  }
  std::vector<AlphaRow> out;
  for (const auto& [key, g] : groups)
    out.push_back({g.alpha, key.second, g.sum / g.n, static_cast<double>(g.covered) / g.n, g.n});
  return out;
}

}  // namespace bcm
