#include "bcm/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "bcm/likelihood.hpp"

namespace bcm {

void SamplerConfig::check() const {
  if (chains < 1) throw std::invalid_argument("need at least one chain");
  if (iterations < 0 || burn_in < 0 || thin < 1) throw std::invalid_argument("iterations, burn_in >= 0 and thin >= 1");
  if (adapt_interval < 1 || block_days < 1 || max_shift < 1 || initial_candidates < 1)
    throw std::invalid_argument("adapt_interval, block_days, max_shift and initial_candidates must be >= 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0) || !(latent_target > 0.0 && latent_target < 1.0) ||
      !(block_target > 0.0 && block_target < 1.0))
    throw std::invalid_argument("acceptance targets must be in (0, 1)");
  for (Param p : fixed)
    if (!initial.has(p)) throw std::invalid_argument("fixed parameter " + std::string(param_name(p)) + " has no value");
}

std::string_view to_string(LatentMove m) {
  switch (m) {
    case LatentMove::RecoverInfectious: return "recover_infectious";
    case LatentMove::ShiftInfectious: return "shift_infectious";
    case LatentMove::RecoverHospital: return "recover_hospital";
    case LatentMove::ShiftHospital: return "shift_hospital";
    case LatentMove::Undetected: return "undetected";
    case LatentMove::ShiftUndetected: return "shift_undetected";
    case LatentMove::InfectAndRecover: return "infect_and_recover";
    case LatentMove::MissingAdmission: return "missing_admission";
    case LatentMove::SwapAdmission: return "swap_admission";
  }
  return "?";
}

double to_unconstrained(Param p, double value) {
  return param_support(p) == Support::Positive ? std::log(value) : std::log(value) - std::log1p(-value);
}

double from_unconstrained(Param p, double u) {
  return param_support(p) == Support::Positive ? std::exp(u) : 1.0 / (1.0 + std::exp(-u));
}

double log_jacobian(Param p, double value) {
  if (!(value > 0.0)) return kImpossible;
  if (param_support(p) == Support::Positive) return std::log(value);
  return value < 1.0 ? std::log(value) + std::log1p(-value) : kImpossible;
}

namespace {

constexpr std::size_t idx(LatentMove m) { return static_cast<std::size_t>(m); }

Series reference_series(LatentMove m) {
  switch (m) {
    case LatentMove::RecoverInfectious:
    case LatentMove::ShiftInfectious: return Series::RecoveriesInfectious;
    case LatentMove::RecoverHospital:
    case LatentMove::ShiftHospital: return Series::RecoveriesHospital;
    case LatentMove::MissingAdmission:
    case LatentMove::SwapAdmission: return Series::Admissions;
    default: return Series::Infections;
  }
}

void read_reference(Tuning& tuning, const ChainState& state) {
  const int tau = state.tau();
  for (std::size_t s = 0; s < 4; ++s) {
    auto& ref = tuning.reference[s];
    ref.assign(static_cast<std::size_t>(tau), 0.0);
    for (int t = 0; t < tau; ++t) {
      Count v = state.get(static_cast<Series>(s), t);
      if (static_cast<Series>(s) == Series::Infections) v -= state.detected(t);
      ref[static_cast<std::size_t>(t)] = static_cast<double>(std::max<Count>(v, 0));
    }
  }
}

void diagonal_factor(Tuning& tuning) {
  const auto d = static_cast<Eigen::Index>(tuning.updated.size());
  tuning.joint_factor = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) tuning.joint_factor(i, i) = tuning.scale[static_cast<std::size_t>(i)];
}

Eigen::VectorXd unconstrained_point(const Tuning& tuning, const ParamVector& params) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(tuning.updated.size()));
  for (std::size_t i = 0; i < tuning.updated.size(); ++i)
    u(static_cast<Eigen::Index>(i)) = to_unconstrained(tuning.updated[i], params[tuning.updated[i]]);
  return u;
}

void record_moments(Tuning& tuning, const ChainState& state) {
  if (!tuning.joint || tuning.updated.empty()) return;
  const Eigen::VectorXd u = unconstrained_point(tuning, state.params());
  if (!u.allFinite()) return;
  tuning.moment_sum += u;
  tuning.moment_outer += u * u.transpose();
  ++tuning.moment_count;
}

void reset_moments(Tuning& tuning) {
  const auto d = static_cast<Eigen::Index>(tuning.updated.size());
  tuning.moment_sum = Eigen::VectorXd::Zero(d);
  tuning.moment_outer = Eigen::MatrixXd::Zero(d, d);
  tuning.moment_count = 0;
}

// Metropolis-Hastings decision for a proposal already applied to `state`.
bool decide(ChainState& state, double log_before, double log_extra, RngStream& rng) {
  const double after = state.log_posterior();
  const double log_ratio = after - log_before + log_extra;
  const bool ok = !is_impossible(after) && (is_impossible(log_before) || std::log(rng.uniform()) < log_ratio);
  if (ok) state.commit();
  else state.rollback();
  return ok;
}

std::pair<int, int> random_block(const ChainState& state, int block_days, RngStream& rng) {
  const int tau = state.tau();
  const auto start = static_cast<int>(rng.uniform_int(-block_days + 1, tau - 1));
  return {std::max(0, start), std::min(tau - 1, start + block_days - 1)};
}

}  // namespace

Tuning make_tuning(const ChainState& state, const SamplerConfig& config) {
  Tuning t;
  for (Param p : active_params(state.context().spec()))
    if (std::find(config.fixed.begin(), config.fixed.end(), p) == config.fixed.end()) t.updated.push_back(p);
  t.scale.assign(t.updated.size(), 0.1);
  t.window.assign(t.updated.size(), {});
  t.joint = config.joint_block && t.updated.size() > 1;
  t.joint_scale = t.updated.empty() ? 1.0 : 2.38 / std::sqrt(static_cast<double>(t.updated.size()));
  diagonal_factor(t);
  reset_moments(t);
  t.latent_step.fill(1.0);
  t.max_shift = config.max_shift;
  t.block_days = config.block_days;
  t.target = config.target_acceptance;
  t.block_target = config.block_target;
  t.latent_target = config.latent_target;
  read_reference(t, state);
  return t;
}

void update_params(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger) {
  for (std::size_t i = 0; i < tuning.updated.size(); ++i) {
    const Param p = tuning.updated[i];
    const double old = state.params()[p];
    const double proposed = from_unconstrained(p, to_unconstrained(p, old) + tuning.scale[i] * rng.normal());
    const double before = state.log_posterior();
    ParamVector next = state.params();
    next.set(p, proposed);
    bool ok = false;
    const double extra = log_jacobian(p, proposed) - log_jacobian(p, old);
    if (std::isfinite(proposed) && std::isfinite(extra)) {
      state.set_params(next);
      ok = decide(state, before, extra, rng);
    }
    tuning.window[i].record(ok);
    ledger[std::string(param_name(p))].record(ok);
  }
  if (!tuning.joint) return;
  const auto d = static_cast<Eigen::Index>(tuning.updated.size());
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  const Eigen::VectorXd step = tuning.joint_scale * (tuning.joint_factor * z);
  ParamVector next = state.params();
  double extra = 0.0;
  bool finite = true;
  for (Eigen::Index i = 0; i < d; ++i) {
    const Param p = tuning.updated[static_cast<std::size_t>(i)];
    const double old = state.params()[p];
    const double proposed = from_unconstrained(p, to_unconstrained(p, old) + step(i));
    next.set(p, proposed);
    extra += log_jacobian(p, proposed) - log_jacobian(p, old);
    finite = finite && std::isfinite(proposed);
  }
  bool ok = false;
  if (finite && std::isfinite(extra)) {
    const double before = state.log_posterior();
    state.set_params(next);
    ok = decide(state, before, extra, rng);
  }
  tuning.joint_window.record(ok);
  ledger["joint"].record(ok);
}

bool latent_move(ChainState& state, LatentMove move, int day, Tuning& tuning, RngStream& rng) {
  const int tau = state.tau();
  const double ref = tuning.reference[static_cast<std::size_t>(reference_series(move))][static_cast<std::size_t>(day)];
  const auto bound = std::max<Count>(1, std::llround(tuning.latent_step[idx(move)] * std::sqrt(ref + 1.0)));
  const Count j = rng.uniform_int(1, bound) * (rng.uniform() < 0.5 ? -1 : 1);
  const double before = state.log_posterior();
  switch (move) {
    case LatentMove::RecoverInfectious: state.add(Series::RecoveriesInfectious, day, j); break;
    case LatentMove::RecoverHospital: state.add(Series::RecoveriesHospital, day, j); break;
    case LatentMove::Undetected: state.add(Series::Infections, day, j); break;
    case LatentMove::MissingAdmission: state.add(Series::Admissions, day, j); break;
    case LatentMove::ShiftInfectious:
    case LatentMove::ShiftHospital:
    case LatentMove::ShiftUndetected: {
      if (day + 1 >= tau) return false;
      const Series s = move == LatentMove::ShiftInfectious ? Series::RecoveriesInfectious
                       : move == LatentMove::ShiftHospital ? Series::RecoveriesHospital
                                                           : Series::Infections;
      state.add(s, day, j);
      state.add(s, day + 1, -j);
      break;
    }
    case LatentMove::InfectAndRecover: {
      const auto lag = static_cast<int>(rng.uniform_int(1, tuning.max_shift));
      if (day + lag >= tau) return false;
      state.add(Series::Infections, day, j);
      state.add(Series::RecoveriesInfectious, day + lag, j);
      break;
    }
    case LatentMove::SwapAdmission:
      state.add(Series::Admissions, day, j);
      state.add(Series::RecoveriesInfectious, day, -j);
      break;
  }
  if (!state.refresh(day)) {
    state.rollback();
    tuning.latent_window[idx(move)].record(false);
    return false;
  }
  const bool ok = decide(state, before, 0.0, rng);
  tuning.latent_window[idx(move)].record(ok);
  return ok;
}

namespace {
void run_move(ChainState& state, LatentMove move, int day, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger) {
  ledger[std::string(to_string(move))].record(latent_move(state, move, day, tuning, rng));
}
}  // namespace

void update_latent_exits(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger) {
  if (state.context().spec().compartments != Compartments::Sihrd) return;
  const auto [lo, hi] = random_block(state, tuning.block_days, rng);
  for (int t = lo; t <= hi; ++t) {
    run_move(state, LatentMove::RecoverInfectious, t, tuning, rng, ledger);
    if (t + 1 < state.tau()) run_move(state, LatentMove::ShiftInfectious, t, tuning, rng, ledger);
    run_move(state, LatentMove::RecoverHospital, t, tuning, rng, ledger);
    if (t + 1 < state.tau()) run_move(state, LatentMove::ShiftHospital, t, tuning, rng, ledger);
  }
}

void update_undetected(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger) {
  if (!state.context().spec().undetected) return;
  const auto [lo, hi] = random_block(state, tuning.block_days, rng);
  const bool sihrd = state.context().spec().compartments == Compartments::Sihrd;
  for (int t = lo; t <= hi; ++t) {
    run_move(state, LatentMove::Undetected, t, tuning, rng, ledger);
    if (t + 1 < state.tau()) run_move(state, LatentMove::ShiftUndetected, t, tuning, rng, ledger);
    if (sihrd) run_move(state, LatentMove::InfectAndRecover, t, tuning, rng, ledger);
  }
}

void update_missing_observations(ChainState& state, Tuning& tuning, RngStream& rng, AcceptanceLedger& ledger) {
  const auto& missing = state.context().missing_days();
  if (missing.empty()) return;
  const auto [lo, hi] = random_block(state, tuning.block_days, rng);
  for (int t : missing) {
    if (t < lo || t > hi) continue;
    run_move(state, LatentMove::MissingAdmission, t, tuning, rng, ledger);
    run_move(state, LatentMove::SwapAdmission, t, tuning, rng, ledger);
  }
}

void adapt(Tuning& tuning, const ChainState& state) {
  if (tuning.frozen) return;
  ++tuning.adaptations;
  const double gain = 10.0 / std::pow(tuning.adaptations + 3.0, 0.8);
  for (std::size_t i = 0; i < tuning.updated.size(); ++i) {
    auto& w = tuning.window[i];
    if (w.proposed > 0) tuning.scale[i] = std::clamp(tuning.scale[i] * std::exp(gain * (w.rate() - tuning.target)), 1e-6, 50.0);
    w = {};
  }
  if (tuning.joint) {
    const auto d = static_cast<Eigen::Index>(tuning.updated.size());
    bool have_cov = false;
    if (tuning.moment_count >= std::max<long>(100, 10 * d)) {
      const double n = static_cast<double>(tuning.moment_count);
      const Eigen::VectorXd mean = tuning.moment_sum / n;
      Eigen::MatrixXd cov = (tuning.moment_outer - n * mean * mean.transpose()) / (n - 1.0);
      cov += 1e-10 * Eigen::MatrixXd::Identity(d, d);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
        tuning.joint_factor = llt.matrixL();
        have_cov = true;
      }
    }
    if (!have_cov) diagonal_factor(tuning);
    if (tuning.joint_window.proposed > 0)
      tuning.joint_scale = std::clamp(
          tuning.joint_scale * std::exp(gain * (tuning.joint_window.rate() - tuning.block_target)), 1e-4, 20.0);
    tuning.joint_window = {};
  }
  for (std::size_t m = 0; m < static_cast<std::size_t>(kLatentMoveCount); ++m) {
    auto& w = tuning.latent_window[m];
    if (w.proposed >= 10)
      tuning.latent_step[m] = std::clamp(tuning.latent_step[m] * std::exp(gain * (w.rate() - tuning.latent_target)), 1e-3, 1e3);
    w = {};
  }
  read_reference(tuning, state);
}

// ---------------------------------------------------------------------------

long PosteriorSamples::total_draws() const {
  long n = 0;
  for (const auto& c : chains) n += c.draws.rows();
  return n;
}

int PosteriorSamples::column(Param p) const {
  const auto it = std::find(params.begin(), params.end(), p);
  if (it == params.end()) throw std::out_of_range("parameter not sampled: " + std::string(param_name(p)));
  return static_cast<int>(it - params.begin());
}

std::vector<std::vector<double>> PosteriorSamples::chain_values(Param p) const {
  const int col = column(p);
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const Eigen::VectorXd v = c.draws.col(col);
    out.emplace_back(v.data(), v.data() + v.size());
  }
  return out;
}

Eigen::VectorXd PosteriorSamples::pooled(Param p) const {
  const int col = column(p);
  Eigen::VectorXd out(total_draws());
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    out.segment(row, c.draws.rows()) = c.draws.col(col);
    row += c.draws.rows();
  }
  return out;
}

ParamVector PosteriorSamples::draw(long index) const {
  for (const auto& c : chains) {
    if (index < c.draws.rows()) {
      ParamVector pv;
      for (std::size_t j = 0; j < params.size(); ++j) pv.set(params[j], c.draws(index, static_cast<Eigen::Index>(j)));
      return pv;
    }
    index -= c.draws.rows();
  }
  throw std::out_of_range("draw index beyond the pooled sample");
}

Eigen::MatrixXd PosteriorSamples::pooled(const Eigen::MatrixXd ChainSamples::*field) const {
  Eigen::MatrixXd out(total_draws(), tau);
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    const auto& m = c.*field;
    out.middleRows(row, m.rows()) = m;
    row += m.rows();
  }
  return out;
}

CountMatrix PosteriorSamples::pooled(const CountMatrix ChainSamples::*field) const {
  CountMatrix out(total_draws(), tau);
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    const auto& m = c.*field;
    if (m.rows() != c.draws.rows()) throw std::logic_error("latent draws were not stored");
    out.middleRows(row, m.rows()) = m;
    row += m.rows();
  }
  return out;
}

Eigen::MatrixXd PosteriorSamples::pooled_day_loglik() const {
  return pooled(&ChainSamples::loglik_cases) + pooled(&ChainSamples::loglik_admissions) +
         pooled(&ChainSamples::loglik_deaths);
}

// ---------------------------------------------------------------------------

namespace {

ExitProbabilities initial_fractions(const FitContext& ctx, const ParamVector& given) {
  if (ctx.spec().compartments != Compartments::Sihrd) return {};
  ParamVector p;
  for (Param q : {Param::Lambda, Param::Gamma1, Param::Gamma2, Param::Phi})
    p.set(q, given.has(q) ? given[q] : prior_mean(ctx.priors()[q]));
  auto f = exit_probabilities(p);
  const auto cap = [](double& a, double& b) {
    const double s = a + b;
    if (s > 0.9) {
      a *= 0.9 / s;
      b *= 0.9 / s;
    }
  };
  cap(f.to_hospital, f.infectious_recovery);
  cap(f.death, f.hospital_recovery);
  return f;
}

}  // namespace

ChainState initialize_chain(const FitContext& ctx, const SamplerConfig& config, int chain, RngStream& rng) {
  const auto& spec = ctx.spec();
  const auto active = active_params(spec);
  double detect_mean = 1.0;
  if (spec.undetected)
    detect_mean = config.initial.has(Param::PiDetect) ? config.initial[Param::PiDetect]
                                                      : std::clamp(prior_mean(ctx.priors()[Param::PiDetect]), 1e-3, 1.0);
  const auto latent = initial_latent(ctx, initial_fractions(ctx, config.initial), detect_mean);

  std::vector<Param> drawn;
  for (Param p : active)
    if (!config.initial.has(p)) drawn.push_back(p);
  if (drawn.empty()) return ChainState(ctx, config.initial, latent);

  ParamVector best;
  double best_lp = kImpossible;
  for (int k = 0; k < config.initial_candidates; ++k) {
    ParamVector cand = config.initial;
    for (Param p : drawn) cand.set(p, draw(ctx.priors()[p], rng));
    if (!validate_params(cand, spec).empty()) continue;
    const double lp = ChainState(ctx, cand, latent).log_posterior();
    if (!is_impossible(lp) && (is_impossible(best_lp) || lp > best_lp)) {
      best_lp = lp;
      best = cand;
    }
  }
  if (is_impossible(best_lp))
    throw InitializationError("none of " + std::to_string(config.initial_candidates) +
                              " prior draws gives a finite posterior");
  ChainState state(ctx, best, latent);
  if (config.chains > 1 && config.overdispersion > 0.0) {
    const double shift = config.overdispersion * (2.0 * chain / (config.chains - 1) - 1.0);
    ParamVector spread = best;
    for (Param p : drawn) spread.set(p, from_unconstrained(p, to_unconstrained(p, best[p]) + shift));
    state.set_params(spread);
    if (is_impossible(state.log_posterior())) state.rollback();
    else state.commit();
  }
  return state;
}

namespace {
ProgressRecord progress_record(int chain, long iteration, const ChainState& state, const Tuning& tuning,
                               const AcceptanceLedger& ledger) {
  ProgressRecord r{chain, iteration, state.log_posterior(), 0.0, 0.0};
  double rates = 0.0;
  for (Param p : tuning.updated) rates += ledger.at(std::string(param_name(p))).rate();
  if (!tuning.updated.empty()) r.param_acceptance = rates / static_cast<double>(tuning.updated.size());
  MoveStats latent;
  for (int m = 0; m < kLatentMoveCount; ++m) {
    const auto it = ledger.find(std::string(to_string(static_cast<LatentMove>(m))));
    if (it == ledger.end()) continue;
    latent.proposed += it->second.proposed;
    latent.accepted += it->second.accepted;
  }
  r.latent_acceptance = latent.rate();
  return r;
}
}  // namespace

ChainSamples run_chain(const FitContext& ctx, const SamplerConfig& config, int chain) {
  config.check();
  RngStream rng(config.seed, static_cast<std::uint64_t>(chain));
  ChainState state = initialize_chain(ctx, config, chain, rng);
  Tuning tuning = make_tuning(state, config);

  ChainSamples out;
  out.chain = chain;
  out.start = state.params();
  const auto params = active_params(ctx.spec());
  const long n = config.retained();
  const int tau = ctx.tau();
  out.draws.resize(n, static_cast<Eigen::Index>(params.size()));
  out.log_posterior.resize(n);
  out.loglik_cases.resize(n, tau);
  out.loglik_admissions.resize(n, tau);
  out.loglik_deaths.resize(n, tau);
  if (config.store_latent) {
    out.infections.resize(n, tau);
    out.admissions.resize(n, tau);
    out.recoveries_infectious.resize(n, tau);
    out.recoveries_hospital.resize(n, tau);
  }
  const bool latent_moves = ctx.likelihood_weight() > 0.0;
  const int blocks = (tau + config.block_days - 1) / config.block_days;
  long row = 0;
  const long total = config.burn_in + config.iterations;
  for (long iter = 0; iter < total; ++iter) {
    if (iter == config.burn_in) {
      tuning.frozen = true;
      out.tuning_after_burn_in = tuning;
    }
    update_params(state, tuning, rng, out.acceptance);
    if (latent_moves) {
      for (int b = 0; b < blocks; ++b) {
        update_latent_exits(state, tuning, rng, out.acceptance);
        update_undetected(state, tuning, rng, out.acceptance);
        update_missing_observations(state, tuning, rng, out.acceptance);
      }
    }
    if (!tuning.frozen) {
      record_moments(tuning, state);
      if ((iter + 1) % config.adapt_interval == 0) adapt(tuning, state);
      if (iter + 1 == config.burn_in / 4 || iter + 1 == config.burn_in / 2) reset_moments(tuning);
    }
    if (iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0) {
      for (std::size_t j = 0; j < params.size(); ++j)
        out.draws(row, static_cast<Eigen::Index>(j)) = state.params().get_or(params[j], std::nan(""));
      out.log_posterior(row) = state.log_posterior();
      out.iterations.push_back(iter);
      const auto& terms = state.terms();
      for (int t = 0; t < tau; ++t) {
        const auto& d = terms[static_cast<std::size_t>(t)];
        out.loglik_cases(row, t) = d.infection + d.detection;
        out.loglik_admissions(row, t) = d.infectious_exit;
        out.loglik_deaths(row, t) = d.hospital_exit;
        if (config.store_latent) {
          out.infections(row, t) = state.infections(t);
          out.admissions(row, t) = state.admissions(t);
          out.recoveries_infectious(row, t) = state.recoveries_infectious(t);
          out.recoveries_hospital(row, t) = state.recoveries_hospital(t);
        }
      }
      ++row;
    }
    if (config.progress && config.progress_every > 0 && (iter + 1) % config.progress_every == 0)
      config.progress(progress_record(chain, iter + 1, state, tuning, out.acceptance));
  }
  if (config.iterations == 0) {
    tuning.frozen = true;
    out.tuning_after_burn_in = tuning;
  }
  out.tuning_final = std::move(tuning);
  return out;
}

PosteriorSamples run_chains(const FitContext& ctx, const SamplerConfig& config) {
  config.check();
  int workers = config.workers;
  if (workers <= 0) {
    if (const char* env = std::getenv("BCM_WORKERS")) workers = std::atoi(env);
    if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  workers = std::min(workers, config.chains);

  PosteriorSamples out;
  out.spec = ctx.spec();
  out.params = active_params(ctx.spec());
  out.config = config;
  out.tau = ctx.tau();
  out.chains.resize(static_cast<std::size_t>(config.chains));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    for (int c = next++; c < config.chains; c = next++) {
      try {
        out.chains[static_cast<std::size_t>(c)] = run_chain(ctx, config, c);
      } catch (const InitializationError& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::make_exception_ptr(InitializationError("chain " + std::to_string(c) + ": " + e.what()));
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::make_exception_ptr(std::runtime_error("chain " + std::to_string(c) + ": " + e.what()));
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------

namespace {
struct ChainMoments {
  std::vector<double> means, variances;
  std::size_t n = 0;
};

ChainMoments moments(const std::vector<std::vector<double>>& chains) {
  ChainMoments m;
  m.n = chains.empty() ? 0 : chains.front().size();
  for (const auto& c : chains) m.n = std::min(m.n, c.size());
  for (const auto& c : chains) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m.n; ++i) mean += c[i];
    mean /= static_cast<double>(m.n);
    double ss = 0.0;
    for (std::size_t i = 0; i < m.n; ++i) ss += (c[i] - mean) * (c[i] - mean);
    m.means.push_back(mean);
    m.variances.push_back(m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0);
  }
  return m;
}

double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}
}  // namespace

std::optional<double> gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) return std::nullopt;
  const auto m = moments(chains);
  if (m.n < 2) return std::nullopt;
  const double n = static_cast<double>(m.n);
  const double w = std::accumulate(m.variances.begin(), m.variances.end(), 0.0) / static_cast<double>(chains.size());
  if (!(w > 0.0) || !std::isfinite(w)) return std::nullopt;
  const double b_over_n = sample_variance(m.means);
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) return 0.0;
  const auto m = moments(chains);
  const std::size_t n = m.n;
  const double total = static_cast<double>(n * chains.size());
  if (n < 4) return total;
  const double nd = static_cast<double>(n);
  const double mean_var = std::accumulate(m.variances.begin(), m.variances.end(), 0.0) / static_cast<double>(chains.size());
  const double var_plus = mean_var * (nd - 1.0) / nd + (chains.size() > 1 ? sample_variance(m.means) : 0.0);
  if (!(var_plus > 0.0)) return total;
  const auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (chains[c][i] - m.means[c]) * (chains[c][i + lag] - m.means[c]);
      acov += s / nd;
    }
    acov /= static_cast<double>(chains.size());
    return 1.0 - (mean_var - acov) / var_plus;
  };
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(total));
  return total / tau;
}

double batch_means_se(std::span<const double> x) {
  const std::size_t n = x.size();
  const auto batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  if (batches < 2) throw std::invalid_argument("batch means need at least 4 values");
  const std::size_t size = n / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b)
    means[b] = std::accumulate(x.begin() + static_cast<long>(b * size), x.begin() + static_cast<long>((b + 1) * size), 0.0) /
               static_cast<double>(size);
  return std::sqrt(sample_variance(means) / static_cast<double>(batches));
}

Diagnostics diagnose(const PosteriorSamples& samples, double threshold) {
  Diagnostics d;
  d.threshold = threshold;
  bool all = true;
  for (Param p : samples.params) {
    if (std::find(samples.config.fixed.begin(), samples.config.fixed.end(), p) != samples.config.fixed.end()) continue;
    const auto values = samples.chain_values(p);
    d.params.push_back(p);
    d.rhat.push_back(gelman_rubin(values));
    d.ess.push_back(effective_sample_size(values));
    all = all && d.rhat.back() && *d.rhat.back() < threshold;
  }
  d.converged = all && !d.params.empty();
  return d;
}

}  // namespace bcm
