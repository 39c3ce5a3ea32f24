#include "bcm/chain_state.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bcm/alarm.hpp"
#include "bcm/transmission.hpp"

namespace bcm {

FitContext::FitContext(ObservedData data, ModelSpec spec, PriorConfig priors, double likelihood_weight)
    : data_(std::move(data)), spec_(spec), priors_(std::move(priors)), likelihood_weight_(likelihood_weight) {
  check_spec(spec_);
  check_observed(data_);
  if (!(likelihood_weight_ >= 0.0)) throw std::invalid_argument("likelihood weight must be >= 0");
  for (Param p : active_params(spec_))
    if (!priors_.has(p)) throw std::invalid_argument("no prior for " + std::string(param_name(p)));
  log_factorial_ = std::make_shared<LogFactorial>(data_.population);
  cases_smoothed_ = smooth_all(std::span<const Count>(data_.cases), spec_.smoothing_window);
  deaths_smoothed_ = smooth_all(std::span<const Count>(data_.deaths), spec_.smoothing_window);
  // SIR-IDD never reads the admission stream, so gaps in it need no imputation.
  if (spec_.compartments == Compartments::Sihrd)
    for (int t = 0; t < data_.tau(); ++t)
      if (data_.hospitalization_missing[static_cast<std::size_t>(t)]) missing_days_.push_back(t);
}

ChainState::ChainState(const FitContext& ctx, const ParamVector& params, LatentSeries latent)
    : ctx_(&ctx), tau_(ctx.tau()) {
  const auto n = static_cast<std::size_t>(tau_);
  series_[idx(Series::Infections)] = std::move(latent.infections);
  series_[idx(Series::Admissions)] = std::move(latent.admissions);
  series_[idx(Series::RecoveriesInfectious)] = std::move(latent.recoveries_infectious);
  series_[idx(Series::RecoveriesHospital)] = std::move(latent.recoveries_hospital);
  for (auto& s : series_) {
    if (s.empty()) s.assign(n, 0);
    if (s.size() != n) throw std::invalid_argument("latent series length differs from data");
  }
  const auto& init = ctx.data().initial;
  states_.assign(n + 1, {});
  states_[0] = {init.susceptible, init.infectious, init.hospitalized};
  terms_.assign(n, {});
  params_ = params;
  alarm_ = alarm_from_smoothed(ctx.spec().alarm, params_, ctx.cases_smoothed(), ctx.deaths_smoothed(),
                               ctx.population());
  if (sir()) idd_ = idd_weights(IddCurve::from(params_, ctx.spec()));
  log_probs_ = TransitionLogProbs::from(params_, ctx.spec());
  logprior_ = log_prior(params_, ctx.priors(), ctx.spec());
  params_valid_ = validate_params(params_, ctx.spec()).empty();

  for (int t = 0; t < tau_; ++t) {
    if (!bounds_ok(t)) throw InconsistencyError(t, "initial latent series violate count bounds");
    const auto& s = states_[static_cast<std::size_t>(t)];
    Compartment next = s;
    const Count inf = infections(t);
    next.susceptible -= inf;
    next.infectious += inf - admissions(t) - recoveries_infectious(t);
    next.hospitalized += admissions(t) - recoveries_hospital(t) - deaths(t);
    states_[static_cast<std::size_t>(t) + 1] = next;
  }
  recompute_terms(kAll);
}

Count ChainState::removal(int t) const {
  const int period = ctx_->spec().infectious_period;
  Count r = t >= period ? infections(t - period) : 0;
  const auto& ages = ctx_->data().initial.infectious_by_age;
  const int w = period - t;  // initial age leaving today
  if (w >= 1 && static_cast<std::size_t>(w) <= ages.size()) r += ages[static_cast<std::size_t>(w) - 1];
  else if (ages.empty() && t == period - 1) r += ctx_->data().initial.infectious;
  return r;
}

Count ChainState::recoveries_infectious(int t) const {
  return sir() ? removal(t) : series_[idx(Series::RecoveriesInfectious)][static_cast<std::size_t>(t)];
}

double ChainState::pressure(int t) const {
  const double beta = params_[Param::Beta];
  const auto n = static_cast<double>(ctx_->population());
  const double a = alarm_[static_cast<std::size_t>(t)];
  if (!sir()) return infection_pressure(beta, a, static_cast<double>(infectious(t)), n);
  const int period = ctx_->spec().infectious_period;
  double eff = 0.0;
  for (int w = 1; w <= std::min(t, period); ++w)
    eff += idd_[static_cast<std::size_t>(w) - 1] * static_cast<double>(infections(t - w));
  const auto& ages = ctx_->data().initial.infectious_by_age;
  if (ages.empty()) {
    if (t + 1 <= period) eff += idd_[static_cast<std::size_t>(t)] * static_cast<double>(ctx_->data().initial.infectious);
  } else {
    for (int w0 = 1; w0 + t <= period && static_cast<std::size_t>(w0) <= ages.size(); ++w0)
      eff += idd_[static_cast<std::size_t>(w0 + t) - 1] * static_cast<double>(ages[static_cast<std::size_t>(w0) - 1]);
  }
  return infection_pressure(beta, a, eff, n);
}

bool ChainState::bounds_ok(int t) const {
  const auto& s = states_[static_cast<std::size_t>(t)];
  const Count inf = infections(t), det = detected(t);
  if (inf < 0 || inf > s.susceptible || det > inf) return false;
  if (!ctx_->spec().undetected && det != inf) return false;
  if (sir()) return true;
  const Count adm = admissions(t), ri = recoveries_infectious(t), rh = recoveries_hospital(t);
  if (adm < 0 || ri < 0 || adm + ri > s.infectious) return false;
  if (rh < 0 || deaths(t) + rh > s.hospitalized) return false;
  return true;
}

DayTerms ChainState::compute_terms(int t, unsigned mask, const DayTerms& previous) const {
  const auto& lf = ctx_->log_factorial();
  const auto& s = states_[static_cast<std::size_t>(t)];
  const bool undetected = ctx_->spec().undetected;
  DayTerms out = previous;
  if (mask & kInfection)
    out.infection = binomial_logpmf(s.susceptible, infections(t), log_prob_from_pressure(pressure(t)), lf);
  if (mask & kDetection) out.detection = undetected ? binomial_logpmf(infections(t), detected(t), log_probs_.detect, lf) : 0.0;
  if (sir()) return out;
  const auto& lp = log_probs_;
  if (mask & kInfectiousExit)
    out.infectious_exit = multinomial3_logpmf(s.infectious, admissions(t), recoveries_infectious(t), lp.to_hospital,
                                              lp.infectious_recovery, lp.infectious_stay, lf);
  if (mask & kHospitalExit)
    out.hospital_exit = multinomial3_logpmf(s.hospitalized, deaths(t), recoveries_hospital(t), lp.death,
                                            lp.hospital_recovery, lp.hospital_stay, lf);
  return out;
}

void ChainState::recompute_terms(unsigned mask) {
  for (int t = 0; t < tau_; ++t) terms_[static_cast<std::size_t>(t)] = compute_terms(t, mask, terms_[static_cast<std::size_t>(t)]);
  sum_loglik();
}

void ChainState::sum_loglik() {
  if (!params_valid_) {
    loglik_ = kImpossible;
    return;
  }
  double total = 0.0;
  for (const auto& d : terms_) total += d.total();
  loglik_ = total;
}

double ChainState::log_posterior() const {
  const double w = ctx_->likelihood_weight();
  if (is_impossible(logprior_)) return kImpossible;
  if (w == 0.0) return logprior_;
  if (is_impossible(loglik_)) return kImpossible;
  return w * loglik_ + logprior_;
}

void ChainState::add(Series s, int t, Count delta) {
  if (param_backup_) throw std::logic_error("latent edit inside a parameter transaction");
  if (!journal_open_) {
    journal_open_ = true;
    journal_loglik_ = loglik_;
    min_edit_ = t;
    max_edit_ = t;
  }
  min_edit_ = std::min(min_edit_, t);
  max_edit_ = std::max(max_edit_, t);
  auto& v = series_[idx(s)][static_cast<std::size_t>(t)];
  edits_.push_back({s, t, v});
  v += delta;
}

bool ChainState::refresh(int from) {
  if (!journal_open_) return true;
  from = std::clamp(std::min(from, min_edit_), 0, tau_ - 1);
  const int settle = sir() ? max_edit_ + ctx_->spec().infectious_period : max_edit_;
  int stop = tau_ - 1;
  for (int t = from; t < tau_; ++t) {
    if (!bounds_ok(t)) return false;
    Compartment next = states_[static_cast<std::size_t>(t)];
    const Count inf = infections(t);
    next.susceptible -= inf;
    next.infectious += inf - admissions(t) - recoveries_infectious(t);
    next.hospitalized += admissions(t) - recoveries_hospital(t) - deaths(t);
    auto& slot = states_[static_cast<std::size_t>(t) + 1];
    if (next == slot) {
      if (t >= settle) {
        stop = t;
        break;
      }
    } else {
      state_journal_.emplace_back(t + 1, slot);
      slot = next;
    }
  }
  int term_end = stop;
  if (sir()) term_end = std::max(term_end, std::min(tau_ - 1, max_edit_ + ctx_->spec().infectious_period));
  for (int t = from; t <= term_end; ++t) {
    auto& slot = terms_[static_cast<std::size_t>(t)];
    term_journal_.emplace_back(t, slot);
    slot = compute_terms(t, kAll, slot);
  }
  sum_loglik();
  return true;
}

void ChainState::set_params(const ParamVector& params) {
  if (!edits_.empty()) throw std::logic_error("parameter change inside a latent transaction");
  if (!param_backup_) {
    param_backup_ =
        std::make_unique<ParamBackup>(ParamBackup{params_, alarm_, idd_, log_probs_, terms_, logprior_, params_valid_});
    journal_open_ = true;
    journal_loglik_ = loglik_;
  }
  const ParamVector old = params_;
  params_ = params;
  logprior_ = log_prior(params_, ctx_->priors(), ctx_->spec());
  params_valid_ = validate_params(params_, ctx_->spec()).empty();
  if (is_impossible(logprior_) || !params_valid_) {
    loglik_ = kImpossible;
    return;
  }
  const auto changed = [&](Param p) { return old.has(p) != params_.has(p) || (params_.has(p) && old[p] != params_[p]); };
  unsigned mask = 0;
  const bool alarm_changed = changed(Param::K) || changed(Param::Alpha) || changed(Param::DeltaCp) ||
                             changed(Param::HCp) || changed(Param::DeltaHill) || changed(Param::X0Hill) ||
                             changed(Param::NuHill);
  if (alarm_changed)
    alarm_ = alarm_from_smoothed(ctx_->spec().alarm, params_, ctx_->cases_smoothed(), ctx_->deaths_smoothed(),
                                 ctx_->population());
  if (sir() && (changed(Param::W0) || changed(Param::NuIdd))) {
    idd_ = idd_weights(IddCurve::from(params_, ctx_->spec()));
    mask |= kInfection;
  }
  if (alarm_changed || changed(Param::Beta)) mask |= kInfection;
  if (changed(Param::Lambda) || changed(Param::Gamma1)) mask |= kInfectiousExit;
  if (changed(Param::Gamma2) || changed(Param::Phi)) mask |= kHospitalExit;
  if (changed(Param::PiDetect)) mask |= kDetection;
  if (mask & (kInfectiousExit | kHospitalExit | kDetection)) log_probs_ = TransitionLogProbs::from(params_, ctx_->spec());
  if (ctx_->likelihood_weight() == 0.0) {
    loglik_ = 0.0;
    return;
  }
  // A previous impossible evaluation may have left stale components.
  if (is_impossible(journal_loglik_)) mask = kAll;
  recompute_terms(mask);
}

void ChainState::commit() {
  edits_.clear();
  state_journal_.clear();
  term_journal_.clear();
  param_backup_.reset();
  journal_open_ = false;
  max_edit_ = -1;
}

void ChainState::rollback() {
  for (auto it = edits_.rbegin(); it != edits_.rend(); ++it)
    series_[idx(it->series)][static_cast<std::size_t>(it->t)] = it->old_value;
  for (auto it = state_journal_.rbegin(); it != state_journal_.rend(); ++it)
    states_[static_cast<std::size_t>(it->first)] = it->second;
  for (auto it = term_journal_.rbegin(); it != term_journal_.rend(); ++it)
    terms_[static_cast<std::size_t>(it->first)] = it->second;
  if (param_backup_) {
    params_ = param_backup_->params;
    alarm_ = std::move(param_backup_->alarm);
    idd_ = std::move(param_backup_->idd);
    log_probs_ = param_backup_->log_probs;
    terms_ = std::move(param_backup_->terms);
    logprior_ = param_backup_->logprior;
    params_valid_ = param_backup_->valid;
  }
  if (journal_open_) loglik_ = journal_loglik_;
  commit();
}

Trajectory ChainState::to_trajectory() const {
  std::vector<TransitionRecord> recs(static_cast<std::size_t>(tau_));
  for (int t = 0; t < tau_; ++t) {
    auto& r = recs[static_cast<std::size_t>(t)];
    r.t = t;
    r.infections = infections(t);
    r.detected = detected(t);
    r.undetected = ctx_->spec().undetected ? r.infections - r.detected : 0;
    if (!sir()) {
      r.admissions = admissions(t);
      r.recoveries_infectious = recoveries_infectious(t);
      r.recoveries_hospital = recoveries_hospital(t);
      r.deaths = deaths(t);
    }
  }
  return build_trajectory(ctx_->data().initial, recs, ctx_->spec());
}

AugmentedState ChainState::to_augmented() const {
  AugmentedState a{to_trajectory(), params_, {}};
  if (sir() && alarm_uses_deaths(ctx_->spec().alarm)) a.alarm_deaths = ctx_->data().deaths;
  return a;
}

// ---------------------------------------------------------------------------

namespace {

Count round_count(double x) { return static_cast<Count>(std::llround(std::max(0.0, x))); }

struct Draft {
  const FitContext& ctx;
  std::vector<Count> inf, adm, ri, rh;

  Count det(int t) const { return ctx.data().cases[static_cast<std::size_t>(t)]; }
  Count dth(int t) const { return ctx.data().deaths[static_cast<std::size_t>(t)]; }
  bool missing(int t) const { return ctx.data().hospitalization_missing[static_cast<std::size_t>(t)]; }

  // S, I, H at day t.
  std::array<Count, 3> state(int t) const {
    const auto& init = ctx.data().initial;
    std::array<Count, 3> s{init.susceptible, init.infectious, init.hospitalized};
    for (int q = 0; q < t; ++q) {
      const auto i = static_cast<std::size_t>(q);
      s[0] -= inf[i];
      s[1] += inf[i] - adm[i] - ri[i];
      s[2] += adm[i] - rh[i] - dth(q);
    }
    return s;
  }

  // Raises the infectious count on day t by `deficit`.
  void raise_infectious(int t, Count deficit) {
    for (int s = t - 1; s >= 0 && deficit > 0; --s) {
      const Count take = std::min(deficit, ri[static_cast<std::size_t>(s)]);
      ri[static_cast<std::size_t>(s)] -= take;
      deficit -= take;
    }
    if (ctx.spec().undetected) {
      for (int s = t - 1; s >= 0 && deficit > 0; --s) {
        if (state(s)[1] < 1) continue;
        Count room = deficit;
        for (int q = s + 1; q <= t; ++q) {
          const auto st = state(q);
          room = std::min(room, st[0] - (q < t ? inf[static_cast<std::size_t>(q)] : det(q)));
        }
        room = std::min(room, state(s)[0] - inf[static_cast<std::size_t>(s)]);
        if (room <= 0) continue;
        inf[static_cast<std::size_t>(s)] += room;
        deficit -= room;
      }
    }
    if (deficit > 0)
      throw InitializationError("no consistent infectious count on day " + std::to_string(t) +
                                " for the observed admissions or cases");
  }

  // Raises the hospitalized count on day t by `deficit`.
  void raise_hospitalized(int t, Count deficit) {
    for (int s = t - 1; s >= 0 && deficit > 0; --s) {
      const Count take = std::min(deficit, rh[static_cast<std::size_t>(s)]);
      rh[static_cast<std::size_t>(s)] -= take;
      deficit -= take;
    }
    for (int s = t - 1; s >= 0 && deficit > 0; --s) {
      if (!missing(s)) continue;
      const Count take = std::min(deficit, ri[static_cast<std::size_t>(s)]);
      ri[static_cast<std::size_t>(s)] -= take;
      adm[static_cast<std::size_t>(s)] += take;
      deficit -= take;
    }
    if (deficit > 0)
      throw InitializationError("observed deaths on day " + std::to_string(t) +
                                " exceed any consistent hospitalized count");
  }
};

Count initial_infections(const FitContext& ctx, int t, double detection_mean) {
  const Count c = ctx.data().cases[static_cast<std::size_t>(t)];
  if (!ctx.spec().undetected) return c;
  return std::max<Count>({c, round_count(static_cast<double>(c) / detection_mean), 1});
}

LatentSeries initial_sir(const FitContext& ctx, double detection_mean) {
  const int tau = ctx.tau(), period = ctx.spec().infectious_period;
  LatentSeries out;
  out.infections.assign(static_cast<std::size_t>(tau), 0);
  Count s = ctx.data().initial.susceptible;
  const auto& ages = ctx.data().initial.infectious_by_age;
  for (int t = 0; t < tau; ++t) {
    const Count c = ctx.data().cases[static_cast<std::size_t>(t)];
    Count inf = std::min(initial_infections(ctx, t, detection_mean), s);
    if (inf < c) throw InitializationError("cases on day " + std::to_string(t) + " exceed susceptibles");
    bool infectious = false;
    for (int w = 1; w <= std::min(t, period) && !infectious; ++w)
      infectious = out.infections[static_cast<std::size_t>(t - w)] > 0;
    if (ages.empty()) infectious = infectious || (t < period && ctx.data().initial.infectious > 0);
    for (int w0 = 1; w0 + t <= period && static_cast<std::size_t>(w0) <= ages.size(); ++w0)
      infectious = infectious || ages[static_cast<std::size_t>(w0) - 1] > 0;
    if (!infectious) {
      if (c > 0)
        throw InitializationError("cases on day " + std::to_string(t) + " with no infectious individuals");
      inf = 0;
    }
    out.infections[static_cast<std::size_t>(t)] = inf;
    s -= inf;
  }
  return out;
}

LatentSeries initial_sihrd(const FitContext& ctx, const ExitProbabilities& f, double detection_mean) {
  const int tau = ctx.tau();
  const auto n = static_cast<std::size_t>(tau);
  Draft d{ctx, std::vector<Count>(n, 0), std::vector<Count>(n, 0), std::vector<Count>(n, 0), std::vector<Count>(n, 0)};
  for (int t = 0; t < tau; ++t) {
    const auto i = static_cast<std::size_t>(t);
    auto st = d.state(t);
    const Count c = d.det(t);
    if (c > st[0]) throw InitializationError("cases on day " + std::to_string(t) + " exceed susceptibles");
    d.inf[i] = std::clamp(initial_infections(ctx, t, detection_mean), c, st[0]);
    if (d.inf[i] > 0 && st[1] < 1) {
      if (c > 0 || !ctx.spec().undetected) d.raise_infectious(t, 1 - st[1]);
      else d.inf[i] = 0;
      st = d.state(t);
    }
    d.adm[i] = d.missing(t) ? round_count(f.to_hospital * static_cast<double>(st[1]))
                            : ctx.data().hospitalizations[i];
    if (d.adm[i] > st[1]) {
      d.raise_infectious(t, d.adm[i] - st[1]);
      st = d.state(t);
    }
    d.ri[i] = std::min(round_count(f.infectious_recovery * static_cast<double>(st[1])), st[1] - d.adm[i]);
    if (d.dth(t) > st[2]) {
      d.raise_hospitalized(t, d.dth(t) - st[2]);
      st = d.state(t);
    }
    d.rh[i] = std::min(round_count(f.hospital_recovery * static_cast<double>(st[2])), st[2] - d.dth(t));
  }
  return {std::move(d.inf), std::move(d.adm), std::move(d.ri), std::move(d.rh)};
}

}  // namespace

LatentSeries initial_latent(const FitContext& ctx, const ExitProbabilities& fractions, double detection_mean) {
  if (!(detection_mean > 0.0 && detection_mean <= 1.0))
    throw std::invalid_argument("detection mean must be in (0, 1]");
  return ctx.spec().compartments == Compartments::SirIdd ? initial_sir(ctx, detection_mean)
                                                         : initial_sihrd(ctx, fractions, detection_mean);
}

}  // namespace bcm
