#include "mmlab/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmlab {

PolicySnapshot Policy::snapshot() const {
  PolicySnapshot s;
  s.round = round_;
  s.quote = act();
  s.work = work();
  return s;
}

std::size_t argmax_lowest(std::span<const double> values, IndexRange range) {
  std::size_t best = range.lo;
  for (std::size_t i = range.lo + 1; i <= range.hi; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t argmax_highest(std::span<const double> values, IndexRange range) {
  std::size_t best = range.lo;
  for (std::size_t i = range.lo + 1; i <= range.hi; ++i) {
    if (values[i] >= values[best]) best = i;
  }
  return best;
}

EliminationResult eliminate(const ConfidenceEnvelopes& env, const PriceGrid& grid,
                            IndexRange active) {
  const double mu_low = env.mu_low;
  const double mu_up = env.mu_up;
  EliminationResult r;
  r.gamma_bid = -std::numeric_limits<double>::infinity();
  r.gamma_ask = -std::numeric_limits<double>::infinity();
  for (std::size_t i = active.lo; i <= active.hi; ++i) {
    const double x = grid.point(i);
    r.gamma_bid = std::max(r.gamma_bid, (mu_low - x) * env.f_low[i]);
    r.gamma_ask = std::max(r.gamma_ask, (x - mu_up) * env.s_low(i));
  }
  for (std::size_t i = active.lo; i <= active.hi; ++i) {
    if ((mu_low - grid.point(i)) * env.f_up[i] >= r.gamma_bid) {
      r.bid = i;
      break;
    }
  }
  for (std::size_t i = active.hi + 1; i-- > active.lo;) {
    if ((grid.point(i) - mu_up) * env.s_up(i) >= r.gamma_ask) {
      r.ask = i;
      break;
    }
  }
  return r;
}

// Opsr ---------------------------------------------------------------------------------

Opsr::Opsr(std::uint64_t horizon, OpsrOptions options)
    : Policy(make_grid(horizon)),
      options_(options),
      widths_{options.regime, options.delta, horizon, options.gamma, options.order},
      estimator_(grid_, options.estimator, options.clip_offset),
      envelopes_(grid_.size()),
      active_{0, grid_.last()},
      tightened_range_{0, grid_.last()} {
  widths_.validate();
  if (options.estimator == EstimatorMode::Lazy &&
      options.schedule == EliminationSchedule::EveryRound) {
    throw std::invalid_argument("a lazy estimator needs the powers-of-two schedule");
  }
}

OpsrOptions Opsr::lazy_options(OpsrOptions base) {
  base.estimator = EstimatorMode::Lazy;
  base.schedule = EliminationSchedule::PowersOfTwo;
  return base;
}

std::string_view Opsr::name() const noexcept {
  if (options_.schedule == EliminationSchedule::EveryRound) return "opsr";
  return options_.estimator == EstimatorMode::Lazy ? "lazy_opsr" : "opsr_doubling";
}

void Opsr::update(const Observation& obs) {
  estimator_.absorb(obs, active_quote().to_quote(grid_));
  ++round_;
  const std::uint64_t t = round_;
  price_sum_ += obs.market_price;
  mu_hat_ = price_sum_ / static_cast<double>(t);
  ++own_work_;
  tightened_ = false;

  if (options_.schedule == EliminationSchedule::PowersOfTwo && !is_power_of_two(t)) return;

  estimator_.rebuild();
  own_work_ += tighten(envelopes_, estimator_, mu_hat_, t, widths_, active_, options_.width_scale);
  tightened_range_ = active_;
  tightened_ = true;

  const EliminationResult r = eliminate(envelopes_, grid_, active_);
  own_work_ += 2 * active_.size();
  ++diagnostics_.eliminations;
  if (has_gamma_star_ && (r.gamma_bid < gamma_star_bid_ || r.gamma_ask < gamma_star_ask_)) {
    ++diagnostics_.monotonicity_violations;
  }
  gamma_star_bid_ = r.gamma_bid;
  gamma_star_ask_ = r.gamma_ask;
  has_gamma_star_ = true;

  if (!r.bid) ++diagnostics_.empty_bid_candidates;
  if (!r.ask) ++diagnostics_.empty_ask_candidates;
  IndexRange next{r.bid.value_or(active_.lo), r.ask.value_or(active_.hi)};
  if (next.lo >= next.hi) {
    ++diagnostics_.crossed_rounds;
    next = active_;
  }
  if (next.lo < active_.lo || next.hi > active_.hi) ++diagnostics_.nesting_violations;
  if (next != active_) ++diagnostics_.quote_changes;
  active_ = next;
}

PolicySnapshot Opsr::snapshot() const {
  PolicySnapshot s = Policy::snapshot();
  s.mu_low = envelopes_.mu_low;
  s.mu_up = envelopes_.mu_up;
  s.gamma_bid = gamma_star_bid_;
  s.gamma_ask = gamma_star_ask_;
  return s;
}

std::optional<EnvelopeView> Opsr::envelopes() const {
  return EnvelopeView{&envelopes_, tightened_range_};
}

// Etp ------------------------------------------------------------------------------------

std::uint64_t default_exploration_rounds(std::uint64_t horizon) {
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  const double T = static_cast<double>(horizon);
  const double kappa = std::ceil(std::cbrt(std::log(3.0 * T)) * std::cbrt(T) * std::cbrt(T));
  return std::clamp<std::uint64_t>(static_cast<std::uint64_t>(kappa), 1, horizon);
}

Etp::Etp(std::uint64_t horizon, EtpOptions options, Rng noise)
    : Policy(make_grid(horizon)),
      horizon_(horizon),
      kappa_(options.kappa.value_or(default_exploration_rounds(horizon))),
      options_(options),
      noise_(noise),
      estimator_(grid_, EstimatorMode::Eager, options.clip_offset),
      quote_{0, grid_.last()} {
  if (kappa_ == 0) throw std::invalid_argument("ETP needs at least one exploration round");
  kappa_ = std::min(kappa_, horizon_);
  if (options_.epsilon) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(horizon_));
    if (!(*options_.epsilon >= 0.0 && *options_.epsilon <= bound)) {
      throw std::invalid_argument("ETP epsilon must lie in [0, T^-1/2]");
    }
  }
}

void Etp::commit() {
  frozen_cdf_.resize(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) frozen_cdf_[i] = estimator_.estimate(i);
  epsilon_ = options_.epsilon
                 ? *options_.epsilon
                 : noise_.uniform() / std::sqrt(static_cast<double>(horizon_));
  post_mean_ = 0.0;
  phase_ = Phase::Commit;
}

void Etp::update(const Observation& obs) {
  ++round_;
  const std::uint64_t t = round_;
  if (phase_ == Phase::Explore) {
    estimator_.absorb(obs, quote_.to_quote(grid_));
    work_ = estimator_.work();
    if (t == kappa_) commit();
    return;
  }

  const double n = static_cast<double>(t - kappa_);
  post_mean_ = ((n - 1.0) * post_mean_ + obs.market_price) / n;

  std::size_t bid = 0;
  std::size_t ask = 0;
  double best_bid = -std::numeric_limits<double>::infinity();
  double best_ask = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const double x = grid_.point(i);
    const double vb = frozen_cdf_[i] * (post_mean_ + epsilon_ - x);
    const double va = (1.0 - frozen_cdf_[i]) * (x + epsilon_ - post_mean_);
    if (vb > best_bid) {
      best_bid = vb;
      bid = i;
    }
    if (va >= best_ask) {
      best_ask = va;
      ask = i;
    }
  }
  work_ += 2 * grid_.size();
  if (bid >= ask) {
    ++diagnostics_.crossed_rounds;
    return;
  }
  const GridQuote next{bid, ask};
  if (next != quote_) ++diagnostics_.quote_changes;
  quote_ = next;
}

PolicySnapshot Etp::snapshot() const {
  PolicySnapshot s = Policy::snapshot();
  s.phase = phase_ == Phase::Explore ? "explore" : "commit";
  s.epsilon = epsilon_;
  s.mu_low = s.mu_up = post_mean_;
  return s;
}

// Baselines -------------------------------------------------------------------------------

FixedQuotePolicy::FixedQuotePolicy(PriceGrid grid, GridQuote quote, std::string label)
    : Policy(grid), quote_(quote), label_(std::move(label)) {
  if (!(quote.bid < quote.ask && quote.ask < grid.size())) {
    throw std::invalid_argument("fixed quote must satisfy bid < ask on the grid");
  }
}

GridQuote oracle_quote(const std::function<double(double)>& cdf, double mu, const PriceGrid& grid) {
  require_unit_interval(mu, "mu");
  std::vector<double> bid_term(grid.size());
  std::vector<double> ask_term(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.point(i);
    const double f = cdf(x);
    bid_term[i] = f * (mu - x);
    ask_term[i] = (1.0 - f) * (x - mu);
  }
  const IndexRange all{0, grid.last()};
  const GridQuote q{argmax_lowest(bid_term, all), argmax_highest(ask_term, all)};
  if (q.bid >= q.ask) throw std::logic_error("separable maximizers crossed");
  return q;
}

}  // namespace mmlab
