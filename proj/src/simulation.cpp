#include "mmlab/simulation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmlab {

Environment make_environment(ValuationModel valuations, PriceProcess prices) {
  const std::optional<double> mu = prices.mean();
  return Environment{std::move(valuations), std::move(prices), mu};
}

Rng environment_stream(const RunSeeds& seeds, std::uint64_t horizon, StreamRole role) {
  return Rng::stream(seeds.base_seed,
                     {horizon, seeds.seed_index, static_cast<std::uint64_t>(role)});
}

Rng policy_stream(const RunSeeds& seeds, std::uint64_t horizon, std::uint64_t policy_index) {
  return Rng::stream(seeds.base_seed, {horizon, seeds.seed_index,
                                       static_cast<std::uint64_t>(StreamRole::Policy),
                                       policy_index});
}

bool CheckpointCadence::due(std::uint64_t t) const noexcept {
  switch (kind) {
    case Kind::PowersOfTwo:
      return is_power_of_two(t);
    case Kind::Every:
      return every > 0 && t % every == 0;
    case Kind::None:
      return false;
  }
  return false;
}

void RoundTrace::reserve(std::size_t n) {
  bid.reserve(n);
  ask.reserve(n);
  price.reserve(n);
  kind.reserve(n);
  reward.reserve(n);
  revealed.reserve(n);
}

namespace {

bool sandwich_holds(const EnvelopeView& view, const PriceGrid& grid, const ValuationModel& model,
                    double mu) {
  const ConfidenceEnvelopes& env = *view.envelopes;
  if (!(env.mu_low <= mu && mu <= env.mu_up)) return false;
  for (std::size_t i = view.checked.lo; i <= view.checked.hi; ++i) {
    const double f = model.cdf(grid.point(i));
    if (!(env.f_low[i] <= f && f <= env.f_up[i])) return false;
  }
  return true;
}

}  // namespace

RunRecord simulate(Policy& policy, const Environment& env, const RunSeeds& seeds,
                   std::uint64_t horizon, const SimulationOptions& options) {
  if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
  const PriceGrid& grid = policy.grid();

  RunRecord rec;
  rec.policy = std::string(policy.name());
  rec.horizon = horizon;
  rec.seeds = seeds;
  rec.grid_resolution = grid.resolution();
  rec.trace.reserve(horizon);
  rec.ground_truth.cdf.assign(env.valuations.polyline().vertices().begin(),
                              env.valuations.polyline().vertices().end());
  rec.ground_truth.mu = env.mu;
  rec.ground_truth.process = env.prices.kind();
  rec.ground_truth.valuations.reserve(horizon);

  const bool check = options.truth_checks && env.mu && policy.envelopes().has_value();
  rec.truth.envelopes_checked = check;
  if (options.truth_checks && env.mu) {
    rec.truth.grid_optimum =
        oracle_quote([&](double x) { return env.valuations.cdf(x); }, *env.mu, grid);
  }

  Rng valuation_rng = environment_stream(seeds, horizon, StreamRole::Valuation);
  Rng price_rng = environment_stream(seeds, horizon, StreamRole::Price);
  std::vector<double> history;
  history.reserve(horizon);

  for (std::uint64_t t = 1; t <= horizon; ++t) {
    const GridQuote gq = policy.act();
    const Quote quote = gq.to_quote(grid);

    double m = 0.0;
    try {
      m = env.prices.next(history, price_rng);
    } catch (const std::runtime_error& e) {
      rec.error = e.what();
      break;
    }
    history.push_back(m);
    double v = env.valuations.sample(valuation_rng);
    if (options.valuation_transform) v = options.valuation_transform(t, quote, v);

    const TradeOutcome outcome = settle(quote, v, m);
    const Observation obs = observe(quote, v, m);
    rec.trace.bid.push_back(static_cast<std::uint32_t>(gq.bid));
    rec.trace.ask.push_back(static_cast<std::uint32_t>(gq.ask));
    rec.trace.price.push_back(m);
    rec.trace.kind.push_back(outcome.kind);
    rec.trace.reward.push_back(outcome.reward);
    rec.trace.revealed.push_back(obs.revealed() ? std::get<Revealed>(obs.valuation_info).valuation
                                                : std::numeric_limits<double>::quiet_NaN());
    rec.ground_truth.valuations.push_back(v);

    policy.update(obs);
    rec.rounds = t;

    if (check) {
      if (policy.envelopes_changed() && !rec.truth.envelope_failed &&
          !sandwich_holds(*policy.envelopes(), grid, env.valuations, *env.mu)) {
        rec.truth.envelope_failed = true;
        rec.truth.first_envelope_failure = t;
      }
      const GridQuote next = policy.act();
      const GridQuote& best = *rec.truth.grid_optimum;
      if (best.bid < next.bid || best.ask > next.ask) {
        if (rec.truth.optimal_arm_exits == 0) rec.truth.first_exit = t;
        ++rec.truth.optimal_arm_exits;
        if (!rec.truth.envelope_failed) ++rec.truth.exits_without_failure;
      }
    }
    if (options.observer) options.observer(t, quote, obs, policy);
    if (options.checkpoints.due(t)) rec.checkpoints.push_back(policy.snapshot());
  }

  if (rec.checkpoints.empty() || rec.checkpoints.back().round != rec.rounds) {
    rec.checkpoints.push_back(policy.snapshot());
  }
  rec.diagnostics = policy.diagnostics();
  rec.work = policy.work();
  return rec;
}

}  // namespace mmlab
