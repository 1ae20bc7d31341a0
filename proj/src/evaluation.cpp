#include "mmlab/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include "mmlab/policies.hpp"

namespace mmlab {

namespace {

double bid_term(double f, double m, double b) { return f * (m - b); }
double ask_term(double f, double m, double a) { return (1.0 - f) * (a - m); }

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

struct GridSup {
  GridQuote pair{0, 1};
  double bid_value = 0.0;
  double ask_value = 0.0;
};

GridSup grid_sup(const std::function<double(double)>& cdf, double m, const PriceGrid& grid) {
  std::vector<double> bids(grid.size());
  std::vector<double> asks(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.point(i);
    const double f = cdf(x);
    bids[i] = bid_term(f, m, x);
    asks[i] = ask_term(f, m, x);
  }
  const IndexRange all{0, grid.last()};
  GridSup s;
  s.pair = {argmax_lowest(bids, all), argmax_highest(asks, all)};
  s.bid_value = bids[s.pair.bid];
  s.ask_value = asks[s.pair.ask];
  return s;
}

}  // namespace

HindsightBest hindsight_best(std::span<const double> prices,
                             const std::function<double(double)>& cdf, const PriceGrid& grid) {
  HindsightBest h;
  h.mean_price = mean_of(prices);
  const GridSup s = grid_sup(cdf, h.mean_price, grid);
  h.pair = s.pair;
  h.quote = s.pair.to_quote(grid);
  h.per_round = s.bid_value + s.ask_value;
  h.value = static_cast<double>(prices.size()) * h.per_round;
  return h;
}

ContinuousComparator continuous_sup(const MonotonePolyline& cdf, double m) {
  ContinuousComparator c;
  double best_bid = -std::numeric_limits<double>::infinity();
  double best_ask = -std::numeric_limits<double>::infinity();
  auto offer = [&](double x, double f) {
    const double vb = bid_term(f, m, x);
    if (vb > best_bid) {
      best_bid = vb;
      c.bid = {x, f};
    }
    const double va = ask_term(f, m, x);
    if (va >= best_ask) {
      best_ask = va;
      c.ask = {x, 1.0 - f};
    }
  };
  const auto v = cdf.vertices();
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const auto [x0, f0] = v[i];
    const auto [x1, f1] = v[i + 1];
    offer(x0, f0);
    if (x1 > x0 && f1 > f0) {
      const double s = (f1 - f0) / (x1 - x0);
      const double alpha = f0 - s * x0;
      // Both objectives are concave quadratics on the segment.
      const double xb = (s * m - alpha) / (2.0 * s);
      const double xa = (1.0 - alpha + s * m) / (2.0 * s);
      std::array<double, 2> crit{std::min(xb, xa), std::max(xb, xa)};
      for (double x : crit) {
        if (x > x0 && x < x1) offer(x, std::clamp(alpha + s * x, f0, f1));
      }
    }
    offer(x1, f1);
  }
  c.value = best_bid + best_ask;
  return c;
}

RegretReport compute_regret(const RunRecord& record, std::optional<RoundRange> range) {
  RegretReport r;
  const std::size_t n = static_cast<std::size_t>(record.rounds);
  r.partial = record.partial();
  const RoundRange rr = range.value_or(RoundRange{0, n});
  if (rr.begin > rr.end || rr.end > n) throw std::out_of_range("round range exceeds the record");
  r.rounds = rr.end - rr.begin;
  if (n == 0) return r;

  const MonotonePolyline F(record.ground_truth.cdf);
  const std::function<double(double)> cdf = [&](double x) { return F(x); };
  const PriceGrid grid = record.grid();
  const std::span<const double> prices(record.trace.price.data(), n);

  const double mean_price = mean_of(prices);
  r.hindsight = continuous_sup(F, mean_price);
  const GridSup hind_grid = grid_sup(cdf, mean_price, grid);
  r.hindsight_pair = hind_grid.pair;
  const double gb = grid.point(hind_grid.pair.bid);
  const double ga = grid.point(hind_grid.pair.ask);
  const double f_gb = F(gb);
  const double f_ga = F(ga);

  std::optional<ContinuousComparator> truth_cont;
  std::optional<GridSup> truth_grid;
  if (record.ground_truth.mu) {
    truth_cont = continuous_sup(F, *record.ground_truth.mu);
    truth_grid = grid_sup(cdf, *record.ground_truth.mu, grid);
    r.pseudo_regret = 0.0;
    r.grid_pseudo_regret = 0.0;
  }

  r.cumulative_regret.reserve(r.rounds);
  for (std::size_t t = rr.begin; t < rr.end; ++t) {
    const double m = prices[t];
    const double b = grid.point(record.trace.bid[t]);
    const double a = grid.point(record.trace.ask[t]);
    const double fb = F(b);
    const double fa = F(a);
    const double played = bid_term(fb, m, b) + ask_term(fa, m, a);
    const double comparator = r.hindsight.objective(m);
    r.regret += comparator - played;
    r.grid_regret += bid_term(f_gb, m, gb) + ask_term(f_ga, m, ga) - played;
    r.realized_regret += comparator - record.trace.reward[t];
    r.cumulative_regret.push_back(r.regret);
    if (truth_cont) {
      const double mu = *record.ground_truth.mu;
      const double played_mu = bid_term(fb, mu, b) + ask_term(fa, mu, a);
      r.pseudo_regret += truth_cont->value - played_mu;
      r.grid_pseudo_regret += (truth_grid->bid_value + truth_grid->ask_value) - played_mu;
    }
  }
  if (truth_cont) r.gap = r.regret - r.pseudo_regret;
  return r;
}

// Concentration ---------------------------------------------------------------------

std::string_view to_string(BoundKind kind) noexcept {
  switch (kind) {
    case BoundKind::AnytimeHoeffding:
      return "anytime_hoeffding";
    case BoundKind::AutoRegressiveMean:
      return "ar_mean";
    case BoundKind::GlobalMean:
      return "global_mean";
    case BoundKind::MartingaleSum:
      return "martingale_sum";
  }
  return "unknown";
}

std::string_view to_string(Hypothesis h) noexcept {
  switch (h) {
    case Hypothesis::Verified:
      return "verified";
    case Hypothesis::Unverified:
      return "hypothesis unverified";
    case Hypothesis::NotCheckable:
      return "not checkable";
  }
  return "unknown";
}

BinomialSummary binomial_summary(std::size_t hits, std::size_t trials) {
  BinomialSummary b;
  b.trials = trials;
  b.hits = hits;
  if (trials == 0) return b;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(hits) / n;
  const double z = 1.96;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  b.frequency = p;
  b.wilson_low = std::max(0.0, centre - half);
  b.wilson_high = std::min(1.0, centre + half);
  return b;
}

double binomial_threshold(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("binomial threshold needs n >= 1");
  return p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

namespace {

void check_hypothesis(const ConcentrationSpec& spec, ConcentrationReport& report) {
  const PriceProcess& proc = spec.process;
  const std::optional<double> mean = proc.mean();
  const bool mean_matches = mean && std::abs(*mean - spec.mu) < 1e-9;
  const std::string kind = proc.kind();
  switch (spec.bound) {
    case BoundKind::AnytimeHoeffding:
      if (kind == "iid" && mean_matches) {
        report.hypothesis = Hypothesis::Verified;
        report.hypothesis_note = "i.i.d. prices with mean mu";
      } else {
        report.hypothesis = Hypothesis::Unverified;
        report.hypothesis_note = "bound assumes i.i.d. prices with mean mu";
      }
      return;
    case BoundKind::AutoRegressiveMean:
      if ((kind == "ar" || kind == "iid") && mean_matches) {
        report.hypothesis = Hypothesis::Verified;
        report.hypothesis_note = "autoregressive prices centred at mu";
      } else {
        report.hypothesis = Hypothesis::Unverified;
        report.hypothesis_note = "bound assumes autoregressive prices centred at mu";
      }
      return;
    case BoundKind::GlobalMean:
    case BoundKind::MartingaleSum: {
      const MeanReversionReport mr = verify_global_mean_reversion(
          proc, spec.mu, std::max<std::size_t>(spec.paths, 2), spec.horizon,
          splitmix64(spec.seed + 1));
      if (!mr.checkable) {
        report.hypothesis = Hypothesis::NotCheckable;
        report.hypothesis_note = mr.reason;
      } else if (mr.violated) {
        report.hypothesis = Hypothesis::Unverified;
        report.hypothesis_note = "E[X_{t+1}|F_t] S_t > 0 at " + std::to_string(mr.flagged_rounds) +
                                 " rounds (max " + std::to_string(mr.max_estimate) + ")";
      } else {
        report.hypothesis = Hypothesis::Verified;
        report.hypothesis_note = "E[X_{t+1}|F_t] S_t <= 0 within Monte Carlo radius";
      }
      return;
    }
  }
}

}  // namespace

ConcentrationReport concentration_suite(const ConcentrationSpec& spec) {
  if (!(spec.delta > 0.0 && spec.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (spec.paths == 0 || spec.horizon == 0) throw std::invalid_argument("need paths and rounds");
  require_unit_interval(spec.mu, "mu");

  ConcentrationReport report;
  report.bound = spec.bound;
  report.process = spec.process.kind();
  check_hypothesis(spec, report);

  const double gamma = spec.process.gamma();
  const std::size_t order = std::max<std::size_t>(1, spec.process.order());
  std::vector<double> radius(spec.horizon + 1, std::numeric_limits<double>::infinity());
  for (std::uint64_t t = 1; t <= spec.horizon; ++t) {
    switch (spec.bound) {
      case BoundKind::AnytimeHoeffding:
        radius[t] = phi(t, spec.delta, spec.horizon);
        break;
      case BoundKind::AutoRegressiveMean:
        radius[t] = phibar_ar(t, spec.delta, spec.horizon, gamma, order);
        break;
      case BoundKind::GlobalMean:
        radius[t] = phibar_global(t, spec.delta, spec.horizon);
        break;
      case BoundKind::MartingaleSum: {
        const double n = static_cast<double>(t);
        if (t > 2) radius[t] = std::sqrt(2.0 * n * std::log(2.0 * n / spec.delta));
        break;
      }
    }
  }

  std::size_t violated_paths = 0;
  std::vector<double> history;
  history.reserve(spec.horizon);
  for (std::size_t p = 0; p < spec.paths; ++p) {
    Rng rng = Rng::stream(spec.seed, {p, static_cast<std::uint64_t>(StreamRole::Price)});
    history.clear();
    double sum = 0.0;
    bool violated = false;
    for (std::uint64_t t = 1; t <= spec.horizon; ++t) {
      history.push_back(spec.process.next(history, rng));
      sum += history.back() - spec.mu;
      const double deviation = spec.bound == BoundKind::MartingaleSum
                                   ? std::abs(sum)
                                   : std::abs(sum / static_cast<double>(t));
      const double ratio = deviation / radius[t];
      report.worst_ratio = std::max(report.worst_ratio, ratio);
      if (deviation > radius[t]) violated = true;
    }
    if (violated) ++violated_paths;
  }

  report.violations = binomial_summary(violated_paths, spec.paths);
  report.nominal = spec.delta;
  report.threshold = binomial_threshold(spec.delta, spec.paths);
  report.pass = report.violations.frequency <= report.threshold;
  return report;
}

// Rate fits -----------------------------------------------------------------------------

RateFit rate_fit(std::span<const std::pair<double, double>> points, double min_decades) {
  RateFit fit;
  std::vector<std::pair<double, double>> used;
  for (auto [T, regret] : points) {
    if (!(T > 0.0) || !(regret > 0.0)) {
      fit.warnings.push_back("dropped nonpositive point (T=" + std::to_string(T) +
                             ", regret=" + std::to_string(regret) + ")");
      continue;
    }
    used.emplace_back(std::log(T), std::log(regret));
  }
  std::set<double> horizons;
  for (auto [lx, ly] : used) horizons.insert(lx);
  if (horizons.size() < 3) {
    throw std::invalid_argument("rate fit needs at least 3 distinct horizons with positive regret");
  }
  const double span = (*horizons.rbegin() - *horizons.begin()) / std::log(10.0);
  if (span + 1e-9 < min_decades) {
    throw std::invalid_argument("rate fit horizons span " + std::to_string(span) +
                                " decades, need " + std::to_string(min_decades));
  }
  const double n = static_cast<double>(used.size());
  double mx = 0.0;
  double my = 0.0;
  for (auto [x, y] : used) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (auto [x, y] : used) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (auto [x, y] : used) {
    const double e = y - (fit.intercept + fit.slope * x);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  fit.points = used.size();
  return fit;
}

// Estimator equivalence ------------------------------------------------------------------

EstimatorShadow::EstimatorShadow(const PriceGrid& grid, double clip_offset)
    : shadow_(grid, EstimatorMode::Eager, clip_offset) {}

void EstimatorShadow::operator()(std::uint64_t t, const Quote& quote, const Observation& obs,
                                 const Policy& policy) {
  shadow_.absorb(obs, quote);
  if (!is_power_of_two(t)) return;
  const auto* opsr = dynamic_cast<const Opsr*>(&policy);
  if (opsr == nullptr) throw std::logic_error("estimator shadow needs an OPSR policy");
  ++report_.rebuilds_checked;
  const CensoredCdfEstimator& est = opsr->estimator();
  const auto a = est.counts();
  const auto b = shadow_.counts();
  if (est.counts_round() != t || !std::equal(a.begin(), a.end(), b.begin(), b.end())) {
    if (report_.mismatches == 0) report_.first_mismatch_round = t;
    ++report_.mismatches;
  }
}

}  // namespace mmlab
