#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmlab/environments.hpp"
#include "mmlab/estimation.hpp"
#include "mmlab/simulation.hpp"

namespace mmlab {

// Hindsight comparators -------------------------------------------------------------

struct HindsightBest {
  GridQuote pair{0, 1};
  Quote quote{0.0, 1.0};
  double mean_price = 0.0;
  double per_round = 0.0;  // max_b F(b)(m - b) + max_a S(a)(a - m)
  double value = 0.0;      // T * per_round
};

/// Grid maximizer of the hindsight objective; it depends on the prices only
/// through their mean. Bid and ask are maximized independently.
HindsightBest hindsight_best(std::span<const double> prices,
                             const std::function<double(double)>& cdf, const PriceGrid& grid);

/// One side of a continuous comparator. `weight` is the F value (bid side) or
/// the S value (ask side) that attains the supremum; at a jump it may be a
/// one-sided limit, so the supremum need not be attained exactly at `price`.
struct ComparatorArm {
  double price = 0.0;
  double weight = 0.0;
};

struct ContinuousComparator {
  ComparatorArm bid;
  ComparatorArm ask;
  double value = 0.0;  // per round, at the mean it was computed for

  /// F(b)(m - b) + S(a)(a - m) evaluated with the stored weights.
  double objective(double m) const noexcept {
    return bid.weight * (m - bid.price) + ask.weight * (ask.price - m);
  }
};

/// sup over [0,1]^2 of F(b)(m - b) + S(a)(a - m) for a piecewise-linear CDF
/// with jumps, computed exactly from segment endpoints and critical points.
ContinuousComparator continuous_sup(const MonotonePolyline& cdf, double m);

// Regret ----------------------------------------------------------------------------

/// Half-open range [begin, end) of zero-based round indices.
struct RoundRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct RegretReport {
  std::uint64_t rounds = 0;
  bool partial = false;

  double regret = 0.0;              // hindsight, continuous comparator
  double grid_regret = 0.0;         // hindsight, grid comparator
  double pseudo_regret = std::numeric_limits<double>::quiet_NaN();       // true mu, continuous
  double grid_pseudo_regret = std::numeric_limits<double>::quiet_NaN();  // true mu, grid
  double gap = std::numeric_limits<double>::quiet_NaN();                 // regret - pseudo_regret
  double realized_regret = 0.0;     // hindsight comparator minus realized rewards

  ContinuousComparator hindsight;
  GridQuote hindsight_pair{0, 1};
  std::vector<double> cumulative_regret;  // continuous hindsight comparator, per round
};

/// Regret of a record against comparators fixed from all completed rounds.
/// With a range, only rounds in the range are summed, so reports over a
/// partition add up to the full report.
RegretReport compute_regret(const RunRecord& record, std::optional<RoundRange> range = {});

// Concentration -----------------------------------------------------------------------

enum class BoundKind { AnytimeHoeffding, AutoRegressiveMean, GlobalMean, MartingaleSum };

std::string_view to_string(BoundKind kind) noexcept;

enum class Hypothesis { Verified, Unverified, NotCheckable };

std::string_view to_string(Hypothesis h) noexcept;

struct ConcentrationSpec {
  PriceProcess process;
  double mu = 0.5;
  BoundKind bound = BoundKind::AnytimeHoeffding;
  std::size_t paths = 400;
  std::uint64_t horizon = 10000;
  double delta = 0.05;
  std::uint64_t seed = 0;
};

struct BinomialSummary {
  std::size_t trials = 0;
  std::size_t hits = 0;
  double frequency = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 0.0;
};

BinomialSummary binomial_summary(std::size_t hits, std::size_t trials);

/// p + 3 sqrt(p (1 - p) / n).
double binomial_threshold(double p, std::size_t n);

struct ConcentrationReport {
  BoundKind bound;
  std::string process;
  Hypothesis hypothesis = Hypothesis::NotCheckable;
  std::string hypothesis_note;
  BinomialSummary violations;
  double nominal = 0.0;    // the probability the bound promises
  double threshold = 0.0;  // nominal + 3 binomial sigma
  double worst_ratio = 0.0;  // max over paths and rounds of deviation / radius
  bool pass = false;
};

/// Draws `paths` price paths and counts the ones whose deviation ever leaves
/// the bound's radius. Mean bounds test |mu_hat_t - mu| <= width(t) for all t;
/// the martingale bound tests |S_n| <= sqrt(2 n ln(2n/delta)) for 2 < n <= T.
ConcentrationReport concentration_suite(const ConcentrationSpec& spec);

// Rate fits ---------------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // root mean square of ln-residuals
  std::size_t points = 0;
  std::vector<std::string> warnings;
};

/// Least squares of ln(regret) on ln(T). Nonpositive regrets are dropped with a
/// warning; at least three distinct horizons spanning `min_decades` are required.
RateFit rate_fit(std::span<const std::pair<double, double>> points, double min_decades = 2.0);

// Estimator equivalence --------------------------------------------------------------

struct EquivalenceReport {
  std::uint64_t rebuilds_checked = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t first_mismatch_round = 0;
};

/// Observer that feeds an eager shadow estimator with every (quote, observation)
/// and compares its counts to the policy's lazy counts at each rebuild round.
/// The policy must be an Opsr instance.
class EstimatorShadow {
 public:
  explicit EstimatorShadow(const PriceGrid& grid, double clip_offset = kDefaultClipOffset);

  void operator()(std::uint64_t t, const Quote& quote, const Observation& obs,
                  const Policy& policy);

  const EquivalenceReport& report() const noexcept { return report_; }
  const CensoredCdfEstimator& shadow() const noexcept { return shadow_; }

 private:
  CensoredCdfEstimator shadow_;
  EquivalenceReport report_;
};

}  // namespace mmlab
