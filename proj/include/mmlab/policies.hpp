#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmlab/estimation.hpp"
#include "mmlab/market.hpp"
#include "mmlab/rng.hpp"

namespace mmlab {

/// Counters for rounds where an algorithm had to fall back or where one of
/// its structural invariants did not hold.
struct PolicyDiagnostics {
  std::uint64_t eliminations = 0;
  std::uint64_t empty_bid_candidates = 0;
  std::uint64_t empty_ask_candidates = 0;
  std::uint64_t crossed_rounds = 0;
  std::uint64_t nesting_violations = 0;
  std::uint64_t monotonicity_violations = 0;
  std::uint64_t quote_changes = 0;

  std::uint64_t degenerate_rounds() const noexcept {
    return empty_bid_candidates + empty_ask_candidates + crossed_rounds;
  }
  std::uint64_t hard_violations() const noexcept {
    return nesting_violations + monotonicity_violations;
  }
};

/// Replayable summary of a policy's state at a given round.
struct PolicySnapshot {
  std::uint64_t round = 0;
  GridQuote quote{0, 1};
  double mu_low = 0.0;
  double mu_up = 1.0;
  double gamma_bid = 0.0;
  double gamma_ask = 0.0;
  std::uint64_t work = 0;
  std::string phase;       // ETP only
  double epsilon = 0.0;    // ETP only
};

/// Read-only view used by evaluators that hold the ground truth.
struct EnvelopeView {
  const ConfidenceEnvelopes* envelopes;
  IndexRange checked;  // grid points whose envelopes were last tightened
};

/// The act -> observe -> update protocol shared by every strategy.
class Policy {
 public:
  explicit Policy(PriceGrid grid) : grid_(grid) {}
  virtual ~Policy() = default;
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  virtual std::string_view name() const noexcept = 0;

  /// Quote for the upcoming round.
  virtual GridQuote act() const = 0;
  /// Feedback produced by the quote returned by act().
  virtual void update(const Observation& obs) = 0;

  /// update() followed by act().
  GridQuote step(const Observation& obs) {
    update(obs);
    return act();
  }

  virtual std::uint64_t work() const noexcept { return 0; }
  virtual PolicySnapshot snapshot() const;
  virtual std::optional<EnvelopeView> envelopes() const { return std::nullopt; }
  /// True when the last update() ran the elimination/tightening step.
  virtual bool envelopes_changed() const noexcept { return false; }

  const PolicyDiagnostics& diagnostics() const noexcept { return diagnostics_; }
  const PriceGrid& grid() const noexcept { return grid_; }
  std::uint64_t round() const noexcept { return round_; }

 protected:
  PriceGrid grid_;
  PolicyDiagnostics diagnostics_;
  std::uint64_t round_ = 0;  // rounds absorbed so far
};

// Successive elimination ----------------------------------------------------------

struct EliminationResult {
  std::optional<std::size_t> bid;  // smallest x with Theta_bid(x) >= Gamma*_bid
  std::optional<std::size_t> ask;  // largest x with Theta_ask(x) >= Gamma*_ask
  double gamma_bid = 0.0;
  double gamma_ask = 0.0;
};

/// One optimistic/pessimistic elimination pass over the active range. Bid and
/// ask are maximized separately, so the cost is linear in the range size.
EliminationResult eliminate(const ConfidenceEnvelopes& env, const PriceGrid& grid,
                            IndexRange active);

enum class EliminationSchedule { EveryRound, PowersOfTwo };

struct OpsrOptions {
  double delta = 0.05;
  MeanRegime regime = MeanRegime::Iid;
  double gamma = 0.0;      // AR widths only
  std::size_t order = 1;   // AR widths only
  double clip_offset = kDefaultClipOffset;
  EstimatorMode estimator = EstimatorMode::Eager;
  EliminationSchedule schedule = EliminationSchedule::EveryRound;
  double width_scale = 1.0;  // fault injection hook; 1 is the real algorithm
};

/// Optimistic/pessimistic successive rejects. With a lazy estimator and a
/// powers-of-two schedule this is the doubling-trick variant.
class Opsr final : public Policy {
 public:
  Opsr(std::uint64_t horizon, OpsrOptions options);

  static OpsrOptions lazy_options(OpsrOptions base);

  std::string_view name() const noexcept override;
  GridQuote act() const override { return active_quote(); }
  void update(const Observation& obs) override;
  std::uint64_t work() const noexcept override { return estimator_.work() + own_work_; }
  PolicySnapshot snapshot() const override;
  std::optional<EnvelopeView> envelopes() const override;
  bool envelopes_changed() const noexcept override { return tightened_; }

  IndexRange active() const noexcept { return active_; }
  GridQuote active_quote() const noexcept { return {active_.lo, active_.hi}; }
  const ConfidenceEnvelopes& confidence() const noexcept { return envelopes_; }
  const CensoredCdfEstimator& estimator() const noexcept { return estimator_; }
  const WidthSchedule& widths() const noexcept { return widths_; }
  double mean_estimate() const noexcept { return mu_hat_; }
  double gamma_star_bid() const noexcept { return gamma_star_bid_; }
  double gamma_star_ask() const noexcept { return gamma_star_ask_; }
  const OpsrOptions& options() const noexcept { return options_; }

 private:
  OpsrOptions options_;
  WidthSchedule widths_;
  CensoredCdfEstimator estimator_;
  ConfidenceEnvelopes envelopes_;
  IndexRange active_;
  IndexRange tightened_range_;
  double price_sum_ = 0.0;
  double mu_hat_ = 0.0;
  double gamma_star_bid_ = 0.0;
  double gamma_star_ask_ = 0.0;
  bool has_gamma_star_ = false;
  bool tightened_ = false;
  std::uint64_t own_work_ = 0;
};

// Explore then perturb --------------------------------------------------------------

/// ceil(ln(3T)^(1/3) T^(2/3)), capped at T.
std::uint64_t default_exploration_rounds(std::uint64_t horizon);

struct EtpOptions {
  std::optional<std::uint64_t> kappa;   // default_exploration_rounds when unset
  std::optional<double> epsilon;        // sampled from Unif(0, T^{-1/2}) when unset
  double clip_offset = kDefaultClipOffset;
};

class Etp final : public Policy {
 public:
  enum class Phase { Explore, Commit };

  Etp(std::uint64_t horizon, EtpOptions options, Rng noise);

  std::string_view name() const noexcept override { return "etp"; }
  GridQuote act() const override { return quote_; }
  void update(const Observation& obs) override;
  std::uint64_t work() const noexcept override { return work_; }
  PolicySnapshot snapshot() const override;

  Phase phase() const noexcept { return phase_; }
  std::uint64_t kappa() const noexcept { return kappa_; }
  /// Perturbation; only meaningful once phase() == Commit.
  double epsilon() const noexcept { return epsilon_; }
  double post_mean() const noexcept { return post_mean_; }
  std::span<const double> frozen_cdf() const noexcept { return frozen_cdf_; }

 private:
  void commit();

  std::uint64_t horizon_;
  std::uint64_t kappa_;
  EtpOptions options_;
  Rng noise_;
  CensoredCdfEstimator estimator_;
  Phase phase_ = Phase::Explore;
  std::vector<double> frozen_cdf_;
  double epsilon_ = 0.0;
  double post_mean_ = 0.0;
  GridQuote quote_;
  std::uint64_t work_ = 0;
};

// Baselines ---------------------------------------------------------------------------

class FixedQuotePolicy final : public Policy {
 public:
  FixedQuotePolicy(PriceGrid grid, GridQuote quote, std::string label = "fixed");

  std::string_view name() const noexcept override { return label_; }
  GridQuote act() const override { return quote_; }
  void update(const Observation&) override { ++round_; }

 private:
  GridQuote quote_;
  std::string label_;
};

/// Separable grid maximizer of F(b)(mu - b) + S(a)(a - mu). Ties go to the
/// lowest bid index and the highest ask index.
GridQuote oracle_quote(const std::function<double(double)>& cdf, double mu, const PriceGrid& grid);

/// Index maximizing values[i] over [lo, hi]; lowest index wins ties.
std::size_t argmax_lowest(std::span<const double> values, IndexRange range);
/// Index maximizing values[i] over [lo, hi]; highest index wins ties.
std::size_t argmax_highest(std::span<const double> values, IndexRange range);

}  // namespace mmlab
