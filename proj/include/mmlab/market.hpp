#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <variant>

namespace mmlab {

/// Default offset added to the ask when a valuation is censored above it.
inline constexpr double kDefaultClipOffset = 0.01;

/// A bid/ask pair on the unit interval. Always satisfies 0 <= bid < ask <= 1.
class Quote {
 public:
  Quote(double bid, double ask);

  double bid() const noexcept { return bid_; }
  double ask() const noexcept { return ask_; }

  friend bool operator==(const Quote&, const Quote&) = default;

 private:
  double bid_;
  double ask_;
};

enum class TradeKind : std::uint8_t { MakerBuys, NoTrade, MakerSells };

std::string_view to_string(TradeKind kind) noexcept;

struct TradeOutcome {
  TradeKind kind;
  double reward;
};

// Feedback variants. Censored trades carry no valuation on purpose.
struct Revealed {
  double valuation;
};
struct TradedAtBid {};
struct TradedAtAsk {};

using ValuationInfo = std::variant<Revealed, TradedAtBid, TradedAtAsk>;

struct Observation {
  double market_price;
  ValuationInfo valuation_info;

  bool revealed() const noexcept { return std::holds_alternative<Revealed>(valuation_info); }
};

/// Reward and trade side of one round: 1(v <= b)(m - b) + 1(a <= v)(a - m).
TradeOutcome settle(const Quote& quote, double valuation, double market_price);

/// What the maker sees after the round. The valuation is revealed only when it
/// falls strictly inside the spread.
Observation observe(const Quote& quote, double valuation, double market_price);

/// Observable surrogate of the valuation: bid when the maker bought, the
/// valuation itself when revealed, and ask + offset when the maker sold.
double clipped_valuation(const Observation& obs, const Quote& quote,
                         double offset = kDefaultClipOffset);

/// 1(clipped valuation <= x).
int clipped_indicator(const Observation& obs, const Quote& quote, double x,
                      double offset = kDefaultClipOffset);

/// F(b)(mu - b) + S(a)(a - mu) for an arbitrary CDF.
double expected_objective(double bid, double ask, const std::function<double(double)>& cdf,
                          double mu);

/// Throws std::invalid_argument unless x lies in [0, 1].
void require_unit_interval(double x, std::string_view what);

}  // namespace mmlab
