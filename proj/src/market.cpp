#include "mmlab/market.hpp"

#include <cmath>
#include <string>

namespace mmlab {

void require_unit_interval(double x, std::string_view what) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1], got " +
                                std::to_string(x));
  }
}

Quote::Quote(double bid, double ask) : bid_(bid), ask_(ask) {
  require_unit_interval(bid, "bid");
  require_unit_interval(ask, "ask");
  if (!(bid < ask)) {
    throw std::invalid_argument("quote requires bid < ask, got bid=" + std::to_string(bid) +
                                " ask=" + std::to_string(ask));
  }
}

std::string_view to_string(TradeKind kind) noexcept {
  switch (kind) {
    case TradeKind::MakerBuys:
      return "maker_buys";
    case TradeKind::NoTrade:
      return "no_trade";
    case TradeKind::MakerSells:
      return "maker_sells";
  }
  return "unknown";
}

TradeOutcome settle(const Quote& quote, double valuation, double market_price) {
  require_unit_interval(valuation, "valuation");
  require_unit_interval(market_price, "market price");
  TradeOutcome out{TradeKind::NoTrade, 0.0};
  if (valuation <= quote.bid()) {
    out = {TradeKind::MakerBuys, market_price - quote.bid()};
  } else if (valuation >= quote.ask()) {
    out = {TradeKind::MakerSells, quote.ask() - market_price};
  }
  if (!(out.reward >= -1.0 && out.reward <= 1.0)) {
    throw std::logic_error("reward outside [-1, 1]");
  }
  return out;
}

Observation observe(const Quote& quote, double valuation, double market_price) {
  require_unit_interval(valuation, "valuation");
  require_unit_interval(market_price, "market price");
  if (valuation <= quote.bid()) return {market_price, TradedAtBid{}};
  if (valuation >= quote.ask()) return {market_price, TradedAtAsk{}};
  return {market_price, Revealed{valuation}};
}

double clipped_valuation(const Observation& obs, const Quote& quote, double offset) {
  if (!(offset > 0.0)) throw std::invalid_argument("clip offset must be positive");
  if (const auto* r = std::get_if<Revealed>(&obs.valuation_info)) return r->valuation;
  if (std::holds_alternative<TradedAtBid>(obs.valuation_info)) return quote.bid();
  return quote.ask() + offset;
}

int clipped_indicator(const Observation& obs, const Quote& quote, double x, double offset) {
  require_unit_interval(x, "x");
  return clipped_valuation(obs, quote, offset) <= x ? 1 : 0;
}

double expected_objective(double bid, double ask, const std::function<double(double)>& cdf,
                          double mu) {
  const Quote q(bid, ask);
  require_unit_interval(mu, "mu");
  return cdf(q.bid()) * (mu - q.bid()) + (1.0 - cdf(q.ask())) * (q.ask() - mu);
}

}  // namespace mmlab
