#include "mmlab/record_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mmlab {

using nlohmann::json;

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

json to_json(const PolicySnapshot& s) {
  json j = {{"round", s.round},         {"bid", s.quote.bid},
            {"ask", s.quote.ask},       {"mu_low", s.mu_low},
            {"mu_up", s.mu_up},         {"gamma_bid", number_or_null(s.gamma_bid)},
            {"gamma_ask", number_or_null(s.gamma_ask)}, {"work", s.work}};
  if (!s.phase.empty()) {
    j["phase"] = s.phase;
    j["epsilon"] = s.epsilon;
  }
  return j;
}

json to_json(const PolicyDiagnostics& d) {
  return {{"eliminations", d.eliminations},
          {"empty_bid_candidates", d.empty_bid_candidates},
          {"empty_ask_candidates", d.empty_ask_candidates},
          {"crossed_rounds", d.crossed_rounds},
          {"nesting_violations", d.nesting_violations},
          {"monotonicity_violations", d.monotonicity_violations},
          {"quote_changes", d.quote_changes}};
}

json to_json(const RunRecord& r) {
  json trace;
  trace["bid"] = r.trace.bid;
  trace["ask"] = r.trace.ask;
  trace["price"] = r.trace.price;
  json kinds = json::array();
  for (TradeKind k : r.trace.kind) kinds.push_back(static_cast<int>(k));
  trace["kind"] = std::move(kinds);
  trace["reward"] = r.trace.reward;
  json revealed = json::array();
  for (double v : r.trace.revealed) revealed.push_back(number_or_null(v));
  trace["revealed"] = std::move(revealed);

  json checkpoints = json::array();
  for (const auto& c : r.checkpoints) checkpoints.push_back(to_json(c));

  json truth = {{"envelopes_checked", r.truth.envelopes_checked},
                {"envelope_failed", r.truth.envelope_failed},
                {"first_envelope_failure", r.truth.first_envelope_failure},
                {"optimal_arm_exits", r.truth.optimal_arm_exits},
                {"exits_without_failure", r.truth.exits_without_failure},
                {"first_exit", r.truth.first_exit}};
  truth["grid_optimum"] = r.truth.grid_optimum
                              ? json{r.truth.grid_optimum->bid, r.truth.grid_optimum->ask}
                              : json(nullptr);

  json cdf = json::array();
  for (const auto& v : r.ground_truth.cdf) cdf.push_back({v.x, v.f});
  json ground = {{"cdf", std::move(cdf)},
                 {"mu", r.ground_truth.mu ? json(*r.ground_truth.mu) : json(nullptr)},
                 {"process", r.ground_truth.process},
                 {"valuations", r.ground_truth.valuations}};

  return {{"policy", r.policy},
          {"horizon", r.horizon},
          {"base_seed", r.seeds.base_seed},
          {"seed_index", r.seeds.seed_index},
          {"config_digest", r.config_digest},
          {"grid_resolution", r.grid_resolution},
          {"rounds", r.rounds},
          {"error", r.error},
          {"trace", std::move(trace)},
          {"checkpoints", std::move(checkpoints)},
          {"diagnostics", to_json(r.diagnostics)},
          {"work", r.work},
          {"truth", std::move(truth)},
          {"ground_truth", std::move(ground)}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.policy = j.at("policy").get<std::string>();
  r.horizon = j.at("horizon").get<std::uint64_t>();
  r.seeds.base_seed = j.at("base_seed").get<std::uint64_t>();
  r.seeds.seed_index = j.at("seed_index").get<std::uint64_t>();
  r.config_digest = j.at("config_digest").get<std::string>();
  r.grid_resolution = j.at("grid_resolution").get<std::size_t>();
  r.rounds = j.at("rounds").get<std::uint64_t>();
  r.error = j.at("error").get<std::string>();

  const json& t = j.at("trace");
  r.trace.bid = t.at("bid").get<std::vector<std::uint32_t>>();
  r.trace.ask = t.at("ask").get<std::vector<std::uint32_t>>();
  r.trace.price = t.at("price").get<std::vector<double>>();
  for (const auto& k : t.at("kind")) {
    const int code = k.get<int>();
    if (code < 0 || code > 2) throw std::invalid_argument("bad trade kind code in record");
    r.trace.kind.push_back(static_cast<TradeKind>(code));
  }
  r.trace.reward = t.at("reward").get<std::vector<double>>();
  for (const auto& v : t.at("revealed")) r.trace.revealed.push_back(number_or_nan(v));
  const std::size_t n = r.trace.price.size();
  if (r.trace.bid.size() != n || r.trace.ask.size() != n || r.trace.kind.size() != n ||
      r.trace.reward.size() != n || r.trace.revealed.size() != n || n != r.rounds) {
    throw std::invalid_argument("record trace columns have inconsistent lengths");
  }

  for (const auto& c : j.at("checkpoints")) {
    PolicySnapshot s;
    s.round = c.at("round").get<std::uint64_t>();
    s.quote = {c.at("bid").get<std::size_t>(), c.at("ask").get<std::size_t>()};
    s.mu_low = c.at("mu_low").get<double>();
    s.mu_up = c.at("mu_up").get<double>();
    s.gamma_bid = number_or_nan(c.at("gamma_bid"));
    s.gamma_ask = number_or_nan(c.at("gamma_ask"));
    s.work = c.at("work").get<std::uint64_t>();
    if (c.contains("phase")) {
      s.phase = c.at("phase").get<std::string>();
      s.epsilon = c.at("epsilon").get<double>();
    }
    r.checkpoints.push_back(std::move(s));
  }

  const json& d = j.at("diagnostics");
  r.diagnostics.eliminations = d.at("eliminations").get<std::uint64_t>();
  r.diagnostics.empty_bid_candidates = d.at("empty_bid_candidates").get<std::uint64_t>();
  r.diagnostics.empty_ask_candidates = d.at("empty_ask_candidates").get<std::uint64_t>();
  r.diagnostics.crossed_rounds = d.at("crossed_rounds").get<std::uint64_t>();
  r.diagnostics.nesting_violations = d.at("nesting_violations").get<std::uint64_t>();
  r.diagnostics.monotonicity_violations = d.at("monotonicity_violations").get<std::uint64_t>();
  r.diagnostics.quote_changes = d.at("quote_changes").get<std::uint64_t>();
  r.work = j.at("work").get<std::uint64_t>();

  const json& tr = j.at("truth");
  r.truth.envelopes_checked = tr.at("envelopes_checked").get<bool>();
  r.truth.envelope_failed = tr.at("envelope_failed").get<bool>();
  r.truth.first_envelope_failure = tr.at("first_envelope_failure").get<std::uint64_t>();
  r.truth.optimal_arm_exits = tr.at("optimal_arm_exits").get<std::uint64_t>();
  r.truth.exits_without_failure = tr.at("exits_without_failure").get<std::uint64_t>();
  r.truth.first_exit = tr.at("first_exit").get<std::uint64_t>();
  if (!tr.at("grid_optimum").is_null()) {
    const auto& g = tr.at("grid_optimum");
    r.truth.grid_optimum = GridQuote{g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>()};
  }

  const json& g = j.at("ground_truth");
  for (const auto& v : g.at("cdf")) {
    r.ground_truth.cdf.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  }
  if (!g.at("mu").is_null()) r.ground_truth.mu = g.at("mu").get<double>();
  r.ground_truth.process = g.at("process").get<std::string>();
  r.ground_truth.valuations = g.at("valuations").get<std::vector<double>>();
  return r;
}

json to_json(const RegretReport& r, bool with_series) {
  json j = {{"rounds", r.rounds},
            {"partial", r.partial},
            {"regret", r.regret},
            {"grid_regret", r.grid_regret},
            {"pseudo_regret", number_or_null(r.pseudo_regret)},
            {"grid_pseudo_regret", number_or_null(r.grid_pseudo_regret)},
            {"gap", number_or_null(r.gap)},
            {"realized_regret", r.realized_regret},
            {"hindsight_bid", r.hindsight.bid.price},
            {"hindsight_ask", r.hindsight.ask.price},
            {"hindsight_pair", {r.hindsight_pair.bid, r.hindsight_pair.ask}}};
  if (with_series) j["cumulative_regret"] = r.cumulative_regret;
  return j;
}

json to_json(const ConcentrationReport& r) {
  return {{"bound", to_string(r.bound)},
          {"process", r.process},
          {"hypothesis", to_string(r.hypothesis)},
          {"hypothesis_note", r.hypothesis_note},
          {"paths", r.violations.trials},
          {"violations", r.violations.hits},
          {"frequency", r.violations.frequency},
          {"wilson_low", r.violations.wilson_low},
          {"wilson_high", r.violations.wilson_high},
          {"nominal", r.nominal},
          {"threshold", r.threshold},
          {"slack", r.threshold - r.violations.frequency},
          {"worst_ratio", r.worst_ratio},
          {"pass", r.pass}};
}

void write_record(const std::filesystem::path& path, const RunRecord& record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write record " + path.string());
  out << to_json(record).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing record " + path.string());
}

RunRecord read_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read record " + path.string());
  return record_from_json(json::parse(in));
}

}  // namespace mmlab
