#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/environments.hpp"
#include "mmlab/market.hpp"
#include "mmlab/policies.hpp"
#include "mmlab/rng.hpp"

namespace mmlab {

struct Environment {
  ValuationModel valuations;
  PriceProcess prices;
  std::optional<double> mu;  // true long-run mean price, when the process has one
};

Environment make_environment(ValuationModel valuations, PriceProcess prices);

/// Identifies one cell of an experiment. Environment streams depend only on
/// these coordinates, so every policy in a cell faces the same valuations
/// and prices.
struct RunSeeds {
  std::uint64_t base_seed = 0;
  std::uint64_t seed_index = 0;
};

Rng environment_stream(const RunSeeds& seeds, std::uint64_t horizon, StreamRole role);
Rng policy_stream(const RunSeeds& seeds, std::uint64_t horizon, std::uint64_t policy_index);

struct CheckpointCadence {
  enum class Kind { PowersOfTwo, Every, None };
  Kind kind = Kind::PowersOfTwo;
  std::uint64_t every = 0;

  bool due(std::uint64_t t) const noexcept;
};

/// Struct-of-arrays trace of what the policy saw and did. Revealed valuations
/// are NaN on trade rounds.
struct RoundTrace {
  std::vector<std::uint32_t> bid;  // grid indices
  std::vector<std::uint32_t> ask;
  std::vector<double> price;
  std::vector<TradeKind> kind;
  std::vector<double> reward;
  std::vector<double> revealed;

  std::size_t size() const noexcept { return price.size(); }
  void reserve(std::size_t n);
};

/// Checks that need the true F and mu; filled by the simulator, never visible
/// to the policy.
struct TruthChecks {
  bool envelopes_checked = false;
  bool envelope_failed = false;
  std::uint64_t first_envelope_failure = 0;
  std::optional<GridQuote> grid_optimum;
  std::uint64_t optimal_arm_exits = 0;
  std::uint64_t exits_without_failure = 0;  // exits at rounds before any envelope failure
  std::uint64_t first_exit = 0;
};

struct GroundTruth {
  std::vector<MonotonePolyline::Vertex> cdf;
  std::optional<double> mu;
  std::string process;
  std::vector<double> valuations;
};

struct RunRecord {
  std::string policy;
  std::uint64_t horizon = 0;
  RunSeeds seeds;
  std::string config_digest;
  std::size_t grid_resolution = 1;
  std::uint64_t rounds = 0;  // rounds completed
  std::string error;         // why the run stopped early, if it did

  RoundTrace trace;
  std::vector<PolicySnapshot> checkpoints;
  PolicyDiagnostics diagnostics;
  std::uint64_t work = 0;
  TruthChecks truth;

  GroundTruth ground_truth;

  bool partial() const noexcept { return rounds < horizon; }
  PriceGrid grid() const { return PriceGrid(grid_resolution); }
};

struct SimulationOptions {
  CheckpointCadence checkpoints;
  bool truth_checks = true;
  /// Replaces the drawn valuation before settlement; receives the quote played.
  std::function<double(std::uint64_t t, const Quote& quote, double valuation)> valuation_transform;
  /// Called after each policy update.
  std::function<void(std::uint64_t t, const Quote& quote, const Observation& obs,
                     const Policy& policy)>
      observer;
};

/// Runs act -> environment -> observe -> update for `horizon` rounds. An
/// environment error (e.g. an exhausted price file) ends the run early and is
/// stored in RunRecord::error.
RunRecord simulate(Policy& policy, const Environment& env, const RunSeeds& seeds,
                   std::uint64_t horizon, const SimulationOptions& options = {});

}  // namespace mmlab
