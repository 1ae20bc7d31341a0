#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmlab/evaluation.hpp"
#include "mmlab/policies.hpp"
#include "mmlab/simulation.hpp"

namespace mmlab {

struct PolicyConfig {
  std::string name;   // opsr, lazy_opsr, etp, oracle, fixed
  std::string label;  // defaults to name
  double delta = 0.05;
  std::optional<MeanRegime> regime;  // derived from the price process when unset
  std::optional<double> gamma;
  std::optional<std::size_t> order;
  std::optional<std::uint64_t> kappa;
  std::optional<double> epsilon;
  double clip_offset = kDefaultClipOffset;
  double bid = 0.0;  // fixed only
  double ask = 1.0;
};

struct ExperimentConfig {
  std::vector<std::uint64_t> horizons;
  std::vector<PolicyConfig> policies;
  ValuationSpec valuation = UniformInterval{};
  PriceSpec prices = IidPrices{ValuationModel(UniformInterval{})};
  std::uint64_t base_seed = 0;
  std::uint64_t seed_count = 1;
  std::filesystem::path output_dir = "mmlab_out";
  CheckpointCadence checkpoints;
  bool write_records = true;

  double validation_delta = 0.05;
  std::optional<std::uint64_t> validation_paths;
  std::optional<std::uint64_t> validation_horizon;

  nlohmann::json canonical;  // normalized input, without output_dir
  std::string digest;
};

/// Values given on the command line or through MMLAB_* variables.
struct ConfigOverrides {
  std::optional<std::uint64_t> seeds;
  std::optional<std::uint64_t> base_seed;
  std::optional<std::filesystem::path> out;
};

/// Parses and validates a configuration. Unknown keys are errors. Relative
/// price-file paths resolve against `base_dir`.
ExperimentConfig parse_config(nlohmann::json j, const std::filesystem::path& base_dir = {},
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ConfigOverrides& overrides = {});

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_digest(const nlohmann::json& canonical);

Environment build_environment(const ExperimentConfig& config);

/// `width_scale` below 1 shrinks the confidence widths (fault injection only).
std::unique_ptr<Policy> make_policy(const PolicyConfig& pc, std::uint64_t horizon,
                                    const Environment& env, Rng noise, double width_scale = 1.0);

struct RunOptions {
  std::size_t jobs = 1;  // 0 = hardware concurrency
  bool timing = false;
  bool write_records = true;
};

enum class CellStatus { Ok, Partial, Failed };

std::string_view to_string(CellStatus s) noexcept;

struct CellResult {
  std::size_t policy_index = 0;
  std::string policy;
  std::uint64_t horizon = 0;
  std::uint64_t seed = 0;
  CellStatus status = CellStatus::Failed;
  std::string message;
  RegretReport report;
  bool envelope_failed = false;
  double ops_per_step = 0.0;
  std::optional<double> wall_time_ms;
  PolicyDiagnostics diagnostics;
};

struct ExperimentResult {
  std::string digest;
  std::vector<CellResult> cells;  // sorted by (policy, horizon, seed)
  bool all_ok() const noexcept;
};

/// Runs every (policy, horizon, seed) cell on a work queue. Output is
/// identical for any number of jobs.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

void write_aggregate_csv(const std::filesystem::path& path, const ExperimentResult& result);
void write_summary_csv(const std::filesystem::path& path, const ExperimentResult& result);
void write_fits_csv(const std::filesystem::path& path, const ExperimentResult& result);

struct PlotOptions {
  std::string metric = "regret";
  std::string title = "regret vs horizon";
};

/// Reads an aggregate CSV and writes a self-contained log-log SVG plus a
/// plain-text file with every plotted point.
void plot_regret(const std::filesystem::path& aggregate_csv, const std::filesystem::path& svg,
                 const std::filesystem::path& data, const PlotOptions& options = {});

struct ValidationOptions {
  std::size_t jobs = 1;
  double width_scale = 1.0;  // < 1 injects the collapsed-envelope fault
};

struct ValidationResult {
  nlohmann::json report;
  bool pass = false;
};

ValidationResult validate_concentration(const ExperimentConfig& config,
                                        const ValidationOptions& options = {});
ValidationResult validate_invariants(const ExperimentConfig& config,
                                     const ValidationOptions& options = {});

/// Runs `policy` twice: once as drawn, once with every traded valuation moved
/// to another point on the same side of the quote. True when both quote
/// trajectories agree.
bool censorship_pair_agrees(const std::function<std::unique_ptr<Policy>()>& make,
                            const Environment& env, const RunSeeds& seeds,
                            std::uint64_t horizon);

/// Parallel for over [0, n) with a shared atomic counter.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace mmlab
