// mmlab: run, validate and plot market-making experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmlab/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seeds = 0;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment configuration (JSON)")
      ->envname("MMLAB_CONFIG")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory (overrides output_dir)")->envname("MMLAB_OUT");
  app->add_option("--seeds", c.seeds, "number of seeds (overrides seeds.count)")
      ->envname("MMLAB_SEEDS")
      ->check(CLI::PositiveNumber);
  app->add_option("--base-seed", c.base_seed, "base seed (overrides seeds.base)")
      ->envname("MMLAB_BASE_SEED");
  app->add_option("--jobs", c.jobs, "worker threads, 0 = all cores")->envname("MMLAB_JOBS");
}

mmlab::ExperimentConfig load(const CLI::App* app, const Common& c) {
  mmlab::ConfigOverrides o;
  if (app->count("--seeds") > 0 || std::getenv("MMLAB_SEEDS")) o.seeds = c.seeds;
  if (app->count("--base-seed") > 0 || std::getenv("MMLAB_BASE_SEED")) o.base_seed = c.base_seed;
  if (!c.out.empty()) o.out = c.out;
  return mmlab::load_config(c.config, o);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run(const mmlab::ExperimentConfig& config, const Common& c, bool timing, bool records) {
  mmlab::RunOptions opts;
  opts.jobs = c.jobs;
  opts.timing = timing;
  opts.write_records = records;
  const mmlab::ExperimentResult result = mmlab::run_experiment(config, opts);
  const fs::path out = config.output_dir;
  mmlab::write_aggregate_csv(out / "aggregate.csv", result);
  mmlab::write_summary_csv(out / "summary.csv", result);
  mmlab::write_fits_csv(out / "fits.csv", result);

  std::size_t failed = 0;
  for (const auto& cell : result.cells) {
    if (cell.status == mmlab::CellStatus::Ok) continue;
    ++failed;
    std::cerr << "cell " << cell.policy << " T=" << cell.horizon << " seed=" << cell.seed << ": "
              << mmlab::to_string(cell.status) << ": " << cell.message << '\n';
  }
  std::cout << result.cells.size() << " cells, " << failed << " not ok, digest " << result.digest
            << ", written to " << out.string() << '\n';
  return failed == 0 ? 0 : 2;
}

int validate(const mmlab::ValidationResult& r, const fs::path& out, const std::string& name) {
  fs::create_directories(out);
  const fs::path path = out / ("validate_" + name + ".json");
  std::ofstream(path) << r.report.dump(2) << '\n';
  for (const auto& claim : r.report.at("claims")) {
    std::cout << (claim.at("pass").get<bool>() ? "pass " : "FAIL ");
    if (claim.contains("policy")) std::cout << claim.at("policy").get<std::string>() << ' ';
    std::cout << claim.at("claim").get<std::string>();
    if (claim.contains("frequency")) {
      std::cout << " frequency=" << claim.at("frequency").get<double>()
                << " threshold=" << claim.at("threshold").get<double>();
    } else {
      std::cout << " violations=" << claim.at("violations").get<std::uint64_t>() << '/'
                << claim.at("runs").get<std::uint64_t>();
    }
    if (claim.contains("hypothesis")) {
      std::cout << " (" << claim.at("hypothesis").get<std::string>() << ')';
    }
    std::cout << '\n';
  }
  if (r.report.contains("error")) std::cerr << r.report.at("error").get<std::string>() << '\n';
  std::cout << "report: " << path.string() << '\n';
  return r.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmlab: online market making under action-dependent feedback"};
  app.require_subcommand(1);

  Common sim_opts;
  bool sim_timing = false, sim_no_records = false;
  auto* sim = app.add_subcommand("simulate", "run one configuration: records and aggregate tables");
  add_common(sim, sim_opts);
  sim->add_flag("--timing", sim_timing, "fill the wall_time_ms column (not reproducible)");
  sim->add_flag("--no-records", sim_no_records, "skip per-run record files");

  Common sweep_opts;
  bool sweep_timing = false, sweep_no_records = false;
  std::string sweep_horizons, sweep_policies;
  auto* sweep = app.add_subcommand("sweep", "run a horizon x policy matrix");
  add_common(sweep, sweep_opts);
  sweep->add_option("--horizons", sweep_horizons, "comma-separated horizons replacing the config's");
  sweep->add_option("--policies", sweep_policies, "comma-separated policy labels to keep");
  sweep->add_flag("--timing", sweep_timing, "fill the wall_time_ms column (not reproducible)");
  sweep->add_flag("--no-records", sweep_no_records, "skip per-run record files");

  auto* val = app.add_subcommand("validate", "check probabilistic claims and invariants");
  val->require_subcommand(1);
  Common conc_opts, inv_opts;
  auto* conc = val->add_subcommand("concentration", "Monte Carlo frequency of bound violations");
  add_common(conc, conc_opts);
  std::string fault;
  auto* inv = val->add_subcommand("invariants", "structural invariants over the run matrix");
  add_common(inv, inv_opts);
  inv->add_option("--inject-fault", fault, "deliberately break the algorithm")
      ->check(CLI::IsMember({"collapse-envelopes"}));

  std::string plot_input, plot_out, plot_metric = "regret", plot_title = "regret vs horizon";
  auto* plot = app.add_subcommand("plot", "log-log regret curves from an aggregate CSV");
  plot->add_option("--input", plot_input, "aggregate CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output directory (default: next to the input)")
      ->envname("MMLAB_OUT");
  plot->add_option("--metric", plot_metric, "column to plot")
      ->check(CLI::IsMember({"regret", "pseudo_regret", "grid_pseudo_regret", "ops_per_step_mean"}));
  plot->add_option("--title", plot_title, "plot title");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return run(load(sim, sim_opts), sim_opts, sim_timing, !sim_no_records);
    }
    if (sweep->parsed()) {
      mmlab::ConfigOverrides o;
      mmlab::ExperimentConfig base = load(sweep, sweep_opts);
      nlohmann::json j = base.canonical;
      if (!sweep_horizons.empty()) {
        j["horizons"] = nlohmann::json::array();
        for (const auto& h : split(sweep_horizons)) j["horizons"].push_back(std::stoull(h));
      }
      if (!sweep_policies.empty()) {
        const auto keep = split(sweep_policies);
        const std::set<std::string> wanted(keep.begin(), keep.end());
        nlohmann::json kept = nlohmann::json::array();
        for (const auto& p : j.at("policies")) {
          const std::string label = p.value("label", p.at("name").get<std::string>());
          if (wanted.contains(label)) kept.push_back(p);
        }
        if (kept.empty()) throw std::invalid_argument("--policies matched no policy label");
        j["policies"] = kept;
      }
      if (j.contains("prices")) j["prices"].erase("content_digest");
      j["output_dir"] = base.output_dir.string();
      const auto config =
          mmlab::parse_config(j, fs::path(sweep_opts.config).parent_path(), o);
      return run(config, sweep_opts, sweep_timing, !sweep_no_records);
    }
    if (conc->parsed()) {
      const auto config = load(conc, conc_opts);
      return validate(mmlab::validate_concentration(config, {conc_opts.jobs, 1.0}),
                      config.output_dir, "concentration");
    }
    if (inv->parsed()) {
      const auto config = load(inv, inv_opts);
      mmlab::ValidationOptions opts{inv_opts.jobs, 1.0};
      if (fault == "collapse-envelopes") opts.width_scale = 0.0;
      return validate(mmlab::validate_invariants(config, opts), config.output_dir, "invariants");
    }
    if (plot->parsed()) {
      const fs::path input = plot_input;
      const fs::path out = plot_out.empty() ? input.parent_path() : fs::path(plot_out);
      const std::string stem = "plot_" + plot_metric;
      mmlab::plot_regret(input, out / (stem + ".svg"), out / (stem + ".dat"),
                         {plot_metric, plot_title});
      std::cout << "wrote " << (out / (stem + ".svg")).string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
