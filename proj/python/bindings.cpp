// Thin bindings. Structured values cross the boundary as JSON strings; the
// Python package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mmlab/harness.hpp"
#include "mmlab/record_io.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

mmlab::ExperimentConfig config_from(const std::string& text, const std::string& base_dir) {
  return mmlab::parse_config(json::parse(text), base_dir);
}

std::string run_cells(const std::string& config_text, const std::string& base_dir,
                      std::size_t jobs) {
  const auto config = config_from(config_text, base_dir);
  mmlab::RunOptions opts;
  opts.jobs = jobs;
  opts.write_records = false;
  mmlab::ExperimentResult result;
  {
    py::gil_scoped_release release;
    result = mmlab::run_experiment(config, opts);
  }
  json rows = json::array();
  for (const auto& c : result.cells) {
    json row = {{"policy", c.policy},
                {"horizon", c.horizon},
                {"seed", c.seed},
                {"status", mmlab::to_string(c.status)},
                {"message", c.message},
                {"envelope_failed", c.envelope_failed},
                {"ops_per_step_mean", c.ops_per_step}};
    if (c.status != mmlab::CellStatus::Failed) row["report"] = mmlab::to_json(c.report, false);
    rows.push_back(std::move(row));
  }
  return json{{"config_digest", result.digest}, {"cells", std::move(rows)}}.dump();
}

std::string simulate_one(const std::string& config_text, const std::string& base_dir,
                         std::size_t policy_index, std::uint64_t horizon, std::uint64_t seed) {
  const auto config = config_from(config_text, base_dir);
  if (policy_index >= config.policies.size()) throw py::index_error("policy index out of range");
  const mmlab::Environment env = mmlab::build_environment(config);
  const mmlab::RunSeeds seeds{config.base_seed, seed};
  auto policy = mmlab::make_policy(config.policies[policy_index], horizon, env,
                                   mmlab::policy_stream(seeds, horizon, policy_index));
  mmlab::SimulationOptions so;
  so.checkpoints = config.checkpoints;
  mmlab::RunRecord rec;
  {
    py::gil_scoped_release release;
    rec = mmlab::simulate(*policy, env, seeds, horizon, so);
  }
  rec.policy = config.policies[policy_index].label;
  rec.config_digest = config.digest;
  return mmlab::to_json(rec).dump();
}

}  // namespace

PYBIND11_MODULE(_mmlab, m) {
  m.doc() = "Online market making with action-dependent feedback";

  m.def("config_digest", [](const std::string& text, const std::string& base_dir) {
    return config_from(text, base_dir).digest;
  }, py::arg("config"), py::arg("base_dir") = "");

  m.def("run_experiment", &run_cells, py::arg("config"), py::arg("base_dir") = "",
        py::arg("jobs") = 1);
  m.def("simulate", &simulate_one, py::arg("config"), py::arg("base_dir") = "",
        py::arg("policy_index") = 0, py::arg("horizon") = 1000, py::arg("seed") = 0);

  m.def("compute_regret", [](const std::string& record) {
    return mmlab::to_json(mmlab::compute_regret(mmlab::record_from_json(json::parse(record))), true)
        .dump();
  }, py::arg("record"));

  m.def("validate", [](const std::string& kind, const std::string& text, const std::string& base_dir,
                       std::size_t jobs) {
    const auto config = config_from(text, base_dir);
    mmlab::ValidationResult r;
    py::gil_scoped_release release;
    if (kind == "concentration") {
      r = mmlab::validate_concentration(config, {jobs, 1.0});
    } else if (kind == "invariants") {
      r = mmlab::validate_invariants(config, {jobs, 1.0});
    } else {
      throw std::invalid_argument("validate kind must be concentration or invariants");
    }
    return r.report.dump();
  }, py::arg("kind"), py::arg("config"), py::arg("base_dir") = "", py::arg("jobs") = 1);

  m.def("settle", [](double bid, double ask, double valuation, double price) {
    const auto o = mmlab::settle(mmlab::Quote(bid, ask), valuation, price);
    return py::make_tuple(std::string(mmlab::to_string(o.kind)), o.reward);
  }, py::arg("bid"), py::arg("ask"), py::arg("valuation"), py::arg("price"));

  m.def("observe", [](double bid, double ask, double valuation, double price) -> py::object {
    const auto obs = mmlab::observe(mmlab::Quote(bid, ask), valuation, price);
    if (const auto* r = std::get_if<mmlab::Revealed>(&obs.valuation_info)) {
      return py::float_(r->valuation);
    }
    return py::none();
  }, py::arg("bid"), py::arg("ask"), py::arg("valuation"), py::arg("price"),
     "Revealed valuation, or None when the round traded.");

  m.def("grid_resolution", [](std::uint64_t horizon) { return mmlab::make_grid(horizon).resolution(); });
  m.def("default_exploration_rounds", &mmlab::default_exploration_rounds);
}
