#include "mmlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mmlab/record_io.hpp"

namespace mmlab {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) config_error(where, "must be an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      std::string list;
      for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      config_error(where, "unknown field '" + item.key() + "' (allowed: " + list + ")");
    }
  }
}

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    config_error(where, std::string("wrong type (") + e.what() + ")");
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) config_error(where, "must be a number");
  return j.get<double>();
}

std::uint64_t get_count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    config_error(where, "must be a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

std::vector<std::pair<double, double>> get_pairs(const json& j, const std::string& where) {
  if (!j.is_array()) config_error(where, "must be a list of [x, y] pairs");
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) config_error(w, "must be a pair [x, y]");
    out.emplace_back(get_number(j[i][0], w), get_number(j[i][1], w));
  }
  return out;
}

ValuationSpec parse_valuation(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type")) config_error(where, "needs a 'type'");
  const auto type = get_as<std::string>(j.at("type"), where + ".type");
  if (type == "uniform") {
    check_keys(j, {"type", "lo", "hi"}, where);
    UniformInterval u;
    if (j.contains("lo")) u.lo = get_number(j.at("lo"), where + ".lo");
    if (j.contains("hi")) u.hi = get_number(j.at("hi"), where + ".hi");
    return u;
  }
  if (type == "piecewise_linear") {
    check_keys(j, {"type", "knots"}, where);
    if (!j.contains("knots")) config_error(where, "needs 'knots'");
    return PiecewiseLinearCdf{get_pairs(j.at("knots"), where + ".knots")};
  }
  if (type == "atoms") {
    check_keys(j, {"type", "atoms", "continuous", "weight"}, where);
    std::vector<std::pair<double, double>> atoms;
    std::optional<PiecewiseLinearCdf> continuous;
    double weight = 0.0;
    if (j.contains("atoms")) atoms = get_pairs(j.at("atoms"), where + ".atoms");
    if (j.contains("continuous")) {
      const json& c = j.at("continuous");
      check_keys(c, {"knots"}, where + ".continuous");
      if (!c.contains("knots")) config_error(where + ".continuous", "needs 'knots'");
      continuous = PiecewiseLinearCdf{get_pairs(c.at("knots"), where + ".continuous.knots")};
    }
    if (j.contains("weight")) weight = get_number(j.at("weight"), where + ".weight");
    return ValuationSpec(std::in_place_type<AtomMixture>, std::move(atoms), std::move(continuous), weight);
  }
  config_error(where + ".type", "unknown valuation model '" + type +
                                    "' (expected uniform, piecewise_linear or atoms)");
}

PriceSpec parse_prices(const json& j, const std::string& where,
                       const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("type")) config_error(where, "needs a 'type'");
  const auto type = get_as<std::string>(j.at("type"), where + ".type");
  if (type == "iid") {
    check_keys(j, {"type", "law"}, where);
    ValuationSpec law = UniformInterval{};
    if (j.contains("law")) law = parse_valuation(j.at("law"), where + ".law");
    return IidPrices{ValuationModel(law)};
  }
  if (type == "ar") {
    check_keys(j, {"type", "coefficients", "innovation", "mu", "initial"}, where);
    if (!j.contains("coefficients")) config_error(where, "needs 'coefficients'");
    ValuationSpec innovation = UniformInterval{};
    if (j.contains("innovation")) innovation = parse_valuation(j.at("innovation"), where + ".innovation");
    ValuationModel model(innovation);
    AutoRegressive ar{get_as<std::vector<double>>(j.at("coefficients"), where + ".coefficients"),
                      model, model.mean(), {}};
    if (j.contains("mu")) ar.mu = get_number(j.at("mu"), where + ".mu");
    if (j.contains("initial")) {
      ar.initial = get_as<std::vector<double>>(j.at("initial"), where + ".initial");
    }
    return ar;
  }
  if (type == "alternating") {
    check_keys(j, {"type"}, where);
    return Alternating{};
  }
  if (type == "file") {
    check_keys(j, {"type", "path"}, where);
    if (!j.contains("path")) config_error(where, "needs 'path'");
    std::filesystem::path p = get_as<std::string>(j.at("path"), where + ".path");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return load_price_file(p);
  }
  if (type == "reflected_walk") {
    check_keys(j, {"type", "step", "start"}, where);
    ReflectedWalk w;
    if (j.contains("step")) w.step = get_number(j.at("step"), where + ".step");
    if (j.contains("start")) w.start = get_number(j.at("start"), where + ".start");
    return w;
  }
  config_error(where + ".type", "unknown price process '" + type +
                                    "' (expected iid, ar, alternating, file or reflected_walk)");
}

PolicyConfig parse_policy(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("name")) config_error(where, "needs a 'name'");
  PolicyConfig pc;
  pc.name = get_as<std::string>(j.at("name"), where + ".name");
  if (pc.name == "opsr" || pc.name == "lazy_opsr") {
    check_keys(j, {"name", "label", "delta", "regime", "gamma", "order", "clip_offset"}, where);
  } else if (pc.name == "etp") {
    check_keys(j, {"name", "label", "kappa", "epsilon", "clip_offset"}, where);
  } else if (pc.name == "oracle") {
    check_keys(j, {"name", "label"}, where);
  } else if (pc.name == "fixed") {
    check_keys(j, {"name", "label", "bid", "ask"}, where);
  } else {
    config_error(where + ".name", "unknown policy '" + pc.name +
                                      "' (expected opsr, lazy_opsr, etp, oracle or fixed)");
  }
  pc.label = j.contains("label") ? get_as<std::string>(j.at("label"), where + ".label") : pc.name;
  if (pc.label.empty() || pc.label.find_first_of(",/\\ \"") != std::string::npos) {
    config_error(where + ".label", "must be nonempty without commas, slashes, quotes or spaces");
  }
  if (j.contains("delta")) {
    pc.delta = get_number(j.at("delta"), where + ".delta");
    if (!(pc.delta > 0.0 && pc.delta < 1.0)) {
      std::ostringstream os;
      os << "must lie in (0, 1), got " << pc.delta;
      config_error(where + ".delta", os.str());
    }
  }
  if (j.contains("regime")) {
    try {
      pc.regime = parse_mean_regime(get_as<std::string>(j.at("regime"), where + ".regime"));
    } catch (const std::invalid_argument& e) {
      config_error(where + ".regime", e.what());
    }
  }
  if (j.contains("gamma")) pc.gamma = get_number(j.at("gamma"), where + ".gamma");
  if (j.contains("order")) pc.order = get_count(j.at("order"), where + ".order");
  if (j.contains("kappa")) pc.kappa = get_count(j.at("kappa"), where + ".kappa");
  if (j.contains("epsilon")) pc.epsilon = get_number(j.at("epsilon"), where + ".epsilon");
  if (j.contains("clip_offset")) {
    pc.clip_offset = get_number(j.at("clip_offset"), where + ".clip_offset");
    if (!(pc.clip_offset > 0.0)) config_error(where + ".clip_offset", "must be positive");
  }
  if (j.contains("bid")) pc.bid = get_number(j.at("bid"), where + ".bid");
  if (j.contains("ask")) pc.ask = get_number(j.at("ask"), where + ".ask");
  return pc;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MeanRegime default_regime(const PriceProcess& process) {
  const std::string kind = process.kind();
  if (kind == "iid") return MeanRegime::Iid;
  if (kind == "ar") return MeanRegime::AutoRegressive;
  return MeanRegime::Global;
}

std::string fmt(double x) {
  if (!std::isfinite(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string config_digest(const json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

ExperimentConfig parse_config(json j, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides) {
  check_keys(j,
             {"horizons", "policies", "valuation", "prices", "seeds", "output_dir", "checkpoints",
              "records", "validation"},
             "top level");
  if (overrides.seeds) j["seeds"]["count"] = *overrides.seeds;
  if (overrides.base_seed) j["seeds"]["base"] = *overrides.base_seed;
  if (overrides.out) j["output_dir"] = overrides.out->string();

  ExperimentConfig c;
  if (!j.contains("horizons")) config_error("horizons", "is required");
  const json& hs = j.at("horizons");
  if (!hs.is_array() || hs.empty()) config_error("horizons", "must be a nonempty list");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const std::uint64_t T = get_count(hs[i], "horizons[" + std::to_string(i) + "]");
    if (T == 0) config_error("horizons[" + std::to_string(i) + "]", "must be at least 1");
    c.horizons.push_back(T);
  }

  if (!j.contains("policies")) config_error("policies", "is required");
  const json& ps = j.at("policies");
  if (!ps.is_array() || ps.empty()) config_error("policies", "must be a nonempty list");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string where = "policies[" + std::to_string(i) + "]";
    c.policies.push_back(parse_policy(ps[i], where));
    if (!labels.insert(c.policies.back().label).second) {
      config_error(where + ".label", "duplicate label '" + c.policies.back().label + "'");
    }
  }

  try {
    if (j.contains("valuation")) c.valuation = parse_valuation(j.at("valuation"), "valuation");
    ValuationModel check(c.valuation);
    if (j.contains("prices")) c.prices = parse_prices(j.at("prices"), "prices", base_dir);
    PriceProcess check_prices(c.prices);
  } catch (const std::invalid_argument& e) {
    if (std::string_view(e.what()).starts_with("config:")) throw;
    config_error("model", e.what());
  } catch (const std::runtime_error& e) {
    config_error("prices", e.what());
  }

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    check_keys(s, {"base", "count"}, "seeds");
    if (s.contains("base")) c.base_seed = get_count(s.at("base"), "seeds.base");
    if (s.contains("count")) c.seed_count = get_count(s.at("count"), "seeds.count");
    if (c.seed_count == 0) config_error("seeds.count", "must be at least 1");
  }
  if (j.contains("output_dir")) {
    c.output_dir = get_as<std::string>(j.at("output_dir"), "output_dir");
  }
  if (j.contains("checkpoints")) {
    const json& cp = j.at("checkpoints");
    if (cp.is_string()) {
      const auto s = cp.get<std::string>();
      if (s == "powers_of_two") {
        c.checkpoints.kind = CheckpointCadence::Kind::PowersOfTwo;
      } else if (s == "none") {
        c.checkpoints.kind = CheckpointCadence::Kind::None;
      } else {
        config_error("checkpoints", "expected powers_of_two, none or {\"every\": n}");
      }
    } else {
      check_keys(cp, {"every"}, "checkpoints");
      c.checkpoints.kind = CheckpointCadence::Kind::Every;
      c.checkpoints.every = get_count(cp.at("every"), "checkpoints.every");
      if (c.checkpoints.every == 0) config_error("checkpoints.every", "must be at least 1");
    }
  }
  if (j.contains("records")) c.write_records = get_as<bool>(j.at("records"), "records");
  if (j.contains("validation")) {
    const json& v = j.at("validation");
    check_keys(v, {"delta", "paths", "horizon"}, "validation");
    if (v.contains("delta")) {
      c.validation_delta = get_number(v.at("delta"), "validation.delta");
      if (!(c.validation_delta > 0.0 && c.validation_delta < 1.0)) {
        config_error("validation.delta", "must lie in (0, 1)");
      }
    }
    if (v.contains("paths")) c.validation_paths = get_count(v.at("paths"), "validation.paths");
    if (v.contains("horizon")) {
      c.validation_horizon = get_count(v.at("horizon"), "validation.horizon");
    }
  }

  // Constructing every policy once catches parameter errors before any run starts.
  const Environment env = build_environment(c);
  for (std::size_t i = 0; i < c.policies.size(); ++i) {
    for (std::uint64_t T : c.horizons) {
      try {
        (void)make_policy(c.policies[i], T, env, Rng(0));
      } catch (const std::invalid_argument& e) {
        config_error("policies[" + std::to_string(i) + "]", e.what());
      }
    }
  }

  json canonical = j;
  canonical.erase("output_dir");
  if (const auto* fs = std::get_if<FileSequence>(&c.prices)) {
    std::string bytes;
    for (double p : fs->prices) bytes += fmt(p) + "\n";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    canonical["prices"]["content_digest"] = buf;
  }
  c.canonical = std::move(canonical);
  c.digest = config_digest(c.canonical);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(std::move(j), path.parent_path(), overrides);
}

Environment build_environment(const ExperimentConfig& config) {
  return make_environment(ValuationModel(config.valuation), PriceProcess(config.prices));
}

std::unique_ptr<Policy> make_policy(const PolicyConfig& pc, std::uint64_t horizon,
                                    const Environment& env, Rng noise, double width_scale) {
  if (pc.name == "opsr" || pc.name == "lazy_opsr") {
    OpsrOptions o;
    o.delta = pc.delta;
    o.regime = pc.regime.value_or(default_regime(env.prices));
    o.clip_offset = pc.clip_offset;
    o.width_scale = width_scale;
    if (o.regime == MeanRegime::AutoRegressive) {
      o.gamma = pc.gamma.value_or(env.prices.gamma());
      o.order = pc.order.value_or(env.prices.order());
    }
    if (pc.name == "lazy_opsr") o = Opsr::lazy_options(o);
    return std::make_unique<Opsr>(horizon, o);
  }
  if (pc.name == "etp") {
    EtpOptions o;
    o.kappa = pc.kappa;
    o.epsilon = pc.epsilon;
    o.clip_offset = pc.clip_offset;
    return std::make_unique<Etp>(horizon, o, noise);
  }
  const PriceGrid grid = make_grid(horizon);
  if (pc.name == "oracle") {
    if (!env.mu) throw std::invalid_argument("oracle policy needs a price process with a known mean");
    const GridQuote q = oracle_quote([&](double x) { return env.valuations.cdf(x); }, *env.mu, grid);
    return std::make_unique<FixedQuotePolicy>(grid, q, pc.label);
  }
  if (pc.name == "fixed") {
    require_unit_interval(pc.bid, "fixed bid");
    require_unit_interval(pc.ask, "fixed ask");
    const double n = static_cast<double>(grid.resolution());
    const auto bid = static_cast<std::size_t>(std::floor(pc.bid * n + 1e-9));
    const auto ask = static_cast<std::size_t>(std::ceil(pc.ask * n - 1e-9));
    return std::make_unique<FixedQuotePolicy>(grid, GridQuote{bid, ask}, pc.label);
  }
  throw std::invalid_argument("unknown policy '" + pc.name + "'");
}

// Running ------------------------------------------------------------------------------

std::string_view to_string(CellStatus s) noexcept {
  switch (s) {
    case CellStatus::Ok:
      return "ok";
    case CellStatus::Partial:
      return "partial";
    case CellStatus::Failed:
      return "failed";
  }
  return "failed";
}

bool ExperimentResult::all_ok() const noexcept {
  return std::all_of(cells.begin(), cells.end(),
                     [](const CellResult& c) { return c.status == CellStatus::Ok; });
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  struct Cell {
    std::size_t policy;
    std::uint64_t horizon;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    for (std::uint64_t T : config.horizons) {
      for (std::uint64_t s = 0; s < config.seed_count; ++s) cells.push_back({p, T, s});
    }
  }

  const bool records = options.write_records && config.write_records;
  const std::filesystem::path record_dir = config.output_dir / "records";
  if (records) std::filesystem::create_directories(record_dir);

  const Environment env = build_environment(config);
  ExperimentResult result;
  result.digest = config.digest;
  result.cells.resize(cells.size());

  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const Cell& cell = cells[i];
    const PolicyConfig& pc = config.policies[cell.policy];
    CellResult& out = result.cells[i];
    out.policy_index = cell.policy;
    out.policy = pc.label;
    out.horizon = cell.horizon;
    out.seed = cell.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      const RunSeeds seeds{config.base_seed, cell.seed};
      auto policy = make_policy(pc, cell.horizon, env,
                                policy_stream(seeds, cell.horizon, cell.policy));
      SimulationOptions so;
      so.checkpoints = config.checkpoints;
      RunRecord rec = simulate(*policy, env, seeds, cell.horizon, so);
      rec.policy = pc.label;
      rec.config_digest = config.digest;
      out.report = compute_regret(rec);
      out.report.cumulative_regret.clear();
      out.report.cumulative_regret.shrink_to_fit();
      out.envelope_failed = rec.truth.envelope_failed;
      out.ops_per_step = rec.rounds == 0 ? 0.0
                                         : static_cast<double>(rec.work) /
                                               static_cast<double>(rec.rounds);
      out.diagnostics = rec.diagnostics;
      out.status = rec.partial() ? CellStatus::Partial : CellStatus::Ok;
      out.message = rec.error;
      if (records) {
        write_record(record_dir / (pc.label + "_T" + std::to_string(cell.horizon) + "_s" +
                                   std::to_string(cell.seed) + ".json"),
                     rec);
      }
    } catch (const std::exception& e) {
      out.status = CellStatus::Failed;
      out.message = e.what();
    }
    if (options.timing) {
      out.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
    }
  });
  return result;
}

// Tables ---------------------------------------------------------------------------------

void write_aggregate_csv(const std::filesystem::path& path, const ExperimentResult& result) {
  std::ofstream out = open_out(path);
  out << "policy,horizon,seed,regret,pseudo_regret,grid_pseudo_regret,gap,envelope_failed,"
         "wall_time_ms,ops_per_step_mean,status,config_digest\n";
  for (const CellResult& c : result.cells) {
    out << c.policy << ',' << c.horizon << ',' << c.seed << ',';
    if (c.status == CellStatus::Failed) {
      out << ",,,,,";
    } else {
      out << fmt(c.report.regret) << ',' << fmt(c.report.pseudo_regret) << ','
          << fmt(c.report.grid_pseudo_regret) << ',' << fmt(c.report.gap) << ','
          << (c.envelope_failed ? 1 : 0) << ',';
    }
    out << (c.wall_time_ms ? fmt(*c.wall_time_ms) : "") << ',';
    out << (c.status == CellStatus::Failed ? "" : fmt(c.ops_per_step)) << ',';
    out << to_string(c.status) << ',' << result.digest << '\n';
  }
}

namespace {

double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double mean(const std::vector<double>& xs) {
  return xs.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct Group {
  std::string policy;
  std::uint64_t horizon = 0;
  std::size_t runs = 0;
  std::vector<double> regret, pseudo, grid_pseudo, ops;
  std::size_t envelope_failures = 0;
};

std::vector<Group> group_cells(const ExperimentResult& result) {
  std::vector<Group> groups;
  for (const CellResult& c : result.cells) {
    if (groups.empty() || groups.back().policy != c.policy || groups.back().horizon != c.horizon) {
      Group g;
      g.policy = c.policy;
      g.horizon = c.horizon;
      groups.push_back(std::move(g));
    }
    Group& g = groups.back();
    ++g.runs;
    if (c.status != CellStatus::Ok) continue;
    g.regret.push_back(c.report.regret);
    if (std::isfinite(c.report.pseudo_regret)) g.pseudo.push_back(c.report.pseudo_regret);
    if (std::isfinite(c.report.grid_pseudo_regret)) g.grid_pseudo.push_back(c.report.grid_pseudo_regret);
    g.ops.push_back(c.ops_per_step);
    g.envelope_failures += c.envelope_failed ? 1 : 0;
  }
  return groups;
}

}  // namespace

void write_summary_csv(const std::filesystem::path& path, const ExperimentResult& result) {
  std::ofstream out = open_out(path);
  out << "policy,horizon,runs,ok_runs,regret_mean,regret_std,regret_q10,regret_q50,regret_q90,"
         "pseudo_regret_mean,grid_pseudo_regret_mean,envelope_failure_rate,ops_per_step_mean,"
         "config_digest\n";
  for (const Group& g : group_cells(result)) {
    const std::size_t ok = g.regret.size();
    out << g.policy << ',' << g.horizon << ',' << g.runs << ',' << ok << ',';
    if (ok == 0) {
      out << ",,,,,,,,,";
    } else {
      out << fmt(mean(g.regret)) << ',' << fmt(sample_std(g.regret)) << ','
          << fmt(quantile(g.regret, 0.1)) << ',' << fmt(quantile(g.regret, 0.5)) << ','
          << fmt(quantile(g.regret, 0.9)) << ',' << fmt(mean(g.pseudo)) << ','
          << fmt(mean(g.grid_pseudo)) << ','
          << fmt(static_cast<double>(g.envelope_failures) / static_cast<double>(ok)) << ','
          << fmt(mean(g.ops)) << ',';
    }
    out << result.digest << '\n';
  }
}

void write_fits_csv(const std::filesystem::path& path, const ExperimentResult& result) {
  std::ofstream out = open_out(path);
  out << "policy,metric,slope,intercept,residual,points,status,config_digest\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Group*>> by_policy;
  const std::vector<Group> groups = group_cells(result);
  for (const Group& g : groups) {
    if (!by_policy.contains(g.policy)) order.push_back(g.policy);
    by_policy[g.policy].push_back(&g);
  }
  for (const std::string& policy : order) {
    for (const char* metric : {"regret", "pseudo_regret"}) {
      std::vector<std::pair<double, double>> pts;
      for (const Group* g : by_policy[policy]) {
        const auto& xs = std::string_view(metric) == "regret" ? g->regret : g->pseudo;
        if (!xs.empty()) pts.emplace_back(static_cast<double>(g->horizon), mean(xs));
      }
      out << policy << ',' << metric << ',';
      try {
        const RateFit f = rate_fit(pts);
        out << fmt(f.slope) << ',' << fmt(f.intercept) << ',' << fmt(f.residual) << ','
            << f.points << ',' << (f.warnings.empty() ? "ok" : "ok_with_dropped_points");
      } catch (const std::invalid_argument& e) {
        std::string why = e.what();
        std::replace(why.begin(), why.end(), ',', ';');
        out << ",,," << pts.size() << ",not fitted: " << why;
      }
      out << ',' << result.digest << '\n';
    }
  }
}

// Plot ------------------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

void plot_regret(const std::filesystem::path& aggregate_csv, const std::filesystem::path& svg,
                 const std::filesystem::path& data, const PlotOptions& options) {
  std::ifstream in(aggregate_csv);
  if (!in) throw std::runtime_error("cannot read " + aggregate_csv.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(aggregate_csv.string() + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_policy = column("policy");
  const auto c_horizon = column("horizon");
  const auto c_metric = column(options.metric);
  const auto c_status = column("status");
  if (!c_policy || !c_horizon || !c_metric) {
    throw std::runtime_error(aggregate_csv.string() + " lacks policy, horizon or " + options.metric +
                             " columns");
  }

  std::vector<std::string> order;
  std::map<std::string, std::map<double, std::pair<double, std::size_t>>> sums;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error("malformed row: " + line);
    if (c_status && f[*c_status] != "ok") continue;
    if (f[*c_metric].empty()) continue;
    const double T = std::stod(f[*c_horizon]);
    const double v = std::stod(f[*c_metric]);
    if (!sums.contains(f[*c_policy])) order.push_back(f[*c_policy]);
    auto& cell = sums[f[*c_policy]][T];
    cell.first += v;
    ++cell.second;
  }

  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
  };
  std::vector<Series> series;
  for (const auto& name : order) {
    Series s{name, {}};
    for (const auto& [T, acc] : sums[name]) {
      const double m = acc.first / static_cast<double>(acc.second);
      if (m > 0.0 && T > 0.0) {
        s.points.emplace_back(T, m);
      } else {
        ++dropped;
      }
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  if (series.empty()) throw std::runtime_error("no plottable rows in " + aggregate_csv.string());
  std::set<double> horizons;
  for (const auto& s : series) {
    for (const auto& p : s.points) horizons.insert(p.first);
  }
  if (horizons.size() < 2) throw std::runtime_error("plot needs at least two horizons");

  const double x_lo = std::log10(*horizons.begin());
  const double x_hi = std::log10(*horizons.rbegin());
  const auto [x0, y0] = series.front().points.front();
  std::vector<Series> refs;
  for (auto [label, slope] : {std::pair{"slope 1/2", 0.5}, std::pair{"slope 2/3", 2.0 / 3.0}}) {
    Series r{label, {}};
    for (double lx : {x_lo, x_hi}) {
      const double T = std::pow(10.0, lx);
      r.points.emplace_back(T, y0 * std::pow(T / x0, slope));
    }
    refs.push_back(std::move(r));
  }

  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -std::numeric_limits<double>::infinity();
  for (const auto* group : {&series, &refs}) {
    for (const auto& s : *group) {
      for (const auto& p : s.points) {
        y_lo = std::min(y_lo, std::log10(p.second));
        y_hi = std::max(y_hi, std::log10(p.second));
      }
    }
  }
  const double x_pad = std::max(0.05, 0.05 * (x_hi - x_lo));
  const double y_pad = std::max(0.05, 0.05 * (y_hi - y_lo));
  const double ax_lo = x_lo - x_pad, ax_hi = x_hi + x_pad;
  const double ay_lo = y_lo - y_pad, ay_hi = y_hi + y_pad;

  constexpr double W = 720, H = 480, L = 80, R = 180, TOP = 40, B = 60;
  auto px = [&](double T) { return L + (std::log10(T) - ax_lo) / (ax_hi - ax_lo) * (W - L - R); };
  auto py = [&](double v) {
    return H - B - (std::log10(v) - ay_lo) / (ay_hi - ay_lo) * (H - TOP - B);
  };

  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                            "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  std::ofstream out = open_out(svg);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(options.title) << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << TOP << "\" width=\"" << (W - L - R) << "\" height=\""
      << (H - TOP - B) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int d = static_cast<int>(std::ceil(ax_lo)); d <= static_cast<int>(std::floor(ax_hi)); ++d) {
    const double x = px(std::pow(10.0, d));
    out << "<line x1=\"" << x << "\" y1=\"" << TOP << "\" x2=\"" << x << "\" y2=\"" << (H - B)
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << x << "\" y=\"" << (H - B + 18)
        << "\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(ay_lo)); d <= static_cast<int>(std::floor(ay_hi)); ++d) {
    const double y = py(std::pow(10.0, d));
    out << "<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << (W - R) << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << (L - 6) << "\" y=\"" << (y + 4)
        << "\" text-anchor=\"end\">1e" << d << "</text>\n";
  }
  out << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"" << (H - 18)
      << "\" text-anchor=\"middle\">horizon T</text>\n";
  out << "<text x=\"18\" y=\"" << (TOP + (H - TOP - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (TOP + (H - TOP - B) / 2) << ")\">" << xml_escape(options.metric) << "</text>\n";

  auto polyline = [&](const Series& s, const char* colour, bool dashed) {
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\""
        << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    for (const auto& [T, v] : s.points) out << px(T) << ',' << py(v) << ' ';
    out << "\"/>\n";
  };
  double legend_y = TOP + 10;
  auto legend = [&](const std::string& name, const char* colour, bool dashed) {
    out << "<line x1=\"" << (W - R + 15) << "\" y1=\"" << legend_y << "\" x2=\"" << (W - R + 45)
        << "\" y2=\"" << legend_y << "\" stroke=\"" << colour << "\" stroke-width=\"2\""
        << (dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n<text x=\"" << (W - R + 52)
        << "\" y=\"" << (legend_y + 4) << "\">" << xml_escape(name) << "</text>\n";
    legend_y += 20;
  };
  for (const auto& r : refs) {
    polyline(r, "#888", true);
    legend(r.name, "#888", true);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = palette[i % std::size(palette)];
    polyline(series[i], colour, false);
    for (const auto& [T, v] : series[i].points) {
      out << "<circle cx=\"" << px(T) << "\" cy=\"" << py(v) << "\" r=\"4\" fill=\"" << colour
          << "\"/>\n";
    }
    legend(series[i].name, colour, false);
  }
  out << "</svg>\n";

  std::ofstream dat = open_out(data);
  dat << "series\thorizon\t" << options.metric << '\n';
  for (const auto* group : {&series, &refs}) {
    for (const auto& s : *group) {
      for (const auto& [T, v] : s.points) dat << s.name << '\t' << fmt(T) << '\t' << fmt(v) << '\n';
    }
  }
  if (dropped > 0) dat << "# dropped " << dropped << " nonpositive points\n";
}

// Validation ------------------------------------------------------------------------------

bool censorship_pair_agrees(const std::function<std::unique_ptr<Policy>()>& make,
                            const Environment& env, const RunSeeds& seeds,
                            std::uint64_t horizon) {
  SimulationOptions plain;
  plain.truth_checks = false;
  plain.checkpoints.kind = CheckpointCadence::Kind::None;
  auto a = make();
  const RunRecord ra = simulate(*a, env, seeds, horizon, plain);

  Rng perturb = environment_stream(seeds, horizon, StreamRole::Perturbation);
  SimulationOptions moved = plain;
  moved.valuation_transform = [&perturb](std::uint64_t, const Quote& q, double v) {
    const double u = perturb.uniform();
    if (v <= q.bid()) return u * q.bid();
    if (v >= q.ask()) return q.ask() + u * (1.0 - q.ask());
    return v;
  };
  auto b = make();
  const RunRecord rb = simulate(*b, env, seeds, horizon, moved);
  return ra.trace.bid == rb.trace.bid && ra.trace.ask == rb.trace.ask;
}

namespace {

json claim(std::string name, const std::string& policy, bool hard, std::size_t runs,
           std::size_t violations, std::optional<double> threshold = {}) {
  json j = {{"claim", std::move(name)}, {"policy", policy}, {"kind", hard ? "hard" : "frequency"},
            {"runs", runs},             {"violations", violations}};
  const double freq = runs == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(runs);
  if (threshold) {
    const BinomialSummary b = binomial_summary(violations, runs);
    j["frequency"] = freq;
    j["wilson_low"] = b.wilson_low;
    j["wilson_high"] = b.wilson_high;
    j["threshold"] = *threshold;
    j["slack"] = *threshold - freq;
    j["pass"] = freq <= *threshold;
  } else {
    j["pass"] = violations == 0;
  }
  return j;
}

bool is_opsr(const PolicyConfig& pc) { return pc.name == "opsr" || pc.name == "lazy_opsr"; }

}  // namespace

ValidationResult validate_concentration(const ExperimentConfig& config,
                                        const ValidationOptions& options) {
  const PriceProcess process(config.prices);
  const std::optional<double> mu = process.mean();
  json report = {{"command", "validate concentration"}, {"config_digest", config.digest}};
  json claims = json::array();
  if (!mu) {
    report["claims"] = claims;
    report["error"] = "price process '" + process.kind() + "' has no known mean; nothing to check";
    report["pass"] = false;
    return {report, false};
  }
  const std::string kind = process.kind();
  std::vector<BoundKind> bounds;
  if (kind == "iid") {
    bounds = {BoundKind::AnytimeHoeffding, BoundKind::MartingaleSum};
  } else if (kind == "ar") {
    bounds = {BoundKind::AutoRegressiveMean, BoundKind::MartingaleSum};
  } else {
    bounds = {BoundKind::GlobalMean, BoundKind::MartingaleSum};
  }
  const std::uint64_t horizon =
      config.validation_horizon.value_or(*std::max_element(config.horizons.begin(), config.horizons.end()));
  const std::uint64_t paths = config.validation_paths.value_or(config.seed_count);

  std::vector<ConcentrationReport> reports(bounds.size());
  parallel_for(bounds.size(), options.jobs, [&](std::size_t i) {
    ConcentrationSpec spec{process, *mu, bounds[i], paths, horizon, config.validation_delta,
                           config.base_seed};
    reports[i] = concentration_suite(spec);
  });
  bool pass = true;
  for (const auto& r : reports) {
    json j = to_json(r);
    j["claim"] = std::string("concentration:") + std::string(to_string(r.bound));
    j["horizon"] = horizon;
    j["delta"] = config.validation_delta;
    claims.push_back(std::move(j));
    pass = pass && r.pass;
  }
  report["claims"] = std::move(claims);
  report["pass"] = pass;
  return {report, pass};
}

ValidationResult validate_invariants(const ExperimentConfig& config,
                                     const ValidationOptions& options) {
  const Environment env = build_environment(config);
  struct Cell {
    std::size_t policy;
    std::uint64_t horizon;
    std::uint64_t seed;
  };
  struct Outcome {
    bool envelope_checked = false;
    bool envelope_failed = false;
    std::uint64_t exits = 0;
    std::uint64_t nesting = 0;
    std::uint64_t monotonicity = 0;
    std::uint64_t lazy_mismatches = 0;
    bool negative_grid_pseudo = false;
    bool censorship_ok = true;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    for (std::uint64_t T : config.horizons) {
      for (std::uint64_t s = 0; s < config.seed_count; ++s) cells.push_back({p, T, s});
    }
  }
  std::vector<Outcome> outcomes(cells.size());
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const Cell& c = cells[i];
    const PolicyConfig& pc = config.policies[c.policy];
    const RunSeeds seeds{config.base_seed, c.seed};
    auto make = [&] {
      return make_policy(pc, c.horizon, env, policy_stream(seeds, c.horizon, c.policy),
                         is_opsr(pc) ? options.width_scale : 1.0);
    };
    auto policy = make();
    SimulationOptions so;
    so.checkpoints.kind = CheckpointCadence::Kind::None;
    std::optional<EstimatorShadow> shadow;
    if (pc.name == "lazy_opsr") {
      shadow.emplace(policy->grid(), pc.clip_offset);
      so.observer = [&](std::uint64_t t, const Quote& q, const Observation& o, const Policy& p) {
        (*shadow)(t, q, o, p);
      };
    }
    const RunRecord rec = simulate(*policy, env, seeds, c.horizon, so);
    Outcome& out = outcomes[i];
    out.envelope_checked = rec.truth.envelopes_checked;
    out.envelope_failed = rec.truth.envelope_failed;
    out.exits = rec.truth.optimal_arm_exits;
    out.nesting = rec.diagnostics.nesting_violations;
    out.monotonicity = rec.diagnostics.monotonicity_violations;
    if (shadow) out.lazy_mismatches = shadow->report().mismatches;
    const RegretReport rep = compute_regret(rec);
    out.negative_grid_pseudo = std::isfinite(rep.grid_pseudo_regret) && rep.grid_pseudo_regret < 0.0;
    out.censorship_ok = censorship_pair_agrees(make, env, seeds, c.horizon);
  });

  json claims = json::array();
  bool pass = true;
  auto add = [&](json j) {
    pass = pass && j.at("pass").get<bool>();
    claims.push_back(std::move(j));
  };
  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    const PolicyConfig& pc = config.policies[p];
    std::size_t runs = 0, checked = 0, failed = 0, clean = 0, exits = 0, nesting = 0, mono = 0,
                lazy = 0, negative = 0, censored = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].policy != p) continue;
      const Outcome& o = outcomes[i];
      ++runs;
      nesting += o.nesting > 0;
      mono += o.monotonicity > 0;
      lazy += o.lazy_mismatches > 0;
      negative += o.negative_grid_pseudo;
      censored += !o.censorship_ok;
      if (o.envelope_checked) {
        ++checked;
        failed += o.envelope_failed;
        if (!o.envelope_failed) {
          ++clean;
          exits += o.exits > 0;
        }
      }
    }
    add(claim("censorship_compliance", pc.label, true, runs, censored));
    if (!is_opsr(pc)) continue;
    add(claim("nested_spreads", pc.label, true, runs, nesting));
    add(claim("gamma_star_monotonicity", pc.label, true, runs, mono));
    add(claim("grid_pseudo_regret_nonnegative", pc.label, true, runs, negative));
    if (pc.name == "lazy_opsr") add(claim("eager_lazy_equivalence", pc.label, true, runs, lazy));
    if (checked > 0) {
      add(claim("envelope_coverage", pc.label, false, checked, failed,
                binomial_threshold(std::min(1.0, 2.0 * pc.delta), checked)));
      add(claim("optimal_arm_survival", pc.label, true, clean, exits));
    }
  }
  json report = {{"command", "validate invariants"},
                 {"config_digest", config.digest},
                 {"fault_injected", options.width_scale != 1.0},
                 {"claims", std::move(claims)},
                 {"pass", pass}};
  return {report, pass};
}

}  // namespace mmlab
