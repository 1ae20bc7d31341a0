#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmlab/harness.hpp"
#include "mmlab/record_io.hpp"

using namespace mmlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmlab_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string l; std::getline(ss, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

json base_config(const fs::path& out) {
  json j = json::parse(R"({
    "horizons": [64, 256, 1024],
    "policies": [{"name": "opsr"}],
    "valuation": {"type": "uniform"},
    "prices": {"type": "iid", "law": {"type": "uniform"}},
    "seeds": {"base": 7, "count": 20}
  })");
  j["output_dir"] = out.string();
  return j;
}

void run_and_write(const ExperimentConfig& c, std::size_t jobs) {
  const ExperimentResult r = run_experiment(c, {jobs, false, true});
  write_aggregate_csv(c.output_dir / "aggregate.csv", r);
  write_summary_csv(c.output_dir / "summary.csv", r);
  write_fits_csv(c.output_dir / "fits.csv", r);
}

}  // namespace

TEST(Harness, OneRecordAndOneRowPerCell) {
  const fs::path out = scratch("cells");
  const ExperimentConfig c = parse_config(base_config(out));
  run_and_write(c, 4);
  std::size_t records = 0;
  for (const auto& e : fs::directory_iterator(out / "records")) records += e.is_regular_file();
  EXPECT_EQ(records, 60u);
  const auto rows = lines(slurp(out / "aggregate.csv"));
  ASSERT_EQ(rows.size(), 61u);
  EXPECT_EQ(rows[0],
            "policy,horizon,seed,regret,pseudo_regret,grid_pseudo_regret,gap,envelope_failed,"
            "wall_time_ms,ops_per_step_mean,status,config_digest");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields(rows[i]);
    ASSERT_EQ(f.size(), 12u) << rows[i];
    EXPECT_EQ(f[10], "ok");
    EXPECT_EQ(f[11], c.digest);
    EXPECT_TRUE(f[8].empty());  // no timing requested
  }
  const json rec = json::parse(slurp(out / "records" / "opsr_T256_s3.json"));
  EXPECT_EQ(rec.at("config_digest"), c.digest);
  EXPECT_EQ(rec.at("horizon"), 256);
  EXPECT_EQ(rec.at("seed_index"), 3);
  const auto summary = lines(slurp(out / "summary.csv"));
  EXPECT_EQ(summary.size(), 4u);
  const auto fits = lines(slurp(out / "fits.csv"));
  ASSERT_GE(fits.size(), 2u);
  EXPECT_NE(fits[1].find(c.digest), std::string::npos);
}

TEST(Harness, OutputIndependentOfJobsAndReruns) {
  const fs::path a = scratch("jobs1"), b = scratch("jobs4"), d = scratch("jobs4_again");
  json j = base_config(a);
  j["policies"] = json::parse(R"([{"name": "opsr"}, {"name": "lazy_opsr"}, {"name": "etp"},
                                  {"name": "fixed", "label": "wide"}])");
  j["seeds"]["count"] = 6;
  const ExperimentConfig ca = parse_config(j);
  j["output_dir"] = b.string();
  const ExperimentConfig cb = parse_config(j);
  j["output_dir"] = d.string();
  const ExperimentConfig cd = parse_config(j);
  EXPECT_EQ(ca.digest, cb.digest);  // output_dir is not part of the digest
  run_and_write(ca, 1);
  run_and_write(cb, 4);
  run_and_write(cd, 4);
  for (const char* f : {"aggregate.csv", "summary.csv", "fits.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(slurp(b / f), slurp(d / f)) << f;
  }
  EXPECT_EQ(slurp(a / "records" / "etp_T1024_s5.json"), slurp(b / "records" / "etp_T1024_s5.json"));
}

TEST(Harness, DigestTracksContent) {
  const fs::path out = scratch("digest");
  json j = base_config(out);
  const std::string d0 = parse_config(j).digest;
  EXPECT_EQ(d0.size(), 16u);
  ConfigOverrides o;
  o.seeds = 21;
  const std::string overridden = parse_config(j, {}, o).digest;
  EXPECT_NE(overridden, d0);
  j["seeds"]["count"] = 21;
  EXPECT_EQ(parse_config(j).digest, overridden);
}

TEST(Harness, RejectsBadConfigs) {
  const fs::path out = scratch("bad");
  json j = base_config(out);
  j["policies"][0]["delta"] = 0;
  try {
    parse_config(j);
    FAIL() << "delta = 0 accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos) << e.what();
  }
  j = base_config(out);
  j["horizon"] = 10;  // typo of horizons
  try {
    parse_config(j);
    FAIL() << "unknown key accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("horizon"), std::string::npos) << e.what();
  }
  j = base_config(out);
  j["policies"][0]["kappa"] = 5;  // etp-only key on opsr
  EXPECT_THROW(parse_config(j), std::invalid_argument);
  j = base_config(out);
  j["policies"].push_back({{"name", "opsr"}});  // duplicate label
  EXPECT_THROW(parse_config(j), std::invalid_argument);
  j = base_config(out);
  j["policies"] = json::array({{{"name", "oracle"}}});
  std::ofstream(out / "p.txt") << "0.5\n0.5\n";
  j["prices"] = {{"type", "file"}, {"path", "p.txt"}};  // no mean to give the oracle
  EXPECT_THROW(parse_config(j, out), std::invalid_argument);
  j = base_config(out);
  j["prices"] = {{"type", "file"}, {"path", (out / "missing.txt").string()}};
  EXPECT_THROW(parse_config(j), std::invalid_argument);
}

TEST(Harness, ShortPriceFileGivesPartialRowsOnly) {
  const fs::path out = scratch("partial");
  {
    std::ofstream f(out / "prices.txt");
    for (int i = 0; i < 100; ++i) f << (i % 2 ? 0.4 : 0.6) << '\n';
  }
  json j = base_config(out / "run");
  j["horizons"] = {50, 200};
  j["seeds"]["count"] = 3;
  j["prices"] = {{"type", "file"}, {"path", "prices.txt"}};
  const ExperimentConfig c = parse_config(j, out);
  EXPECT_TRUE(c.canonical.at("prices").contains("content_digest"));
  const ExperimentResult r = run_experiment(c, {2, false, true});
  write_aggregate_csv(c.output_dir / "aggregate.csv", r);
  ASSERT_EQ(r.cells.size(), 6u);
  for (const auto& cell : r.cells) {
    if (cell.horizon == 50) {
      EXPECT_EQ(cell.status, CellStatus::Ok);
    } else {
      EXPECT_EQ(cell.status, CellStatus::Partial);
      EXPECT_EQ(cell.report.rounds, 100u);
      EXPECT_FALSE(cell.message.empty());
    }
  }
  EXPECT_FALSE(r.all_ok());
  const auto rows = lines(slurp(c.output_dir / "aggregate.csv"));
  std::size_t partial = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) partial += fields(rows[i])[10] == "partial";
  EXPECT_EQ(partial, 3u);

  // the digest follows the file's content
  const std::string before = c.digest;
  std::ofstream(out / "prices.txt", std::ios::app) << "0.5\n";
  EXPECT_NE(parse_config(j, out).digest, before);
}

TEST(Harness, PlotTwoHorizons) {
  const fs::path out = scratch("plot");
  std::ofstream(out / "agg.csv") << "policy,horizon,seed,regret,status\n"
                                 << "opsr,100,0,10,ok\n"
                                 << "opsr,100,1,14,ok\n"
                                 << "opsr,10000,0,100,ok\n"
                                 << "opsr,10000,1,,failed\n";
  plot_regret(out / "agg.csv", out / "p.svg", out / "p.dat");
  const std::string svg = slurp(out / "p.svg");
  std::size_t circles = 0;
  for (std::size_t pos = 0; (pos = svg.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
  EXPECT_EQ(circles, 2u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto dat = lines(slurp(out / "p.dat"));
  ASSERT_EQ(dat.size(), 7u);  // header, 2 data points, 2 points per reference slope
  EXPECT_EQ(dat[0], "series\thorizon\tregret");
  EXPECT_EQ(dat[1], "opsr\t100\t12");
  EXPECT_EQ(dat[2], "opsr\t10000\t100");
  EXPECT_EQ(dat[4], "slope 1/2\t10000\t120");
}

TEST(Harness, PlotRejectsUnplottableInput) {
  const fs::path out = scratch("plot_empty");
  std::ofstream(out / "empty.csv") << "policy,horizon,seed,regret,status\n";
  EXPECT_ANY_THROW(plot_regret(out / "empty.csv", out / "e.svg", out / "e.dat"));
  EXPECT_FALSE(fs::exists(out / "e.svg"));
  std::ofstream(out / "one.csv") << "policy,horizon,seed,regret,status\nopsr,100,0,3,ok\n";
  EXPECT_ANY_THROW(plot_regret(out / "one.csv", out / "o.svg", out / "o.dat"));
  EXPECT_FALSE(fs::exists(out / "o.svg"));
}

TEST(Harness, ValidateInvariantsAndFaultInjection) {
  const fs::path out = scratch("validate");
  json j = base_config(out);
  j["policies"] = json::parse(R"([{"name": "opsr"}, {"name": "lazy_opsr"}, {"name": "etp"}])");
  j["horizons"] = {256, 2048};
  j["seeds"]["count"] = 8;
  const ExperimentConfig c = parse_config(j);
  const ValidationResult ok = validate_invariants(c, {4, 1.0});
  EXPECT_TRUE(ok.pass) << ok.report.dump(2);
  const ValidationResult bad = validate_invariants(c, {4, 0.0});
  EXPECT_FALSE(bad.pass);
  bool coverage_failed = false;
  for (const auto& claim : bad.report.at("claims")) {
    if (claim.at("claim") == "envelope_coverage" && !claim.at("pass").get<bool>()) {
      coverage_failed = true;
    }
  }
  EXPECT_TRUE(coverage_failed);
}

TEST(Harness, ValidateConcentration) {
  const fs::path out = scratch("conc");
  for (const char* prices : {R"({"type": "iid"})", R"({"type": "alternating"})",
                             R"({"type": "ar", "coefficients": [0.5]})"}) {
    json j = base_config(out);
    j["prices"] = json::parse(prices);
    j["validation"] = {{"paths", 200}, {"horizon", 4000}};
    const ValidationResult r = validate_concentration(parse_config(j), {4, 1.0});
    EXPECT_TRUE(r.pass) << prices << '\n' << r.report.dump(2);
    ASSERT_EQ(r.report.at("claims").size(), 2u);
  }
}

TEST(Harness, CensorshipPairAgreesForEveryPolicy) {
  const fs::path out = scratch("censor");
  json j = base_config(out);
  j["policies"] = json::parse(R"([{"name": "opsr"}, {"name": "lazy_opsr"}, {"name": "etp"},
                                  {"name": "oracle"}, {"name": "fixed"}])");
  const ExperimentConfig c = parse_config(j);
  const Environment env = build_environment(c);
  for (const auto& pc : c.policies) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const RunSeeds seeds{3, s};
      EXPECT_TRUE(censorship_pair_agrees(
          [&] { return make_policy(pc, 1500, env, policy_stream(seeds, 1500, 0)); }, env, seeds,
          1500))
          << pc.label;
    }
  }
}

TEST(Harness, ParallelForCoversEveryIndexAndRethrows) {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 8, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 1000);
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
