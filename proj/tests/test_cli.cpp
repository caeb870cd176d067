#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "gpsurv/cli.hpp"

using namespace gpsurv;

namespace {
const std::string kData = GPSURV_TEST_DATA;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gpsurv_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string config_error(const std::string& src) {
  try {
    parse_config(src);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_binary(const std::string& args) {
  int rc = std::system((std::string(GPSURV_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST(Cli, ParseMinimalSimulate) {
  auto cfg = parse_config(R"({"command": "simulate", "n": 200, "omega0": 2.0, "kernel": "se", "seed": 11})");
  EXPECT_EQ(cfg.command, "simulate");
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.integer("n"), 200);
  EXPECT_EQ(cfg.integer("d"), 1);
  EXPECT_EQ(cfg.real("horizon"), 20.0);
  EXPECT_EQ(cfg.str("design"), "RD");
  // integers given for real keys are stored as reals
  auto c2 = parse_config(R"({"command": "simulate", "n": 5, "omega0": 2, "kernel": "ou"})");
  EXPECT_TRUE(c2.params["omega0"].is_number_float());
}

TEST(Cli, ParseRejectsBadConfigs) {
  EXPECT_NE(config_error(R"({"command": "simulate", "n": 2, "omega0": 2, "kernel": "se", "foo": 1})").find("'foo'"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"command": "simulate", "omega0": 2, "kernel": "se"})").find("'n'"), std::string::npos);
  EXPECT_NE(config_error(R"({"command": "simulate", "n": "many", "omega0": 2, "kernel": "se"})").find("integer"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"command": "simulate", "n": 2.5, "omega0": 2, "kernel": "se"})").find("'n'"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"command": "simulate", "n": 2, "omega0": 2, "kernel": "se", "seed": -3})").find("seed"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"command": "launch"})").find("launch"), std::string::npos);
  EXPECT_NE(config_error("{not json").find("JSON"), std::string::npos);
  EXPECT_NE(config_error(R"({"n": 2})").find("command"), std::string::npos);
  EXPECT_THROW(parse_config(R"({"command": "kl"})", "simulate"), ConfigError);
}

TEST(Cli, EmitParseRoundTrip) {
  for (const std::string src :
       {R"({"command": "simulate", "n": 200, "omega0": 2.5, "kernel": "se", "seed": 11, "output_path": "/tmp/x"})",
        R"({"command": "consistency", "n_ladder": [10, 20], "epsilon": 0.15})", R"({"command": "verify-bounds"})",
        R"({"command": "check-assumptions", "kernel": "ou", "horizons": [5, 50]})"}) {
    auto a = parse_config(src);
    auto b = parse_config(emit_config(a));
    EXPECT_EQ(a, b) << src;
    EXPECT_EQ(config_hash(a), config_hash(b));
  }
  auto a = parse_config(R"({"command": "simulate", "n": 200, "omega0": 2.5, "kernel": "se", "seed": 11})");
  auto c = a;
  c.seed = 12;
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Cli, IngestValidRows) {
  auto ds = ingest_dataset(kData + "/three_rows.csv");
  EXPECT_EQ(ds.n(), 3u);
  EXPECT_EQ(ds.d, 1);
  EXPECT_EQ(ds.design, Design::NRD);
  EXPECT_EQ(ds.records[1].t, 1.25);
  EXPECT_EQ(ds.records[1].x[0], 0.9);
  EXPECT_EQ(ds.fixed.size(), 3u);
}

TEST(Cli, IngestReportsRowNumbers) {
  try {
    ingest_dataset(kData + "/bad_covariate.csv");
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos);
  }
  try {
    ingest_dataset(kData + "/bad_time.csv");
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("time"), std::string::npos);
  }
  EXPECT_THROW(ingest_dataset(kData + "/missing.csv"), DomainError);
}

TEST(Cli, GenerateIngestIdentity) {
  auto dir = scratch("roundtrip");
  auto th = Theta::constant(2.0, 2, 80.0, 6);
  auto law = CovariateLaw::product_beta({2, 3}, {1, 4});
  auto ds = generate_dataset(th, 50, law, 20.0, 3);
  write_dataset(ds, (dir / "d.csv").string());
  auto back = ingest_dataset((dir / "d.csv").string());
  ASSERT_EQ(back.n(), ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    EXPECT_EQ(back.records[i].t, ds.records[i].t);
    EXPECT_EQ(back.records[i].x, ds.records[i].x);
  }
  EXPECT_EQ(back.design, Design::RD);
  EXPECT_EQ(back.horizon, ds.horizon);
  EXPECT_EQ(back.law.alpha, law.alpha);
  fs::remove_all(dir);
}

TEST(Cli, ThetaRoundTrip) {
  auto dir = scratch("theta");
  auto th = Theta::constant(1.7, 1, 12.0, 5);
  for (std::size_t k = 0; k < th.paths[1].values.size(); ++k) th.paths[1].values[k] = std::sin(0.1 * k) / 3;
  write_theta(th, (dir / "th").string());
  auto back = read_theta((dir / "th.json").string());
  EXPECT_EQ(back.omega, th.omega);
  EXPECT_EQ(back.horizon(), th.horizon());
  ASSERT_EQ(back.paths.size(), 2u);
  EXPECT_EQ(back.paths[1].values, th.paths[1].values);
  fs::remove_all(dir);
}

TEST(Cli, SimulateThenTestStat) {
  auto root = scratch("runs");
  auto sim = run(parse_config(R"({"command": "simulate", "n": 400, "omega0": 2.0, "kernel": "se", "seed": 5})"),
                 root.string());
  EXPECT_EQ(sim.exit_code, exit_pass);
  ASSERT_TRUE(fs::exists(sim.dir / "dataset.csv"));
  ASSERT_TRUE(fs::exists(sim.dir / "theta0.json"));

  auto m = read_json(sim.dir / "manifest.json");
  for (const char* k : {"command", "config_hash", "seed", "versions", "wall_time", "exit_code", "config"})
    EXPECT_TRUE(m.contains(k)) << k;
  EXPECT_EQ(m["seed"], 5);

  json ts{{"command", "test-stat"},
          {"dataset", (sim.dir / "dataset.csv").string()},
          {"theta", (sim.dir / "theta0.json").string()},
          {"epsilon", 0.3}};
  auto cfg = parse_config(ts.dump());
  auto a = run(cfg, root.string());
  auto b = run(cfg, root.string());
  EXPECT_EQ(a.exit_code, exit_pass);
  EXPECT_EQ(a.report["phi"], 0);
  EXPECT_NE(a.dir, b.dir);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(read_json(a.dir / "report.json"), a.report);

  // identical config and seed give identical data
  auto sim2 = run(parse_config(R"({"command": "simulate", "n": 400, "omega0": 2.0, "kernel": "se", "seed": 5})"),
                  root.string());
  EXPECT_EQ(ingest_dataset((sim2.dir / "dataset.csv").string()).records[7].t,
            ingest_dataset((sim.dir / "dataset.csv").string()).records[7].t);
  fs::remove_all(root);
}

TEST(Cli, MissingDatasetFails) {
  auto root = scratch("missing");
  auto cfg = parse_config(R"({"command": "test-stat", "dataset": "/nonexistent/data.csv"})");
  try {
    run(cfg, root.string());
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/data.csv"), std::string::npos);
  }
  EXPECT_TRUE(fs::is_empty(root));
  fs::remove_all(root);
}

TEST(Cli, VerifyBoundsSmallSuite) {
  auto root = scratch("bounds");
  auto r = run(parse_config(R"({"command": "verify-bounds", "reps": 2000, "dyadic_paths": 100, "level": 8})"),
               root.string());
  EXPECT_EQ(r.exit_code, exit_pass);
  ASSERT_EQ(r.report["reports"].size(), 4u);
  for (const auto& b : r.report["reports"]) EXPECT_TRUE(b["verdict"].get<bool>()) << b.dump();
  EXPECT_TRUE(fs::exists(r.dir / "bounds.csv"));
  fs::remove_all(root);
}

TEST(Cli, KlAndAssumptionExitCodes) {
  auto root = scratch("kl");
  auto kl = run(parse_config(R"({"command": "kl", "omega": 2.1, "per_axis": 2, "panels": 2048})"), root.string());
  EXPECT_EQ(kl.exit_code, exit_pass);
  EXPECT_TRUE(kl.report["b_set_member"].get<bool>());
  auto good = run(parse_config(R"({"command": "check-assumptions", "kernel": "se", "lengthscale": 5})"), root.string());
  EXPECT_EQ(good.exit_code, exit_pass);
  auto bad = run(parse_config(R"({"command": "check-assumptions", "kernel": "se", "lengthscale": 1})"), root.string());
  EXPECT_EQ(bad.exit_code, exit_verdict);
  fs::remove_all(root);
}

TEST(Cli, OutputRootFromEnvironment) {
  auto root = scratch("env");
  ::setenv("GPSURV_OUT_ROOT", root.string().c_str(), 1);
  auto r = run(parse_config(R"({"command": "check-assumptions", "kernel": "ou", "lengthscale": 2000})"));
  ::unsetenv("GPSURV_OUT_ROOT");
  EXPECT_EQ(r.dir.parent_path(), root);
  fs::remove_all(root);
}

TEST(Cli, BinaryExitCodes) {
  auto root = scratch("bin");
  std::ofstream(root / "bad.json") << R"({"command": "simulate", "n": 10, "omega0": 2, "kernel": "se", "foo": 1})";
  std::ofstream(root / "ok.json") << R"({"n": 30, "omega0": 2, "kernel": "se"})";
  std::ofstream(root / "a1.json") << R"({"kernel": "ou", "lengthscale": 1})";
  std::string out = " --out " + (root / "runs").string();
  EXPECT_EQ(run_binary("simulate --config " + (root / "bad.json").string() + out), 1);
  EXPECT_EQ(run_binary("simulate --config " + (root / "ok.json").string() + " --seed 4" + out), 0);
  EXPECT_EQ(run_binary("check-assumptions --config " + (root / "a1.json").string() + out), 2);
  EXPECT_EQ(run_binary("simulate --config " + (root / "nope.json").string() + out), 1);
  EXPECT_EQ(run_binary("frobnicate"), 1);
  fs::remove_all(root);
}
