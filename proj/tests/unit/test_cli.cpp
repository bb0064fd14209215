#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "modeldisc/cli.hpp"
#include "modeldisc/errors.hpp"
#include "test_util.hpp"

using namespace modeldisc;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "modeldisc");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string small_csv(const testutil::TempDir& dir) {
  const auto path = dir / "data.csv";
  testutil::write_file(path, testutil::to_csv(testutil::linear_plus_periodic(40, 4)));
  return path.string();
}

}  // namespace

TEST_CASE("a missing config file is a configuration error") {
  testutil::TempDir dir;
  const auto r = cli({"discover", "--config", (dir / "absent.json").string()});
  CHECK(r.code == kExitConfig);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("bad flags and values are configuration errors") {
  CHECK(cli({"discover", "--rounds", "many"}).code == kExitConfig);
  CHECK(cli({"frobnicate"}).code == kExitConfig);
  testutil::TempDir dir;
  CHECK(cli({"discover", "--data", small_csv(dir), "--proposer", "oracle"}).code == kExitConfig);
  CHECK(cli({"discover", "--data", (dir / "none.csv").string(), "--evaluator", "heuristic", "--proposer",
             "greedy"})
            .code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("the agent proposer without credentials is rejected before any work") {
  testutil::TempDir dir;
  ::unsetenv("MODEL_API_KEY");
  const auto r = cli({"discover", "--data", small_csv(dir), "--out", dir.path().string()});
  CHECK(r.code == kExitConfig);
}

TEST_CASE("flags override the config file and the effective config is saved") {
  testutil::TempDir dir;
  const auto cfg = dir / "cfg.json";
  testutil::write_file(cfg, nlohmann::json{{"rounds", 5}, {"restarts", 1}, {"seed", 4}, {"grid_points", 60},
                                           {"greedy_cap", 3}, {"run_id", "t"}}
                                .dump());
  const auto r = cli({"discover", "--config", cfg.string(), "--data", small_csv(dir), "--rounds", "1", "--proposer",
                      "greedy", "--evaluator", "heuristic", "--out", dir.path().string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("best kernel: ") != std::string::npos);
  CHECK(r.out.find("test rmse (normalized): ") != std::string::npos);
  const auto saved = nlohmann::json::parse(testutil::read_file(dir / "t" / "config.json"));
  CHECK(saved["rounds"] == 1);
  CHECK(saved["restarts"] == 1);
  CHECK(saved["proposer"] == "greedy");
  CHECK(saved["greedy_cap"] == 3);
}

TEST_CASE("the baseline forces the classical search") {
  testutil::TempDir dir;
  const auto cfg = dir / "cfg.json";
  testutil::write_file(cfg, nlohmann::json{{"rounds", 1}, {"restarts", 1}, {"greedy_cap", 2}, {"run_id", "b"},
                                           {"evaluator", "heuristic"}}
                                .dump());
  const auto r = cli({"baseline", "--config", cfg.string(), "--data", small_csv(dir), "--alpha", "80", "--top-k",
                      "3", "--out", dir.path().string()});
  REQUIRE(r.code == kExitOk);
  const auto saved = nlohmann::json::parse(testutil::read_file(dir / "b" / "config.json"));
  CHECK(saved["proposer"] == "greedy");
  CHECK(saved["alpha"] == 0.0);
  CHECK(saved["top_k"] == 1);
}

TEST_CASE("report regenerates and rejects corrupt logs") {
  testutil::TempDir dir;
  const auto cfg = dir / "cfg.json";
  testutil::write_file(cfg, nlohmann::json{{"rounds", 1}, {"restarts", 1}, {"greedy_cap", 2}, {"run_id", "r"},
                                           {"proposer", "greedy"}, {"evaluator", "heuristic"}}
                                .dump());
  REQUIRE(cli({"discover", "--config", cfg.string(), "--data", small_csv(dir), "--out", dir.path().string()}).code ==
          kExitOk);
  const auto run = dir / "r";
  const auto before = testutil::read_file(run / "report.md");
  CHECK(cli({"report", run.string()}).code == kExitOk);
  CHECK(testutil::read_file(run / "report.md") == before);
  testutil::write_file(run / "rounds" / "r1" / "log.json", "[");
  CHECK(cli({"report", run.string()}).code == kExitCorruptLogs);
  CHECK(cli({"report", (dir / "missing").string()}).code == kExitConfig);
}

TEST_CASE("fit and evaluate print JSON for a single kernel") {
  testutil::TempDir dir;
  const auto data = small_csv(dir);
  const auto f = cli({"fit", "--data", data, "--model", "LIN + PER", "--restarts", "2"});
  REQUIRE(f.code == kExitOk);
  const auto fj = nlohmann::json::parse(f.out);
  CHECK(fj["kernel"] == "LIN + PER");
  CHECK(fj.contains("bic"));
  CHECK(fj.contains("rmse"));
  CHECK_FALSE(fj.contains("evaluator"));
  const auto e = cli({"evaluate", "--data", data, "--model", "SE", "--restarts", "1", "--evaluator", "heuristic",
                      "--out", dir.path().string()});
  REQUIRE(e.code == kExitOk);
  const auto ej = nlohmann::json::parse(e.out);
  CHECK(ej["resemblance"].get<double>() >= 0.0);
  CHECK(cli({"fit", "--data", data, "--model", "SE +"}).code == kExitConfig);
}

TEST_CASE("resolve_config layers file, overrides and output directory") {
  testutil::TempDir dir;
  const auto cfg = dir / "cfg.json";
  testutil::write_file(cfg, R"({"mode": "sr", "alpha": 3})");
  CliInvocation inv;
  inv.config_path = cfg.string();
  inv.overrides = {{"alpha", 7.0}};
  inv.out_dir = "elsewhere";
  const auto c = resolve_config(inv);
  CHECK(c.mode == RunMode::Sr);
  CHECK(c.rounds == 20);  // symbolic-regression default
  CHECK(c.alpha == 7.0);
  CHECK(c.out == "elsewhere");
  testutil::write_file(cfg, R"({"rounds": 0})");
  CHECK_THROWS_AS(resolve_config(inv), ConfigError);
}
