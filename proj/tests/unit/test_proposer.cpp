#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "modeldisc/errors.hpp"
#include "modeldisc/proposer.hpp"
#include "test_util.hpp"

using namespace modeldisc;

namespace {

std::vector<std::string> texts(const std::vector<Candidate>& v) {
  std::vector<std::string> out;
  for (const auto& c : v) out.push_back(canonical_text(c.expr));
  return out;
}

Dataset wave_dataset(int n = 60) {
  return standardize_and_split(testutil::linear_plus_periodic(n, 3), 0.2, 0.0);
}

}  // namespace

// ---- parsing -------------------------------------------------------------------

TEST_CASE("a proposal list yields canonical candidates") {
  const auto a = parse_agent_reply("Looks periodic.\nnext kernels: [\"LIN + PER\", \"SE * PER\"]");
  REQUIRE(a.kind == ActionKind::Propose);
  CHECK(texts(a.candidates) == std::vector<std::string>{"LIN + PER", "PER * SE"});
}

TEST_CASE("python literals and bare items are accepted") {
  CHECK(parse_agent_reply("Next kernels: ['PER', 'SE']").candidates.size() == 2);
  CHECK(parse_agent_reply("next kernels: [LIN + PER, SE]").candidates.size() == 2);
}

TEST_CASE("tool blocks are executions and prose is analysis") {
  const auto exec = parse_agent_reply(
      "Let me look.\n```tool\n{\"name\": \"periodogram\", \"args\": {\"target\": \"data\"}}\n```");
  REQUIRE(exec.kind == ActionKind::Execute);
  CHECK(exec.tool_name == "periodogram");
  CHECK(exec.args["target"] == "data");
  const auto kv = parse_agent_reply("```tool\nresidual_stats\nkernel=SE\n```");
  REQUIRE(kv.kind == ActionKind::Execute);
  CHECK(kv.tool_name == "residual_stats");
  CHECK(kv.args["kernel"] == "SE");
  CHECK(parse_agent_reply("The residuals look seasonal.").kind == ActionKind::Analyze);
}

TEST_CASE("initial values attach to candidates by label") {
  const auto a = parse_agent_reply("next kernels: [\"LIN + PER; init: PER.period=0.1\"]");
  REQUIRE(a.candidates.size() == 1);
  REQUIRE(a.candidates[0].init.has_value());
  CHECK_FALSE(a.candidates[0].init->empty());
  const auto unknown = parse_agent_reply("next kernels: [\"SE; init: PER.period=0.1\"]");
  CHECK_FALSE(unknown.candidates[0].init.has_value());
  CHECK_FALSE(unknown.warnings.empty());
}

TEST_CASE("long proposal lists are truncated with a warning") {
  const auto a = parse_agent_reply("next kernels: [\"SE\", \"PER\", \"LIN\", \"C\", \"WN\", \"SE + PER\", \"SE * LIN\"]");
  CHECK(a.candidates.size() == kMaxProposals);
  CHECK(a.warnings.size() == 1);
}

TEST_CASE("malformed proposals raise ParseError") {
  CHECK_THROWS_AS(parse_agent_reply("next kernels: []"), ParseError);
  CHECK_THROWS_AS(parse_agent_reply("next kernels: SE, PER"), ParseError);
  CHECK_THROWS_AS(parse_agent_reply("next kernels: [\"SE + \"]"), ParseError);
  CHECK_THROWS_AS(parse_agent_reply("next kernels: [\"SE\", \"PER\""), ParseError);
}

// ---- greedy --------------------------------------------------------------------

TEST_CASE("greedy proposals are the neighbor set, optionally capped") {
  const auto all = greedy_propose(KernelExpr::leaf(BaseKind::SE));
  CHECK(all.size() == 14);
  const auto capped = greedy_propose(KernelExpr::leaf(BaseKind::SE), 6);
  REQUIRE(capped.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(capped[i] == all[i]);
}

// ---- tools ---------------------------------------------------------------------

TEST_CASE("periodogram recovers a monthly period") {
  std::vector<double> x(144), y(144);
  for (int i = 0; i < 144; ++i) {
    x[i] = i / 144.0 * 12.0;  // twelve units, period one unit
    y[i] = std::sin(2.0 * std::numbers::pi * x[i]);
  }
  const auto p = periodogram(y, x);
  REQUIRE_FALSE(p.peaks.empty());
  CHECK(p.peaks[0].period == doctest::Approx(1.0).epsilon(0.05));
  CHECK(p.dominant);
  // expressed on a 0..1 axis the same series has period 1/12
  for (auto& v : x) v /= 12.0;
  CHECK(periodogram(y, x).peaks[0].period == doctest::Approx(1.0 / 12.0).epsilon(0.05));
}

TEST_CASE("white noise has no dominant period") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(200), y(200);
  for (int i = 0; i < 200; ++i) {
    x[i] = i;
    y[i] = g(rng);
  }
  CHECK_FALSE(periodogram(y, x).dominant);
}

TEST_CASE("degenerate periodogram inputs are tool errors") {
  std::vector<double> x(20), c(20, 3.0);
  for (int i = 0; i < 20; ++i) x[i] = i;
  CHECK_THROWS_AS(periodogram(c, x), ToolError);
  const std::vector<double> short_x{0, 1, 2, 3, 4}, short_y{1, 0, 1, 0, 1};
  CHECK_THROWS_AS(periodogram(short_y, short_x), ToolError);
}

TEST_CASE("residual statistics") {
  std::vector<double> x(100), r(100, 0.0);
  for (int i = 0; i < 100; ++i) x[i] = i / 99.0;
  const auto flat = residual_summary(x, r, "perfect", {}, "r");
  CHECK(flat.text.find("sd = 0") != std::string::npos);
  for (int i = 0; i < 100; ++i) r[i] = std::sin(2.0 * std::numbers::pi * x[i] * 2.0);
  const auto smooth = residual_summary(x, r, "sine", {}, "r");
  const auto pos = smooth.text.find("lag1_autocorrelation = ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(smooth.text.substr(pos + 23)) > 0.5);
  CHECK(smooth.text.size() <= kMaxToolTextBytes);
  CHECK(smooth.plots.size() == 1);
}

TEST_CASE("tool text is clipped to the byte budget") {
  const auto clipped = clip_tool_text(std::string(10000, 'a'));
  CHECK(clipped.size() <= kMaxToolTextBytes);
  CHECK(clip_tool_text("short") == "short");
}

TEST_CASE("kernel tools validate their arguments") {
  const auto ds = wave_dataset();
  const auto m = fit(parse_kernel("SE"), ds, 1, std::nullopt, 1);
  CHECK_FALSE(run_kernel_tool("describe_params", nlohmann::json::object(), {m}, ds, {}, "t").text.empty());
  CHECK(run_kernel_tool("render_data_plot", nlohmann::json::object(), {m}, ds, {}, "t").plots.size() == 1);
  CHECK_THROWS_AS(run_kernel_tool("describe_params", {{"kernel", "PER"}}, {m}, ds, {}, "t"), ToolError);
  CHECK_THROWS_AS(run_kernel_tool("summon", nlohmann::json::object(), {m}, ds, {}, "t"), ToolError);
  CHECK_THROWS_AS(run_kernel_tool("periodogram", {{"target", "noise"}}, {m}, ds, {}, "t"), ToolError);
}

// ---- agent session --------------------------------------------------------------

namespace {

AgentSpec echo_spec(int max_steps) {
  AgentSpec spec;
  spec.seed.push_back({Role::User, "start", {}});
  spec.max_steps = max_steps;
  spec.run_tool = [](const std::string& name, const nlohmann::json&) -> ToolResult {
    if (name == "broken") throw ToolError("no data");
    return {"ok from " + name, {}};
  };
  return spec;
}

}  // namespace

TEST_CASE("an immediate proposal takes one step") {
  ScriptedBackend backend({"next kernels: [\"PER\"]"});
  const auto t = run_agent_session(backend, echo_spec(10));
  REQUIRE(t.proposal.has_value());
  CHECK(t.steps == 1);
  CHECK(t.stop_reason == "proposed");
}

TEST_CASE("context grows with every turn and tool errors become observations") {
  ScriptedBackend backend({"thinking", "```tool\n{\"name\": \"broken\", \"args\": {}}\n```",
                           "```tool\n{\"name\": \"periodogram\", \"args\": {}}\n```", "next kernels: [\"SE\"]"});
  const auto t = run_agent_session(backend, echo_spec(10));
  CHECK(t.steps == 4);
  const auto received = backend.received();
  REQUIRE(received.size() == 4);
  for (std::size_t i = 1; i < received.size(); ++i) CHECK(received[i].size() == received[i - 1].size() + 2);
  CHECK(received[2].back().text.find("broken failed") != std::string::npos);
  CHECK(received[3].back().text.find("ok from periodogram") != std::string::npos);
}

TEST_CASE("the step budget and parse strikes end a session without a proposal") {
  ScriptedBackend chatty([](std::span<const ChatMessage>, double) { return std::string("hmm"); });
  const auto budget = run_agent_session(chatty, echo_spec(4));
  CHECK_FALSE(budget.proposal.has_value());
  CHECK(budget.steps == 4);
  CHECK(budget.stop_reason == "budget");

  ScriptedBackend garbage([](std::span<const ChatMessage>, double) { return std::string("next kernels: []"); });
  const auto strikes = run_agent_session(garbage, echo_spec(10));
  CHECK_FALSE(strikes.proposal.has_value());
  CHECK(strikes.steps == kParseStrikes);
  CHECK(strikes.stop_reason == "strikes");
}

TEST_CASE("the agent loop falls back to greedy neighbors") {
  const auto ds = wave_dataset();
  const auto m = fit(parse_kernel("SE"), ds, 1, std::nullopt, 1);
  ScriptedBackend garbage([](std::span<const ChatMessage>, double) { return std::string("next kernels: [FOO]"); });
  AgentLoopOptions opt;
  opt.greedy_cap = 5;
  const auto r = run_agent_loop(garbage, {m}, ds, opt);
  CHECK(r.fell_back);
  CHECK(r.candidates.size() == 5);
  CHECK(r.stop_reason == "strikes");

  ScriptedBackend good({"```tool\nperiodogram\ntarget=data\n```", "next kernels: [\"LIN + PER\"]"});
  const auto ok = run_agent_loop(good, {m}, ds, opt);
  CHECK_FALSE(ok.fell_back);
  CHECK(ok.steps == 2);
  REQUIRE(ok.candidates.size() == 1);
  CHECK(canonical_text(ok.candidates[0].expr) == "LIN + PER");
  // seed carries a system prompt and a task with the data plot
  const auto first = good.received().front();
  REQUIRE(first.size() == 2);
  CHECK(first[0].role == Role::System);
  CHECK(first[1].images.size() == 1);
}
