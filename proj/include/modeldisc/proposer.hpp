#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modeldisc/dataset.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/plotting.hpp"
#include "modeldisc/scoring.hpp"
#include "modeldisc/vlm_client.hpp"

namespace modeldisc {

inline constexpr int kDefaultMaxAgentSteps = 10;
inline constexpr std::size_t kMaxProposals = 6;
inline constexpr std::size_t kMaxToolTextBytes = 4096;
inline constexpr int kParseStrikes = 3;

/// One entry of a proposal list: the model text and optional starting values
/// keyed by parameter label (e.g. "PER.period").
struct ProposalItem {
  std::string text;
  std::map<std::string, double> init_labels;
};

struct Candidate {
  KernelExpr expr = KernelExpr::leaf(BaseKind::WN);
  std::optional<InitSuggestion> init;
};

enum class ActionKind { Analyze, Execute, Propose };

struct AgentAction {
  ActionKind kind = ActionKind::Analyze;
  std::string text;               // full reply
  std::string tool_name;          // Execute
  nlohmann::json args = nlohmann::json::object();
  std::vector<ProposalItem> items;  // Propose, raw
  std::vector<Candidate> candidates;  // Propose, kernels only
  std::vector<std::string> warnings;
};

/// Classifies a reply without interpreting proposal texts. A fenced block
/// tagged `tool` wins over a proposal marker (`next kernels:` or
/// `next functions:`); anything else is Analyze. Throws ParseError for a
/// malformed tool block or proposal list.
AgentAction parse_agent_action(const std::string& reply);

/// parse_agent_action plus kernel parsing of every proposed item. Init labels
/// absent from a candidate's schema are dropped with a warning. Throws
/// ParseError when any proposed kernel text is invalid.
AgentAction parse_agent_reply(const std::string& reply);

struct ToolResult {
  std::string text;  // at most kMaxToolTextBytes
  std::vector<RenderedPlot> plots;
};

/// Residuals of the posterior mean at the training inputs.
ToolResult tool_residual_stats(const FittedModel& model, const Dataset& dataset,
                               const std::filesystem::path& plots_dir = {},
                               const std::string& plot_name = "residuals");
ToolResult residual_summary(std::span<const double> x, std::span<const double> residuals,
                            const std::string& label, const std::filesystem::path& plots_dir,
                            const std::string& plot_name);

struct PeriodogramPeak {
  double period;
  double power;
};

struct PeriodogramSummary {
  std::vector<PeriodogramPeak> peaks;  // strongest first, at most 3
  double peak_to_median = 0.0;         // on the smoothed Fourier-frequency spectrum
  bool dominant = false;
  std::vector<double> periods;  // full oversampled spectrum
  std::vector<double> powers;
};

/// Linear-detrended periodogram on an oversampled frequency grid; accepts
/// uneven spacing. Throws ToolError for fewer than 8 points or a constant
/// series.
PeriodogramSummary periodogram(std::span<const double> series, std::span<const double> x);

ToolResult tool_periodogram(std::span<const double> series, std::span<const double> x,
                            const std::filesystem::path& plots_dir = {},
                            const std::string& plot_name = "periodogram");

/// Canonical neighbors of the incumbent in sorted order, truncated to `cap`
/// (0 keeps all).
std::vector<KernelExpr> greedy_propose(const KernelExpr& incumbent, std::size_t cap = 0);

/// Generic action loop shared by the kernel and function proposers.
struct AgentSpec {
  std::vector<ChatMessage> seed;
  /// Runs a registered tool; throws ToolError for unknown names or bad args.
  std::function<ToolResult(const std::string& name, const nlohmann::json& args)> run_tool;
  /// Interprets a reply; throws ParseError to record a strike.
  std::function<AgentAction(const std::string& reply)> parse = parse_agent_reply;
  int max_steps = kDefaultMaxAgentSteps;
  double temperature = kProposerTemperature;
};

struct AgentTrace {
  std::optional<AgentAction> proposal;
  int steps = 0;
  std::string stop_reason;  // proposed, strikes, budget, backend
  std::vector<ChatMessage> context;
  std::vector<std::string> transcript;  // human-readable log of the context
};

AgentTrace run_agent_session(ChatBackend& client, const AgentSpec& spec);

struct AgentLoopOptions {
  int max_steps = kDefaultMaxAgentSteps;
  std::size_t greedy_cap = 0;
  std::filesystem::path prompts_dir;  // empty: default_prompts_dir()
  std::filesystem::path plots_dir;    // empty: tool plots stay in memory
  std::string plot_prefix = "agent";
  /// Optional scores parallel to the reference models, shown in the prompt.
  std::vector<ScoreRecord> scores;
};

struct AgentLoopResult {
  std::vector<Candidate> candidates;
  int steps = 0;
  bool fell_back = false;
  std::string stop_reason;
  std::vector<std::string> transcript;
};

/// Runs the analyzer on the reference models (best first). Falls back to
/// greedy_propose of the first reference when the budget is spent, the
/// backend fails, or three consecutive replies cannot be parsed.
AgentLoopResult run_agent_loop(ChatBackend& client, const std::vector<FittedModel>& pool_models,
                               const Dataset& dataset, const AgentLoopOptions& options = {});

/// Tool registry over a dataset and a set of fitted models (first = incumbent).
ToolResult run_kernel_tool(const std::string& name, const nlohmann::json& args,
                           const std::vector<FittedModel>& models, const Dataset& dataset,
                           const std::filesystem::path& plots_dir, const std::string& plot_name);

/// Clips text to the tool-output size bound on a UTF-8 boundary.
std::string clip_tool_text(std::string text);

}  // namespace modeldisc
