#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace modeldisc {

enum class ProposerKind { Agent, Greedy, Scripted };
enum class EvaluatorKind { Vlm, Heuristic };
enum class RunMode { Gp, Sr };
enum class FixtureMode { Off, Replay, Record };

/// Effective settings of one run. Every field maps to a config-file key of
/// the same name (see docs/config.md).
struct RunConfig {
  std::string data;
  std::string out = "out";
  std::string run_id;  // empty: "{mode}-seed{seed}"
  RunMode mode = RunMode::Gp;
  int rounds = 5;      // sr default: 20
  int top_k = 3;
  double alpha = 50.0;
  int restarts = 10;   // sr default: 5
  ProposerKind proposer = ProposerKind::Agent;
  EvaluatorKind evaluator = EvaluatorKind::Vlm;
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  int n_repeats = 2;
  int max_agent_steps = 10;
  int greedy_cap = 0;  // 0: every neighbor
  int grid_points = 300;
  double lambda_c = 1e-3;
  double alpha_sr = 0.05;
  int sr_candidates = 5;
  std::string fixtures_dir;
  FixtureMode fixture_mode = FixtureMode::Off;
  std::string prompts_dir;
  /// Per-round candidate texts for the scripted proposer.
  std::vector<std::vector<std::string>> scripted_candidates;

  std::string effective_run_id() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Defaults for `mode` (rounds and restarts differ between gp and sr).
RunConfig default_config(RunMode mode);

/// Applies the keys of `j` onto `base`. Unknown keys and ill-typed values
/// throw ConfigError.
RunConfig apply_config_json(RunConfig base, const nlohmann::json& j);

/// Reads a JSON config file. A `mode` key selects the defaults first.
RunConfig load_config_file(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

std::string to_string(ProposerKind k);
std::string to_string(EvaluatorKind k);
std::string to_string(RunMode k);
std::string to_string(FixtureMode k);
ProposerKind parse_proposer_kind(const std::string& s);
EvaluatorKind parse_evaluator_kind(const std::string& s);
RunMode parse_run_mode(const std::string& s);
FixtureMode parse_fixture_mode(const std::string& s);

}  // namespace modeldisc
