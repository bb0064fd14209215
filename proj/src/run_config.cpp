#include "modeldisc/run_config.hpp"

#include <fstream>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

std::string to_string(ProposerKind k) {
  switch (k) {
    case ProposerKind::Agent: return "agent";
    case ProposerKind::Greedy: return "greedy";
    case ProposerKind::Scripted: return "scripted";
  }
  return "agent";
}

std::string to_string(EvaluatorKind k) { return k == EvaluatorKind::Vlm ? "vlm" : "heuristic"; }
std::string to_string(RunMode k) { return k == RunMode::Gp ? "gp" : "sr"; }

std::string to_string(FixtureMode k) {
  switch (k) {
    case FixtureMode::Off: return "off";
    case FixtureMode::Replay: return "replay";
    case FixtureMode::Record: return "record";
  }
  return "off";
}

ProposerKind parse_proposer_kind(const std::string& s) {
  if (s == "agent") return ProposerKind::Agent;
  if (s == "greedy") return ProposerKind::Greedy;
  if (s == "scripted") return ProposerKind::Scripted;
  throw ConfigError("proposer must be agent, greedy or scripted, got '" + s + "'");
}

EvaluatorKind parse_evaluator_kind(const std::string& s) {
  if (s == "vlm") return EvaluatorKind::Vlm;
  if (s == "heuristic") return EvaluatorKind::Heuristic;
  throw ConfigError("evaluator must be vlm or heuristic, got '" + s + "'");
}

RunMode parse_run_mode(const std::string& s) {
  if (s == "gp") return RunMode::Gp;
  if (s == "sr") return RunMode::Sr;
  throw ConfigError("mode must be gp or sr, got '" + s + "'");
}

FixtureMode parse_fixture_mode(const std::string& s) {
  if (s == "off") return FixtureMode::Off;
  if (s == "replay") return FixtureMode::Replay;
  if (s == "record") return FixtureMode::Record;
  throw ConfigError("fixture_mode must be off, replay or record, got '" + s + "'");
}

std::string RunConfig::effective_run_id() const {
  return run_id.empty() ? to_string(mode) + "-seed" + std::to_string(seed) : run_id;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(rounds >= 1, "rounds must be >= 1");
  require(top_k >= 1, "top_k must be >= 1");
  require(restarts >= 1, "restarts must be >= 1");
  require(alpha >= 0.0 && alpha_sr >= 0.0, "alpha must be >= 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(test_fraction >= 0.0 && test_fraction < 1.0, "test_fraction must be in [0, 1)");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must be in [0, 1)");
  require(n_repeats >= 1, "n_repeats must be >= 1");
  require(max_agent_steps >= 0, "max_agent_steps must be >= 0");
  require(greedy_cap >= 0, "greedy_cap must be >= 0");
  require(grid_points >= 10, "grid_points must be >= 10");
  require(lambda_c >= 0.0, "lambda_c must be >= 0");
  require(sr_candidates >= 1, "sr_candidates must be >= 1");
  require(fixture_mode == FixtureMode::Off || !fixtures_dir.empty(),
          "fixture_mode needs fixtures_dir");
}

RunConfig default_config(RunMode mode) {
  RunConfig c;
  c.mode = mode;
  if (mode == RunMode::Sr) {
    c.rounds = 20;
    c.restarts = 5;
  }
  return c;
}

RunConfig apply_config_json(RunConfig c, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "data") c.data = get_as<std::string>(v, key);
    else if (key == "out") c.out = get_as<std::string>(v, key);
    else if (key == "run_id") c.run_id = get_as<std::string>(v, key);
    else if (key == "mode") c.mode = parse_run_mode(get_as<std::string>(v, key));
    else if (key == "rounds") c.rounds = get_as<int>(v, key);
    else if (key == "top_k") c.top_k = get_as<int>(v, key);
    else if (key == "alpha") c.alpha = get_as<double>(v, key);
    else if (key == "restarts") c.restarts = get_as<int>(v, key);
    else if (key == "proposer") c.proposer = parse_proposer_kind(get_as<std::string>(v, key));
    else if (key == "evaluator") c.evaluator = parse_evaluator_kind(get_as<std::string>(v, key));
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "gamma") c.gamma = get_as<double>(v, key);
    else if (key == "test_fraction") c.test_fraction = get_as<double>(v, key);
    else if (key == "val_fraction") c.val_fraction = get_as<double>(v, key);
    else if (key == "n_repeats") c.n_repeats = get_as<int>(v, key);
    else if (key == "max_agent_steps") c.max_agent_steps = get_as<int>(v, key);
    else if (key == "greedy_cap") c.greedy_cap = get_as<int>(v, key);
    else if (key == "grid_points") c.grid_points = get_as<int>(v, key);
    else if (key == "lambda_c") c.lambda_c = get_as<double>(v, key);
    else if (key == "alpha_sr") c.alpha_sr = get_as<double>(v, key);
    else if (key == "sr_candidates") c.sr_candidates = get_as<int>(v, key);
    else if (key == "fixtures_dir") c.fixtures_dir = get_as<std::string>(v, key);
    else if (key == "fixture_mode") c.fixture_mode = parse_fixture_mode(get_as<std::string>(v, key));
    else if (key == "prompts_dir") c.prompts_dir = get_as<std::string>(v, key);
    else if (key == "scripted_candidates")
      c.scripted_candidates = get_as<std::vector<std::vector<std::string>>>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  RunMode mode = RunMode::Gp;
  if (j.is_object() && j.contains("mode")) mode = parse_run_mode(get_as<std::string>(j["mode"], "mode"));
  return apply_config_json(default_config(mode), j);
}

json to_json(const RunConfig& c) {
  return json{{"data", c.data},
              {"out", c.out},
              {"run_id", c.effective_run_id()},
              {"mode", to_string(c.mode)},
              {"rounds", c.rounds},
              {"top_k", c.top_k},
              {"alpha", c.alpha},
              {"restarts", c.restarts},
              {"proposer", to_string(c.proposer)},
              {"evaluator", to_string(c.evaluator)},
              {"seed", c.seed},
              {"gamma", c.gamma},
              {"test_fraction", c.test_fraction},
              {"val_fraction", c.val_fraction},
              {"n_repeats", c.n_repeats},
              {"max_agent_steps", c.max_agent_steps},
              {"greedy_cap", c.greedy_cap},
              {"grid_points", c.grid_points},
              {"lambda_c", c.lambda_c},
              {"alpha_sr", c.alpha_sr},
              {"sr_candidates", c.sr_candidates},
              {"fixtures_dir", c.fixtures_dir},
              {"fixture_mode", to_string(c.fixture_mode)},
              {"prompts_dir", c.prompts_dir},
              {"scripted_candidates", c.scripted_candidates}};
}

}  // namespace modeldisc
