#include "modeldisc/cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>

#include "modeldisc/dataset.hpp"
#include "modeldisc/errors.hpp"
#include "modeldisc/evaluator.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/kernel_dsl.hpp"
#include "modeldisc/scoring.hpp"
#include "modeldisc/search.hpp"
#include "modeldisc/symreg.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

json read_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

Dataset load_dataset(const RunConfig& config) {
  if (config.data.empty()) throw ConfigError("no dataset given (set \"data\" or pass --data)");
  return standardize_and_split(load_csv(config.data), config.test_fraction, config.val_fraction);
}

fs::path run_dir_of(const RunConfig& config) { return fs::path(config.out) / config.effective_run_id(); }

std::string fmt_num(double v) { return std::isfinite(v) ? fmt::format("{:.6g}", v) : std::string("n/a"); }

/// Maps library exceptions onto the exit-code contract.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LoadError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "run aborted: " << e.what() << "\n";
    return kExitRunAbort;
  }
}

int run_gp(const RunConfig& config, std::ostream& out) {
  const auto ds = load_dataset(config);
  auto backend = BackendStack::for_config(config);
  const auto dir = run_dir_of(config);
  const auto result = run_discovery(config, ds, dir, backend.get());
  const auto rmse = rmse_point(result.best.model, ds, config.rounds);
  out << "best kernel: " << result.best.model.kernel_text() << "\n"
      << "vic: " << fmt_num(result.best.score.vic) << "\n"
      << "bic: " << fmt_num(result.best.score.bic) << "\n"
      << "train rmse (normalized): " << fmt_num(rmse.train) << "\n"
      << "test rmse (normalized): " << fmt_num(rmse.test) << "\n"
      << "run dir: " << dir.string() << "\n";
  return kExitOk;
}

int run_sr(const RunConfig& config, std::ostream& out) {
  const auto ds = load_dataset(config);
  auto backend = BackendStack::for_config(config);
  const auto dir = run_dir_of(config);
  const auto result = run_sr_discovery(config, ds, dir, backend.get());
  out << "best function: " << result.best.fitted.text() << "\n"
      << "combined: " << fmt_num(result.best.score.combined) << "\n"
      << "nmse (train): " << fmt_num(result.best.score.nmse) << "\n";
  if (!result.rmse_series.empty()) {
    out << "train rmse (normalized): " << fmt_num(result.rmse_series.back().train) << "\n"
        << "test rmse (normalized): " << fmt_num(result.rmse_series.back().test) << "\n";
  }
  out << "run dir: " << dir.string() << "\n";
  return kExitOk;
}

void require_model_text(const CliInvocation& inv) {
  if (inv.model_text.empty()) throw ConfigError(inv.subcommand + " needs --model");
}

}  // namespace

RunConfig resolve_config(const CliInvocation& inv) {
  json merged = inv.config_path.empty() ? json::object() : read_config_json(inv.config_path);
  if (!merged.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [k, v] : inv.overrides.items()) merged[k] = v;
  if (!inv.out_dir.empty()) merged["out"] = inv.out_dir;
  RunMode mode = RunMode::Gp;
  if (merged.contains("mode")) {
    if (!merged["mode"].is_string()) throw ConfigError("mode must be a string");
    mode = parse_run_mode(merged["mode"].get<std::string>());
  }
  auto config = apply_config_json(default_config(mode), merged);
  config.validate();
  return config;
}

BackendStack BackendStack::for_config(const RunConfig& config) {
  BackendStack s;
  const bool needed = config.proposer == ProposerKind::Agent || config.evaluator == EvaluatorKind::Vlm;
  if (!needed) return s;
  if (config.fixture_mode == FixtureMode::Replay) {
    if (config.fixtures_dir.empty()) throw ConfigError("fixture replay needs fixtures_dir");
    s.fixture_ = std::make_unique<FixtureBackend>(config.fixtures_dir, FixtureBackend::Mode::Replay);
    s.top_ = s.fixture_.get();
    return s;
  }
  auto endpoint = ModelEndpoint::from_env();
  if (endpoint.api_key.empty()) {
    throw ConfigError("MODEL_API_KEY is unset; use --evaluator heuristic with a non-agent proposer, or fixture replay");
  }
  s.client_ = std::make_unique<VlmClient>(std::move(endpoint));
  s.top_ = s.client_.get();
  if (config.fixture_mode == FixtureMode::Record) {
    if (config.fixtures_dir.empty()) throw ConfigError("fixture recording needs fixtures_dir");
    s.fixture_ = std::make_unique<FixtureBackend>(config.fixtures_dir, FixtureBackend::Mode::Record, s.top_);
    s.top_ = s.fixture_.get();
  }
  return s;
}

int cmd_discover(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = resolve_config(inv);
    return config.mode == RunMode::Sr ? run_sr(config, out) : run_gp(config, out);
  });
}

int cmd_sr(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto forced = inv;
    if (!forced.overrides.contains("mode")) forced.overrides["mode"] = "sr";
    const auto config = resolve_config(forced);
    if (config.mode != RunMode::Sr) throw ConfigError("the sr command runs in sr mode only");
    return run_sr(config, out);
  });
}

int cmd_baseline(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto forced = inv;
    forced.overrides["proposer"] = "greedy";
    forced.overrides["alpha"] = 0.0;
    forced.overrides["top_k"] = 1;
    const auto config = resolve_config(forced);
    if (config.mode != RunMode::Gp) throw ConfigError("the baseline searches kernels; drop --mode sr");
    return run_gp(config, out);
  });
}

int cmd_fit(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_model_text(inv);
    const auto config = resolve_config(inv);
    const auto ds = load_dataset(config);
    if (config.mode == RunMode::Sr) {
      const auto expr = parse_function(inv.model_text);
      const auto key = function_text(expr);
      const auto f = fit_function(expr, ds, config.restarts, candidate_seed(config.seed, key));
      const auto s = sr_objective(f, ds, config.lambda_c, 0.0, config.alpha_sr);
      out << json{{"function", f.text()}, {"coefficients", f.coefs}, {"rss", f.rss}, {"nmse", s.nmse},
                  {"complexity", s.complexity}, {"objective", s.objective}}
                 .dump(2)
          << "\n";
      return kExitOk;
    }
    const auto expr = parse_kernel(inv.model_text);
    const auto key = canonical_text(expr);
    PoolEntry e;
    e.model = fit(expr, ds, config.restarts, std::nullopt, candidate_seed(config.seed, key));
    e.n_train = static_cast<int>(ds.train_idx.size());
    const auto b = bic(e.model.train_loglik, static_cast<int>(param_schema(expr).k_kernel()) + 1, e.n_train);
    e.score = make_score_record(b, 0.0, 0.0, 0.0, 0.0, 0);
    auto j = entry_to_json(e);
    for (const char* k : {"evaluator", "alpha", "vic", "round_created", "provenance", "plots", "transcript"}) j.erase(k);
    const auto rmse = rmse_point(e.model, ds, 0);
    j["rmse"] = {{"train", rmse.train}, {"test", rmse.test}};
    out << j.dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_evaluate(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_model_text(inv);
    auto config = resolve_config(inv);
    config.proposer = ProposerKind::Greedy;  // no proposals are made here
    const auto ds = load_dataset(config);
    auto backend = BackendStack::for_config(config);
    EvaluateOptions opt;
    opt.n_repeats = config.n_repeats;
    opt.grid_points = config.grid_points;
    if (!config.prompts_dir.empty()) opt.prompts_dir = config.prompts_dir;
    opt.plots_dir = run_dir_of(config) / "plots";
    opt.plot_name = "evaluate";
    EvaluatorReport report;
    std::string text;
    if (config.mode == RunMode::Sr) {
      const auto expr = parse_function(inv.model_text);
      text = function_text(expr);
      const auto f = fit_function(expr, ds, config.restarts, candidate_seed(config.seed, text));
      const auto view = function_view(f, ds, config.grid_points);
      if (backend.get() && config.evaluator == EvaluatorKind::Vlm) {
        opt.prompt_set = sr_prompt_set();
        report = evaluate_view(view, text, *backend.get(), opt);
      } else {
        report = heuristic_evaluate(view);
      }
    } else {
      const auto expr = parse_kernel(inv.model_text);
      text = canonical_text(expr);
      const auto model = fit(expr, ds, config.restarts, std::nullopt, candidate_seed(config.seed, text));
      ChatBackend* b = config.evaluator == EvaluatorKind::Vlm ? backend.get() : nullptr;
      report = evaluate(model, ds, b, opt);
    }
    out << json{{"model", text},
                {"resemblance", report.fitness_mean_resemblance},
                {"uncertainty", report.fitness_uncertainty},
                {"generalizability", report.generalizability},
                {"total", report.total()},
                {"backend", report.backend == EvaluatorBackendKind::Vlm ? "vlm" : "heuristic"}}
               .dump(2)
        << "\n";
    return kExitOk;
  });
}

int cmd_report(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.run_dir.empty()) {
    err << "config error: report needs a run directory\n";
    return kExitConfig;
  }
  if (!std::filesystem::is_directory(inv.run_dir)) {
    err << "config error: no run directory at " << inv.run_dir << "\n";
    return kExitConfig;
  }
  try {
    out << write_report(inv.run_dir).string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "corrupt run logs: " << e.what() << "\n";
    return kExitCorruptLogs;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel and function discovery with plot-based evaluation"};
  app.require_subcommand(1);
  CliInvocation inv;

  std::optional<std::string> data, proposer, evaluator, mode;
  std::optional<int> rounds, top_k, restarts;
  std::optional<double> alpha, gamma;
  std::optional<std::uint64_t> seed;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON config file");
    sub->add_option("--data", data, "two-column CSV");
    sub->add_option("--out", inv.out_dir, "output root");
    sub->add_option("--rounds", rounds);
    sub->add_option("--top-k", top_k);
    sub->add_option("--alpha", alpha);
    sub->add_option("--restarts", restarts);
    sub->add_option("--proposer", proposer)->check(CLI::IsMember({"agent", "greedy", "scripted"}));
    sub->add_option("--evaluator", evaluator)->check(CLI::IsMember({"vlm", "heuristic"}));
    sub->add_option("--seed", seed);
    sub->add_option("--gamma", gamma);
    sub->add_option("--mode", mode)->check(CLI::IsMember({"gp", "sr"}));
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"discover", "run a discovery"},
           {"sr", "run symbolic-regression discovery"},
           {"baseline", "greedy search with BIC-only top-1 selection"},
           {"fit", "fit one model on the training partition"},
           {"evaluate", "fit one model and score its plots"}}) {
    subs[name] = app.add_subcommand(name, help);
    add_run_flags(subs[name]);
  }
  for (const auto& name : {"fit", "evaluate"}) {
    subs[name]->add_option("--model", inv.model_text, "kernel text, or function text in sr mode")->required();
  }
  auto* report = app.add_subcommand("report", "regenerate report.md from a run directory");
  report->add_option("run_dir", inv.run_dir, "run directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (data) inv.overrides["data"] = *data;
  if (rounds) inv.overrides["rounds"] = *rounds;
  if (top_k) inv.overrides["top_k"] = *top_k;
  if (alpha) inv.overrides["alpha"] = *alpha;
  if (restarts) inv.overrides["restarts"] = *restarts;
  if (proposer) inv.overrides["proposer"] = *proposer;
  if (evaluator) inv.overrides["evaluator"] = *evaluator;
  if (seed) inv.overrides["seed"] = *seed;
  if (gamma) inv.overrides["gamma"] = *gamma;
  if (mode) inv.overrides["mode"] = *mode;

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    inv.subcommand = name;
    if (name == "discover") return cmd_discover(inv, out, err);
    if (name == "sr") return cmd_sr(inv, out, err);
    if (name == "baseline") return cmd_baseline(inv, out, err);
    if (name == "fit") return cmd_fit(inv, out, err);
    return cmd_evaluate(inv, out, err);
  }
  inv.subcommand = "report";
  return cmd_report(inv, out, err);
}

}  // namespace modeldisc
