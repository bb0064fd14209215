#include "modeldisc/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/gp_core.hpp"
#include "modeldisc/hashing.hpp"
#include "modeldisc/plotting.hpp"
#include "modeldisc/proposer.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw RunError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunError("cannot read " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw RunError(path.string() + " is not valid JSON");
  return j;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (truth.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(truth.size()));
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& v) {
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

json rmse_to_json(const RmsePoint& p) {
  return {{"round", p.round},
          {"kernel", p.kernel},
          {"train", number_or_null(p.train)},
          {"val", number_or_null(p.val)},
          {"test", number_or_null(p.test)}};
}

std::vector<fs::path> round_logs(const fs::path& run_dir) {
  std::vector<std::pair<int, fs::path>> found;
  const auto rounds_dir = run_dir / "rounds";
  if (!fs::is_directory(rounds_dir)) throw RunError("no rounds directory in " + run_dir.string());
  for (const auto& d : fs::directory_iterator(rounds_dir)) {
    const auto name = d.path().filename().string();
    if (!d.is_directory() || name.size() < 2 || name[0] != 'r') continue;
    try {
      std::size_t used = 0;
      const int r = std::stoi(name.substr(1), &used);
      if (used + 1 != name.size()) continue;
      found.emplace_back(r, d.path() / "log.json");
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (found[i].first != static_cast<int>(i) + 1) {
      throw RunError("round logs are not contiguous at r" + std::to_string(i + 1));
    }
    out.push_back(found[i].second);
  }
  if (out.empty()) throw RunError("no round logs in " + rounds_dir.string());
  return out;
}

std::vector<Candidate> scripted_round(const RunConfig& config, int round) {
  if (round - 1 >= static_cast<int>(config.scripted_candidates.size())) return {};
  const auto& texts = config.scripted_candidates[round - 1];
  if (texts.empty()) return {};
  return parse_agent_reply("next kernels: " + json(texts).dump()).candidates;
}

}  // namespace

bool ModelPool::insert(PoolEntry entry) {
  const auto key = entry.model.kernel_text();
  if (contains(key)) return false;
  index_[key] = entries_.size();
  entries_.push_back(std::move(entry));
  return true;
}

const PoolEntry* ModelPool::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

double selection_score(const PoolEntry& e, double gamma, int current_round) {
  return e.score.vic - gamma * static_cast<double>(current_round - e.model.round_created);
}

std::vector<const PoolEntry*> ranked(const ModelPool& pool, double gamma, int current_round) {
  std::vector<const PoolEntry*> out;
  for (const auto& e : pool.entries()) out.push_back(&e);
  std::sort(out.begin(), out.end(), [&](const PoolEntry* a, const PoolEntry* b) {
    const double sa = selection_score(*a, gamma, current_round);
    const double sb = selection_score(*b, gamma, current_round);
    if (sa != sb) return sa > sb;
    if (a->model.round_created != b->model.round_created) {
      return a->model.round_created > b->model.round_created;
    }
    return a->model.kernel_text() < b->model.kernel_text();
  });
  return out;
}

const PoolEntry& select_best(const ModelPool& pool, double gamma, int current_round) {
  if (pool.empty()) throw Error("select_best on an empty pool");
  return *ranked(pool, gamma, current_round).front();
}

std::uint64_t candidate_seed(std::uint64_t run_seed, const std::string& key) {
  const auto digest = sha256_hex(key);
  return restart_seed(run_seed, std::stoull(digest.substr(0, 15), nullptr, 16));
}

RmsePoint rmse_point(const FittedModel& model, const Dataset& ds, int round) {
  const auto tx = ds.train_x();
  const auto ty = ds.train_y();
  auto predict = [&](const std::vector<double>& x) {
    if (x.empty()) return std::vector<double>{};
    return posterior_predict(model.expr, model.params, tx, ty, x).mean;
  };
  RmsePoint p;
  p.round = round;
  p.kernel = model.kernel_text();
  p.train = rmse(predict(tx), ty);
  p.val = rmse(predict(ds.val_x()), ds.val_y());
  p.test = rmse(predict(ds.test_x()), ds.test_y());
  return p;
}

json entry_to_json(const PoolEntry& e) {
  const auto schema = param_schema(e.model.expr);
  const auto nat = natural_values(schema, e.model.params);
  json params = json::object();
  for (std::size_t i = 0; i < schema.params.size(); ++i) params[schema.params[i].label()] = nat[i];
  params["noise_variance"] = nat.back();
  json ev{{"resemblance", e.report.fitness_mean_resemblance},
          {"uncertainty", e.report.fitness_uncertainty},
          {"generalizability", e.report.generalizability},
          {"total", e.score.evaluator_total},
          {"backend", e.report.backend == EvaluatorBackendKind::Vlm ? "vlm" : "heuristic"},
          {"n_repeats", e.report.n_repeats},
          {"failed", e.score.evaluation_failed}};
  if (!e.report.raw_replies.empty()) ev["raw_replies"] = e.report.raw_replies;
  return json{{"kernel", e.model.kernel_text()},
              {"params", params},
              {"params_opt", e.model.params.values},
              {"train_loglik", e.model.train_loglik},
              {"n_params", static_cast<int>(schema.k_kernel()) + 1},
              {"n_train", e.n_train},
              {"bic", e.score.bic},
              {"evaluator", ev},
              {"alpha", e.score.alpha},
              {"vic", e.score.vic},
              {"round_created", e.model.round_created},
              {"provenance", e.model.provenance},
              {"converged", e.model.converged},
              {"plots", e.plot_files},
              {"transcript", e.transcript_ref}};
}

fs::path write_round_log(const RoundRecord& record, const ModelPool& pool, const PoolEntry* best,
                         const std::vector<RmsePoint>& rmse_series, const fs::path& run_dir, double gamma) {
  json candidates = json::array();
  for (const auto& key : record.pooled_keys) {
    const auto* e = pool.find(key);
    if (!e) throw RunError("round log references a kernel missing from the pool: " + key);
    candidates.push_back(entry_to_json(*e));
  }
  json skipped = json::array();
  for (const auto& o : record.outcomes) {
    if (o.status == "pooled") continue;
    skipped.push_back({{"kernel", o.kernel}, {"status", o.status}, {"message", o.message}});
  }
  json series = json::array();
  for (const auto& p : rmse_series) series.push_back(rmse_to_json(p));
  json best_j = nullptr;
  if (best) {
    best_j = {{"text", best->model.kernel_text()},
              {"selection_score", selection_score(*best, gamma, record.round)},
              {"vic", best->score.vic},
              {"bic", best->score.bic},
              {"evaluator_total", best->score.evaluator_total},
              {"round_created", best->model.round_created}};
  }
  const json log{{"mode", "gp"},
                 {"round", record.round},
                 {"timestamp", utc_timestamp()},
                 {"proposer", {{"kind", record.proposer},
                               {"fell_back", record.fell_back},
                               {"agent_steps", record.agent_steps},
                               {"references", record.references}}},
                 {"transcript", record.transcript_ref},
                 {"candidates", candidates},
                 {"skipped", skipped},
                 {"pool_size", pool.size()},
                 {"best", best_j},
                 {"rmse_series", series}};
  const auto path = run_dir / "rounds" / ("r" + std::to_string(record.round)) / "log.json";
  write_text(path, log.dump(2) + "\n");
  return path;
}

ModelPool replay_pool(const fs::path& run_dir) {
  ModelPool pool;
  for (const auto& path : round_logs(run_dir)) {
    const auto log = read_json(path);
    try {
      for (const auto& c : log.at("candidates")) {
        PoolEntry e;
        e.model.expr = canonicalize(parse_kernel(c.at("kernel").get<std::string>()));
        e.model.params.values = c.at("params_opt").get<std::vector<double>>();
        validate_params(param_schema(e.model.expr), e.model.params);
        e.model.train_loglik = c.at("train_loglik").get<double>();
        e.model.round_created = c.at("round_created").get<int>();
        e.model.provenance = c.at("provenance").get<std::string>();
        e.model.converged = c.at("converged").get<bool>();
        const auto& ev = c.at("evaluator");
        e.report.fitness_mean_resemblance = ev.at("resemblance").get<double>();
        e.report.fitness_uncertainty = ev.at("uncertainty").get<double>();
        e.report.generalizability = ev.at("generalizability").get<double>();
        e.report.n_repeats = ev.at("n_repeats").get<int>();
        e.report.backend = ev.at("backend").get<std::string>() == "vlm" ? EvaluatorBackendKind::Vlm
                                                                        : EvaluatorBackendKind::Heuristic;
        if (ev.contains("raw_replies")) e.report.raw_replies = ev["raw_replies"].get<std::vector<std::string>>();
        const int n_train = c.at("n_train").get<int>();
        e.n_train = n_train;
        const double b = bic(e.model.train_loglik, c.at("n_params").get<int>(), n_train);
        e.score = make_score_record(b, e.report.fitness_mean_resemblance, e.report.fitness_uncertainty,
                                    e.report.generalizability, c.at("alpha").get<double>(),
                                    e.model.round_created);
        e.score.evaluation_failed = ev.at("failed").get<bool>();
        e.plot_files = c.at("plots").get<std::vector<std::string>>();
        e.transcript_ref = c.at("transcript").get<std::string>();
        pool.insert(std::move(e));
      }
    } catch (const json::exception& e) {
      throw RunError(path.string() + ": malformed candidate record: " + e.what());
    } catch (const ParseError& e) {
      throw RunError(path.string() + ": bad kernel text: " + e.what());
    } catch (const RunError&) {
      throw;
    } catch (const Error& e) {
      throw RunError(path.string() + ": " + e.what());
    }
  }
  return pool;
}

DiscoveryResult run_discovery(const RunConfig& config, const Dataset& ds, const fs::path& run_dir,
                              ChatBackend* backend) {
  config.validate();
  if (config.mode != RunMode::Gp) throw ConfigError("run_discovery handles gp mode only");
  if ((config.proposer == ProposerKind::Agent || config.evaluator == EvaluatorKind::Vlm) && !backend) {
    throw ConfigError("agent proposer and vlm evaluator need a chat backend");
  }
  const int n_train = static_cast<int>(ds.train_idx.size());
  fs::create_directories(run_dir / "rounds");
  fs::create_directories(run_dir / "plots");
  fs::create_directories(run_dir / "transcripts");
  write_text(run_dir / "config.json", to_json(config).dump(2) + "\n");

  FittedModel bootstrap = fit(KernelExpr::leaf(BaseKind::WN), ds, config.restarts, std::nullopt,
                              candidate_seed(config.seed, "WN"));
  bootstrap.provenance = "bootstrap";
  bootstrap.round_created = 0;

  ModelPool pool;
  std::vector<RmsePoint> series;
  const fs::path prompts_dir = config.prompts_dir;

  for (int r = 1; r <= config.rounds; ++r) {
    std::vector<FittedModel> refs;
    std::vector<ScoreRecord> ref_scores;
    if (pool.empty()) {
      refs.push_back(bootstrap);
    } else {
      for (const auto* e : ranked(pool, config.gamma, r)) {
        if (static_cast<int>(refs.size()) >= config.top_k) break;
        refs.push_back(e->model);
        ref_scores.push_back(e->score);
      }
    }

    RoundRecord record;
    record.round = r;
    record.proposer = to_string(config.proposer);
    for (const auto& m : refs) record.references.push_back(m.kernel_text());

    std::vector<Candidate> proposals;
    std::vector<std::string> transcript;
    switch (config.proposer) {
      case ProposerKind::Greedy:
        for (auto& e : greedy_propose(refs.front().expr, static_cast<std::size_t>(config.greedy_cap))) {
          proposals.push_back({std::move(e), {}});
        }
        transcript.push_back(fmt::format("greedy neighbors of {}: {} candidates\n",
                                         refs.front().kernel_text(), proposals.size()));
        break;
      case ProposerKind::Scripted:
        proposals = scripted_round(config, r);
        transcript.push_back(fmt::format("scripted round {}: {} candidates\n", r, proposals.size()));
        break;
      case ProposerKind::Agent: {
        AgentLoopOptions opt;
        opt.max_steps = config.max_agent_steps;
        opt.greedy_cap = static_cast<std::size_t>(config.greedy_cap);
        opt.prompts_dir = prompts_dir;
        opt.plots_dir = run_dir / "plots";
        opt.plot_prefix = fmt::format("r{}_agent", r);
        opt.scores = ref_scores;
        auto res = run_agent_loop(*backend, refs, ds, opt);
        proposals = std::move(res.candidates);
        transcript = std::move(res.transcript);
        record.fell_back = res.fell_back;
        record.agent_steps = res.steps;
        break;
      }
    }
    record.transcript_ref = fmt::format("transcripts/r{}.txt", r);
    {
      std::string text;
      for (const auto& t : transcript) text += t + "\n";
      write_text(run_dir / record.transcript_ref, text);
    }
    if (proposals.empty() && config.proposer != ProposerKind::Scripted) {
      throw RunError(fmt::format("round {}: proposer returned no candidates", r));
    }

    std::set<std::string> seen;
    for (std::size_t j = 0; j < proposals.size(); ++j) {
      auto& cand = proposals[j];
      const auto key = canonical_text(cand.expr);
      if (pool.contains(key) || !seen.insert(key).second) {
        record.outcomes.push_back({key, "duplicate", "already pooled"});
        continue;
      }
      auto suggestion = inherit_init(refs.front(), cand.expr);
      if (cand.init) suggestion = merge_suggestions(suggestion, *cand.init);
      FittedModel model;
      try {
        model = fit(cand.expr, ds, config.restarts,
                    suggestion.empty() ? std::nullopt : std::optional<InitSuggestion>(suggestion),
                    candidate_seed(config.seed, key));
      } catch (const FitError& e) {
        spdlog::warn("round {}: fitting {} failed: {}", r, key, e.what());
        record.outcomes.push_back({key, "fit_failed", e.what()});
        continue;
      }
      model.round_created = r;
      model.provenance = record.proposer + (record.fell_back ? "-fallback" : "");

      EvaluateOptions eopt;
      eopt.n_repeats = config.n_repeats;
      eopt.grid_points = config.grid_points;
      eopt.prompts_dir = prompts_dir;
      eopt.plots_dir = run_dir / "plots";
      eopt.plot_name = fmt::format("r{}_c{}", r, j);
      PoolEntry entry;
      bool failed = false;
      try {
        entry.report = evaluate(model, ds, config.evaluator == EvaluatorKind::Vlm ? backend : nullptr, eopt);
      } catch (const EvaluationError& e) {
        spdlog::warn("round {}: evaluating {} failed: {}", r, key, e.what());
        entry.report = EvaluatorReport{};
        entry.report.backend = EvaluatorBackendKind::Vlm;
        entry.report.n_repeats = config.n_repeats;
        failed = true;
      }
      const double b = bic(model.train_loglik, static_cast<int>(param_schema(model.expr).k_kernel()) + 1, n_train);
      entry.score = make_score_record(b, entry.report.fitness_mean_resemblance, entry.report.fitness_uncertainty,
                                      entry.report.generalizability, config.alpha, r);
      entry.score.evaluation_failed = failed;
      entry.plot_files = entry.report.plot_files;
      entry.transcript_ref = record.transcript_ref;
      entry.n_train = n_train;
      entry.model = std::move(model);
      spdlog::info("round {}: {} loglik={:.3f} bic={:.3f} visual={:.1f} vic={:.3f}", r, key,
                   entry.model.train_loglik, entry.score.bic, entry.score.evaluator_total, entry.score.vic);
      pool.insert(std::move(entry));
      record.outcomes.push_back({key, "pooled", ""});
      record.pooled_keys.push_back(key);
    }

    const PoolEntry* best = pool.empty() ? nullptr : &select_best(pool, config.gamma, r);
    if (best) series.push_back(rmse_point(best->model, ds, r));
    write_round_log(record, pool, best, series, run_dir, config.gamma);
    if (best) spdlog::info("round {} best: {} (vic {:.3f})", r, best->model.kernel_text(), best->score.vic);
  }

  if (pool.empty()) throw RunError("no candidate could be fitted");
  DiscoveryResult out;
  out.best = select_best(pool, config.gamma, config.rounds);
  out.pool = std::move(pool);
  out.rmse_series = std::move(series);
  write_report(run_dir);
  return out;
}

fs::path write_report(const fs::path& run_dir) {
  const auto logs = round_logs(run_dir);
  json config = json::object();
  if (fs::exists(run_dir / "config.json")) config = read_json(run_dir / "config.json");

  std::vector<json> bests;
  json series;
  std::string mode = "gp";
  try {
    for (const auto& path : logs) {
      const auto log = read_json(path);
      bests.push_back(log.at("best"));
      series = log.at("rmse_series");
      mode = log.value("mode", std::string("gp"));
    }
    if (!series.is_array()) throw RunError("rmse_series is not an array");
  } catch (const json::exception& e) {
    throw RunError(std::string("malformed round log: ") + e.what());
  }
  if (bests.back().is_null()) throw RunError("final round log has no best model");

  std::ostringstream md;
  const auto& final_best = bests.back();
  try {
    md << "# Discovery report\n\n";
    md << "- run: " << config.value("run_id", run_dir.filename().string()) << "\n";
    md << "- mode: " << mode << "\n";
    md << "- rounds: " << logs.size() << "\n";
    if (config.contains("proposer")) md << "- proposer: " << config["proposer"].get<std::string>() << "\n";
    if (config.contains("evaluator")) md << "- evaluator: " << config["evaluator"].get<std::string>() << "\n";
    if (config.contains("seed")) md << "- seed: " << config["seed"].dump() << "\n";
    md << "\n## Best model\n\n";
    md << "`" << final_best.at("text").get<std::string>() << "`\n\n";
    for (const auto& [k, v] : final_best.items()) {
      if (k == "text") continue;
      md << "- " << k << ": " << (v.is_number_float() ? fmt::format("{:.6g}", v.get<double>()) : v.dump()) << "\n";
    }
    md << "\n## Error over rounds (normalized scale)\n\n";
    md << "| round | best | train RMSE | val RMSE | test RMSE |\n|---|---|---|---|---|\n";
    auto cell = [](const json& v) {
      return v.is_number() ? fmt::format("{:.6g}", v.get<double>()) : std::string("n/a");
    };
    std::vector<double> rounds, train_mse, test_mse;
    bool test_ok = true;
    for (const auto& p : series) {
      md << "| " << p.at("round").get<int>() << " | `" << p.at("kernel").get<std::string>() << "` | "
         << cell(p.at("train")) << " | " << cell(p.at("val")) << " | " << cell(p.at("test")) << " |\n";
      rounds.push_back(p.at("round").get<double>());
      const double tr = number_or_nan(p.at("train"));
      const double te = number_or_nan(p.at("test"));
      train_mse.push_back(tr * tr);
      test_mse.push_back(te * te);
      test_ok = test_ok && std::isfinite(te);
    }
    if (rounds.size() >= 2 && std::all_of(train_mse.begin(), train_mse.end(),
                                          [](double v) { return std::isfinite(v); })) {
      PlotSpec spec;
      spec.kind = PlotKind::Data;
      spec.name = "mse_over_rounds";
      spec.title = test_ok ? "MSE over rounds (solid train, dashed test)" : "train MSE over rounds";
      spec.series["x"] = rounds;
      spec.series["y"] = train_mse;
      if (test_ok) spec.series["y_dashed"] = test_mse;
      const auto plot = render(spec, run_dir / "plots");
      md << "\n![MSE over rounds](plots/" << plot.path.filename().string() << ")\n";
    }
  } catch (const json::exception& e) {
    throw RunError(std::string("malformed round log: ") + e.what());
  } catch (const RenderError& e) {
    throw RunError(std::string("cannot render report plot: ") + e.what());
  }
  const auto path = run_dir / "report.md";
  write_text(path, md.str());
  return path;
}

}  // namespace modeldisc
