#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modeldisc/dataset.hpp"
#include "modeldisc/evaluator.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/run_config.hpp"
#include "modeldisc/scoring.hpp"
#include "modeldisc/vlm_client.hpp"

namespace modeldisc {

struct PoolEntry {
  FittedModel model;
  ScoreRecord score;
  EvaluatorReport report;
  std::vector<std::string> plot_files;
  std::string transcript_ref;
  int n_train = 0;
};

/// Deduplicated by canonical kernel text; iteration follows insertion order.
class ModelPool {
 public:
  /// Returns false (and leaves the pool unchanged) for a duplicate key.
  bool insert(PoolEntry entry);
  bool contains(const std::string& key) const { return index_.count(key) > 0; }
  const PoolEntry* find(const std::string& key) const;
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<PoolEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// vic - gamma * (current_round - round_created).
double selection_score(const PoolEntry& e, double gamma, int current_round);

/// Entries ordered by selection score, ties broken by newer round and then by
/// canonical text.
std::vector<const PoolEntry*> ranked(const ModelPool& pool, double gamma, int current_round);

/// Highest-ranked entry. Throws Error on an empty pool.
const PoolEntry& select_best(const ModelPool& pool, double gamma, int current_round);

struct RmsePoint {
  int round = 0;
  std::string kernel;
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

struct CandidateOutcome {
  std::string kernel;
  std::string status;  // pooled, duplicate, fit_failed
  std::string message;
};

struct RoundRecord {
  int round = 0;
  std::vector<std::string> references;
  std::string proposer;
  bool fell_back = false;
  int agent_steps = 0;
  std::vector<CandidateOutcome> outcomes;
  std::vector<std::string> pooled_keys;
  std::string transcript_ref;
};

/// Normalized-scale RMSE of the posterior mean on the train, validation and
/// test partitions (NaN for an empty partition).
RmsePoint rmse_point(const FittedModel& model, const Dataset& dataset, int round);

/// Writes `{run_dir}/rounds/r{round}/log.json`. Throws RunError on I/O failure.
std::filesystem::path write_round_log(const RoundRecord& record, const ModelPool& pool,
                                      const PoolEntry* best, const std::vector<RmsePoint>& rmse_series,
                                      const std::filesystem::path& run_dir, double gamma = 0.0);

nlohmann::json entry_to_json(const PoolEntry& e);

/// Rebuilds the pool from the round logs of a run, recomputing BIC and VIC
/// from the logged log-likelihoods and evaluator totals. Throws RunError on
/// missing or malformed logs.
ModelPool replay_pool(const std::filesystem::path& run_dir);

struct DiscoveryResult {
  PoolEntry best;
  ModelPool pool;
  std::vector<RmsePoint> rmse_series;
};

/// Propose, fit, evaluate and select for `config.rounds` rounds, writing the
/// run artifacts into `run_dir`. `backend` serves the agent proposer and the
/// vlm evaluator; it may be null when neither is configured. Throws RunError
/// when nothing could be pooled.
DiscoveryResult run_discovery(const RunConfig& config, const Dataset& dataset,
                              const std::filesystem::path& run_dir, ChatBackend* backend = nullptr);

/// Regenerates `report.md` and the error-over-rounds plot from the round logs
/// alone. Throws RunError on corrupt logs.
std::filesystem::path write_report(const std::filesystem::path& run_dir);

/// Seed for fitting a candidate, stable across proposal order.
std::uint64_t candidate_seed(std::uint64_t run_seed, const std::string& key);

}  // namespace modeldisc
