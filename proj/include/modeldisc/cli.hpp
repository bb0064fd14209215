#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modeldisc/run_config.hpp"
#include "modeldisc/vlm_client.hpp"

namespace modeldisc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRunAbort = 3;
inline constexpr int kExitCorruptLogs = 4;

struct CliInvocation {
  std::string subcommand;  // discover, sr, baseline, fit, evaluate, report
  std::string config_path;
  /// Flag values keyed by RunConfig field name; they win over the file.
  nlohmann::json overrides = nlohmann::json::object();
  std::string out_dir;
  /// fit and evaluate: model text (a kernel, or a function in sr mode).
  std::string model_text;
  /// report: run directory.
  std::string run_dir;
};

/// File values, then overrides, on top of the defaults of the resulting mode.
/// Throws ConfigError.
RunConfig resolve_config(const CliInvocation& invocation);

/// Chat backend for a run: the live client, optionally wrapped in fixture
/// replay or recording. `get()` is null when the run needs no backend.
class BackendStack {
 public:
  static BackendStack for_config(const RunConfig& config);
  ChatBackend* get() const { return top_; }

 private:
  std::unique_ptr<ChatBackend> client_;
  std::unique_ptr<ChatBackend> fixture_;
  ChatBackend* top_ = nullptr;
};

int cmd_discover(const CliInvocation& invocation, std::ostream& out, std::ostream& err);
int cmd_sr(const CliInvocation& invocation, std::ostream& out, std::ostream& err);
/// discover with proposer=greedy, alpha=0 and top_k=1.
int cmd_baseline(const CliInvocation& invocation, std::ostream& out, std::ostream& err);
int cmd_fit(const CliInvocation& invocation, std::ostream& out, std::ostream& err);
int cmd_evaluate(const CliInvocation& invocation, std::ostream& out, std::ostream& err);
/// Regenerates report.md from the logs only; corrupt logs exit 4.
int cmd_report(const CliInvocation& invocation, std::ostream& out, std::ostream& err);

/// Parses argv (argv[0] is the program name) and dispatches.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace modeldisc
