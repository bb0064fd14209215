#include "modeldisc/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/evaluator.hpp"
#include "modeldisc/gp_core.hpp"
#include "modeldisc/prompts.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;

constexpr double kDominanceRatio = 3.0;
constexpr int kOversample = 4;
constexpr int kDaniellWidth = 5;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t matching_bracket(const std::string& text, std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return i;
  }
  return std::string::npos;
}

std::vector<std::string> parse_string_list(const std::string& literal) {
  for (const auto& candidate : {literal, python_literal_to_json(literal)}) {
    auto j = json::parse(candidate, nullptr, false);
    if (j.is_discarded() || !j.is_array()) continue;
    std::vector<std::string> out;
    for (const auto& e : j) {
      if (!e.is_string()) throw ParseError("proposal list holds a non-string entry", 0, literal);
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  // Unquoted entries: split on top-level commas.
  if (literal.find_first_of("\"'") != std::string::npos) {
    throw ParseError("proposal list is not a well-formed literal", 0, literal);
  }
  std::vector<std::string> out;
  std::string body = literal.substr(1, literal.size() - 2);
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  }
  return out;
}

ProposalItem parse_item(const std::string& raw) {
  ProposalItem item;
  const auto semi = raw.find(';');
  item.text = trim(raw.substr(0, semi));
  if (semi == std::string::npos) return item;
  std::string rest = trim(raw.substr(semi + 1));
  if (lower(rest).rfind("init:", 0) != 0) {
    throw ParseError("annotation after ';' must start with 'init:'", semi, raw);
  }
  std::stringstream ss(rest.substr(5));
  std::string pair;
  while (std::getline(ss, pair, ',')) {
    pair = trim(pair);
    if (pair.empty()) continue;
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw ParseError("init entry lacks '=': " + pair, semi, raw);
    const auto label = trim(pair.substr(0, eq));
    const auto value_text = trim(pair.substr(eq + 1));
    char* end = nullptr;
    const double v = std::strtod(value_text.c_str(), &end);
    if (value_text.empty() || *end != '\0' || !std::isfinite(v)) {
      throw ParseError("init value is not a number: " + pair, semi, raw);
    }
    item.init_labels[label] = v;
  }
  return item;
}

std::optional<AgentAction> parse_tool_block(const std::string& reply) {
  static const std::string fence = "```";
  for (auto pos = reply.find(fence); pos != std::string::npos; pos = reply.find(fence, pos + 3)) {
    const auto line_end = reply.find('\n', pos);
    if (line_end == std::string::npos) break;
    if (lower(trim(std::string_view(reply).substr(pos + 3, line_end - pos - 3))) != "tool") continue;
    const auto close = reply.find(fence, line_end + 1);
    if (close == std::string::npos) throw ParseError("unterminated tool block", pos, reply);
    const auto body = trim(std::string_view(reply).substr(line_end + 1, close - line_end - 1));
    AgentAction a;
    a.kind = ActionKind::Execute;
    a.text = reply;
    if (!body.empty() && body.front() == '{') {
      auto j = json::parse(body, nullptr, false);
      if (j.is_discarded()) j = json::parse(python_literal_to_json(body), nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("name") || !j["name"].is_string()) {
        throw ParseError("tool block must be an object with a string 'name'", pos, reply);
      }
      a.tool_name = j["name"].get<std::string>();
      if (j.contains("args")) {
        if (!j["args"].is_object()) throw ParseError("tool 'args' must be an object", pos, reply);
        a.args = j["args"];
      }
    } else {
      std::stringstream ss(body);
      std::string line;
      while (std::getline(ss, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (a.tool_name.empty()) {
          a.tool_name = line;
          continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("tool argument lacks '=': " + line, pos, reply);
        a.args[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      }
      if (a.tool_name.empty()) throw ParseError("empty tool block", pos, reply);
    }
    return a;
  }
  return std::nullopt;
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string describe_model_params(const FittedModel& m) {
  const auto schema = param_schema(m.expr);
  const auto nat = natural_values(schema, m.params);
  std::string out;
  for (std::size_t i = 0; i < schema.params.size(); ++i) {
    out += fmt::format("  {} = {:.6g}\n", schema.params[i].label(), nat[i]);
  }
  out += fmt::format("  noise_variance = {:.6g}\n", nat.back());
  return out;
}

std::string message_log(const ChatMessage& m, int step, const std::vector<std::string>& image_names) {
  std::string out = fmt::format("### {} (step {})\n{}\n", role_name(m.role), step, m.text);
  if (!m.images.empty()) {
    out += fmt::format("[{} image(s): {}]\n", m.images.size(),
                       image_names.empty() ? std::string("inline") : fmt::format("{}", fmt::join(image_names, ", ")));
  }
  return out;
}

std::vector<std::string> plot_names(const std::vector<RenderedPlot>& plots) {
  std::vector<std::string> out;
  for (const auto& p : plots) {
    out.push_back(p.path.empty() ? p.spec_digest.substr(0, 12) : p.path.filename().string());
  }
  return out;
}

RenderedPlot emit_plot(const PlotSpec& spec, const std::filesystem::path& dir) {
  if (!dir.empty()) return render(spec, dir);
  RenderedPlot p;
  p.image_bytes = render_png(spec);
  p.spec_digest = spec_digest(spec);
  return p;
}

}  // namespace

AgentAction parse_agent_action(const std::string& reply) {
  if (auto tool = parse_tool_block(reply)) return *tool;

  const auto low = lower(reply);
  std::size_t marker = std::string::npos;
  std::size_t marker_len = 0;
  for (const std::string m : {"next kernels:", "next functions:"}) {
    if (auto p = low.find(m); p != std::string::npos && p < marker) {
      marker = p;
      marker_len = m.size();
    }
  }
  AgentAction a;
  a.text = reply;
  if (marker == std::string::npos) return a;

  a.kind = ActionKind::Propose;
  const auto open = reply.find('[', marker + marker_len);
  if (open == std::string::npos) throw ParseError("proposal marker without a list", marker, reply);
  const auto close = matching_bracket(reply, open);
  if (close == std::string::npos) throw ParseError("unbalanced proposal list", open, reply);
  const auto raw_items = parse_string_list(reply.substr(open, close - open + 1));
  if (raw_items.empty()) throw ParseError("empty proposal list", open, reply);
  for (const auto& raw : raw_items) a.items.push_back(parse_item(raw));
  if (a.items.size() > kMaxProposals) {
    a.warnings.push_back(fmt::format("kept the first {} of {} proposals", kMaxProposals, a.items.size()));
    a.items.resize(kMaxProposals);
  }
  return a;
}

AgentAction parse_agent_reply(const std::string& reply) {
  auto a = parse_agent_action(reply);
  if (a.kind != ActionKind::Propose) return a;
  for (const auto& item : a.items) {
    Candidate c;
    try {
      c.expr = canonicalize(parse_kernel(item.text));
    } catch (const ParseError& e) {
      throw ParseError("invalid kernel '" + item.text + "': " + e.what(), e.position(), reply);
    }
    if (!item.init_labels.empty()) {
      std::vector<std::string> warnings;
      auto s = suggestion_from_labels(param_schema(c.expr), item.init_labels, &warnings);
      for (auto& w : warnings) a.warnings.push_back(std::move(w));
      if (!s.empty()) c.init = std::move(s);
    }
    a.candidates.push_back(std::move(c));
  }
  return a;
}

std::string clip_tool_text(std::string text) {
  if (text.size() <= kMaxToolTextBytes) return text;
  const std::string tail = "\n[truncated]";
  std::size_t cut = kMaxToolTextBytes - tail.size();
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  text.resize(cut);
  return text + tail;
}

ToolResult residual_summary(std::span<const double> x, std::span<const double> r,
                            const std::string& label, const std::filesystem::path& plots_dir,
                            const std::string& plot_name) {
  const auto n = r.size();
  const double m = mean_of(r);
  double ss = 0.0;
  double lag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss += (r[i] - m) * (r[i] - m);
    if (i + 1 < n) lag += (r[i] - m) * (r[i + 1] - m);
  }
  const double sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  const double ac1 = ss > 1e-300 ? lag / ss : 0.0;

  PlotSpec spec;
  spec.kind = PlotKind::Residual;
  spec.name = plot_name;
  spec.title = "residuals of " + label;
  spec.series["x"] = std::vector<double>(x.begin(), x.end());
  spec.series["residual"] = std::vector<double>(r.begin(), r.end());

  ToolResult out;
  out.plots.push_back(emit_plot(spec, plots_dir));
  out.text = clip_tool_text(fmt::format(
      "residuals of {} on {} training points:\n  mean = {:.6g}\n  sd = {:.6g}\n"
      "  lag1_autocorrelation = {:.4f}\nresidual plot attached.",
      label, n, m, sd, ac1));
  return out;
}

ToolResult tool_residual_stats(const FittedModel& model, const Dataset& dataset,
                               const std::filesystem::path& plots_dir, const std::string& plot_name) {
  const auto tx = dataset.train_x();
  const auto ty = dataset.train_y();
  const auto mean = posterior_predict(model.expr, model.params, tx, ty, tx).mean;
  std::vector<double> r(ty.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = ty[i] - mean[i];
  return residual_summary(tx, r, model.kernel_text(), plots_dir, plot_name);
}

PeriodogramSummary periodogram(std::span<const double> series, std::span<const double> x) {
  const auto n = series.size();
  if (n != x.size()) throw ToolError("series and x differ in length");
  if (n < 8) throw ToolError(fmt::format("periodogram needs at least 8 points, got {}", n));

  const double mx = mean_of(x);
  const double my = mean_of(series);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (series[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  std::vector<double> r(n);
  double rss = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = series[i] - my - slope * (x[i] - mx);
    rss += r[i] * r[i];
    scale = std::max(scale, std::abs(series[i]));
  }
  if (std::sqrt(rss / n) <= 1e-10 * std::max(1.0, scale)) {
    throw ToolError("series is constant after removing a linear trend; no spectrum to report");
  }
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const double span = *xmax - *xmin;
  if (!(span > 0.0)) throw ToolError("x has zero extent");

  const int n_fourier = static_cast<int>((n - 1) / 2);
  const int k_max = n_fourier * kOversample;
  const double df = 1.0 / (kOversample * span);
  std::vector<double> power(k_max);
  for (int k = 1; k <= k_max; ++k) {
    const double w = 2.0 * std::numbers::pi * k * df;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) acc += r[i] * std::polar(1.0, -w * (x[i] - *xmin));
    power[k - 1] = std::norm(acc) / static_cast<double>(n);
  }

  PeriodogramSummary out;
  std::vector<std::size_t> maxima;
  for (int k = 0; k < k_max; ++k) {
    const bool left_ok = k == 0 || power[k] > power[k - 1];
    const bool right_ok = k + 1 == k_max || power[k] >= power[k + 1];
    if (left_ok && right_ok) maxima.push_back(k);
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&](std::size_t a, std::size_t b) { return power[a] > power[b]; });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, maxima.size()); ++i) {
    out.peaks.push_back({1.0 / ((maxima[i] + 1) * df), power[maxima[i]]});
  }

  // Raw periodogram ordinates scatter like exponentials, so their max/median
  // is large even for noise; the smoothed spectrum is compared instead.
  std::vector<double> fourier(n_fourier);
  for (int j = 0; j < n_fourier; ++j) fourier[j] = power[(j + 1) * kOversample - 1];
  std::vector<double> smooth(n_fourier);
  for (int j = 0; j < n_fourier; ++j) {
    double s = 0.0;
    int c = 0;
    for (int d = -kDaniellWidth / 2; d <= kDaniellWidth / 2; ++d) {
      if (j + d < 0 || j + d >= n_fourier) continue;
      s += fourier[j + d];
      ++c;
    }
    smooth[j] = s / c;
  }
  if (!smooth.empty()) {
    auto sorted = smooth;
    std::sort(sorted.begin(), sorted.end());
    const auto m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    out.peak_to_median = median > 0.0 ? sorted.back() / median : INFINITY;
    out.dominant = out.peak_to_median >= kDominanceRatio;
  }
  for (int k = k_max - 1; k >= 0; --k) {
    out.periods.push_back(1.0 / ((k + 1) * df));
    out.powers.push_back(power[k]);
  }
  return out;
}

ToolResult tool_periodogram(std::span<const double> series, std::span<const double> x,
                            const std::filesystem::path& plots_dir, const std::string& plot_name) {
  const auto s = periodogram(series, x);
  std::string text = "periodogram of the linearly detrended series; strongest periods (x units):\n";
  for (std::size_t i = 0; i < s.peaks.size(); ++i) {
    text += fmt::format("  {}. period = {:.5g}, power = {:.4g}\n", i + 1, s.peaks[i].period, s.peaks[i].power);
  }
  text += fmt::format("dominant peak: {} (smoothed peak/median = {:.3g})\nspectrum plot attached.",
                      s.dominant ? "yes" : "no", s.peak_to_median);
  PlotSpec spec;
  spec.kind = PlotKind::Periodogram;
  spec.name = plot_name;
  spec.title = "periodogram";
  spec.series["period"] = s.periods;
  spec.series["power"] = s.powers;
  ToolResult out;
  out.text = clip_tool_text(std::move(text));
  out.plots.push_back(emit_plot(spec, plots_dir));
  return out;
}

std::vector<KernelExpr> greedy_propose(const KernelExpr& incumbent, std::size_t cap) {
  auto n = neighbors(canonicalize(incumbent));
  if (cap > 0 && n.size() > cap) n.erase(n.begin() + static_cast<std::ptrdiff_t>(cap), n.end());
  return n;
}

ToolResult run_kernel_tool(const std::string& name, const json& args,
                           const std::vector<FittedModel>& models, const Dataset& dataset,
                           const std::filesystem::path& plots_dir, const std::string& plot_name) {
  if (models.empty()) throw ToolError("no reference model available");
  const auto& incumbent = models.front();
  auto pick_model = [&]() -> const FittedModel& {
    if (!args.contains("kernel")) return incumbent;
    if (!args["kernel"].is_string()) throw ToolError("'kernel' must be a string");
    std::string key;
    try {
      key = canonical_text(parse_kernel(args["kernel"].get<std::string>()));
    } catch (const ParseError& e) {
      throw ToolError(std::string("bad kernel argument: ") + e.what());
    }
    for (const auto& m : models) {
      if (m.kernel_text() == key) return m;
    }
    throw ToolError("kernel " + key + " is not among the reference models");
  };

  if (name == "render_data_plot") {
    PlotSpec spec;
    spec.kind = PlotKind::Data;
    spec.name = plot_name;
    spec.title = "training data";
    spec.series["x"] = dataset.train_x();
    spec.series["y"] = dataset.train_y();
    ToolResult out;
    out.plots.push_back(emit_plot(spec, plots_dir));
    out.text = fmt::format("data plot of {} training points attached (x in [0, 1], y standardized).",
                           dataset.train_idx.size());
    return out;
  }
  if (name == "render_prediction_plot") {
    const auto& m = pick_model();
    const auto view = make_prediction_view(m, dataset);
    PlotSpec spec;
    spec.kind = PlotKind::Prediction;
    spec.name = plot_name;
    spec.title = m.kernel_text();
    spec.series["x"] = view.grid_x;
    spec.series["mean"] = view.mean;
    spec.series["low"] = view.low;
    spec.series["high"] = view.high;
    spec.series["train_x"] = view.train_x;
    spec.series["train_y"] = view.train_y;
    ToolResult out;
    out.plots.push_back(emit_plot(spec, plots_dir));
    out.text = "prediction plot of " + m.kernel_text() +
               " attached: data black, mean red, 95% band light blue, 20% margin each side.";
    return out;
  }
  if (name == "residual_stats") {
    return tool_residual_stats(pick_model(), dataset, plots_dir, plot_name);
  }
  if (name == "periodogram") {
    const std::string target = args.value("target", std::string("residuals"));
    const auto tx = dataset.train_x();
    if (target == "data") return tool_periodogram(dataset.train_y(), tx, plots_dir, plot_name);
    if (target != "residuals") throw ToolError("periodogram target must be 'data' or 'residuals'");
    const auto& m = pick_model();
    const auto ty = dataset.train_y();
    const auto mean = posterior_predict(m.expr, m.params, tx, ty, tx).mean;
    std::vector<double> r(ty.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = ty[i] - mean[i];
    return tool_periodogram(r, tx, plots_dir, plot_name);
  }
  if (name == "describe_params") {
    const auto& m = pick_model();
    ToolResult out;
    out.text = clip_tool_text(fmt::format("fitted parameters of {} (normalized units), train log-likelihood {:.6g}:\n{}",
                                          m.kernel_text(), m.train_loglik, describe_model_params(m)));
    return out;
  }
  throw ToolError("unknown tool '" + name +
                  "'; available: render_data_plot, render_prediction_plot, residual_stats, "
                  "periodogram, describe_params");
}

AgentTrace run_agent_session(ChatBackend& client, const AgentSpec& spec) {
  AgentTrace trace;
  trace.context = spec.seed;
  for (const auto& m : spec.seed) trace.transcript.push_back(message_log(m, 0, {}));
  int strikes = 0;
  auto append = [&](ChatMessage m, const std::vector<std::string>& names = {}) {
    trace.transcript.push_back(message_log(m, trace.steps, names));
    trace.context.push_back(std::move(m));
  };

  while (trace.steps < spec.max_steps) {
    std::string reply;
    try {
      reply = client.chat(trace.context, spec.temperature);
    } catch (const Error& e) {
      spdlog::warn("analyzer backend failed: {}", e.what());
      trace.stop_reason = "backend";
      return trace;
    }
    ++trace.steps;
    append(ChatMessage{Role::Assistant, reply, {}});

    AgentAction action;
    try {
      action = spec.parse(reply);
    } catch (const ParseError& e) {
      ++strikes;
      spdlog::warn("analyzer reply unparseable ({}/{}): {}", strikes, kParseStrikes, e.what());
      if (strikes >= kParseStrikes) {
        trace.stop_reason = "strikes";
        return trace;
      }
      append(ChatMessage{Role::User,
                         std::string("Your reply could not be parsed: ") + e.what() +
                             "\nFollow the action formats exactly and choose one action.",
                         {}});
      continue;
    }
    strikes = 0;
    for (const auto& w : action.warnings) spdlog::warn("analyzer proposal: {}", w);

    switch (action.kind) {
      case ActionKind::Propose:
        trace.proposal = std::move(action);
        trace.stop_reason = "proposed";
        return trace;
      case ActionKind::Execute: {
        ChatMessage obs{Role::Tool, {}, {}};
        std::vector<std::string> names;
        try {
          auto result = spec.run_tool(action.tool_name, action.args);
          obs.text = action.tool_name + ":\n" + result.text;
          for (auto& p : result.plots) obs.images.push_back(std::move(p.image_bytes));
          names = plot_names(result.plots);
        } catch (const Error& e) {
          obs.text = action.tool_name + " failed: " + e.what();
        }
        append(std::move(obs), names);
        break;
      }
      case ActionKind::Analyze:
        append(ChatMessage{Role::User, "Noted. Choose your next action.", {}});
        break;
    }
  }
  trace.stop_reason = "budget";
  return trace;
}

AgentLoopResult run_agent_loop(ChatBackend& client, const std::vector<FittedModel>& pool_models,
                               const Dataset& dataset, const AgentLoopOptions& options) {
  if (pool_models.empty()) throw Error("agent loop needs at least one reference model");
  const auto& best = pool_models.front();
  const auto prompts_dir = options.prompts_dir.empty() ? default_prompts_dir() : options.prompts_dir;

  std::string refs;
  for (std::size_t i = 0; i < pool_models.size(); ++i) {
    const auto& m = pool_models[i];
    if (i < options.scores.size()) {
      const auto& s = options.scores[i];
      refs += fmt::format("- {}: loglik={:.4f}, BIC={:.4f}, visual={:.1f}, VIC={:.4f}\n", m.kernel_text(),
                          m.train_loglik, s.bic, s.evaluator_total, s.vic);
    } else {
      refs += fmt::format("- {}: loglik={:.4f}\n", m.kernel_text(), m.train_loglik);
    }
  }

  AgentSpec spec;
  spec.max_steps = options.max_steps;
  spec.seed.push_back({Role::System, load_prompt(prompts_dir, "analyzer_system.txt"), {}});
  {
    ChatMessage task{Role::User,
                     load_prompt(prompts_dir, "analyzer_action.txt",
                                 {{"reference_models", refs},
                                  {"best_kernel", best.kernel_text()},
                                  {"best_params", describe_model_params(best)}}),
                     {}};
    auto data_plot = run_kernel_tool("render_data_plot", json::object(), pool_models, dataset,
                                     options.plots_dir, options.plot_prefix + "_seed");
    task.images.push_back(std::move(data_plot.plots.front().image_bytes));
    spec.seed.push_back(std::move(task));
  }
  int tool_calls = 0;
  spec.run_tool = [&](const std::string& name, const json& args) {
    return run_kernel_tool(name, args, pool_models, dataset, options.plots_dir,
                           fmt::format("{}_t{}", options.plot_prefix, ++tool_calls));
  };

  auto trace = run_agent_session(client, spec);
  AgentLoopResult out;
  out.steps = trace.steps;
  out.stop_reason = trace.stop_reason;
  out.transcript = std::move(trace.transcript);
  if (trace.proposal) {
    out.candidates = std::move(trace.proposal->candidates);
    return out;
  }
  spdlog::warn("analyzer stopped without a proposal ({}); using greedy neighbors of {}",
               out.stop_reason, best.kernel_text());
  out.fell_back = true;
  for (auto& e : greedy_propose(best.expr, options.greedy_cap)) out.candidates.push_back({std::move(e), {}});
  out.transcript.push_back(fmt::format("### fallback\ngreedy neighbors of {} ({} candidates)\n",
                                       best.kernel_text(), out.candidates.size()));
  return out;
}

}  // namespace modeldisc
