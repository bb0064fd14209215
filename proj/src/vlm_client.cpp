#include "modeldisc/vlm_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <future>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/hashing.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;

bool should_retry_status(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

std::string excerpt(const std::string& body, std::size_t limit = 300) {
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

struct SplitUrl {
  std::string scheme_host;
  std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host = url;
  } else {
    out.scheme_host = url.substr(0, path_start);
    out.path_prefix = url.substr(path_start);
  }
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// Finds the matching close brace for text[open], skipping quoted regions.
std::size_t matching_brace(const std::string& text, std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string::npos;
}

std::optional<json> parse_mapping_literal(const std::string& lit) {
  for (const auto& candidate : {lit, python_literal_to_json(lit)}) {
    auto j = json::parse(candidate, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && *end == '\0') return d;
  }
  return std::nullopt;
}

}  // namespace

std::string python_literal_to_json(const std::string& lit) {
  std::string out;
  out.reserve(lit.size());
  char quote = 0;
  for (std::size_t i = 0; i < lit.size(); ++i) {
    const char c = lit[i];
    if (quote) {
      if (c == '\\' && i + 1 < lit.size()) {
        out += c;
        out += lit[++i];
        continue;
      }
      if (c == quote) {
        out += '"';
        quote = 0;
      } else if (c == '"' && quote == '\'') {
        out += "\\\"";
      } else {
        out += c;
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      out += '"';
      continue;
    }
    auto word_at = [&](std::string_view w) { return lit.compare(i, w.size(), w) == 0; };
    if (word_at("True")) {
      out += "true";
      i += 3;
    } else if (word_at("False")) {
      out += "false";
      i += 4;
    } else if (word_at("None")) {
      out += "null";
      i += 3;
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < lit.size() && std::isspace(static_cast<unsigned char>(lit[j]))) ++j;
      if (j < lit.size() && (lit[j] == '}' || lit[j] == ']')) continue;
      out += c;
    } else {
      out += c;
    }
  }
  return out;
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

ModelEndpoint ModelEndpoint::from_env() {
  ModelEndpoint e;
  e.api_key = env_or("MODEL_API_KEY", e.api_key);
  e.base_url = env_or("MODEL_BASE_URL", e.base_url);
  e.model_name = env_or("MODEL_NAME", e.model_name);
  return e;
}

json build_request_body(const std::string& model_name, std::span<const ChatMessage> messages,
                        double temperature) {
  json msgs = json::array();
  for (const auto& m : messages) {
    // Observations from local tools travel as user turns; the tool role of the
    // wire protocol is reserved for native function calls.
    const bool tool = m.role == Role::Tool;
    const std::string role = tool ? "user" : std::string(role_name(m.role));
    const std::string text = tool ? "[tool output]\n" + m.text : m.text;
    if (m.images.empty()) {
      msgs.push_back({{"role", role}, {"content", text}});
      continue;
    }
    json parts = json::array();
    if (!text.empty()) parts.push_back({{"type", "text"}, {"text", text}});
    for (const auto& img : m.images) {
      parts.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + base64_encode(img)}}}});
    }
    msgs.push_back({{"role", role}, {"content", parts}});
  }
  return {{"model", model_name}, {"messages", msgs}, {"temperature", temperature}};
}

std::string extract_reply_text(const json& response) {
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw ApiError(200, "response has no choices");
  }
  const auto& msg = response["choices"][0].value("message", json::object());
  const auto& content = msg.value("content", json());
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
  }
  throw ApiError(200, "response message has no text content");
}

std::string scrub_secret(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(secret, pos)) != std::string::npos) {
    text.replace(pos, secret.size(), "***");
    pos += 3;
  }
  return text;
}

std::string request_fingerprint(std::span<const ChatMessage> messages, double temperature) {
  json msgs = json::array();
  for (const auto& m : messages) {
    json images = json::array();
    for (const auto& img : m.images) images.push_back(sha256_hex(img));
    msgs.push_back({{"role", role_name(m.role)}, {"text", m.text}, {"images", images}});
  }
  return json{{"messages", msgs}, {"temperature", temperature}}.dump();
}

// Counting gate on concurrent requests.
struct VlmClient::Limiter {
  explicit Limiter(int cap) : available(std::max(1, cap)) {}
  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return available > 0; });
    --available;
  }
  void release() {
    {
      std::lock_guard lock(mu);
      ++available;
    }
    cv.notify_one();
  }
  std::mutex mu;
  std::condition_variable cv;
  int available;
};

VlmClient::VlmClient(ModelEndpoint endpoint)
    : endpoint_(std::move(endpoint)), limiter_(std::make_unique<Limiter>(endpoint_.max_in_flight)) {
  if (!(endpoint_.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
  if (endpoint_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

VlmClient::~VlmClient() = default;

std::string VlmClient::chat(std::span<const ChatMessage> messages, double temperature) {
  const auto url = split_url(endpoint_.base_url);
  const std::string path = url.path_prefix + "/chat/completions";
  const std::string body = build_request_body(endpoint_.model_name, messages, temperature).dump();
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  limiter_->acquire();
  struct Release {
    Limiter* l;
    ~Release() { l->release(); }
  } release{limiter_.get()};

  std::mt19937_64 jitter_rng(std::random_device{}());
  std::uniform_real_distribution<double> jitter(0.0, 0.25);
  std::string last_error;

  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = endpoint_.backoff_base_s * std::pow(2.0, attempt - 1) * (1.0 + jitter(jitter_rng));
      spdlog::warn("chat request retry {}/{} in {:.2f}s: {}", attempt, endpoint_.max_retries, wait,
                   last_error);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }

    httplib::Client cli(url.scheme_host);
    cli.set_connection_timeout(timeout_us);
    cli.set_read_timeout(timeout_us);
    cli.set_write_timeout(timeout_us);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

    auto pending = std::async(std::launch::async, [&] {
      return cli.Post(path, headers, body, "application/json");
    });
    if (pending.wait_for(timeout) == std::future_status::timeout) {
      cli.stop();
      pending.wait();
      last_error = "timed out after " + std::to_string(endpoint_.timeout_s) + "s";
      continue;
    }
    auto res = pending.get();
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      auto parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) {
        throw ApiError(res->status, scrub_secret(excerpt(res->body), endpoint_.api_key));
      }
      return extract_reply_text(parsed);
    }
    const auto body_excerpt = scrub_secret(excerpt(res->body), endpoint_.api_key);
    if (should_retry_status(res->status) && attempt < endpoint_.max_retries) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    throw ApiError(res->status, body_excerpt);
  }
  throw TransportError(scrub_secret("chat request failed after " +
                                        std::to_string(endpoint_.max_retries + 1) +
                                        " attempt(s): " + last_error,
                                    endpoint_.api_key));
}

FixtureBackend::FixtureBackend(std::filesystem::path dir, Mode mode, ChatBackend* upstream)
    : dir_(std::move(dir)), mode_(mode), upstream_(upstream) {
  if (mode_ == Mode::Record && upstream_ == nullptr) {
    throw ConfigError("fixture recording needs an upstream backend");
  }
}

std::string FixtureBackend::next_key(std::span<const ChatMessage> messages,
                                     double temperature) const {
  const auto fp = request_fingerprint(messages, temperature);
  std::lock_guard lock(mu_);
  auto it = seen_.find(fp);
  const int n = it == seen_.end() ? 0 : it->second;
  return sha256_hex(fp + "#" + std::to_string(n));
}

std::string FixtureBackend::chat(std::span<const ChatMessage> messages, double temperature) {
  const auto fp = request_fingerprint(messages, temperature);
  std::string key;
  {
    std::lock_guard lock(mu_);
    const int n = seen_[fp]++;
    key = sha256_hex(fp + "#" + std::to_string(n));
  }
  const auto path = dir_ / (key + ".txt");
  if (mode_ == Mode::Replay) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("no recorded fixture " + path.filename().string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  auto reply = upstream_->chat(messages, temperature);
  std::filesystem::create_directories(dir_);
  std::ofstream out(path, std::ios::binary);
  out << reply;
  if (!out) throw TransportError("cannot write fixture " + path.string());
  return reply;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies, Responder fallback)
    : replies_(replies.begin(), replies.end()), responder_(std::move(fallback)) {}

ScriptedBackend::ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

std::string ScriptedBackend::chat(std::span<const ChatMessage> messages, double temperature) {
  std::lock_guard lock(mu_);
  received_.emplace_back(messages.begin(), messages.end());
  if (!replies_.empty()) {
    auto r = std::move(replies_.front());
    replies_.pop_front();
    return r;
  }
  if (responder_) return responder_(messages, temperature);
  throw TransportError("scripted backend has no reply left");
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return received_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedBackend::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

ScoreMapping parse_score_mapping(const std::string& reply,
                                 std::span<const std::string> expected_keys, double lo, double hi) {
  std::optional<json> mapping;
  for (std::size_t open = reply.find('{'); open != std::string::npos;
       open = reply.find('{', open + 1)) {
    const auto close = matching_brace(reply, open);
    if (close == std::string::npos) continue;
    mapping = parse_mapping_literal(reply.substr(open, close - open + 1));
    if (mapping) break;
  }
  if (!mapping) throw ParseError("no key-value mapping found in reply", 0, reply);

  ScoreMapping out;
  for (const auto& key : expected_keys) {
    if (!mapping->contains(key)) throw ParseError("reply mapping lacks key '" + key + "'", 0, reply);
    auto v = as_number((*mapping)[key]);
    if (!v || !std::isfinite(*v)) {
      throw ParseError("value for '" + key + "' is not a number", 0, reply);
    }
    const double clamped = std::clamp(*v, lo, hi);
    if (clamped != *v) {
      out.warnings.push_back("score for '" + key + "' clamped from " + std::to_string(*v) +
                             " to " + std::to_string(clamped));
      spdlog::warn("{}", out.warnings.back());
    }
    out.values[key] = clamped;
  }
  return out;
}

}  // namespace modeldisc
