#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace modeldisc {

enum class Role { System, User, Assistant, Tool };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  std::vector<std::vector<std::uint8_t>> images;  // PNG payloads
};

struct ModelEndpoint {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4o-mini";
  std::string api_key;
  double timeout_s = 60.0;
  int max_retries = 3;
  /// First retry waits this long; each further retry doubles it (plus jitter).
  double backoff_base_s = 1.0;
  int max_in_flight = 4;

  /// Reads MODEL_API_KEY, MODEL_BASE_URL and MODEL_NAME, keeping defaults for
  /// unset variables.
  static ModelEndpoint from_env();
};

inline constexpr double kEvaluatorTemperature = 0.2;
inline constexpr double kProposerTemperature = 0.7;

/// Anything that can answer a chat exchange with assistant text.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(std::span<const ChatMessage> messages, double temperature) = 0;
};

/// OpenAI-compatible chat-completions client with base64 PNG image parts.
/// Retries transport failures and 408/409/429/5xx with exponential backoff.
/// Thread-safe; at most `max_in_flight` requests run concurrently.
class VlmClient : public ChatBackend {
 public:
  explicit VlmClient(ModelEndpoint endpoint);
  ~VlmClient() override;

  std::string chat(std::span<const ChatMessage> messages, double temperature) override;

  const ModelEndpoint& endpoint() const { return endpoint_; }

 private:
  struct Limiter;
  ModelEndpoint endpoint_;
  std::unique_ptr<Limiter> limiter_;
};

/// Wire body of a chat-completions request.
nlohmann::json build_request_body(const std::string& model_name,
                                  std::span<const ChatMessage> messages, double temperature);

/// Extracts the assistant text from a chat-completions response body.
std::string extract_reply_text(const nlohmann::json& response);

/// Replaces every occurrence of `secret` in `text` with "***".
std::string scrub_secret(std::string text, const std::string& secret);

/// Stable description of a request used for fixture lookup; images are
/// represented by their SHA-256.
std::string request_fingerprint(std::span<const ChatMessage> messages, double temperature);

/// Offline replay (or recording) of replies stored as `{dir}/{sha256}.txt`.
/// The hashed key is the request fingerprint plus the number of times the
/// same fingerprint was seen before, so repeated identical requests map to
/// distinct recordings.
class FixtureBackend : public ChatBackend {
 public:
  enum class Mode { Replay, Record };

  FixtureBackend(std::filesystem::path dir, Mode mode, ChatBackend* upstream = nullptr);

  std::string chat(std::span<const ChatMessage> messages, double temperature) override;

  /// Key that the next identical request would use.
  std::string next_key(std::span<const ChatMessage> messages, double temperature) const;

 private:
  std::filesystem::path dir_;
  Mode mode_;
  ChatBackend* upstream_;
  mutable std::mutex mu_;
  std::map<std::string, int> seen_;
};

/// Deterministic in-process backend for tests and scripted runs. Replies come
/// from a queue, then from the optional responder; the received exchanges are
/// kept for inspection.
class ScriptedBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(std::span<const ChatMessage>, double)>;

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> replies, Responder fallback = {});
  explicit ScriptedBackend(Responder responder);

  std::string chat(std::span<const ChatMessage> messages, double temperature) override;

  std::size_t calls() const;
  std::vector<std::vector<ChatMessage>> received() const;

 private:
  mutable std::mutex mu_;
  std::deque<std::string> replies_;
  Responder responder_;
  std::vector<std::vector<ChatMessage>> received_;
};

/// Rewrites a Python literal into JSON: single-quoted strings, True/False/None
/// and trailing commas. Other text passes through unchanged.
std::string python_literal_to_json(const std::string& literal);

struct ScoreMapping {
  std::map<std::string, double> values;
  std::vector<std::string> warnings;
};

/// Finds the first well-formed key-value mapping literal (JSON or Python dict
/// syntax) in `reply`, requires every expected key, and clamps values into
/// [lo, hi]. Throws ParseError carrying the raw reply otherwise.
ScoreMapping parse_score_mapping(const std::string& reply,
                                 std::span<const std::string> expected_keys, double lo, double hi);

}  // namespace modeldisc
