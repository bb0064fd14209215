#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/hashing.hpp"
#include "modeldisc/vlm_client.hpp"
#include "test_util.hpp"

using namespace modeldisc;
using json = nlohmann::json;

namespace {

/// Local chat-completions stand-in running on an ephemeral port.
class LocalServer {
 public:
  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

ModelEndpoint local_endpoint(const LocalServer& s) {
  ModelEndpoint e;
  e.base_url = s.base_url();
  e.api_key = "sk-test-secret-123";
  e.timeout_s = 2.0;
  e.max_retries = 2;
  e.backoff_base_s = 0.05;
  return e;
}

const std::vector<ChatMessage> kHello{{Role::User, "hello", {}}};

}  // namespace

TEST_CASE("429 then 200 retries once and succeeds") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    CHECK(req.get_header_value("Authorization") == "Bearer sk-test-secret-123");
    res.set_content(completion("fine"), "application/json");
  });
  VlmClient client(local_endpoint(server));
  CHECK(client.chat(kHello, 0.2) == "fine");
  CHECK(calls.load() == 2);
}

TEST_CASE("a server slower than timeout_s raises TransportError within the bound") {
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(completion("late"), "application/json");
  });
  auto e = local_endpoint(server);
  e.timeout_s = 0.3;
  e.max_retries = 1;
  VlmClient client(e);
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(client.chat(kHello, 0.2), TransportError);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // timeout_s (max_retries + 1) + backoff, plus slack for the server-side sleep to unwind
  CHECK(elapsed < 0.3 * 2 + 0.05 * 1.25 + 2.0);
}

TEST_CASE("non-retryable status raises ApiError with a scrubbed excerpt") {
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("bad request for key sk-test-secret-123", "text/plain");
  });
  VlmClient client(local_endpoint(server));
  try {
    client.chat(kHello, 0.2);
    FAIL("expected ApiError");
  } catch (const ApiError& e) {
    CHECK(e.status() == 400);
    CHECK(std::string(e.what()).find("sk-test-secret-123") == std::string::npos);
    CHECK(e.body_excerpt().find("***") != std::string::npos);
  }
}

TEST_CASE("retryable status with exhausted budget raises ApiError") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  auto e = local_endpoint(server);
  e.max_retries = 1;
  VlmClient client(e);
  CHECK_THROWS_AS(client.chat(kHello, 0.2), ApiError);
  CHECK(calls.load() == 2);
}

TEST_CASE("unreachable endpoint raises TransportError") {
  ModelEndpoint e;
  e.base_url = "http://127.0.0.1:1/v1";
  e.timeout_s = 0.5;
  e.max_retries = 0;
  VlmClient client(e);
  CHECK_THROWS_AS(client.chat(kHello, 0.2), TransportError);
}

TEST_CASE("request bodies embed PNG images as base64 data URLs") {
  const std::vector<ChatMessage> msgs{{Role::System, "sys", {}},
                                      {Role::User, "look", {{0x89, 'P', 'N', 'G'}}},
                                      {Role::Tool, "obs", {}}};
  const auto body = build_request_body("m", msgs, 0.7);
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 0.7);
  CHECK(body["messages"][0]["content"] == "sys");
  const auto& parts = body["messages"][1]["content"];
  CHECK(parts[0]["text"] == "look");
  CHECK(parts[1]["image_url"]["url"] == "data:image/png;base64,iVBORw==");
  CHECK(body["messages"][2]["role"] == "user");
}

TEST_CASE("base64 and sha256 reference vectors") {
  const std::string s = "abc";
  CHECK(base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())) == "YWJj");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fixture replay returns the recorded reply") {
  testutil::TempDir dir;
  ScriptedBackend upstream({"first", "second"});
  {
    FixtureBackend rec(dir.path(), FixtureBackend::Mode::Record, &upstream);
    CHECK(rec.chat(kHello, 0.2) == "first");
    CHECK(rec.chat(kHello, 0.2) == "second");  // same request, next ordinal
  }
  FixtureBackend replay(dir.path(), FixtureBackend::Mode::Replay);
  CHECK(replay.next_key(kHello, 0.2) == sha256_hex(request_fingerprint(kHello, 0.2) + "#0"));
  CHECK(replay.chat(kHello, 0.2) == "first");
  CHECK(replay.chat(kHello, 0.2) == "second");
  CHECK_THROWS_AS(replay.chat(kHello, 0.2), Error);
}

TEST_CASE("score mapping examples") {
  const std::vector<std::string> keys{"kernel1"};
  auto m = parse_score_mapping("{\"kernel1\": 42}", keys, 0, 50);
  CHECK(m.values.at("kernel1") == 42.0);
  CHECK(m.warnings.empty());
  m = parse_score_mapping("Looks periodic. {\"kernel1\": 61}", keys, 0, 50);
  CHECK(m.values.at("kernel1") == 50.0);
  CHECK(m.warnings.size() == 1);
  CHECK_THROWS_AS(parse_score_mapping("no mapping here", keys, 0, 50), ParseError);
  m = parse_score_mapping("score: {'kernel1': '37.5',}", keys, 0, 50);
  CHECK(m.values.at("kernel1") == 37.5);
  try {
    parse_score_mapping("{\"other\": 3}", keys, 0, 50);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.raw() == "{\"other\": 3}");
  }
}

TEST_CASE("property: score mapping parsing is total") {
  std::mt19937_64 rng(5);
  const std::string alphabet = "{}\"':,kernel1 0123456789.-eTrueFalsNn[]\\";
  const std::vector<std::string> keys{"kernel1"};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string s;
    const int len = std::uniform_int_distribution<int>(0, 40)(rng);
    for (int i = 0; i < len; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    if (trial % 3 == 0) s += "{\"kernel1\": " + std::to_string(trial % 120 - 10) + "}";
    try {
      const auto m = parse_score_mapping(s, keys, 0, 50);
      REQUIRE(m.values.size() == 1);
      REQUIRE(m.values.at("kernel1") >= 0.0);
      REQUIRE(m.values.at("kernel1") <= 50.0);
    } catch (const ParseError& e) {
      REQUIRE(e.raw() == s);
    }
  }
}

TEST_CASE("python literal rewriting") {
  CHECK(json::parse(python_literal_to_json("{'a': True, 'b': None, 'c': [1, 2,],}")) ==
        json{{"a", true}, {"b", nullptr}, {"c", {1, 2}}});
}

TEST_CASE("secrets are scrubbed") {
  CHECK(scrub_secret("key=abc and abc", "abc") == "key=*** and ***");
  CHECK(scrub_secret("nothing", "") == "nothing");
}

TEST_CASE("scripted backend records exchanges") {
  ScriptedBackend b({"one"}, [](std::span<const ChatMessage>, double) { return std::string("more"); });
  CHECK(b.chat(kHello, 0.1) == "one");
  CHECK(b.chat(kHello, 0.1) == "more");
  CHECK(b.calls() == 2);
  CHECK(b.received()[0][0].text == "hello");
}
