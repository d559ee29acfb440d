#include <doctest.h>

#include <atomic>
#include <deque>
#include <thread>

#include <json.hpp>

#include "arena/gateway.hpp"
#include "support.hpp"

using namespace arena;
using namespace arena::gateway;
using nlohmann::json;
using std::chrono::milliseconds;

namespace {

struct Shared {
  std::mutex mu;
  std::vector<HttpRequest> seen;
  std::deque<int> statuses;  // consumed per call; 200 once exhausted
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  milliseconds hold{0};
};

// Answers with queued statuses; the success body fits both built-in dialects.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::shared_ptr<Shared> s) : s_(std::move(s)) {}
  HttpResponse post(const HttpRequest& request) override {
    const int now = ++s_->in_flight;
    int peak = s_->peak.load();
    while (now > peak && !s_->peak.compare_exchange_weak(peak, now)) {}
    if (s_->hold.count() > 0) std::this_thread::sleep_for(s_->hold);
    int status = 200;
    {
      std::lock_guard lock(s_->mu);
      s_->seen.push_back(request);
      if (!s_->statuses.empty()) {
        status = s_->statuses.front();
        s_->statuses.pop_front();
      }
    }
    --s_->in_flight;
    if (status != 200) return {status, R"({"error":"busy"})", {}};
    return {200, R"({"id":"req-1","choices":[{"message":{"content":"<accept/>"}}],"content":[{"text":"<accept/>"}],"usage":{"prompt_tokens":12,"completion_tokens":4}})", {}};
  }

 private:
  std::shared_ptr<Shared> s_;
};

EnvLookup env_with(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

ProviderProfile openai_profile() { return builtin_profiles()[0]; }

ChatRequest request_for(const std::string& model) {
  ChatRequest r;
  r.model_id = model;
  r.messages = {{"system", "sys"}, {"user", "hello\nstate: game=ultimatum role=Player1 move=propose turn=1/8"}};
  return r;
}

std::unique_ptr<Gateway> scripted_gateway(std::shared_ptr<Shared> shared, std::shared_ptr<Clock> clock,
                                          EnvLookup env, GatewayOptions options = {}) {
  auto gw = std::make_unique<Gateway>(
      [shared](const ProviderProfile&) { return std::make_unique<ScriptedTransport>(shared); }, std::move(env),
      std::move(clock), std::move(options));
  return gw;
}

}  // namespace

TEST_CASE("backoff: non-decreasing, capped, and within the jitter band") {
  RetryPolicy policy;
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    milliseconds previous{0};
    for (int retry = 1; retry <= 12; ++retry) {
      const auto d = backoff_delay(policy, retry, previous, rng);
      long long step = policy.base_delay.count();
      for (int i = 1; i < retry; ++i) step = std::min<long long>(step * 2, policy.max_delay.count());
      CHECK(d >= previous);
      CHECK(d <= policy.max_delay);
      CHECK(d.count() >= std::min<long long>(step - step / 2, policy.max_delay.count()));
      previous = d;
    }
  }
}

TEST_CASE("gateway: retries 429 and records the schedule") {
  auto shared = std::make_shared<Shared>();
  shared->statuses = {429, 429, 200};
  auto clock = std::make_shared<FakeClock>();
  auto gw = scripted_gateway(shared, clock, env_with({{"OPENAI_API_KEY", "sk-test"}}));
  gw->register_provider(openai_profile());

  const auto r = gw->complete(request_for("gpt-4o"));
  CHECK(r.content == "<accept/>");
  CHECK(r.attempts == 3);
  CHECK(shared->seen.size() == 3);
  REQUIRE(r.backoff_schedule.size() == 2);
  CHECK(r.backoff_schedule[0] <= r.backoff_schedule[1]);
  CHECK(r.backoff_schedule[1] <= milliseconds(60'000));
  CHECK(clock->sleeps() == r.backoff_schedule);
  CHECK(r.usage == TokenUsage{12, 4});
  CHECK(r.provider_request_id == "req-1");
}

TEST_CASE("gateway: gives up after five attempts") {
  auto shared = std::make_shared<Shared>();
  shared->statuses = {503, 503, 503, 503, 503, 503};
  auto clock = std::make_shared<FakeClock>();
  auto gw = scripted_gateway(shared, clock, env_with({{"OPENAI_API_KEY", "k"}}));
  gw->register_provider(openai_profile());
  try {
    gw->complete(request_for("gpt-4o"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::Exhausted);
    CHECK(e.last_status() == 503);
  }
  CHECK(shared->seen.size() == 5);
  const auto sleeps = clock->sleeps();
  CHECK(sleeps.size() == 4);
  CHECK(std::is_sorted(sleeps.begin(), sleeps.end()));
}

TEST_CASE("gateway: non-retryable statuses fail at once") {
  for (auto [status, kind] : {std::pair{400, GatewayErrorKind::BadRequest}, std::pair{401, GatewayErrorKind::AuthError},
                              std::pair{403, GatewayErrorKind::AuthError}}) {
    auto shared = std::make_shared<Shared>();
    shared->statuses = {status};
    auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(), env_with({{"OPENAI_API_KEY", "k"}}));
    gw->register_provider(openai_profile());
    try {
      gw->complete(request_for("gpt-4o"));
      FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == kind);
    }
    CHECK(shared->seen.size() == 1);
  }
}

TEST_CASE("gateway: missing credentials never reach the transport") {
  auto shared = std::make_shared<Shared>();
  auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(), env_with({}));
  gw->register_provider(openai_profile());
  try {
    gw->complete(request_for("gpt-4o"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::AuthError);
    CHECK(std::string(e.what()).find("OPENAI_API_KEY") != std::string::npos);
  }
  CHECK(shared->seen.empty());
}

TEST_CASE("gateway: routing, auth headers and profile registration") {
  auto shared = std::make_shared<Shared>();
  auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(),
                             env_with({{"OPENAI_API_KEY", "sk-o"}, {"ANTHROPIC_API_KEY", "sk-a"}}));
  for (const auto& p : builtin_profiles()) gw->register_provider(p);
  ProviderProfile special = openai_profile();
  special.name = "special";
  special.model_prefixes = {"gpt-4o-mini"};
  special.api_key_env = "OPENAI_API_KEY";
  special.endpoint_url = "https://special.example/v1";
  gw->register_provider(special);

  CHECK(gw->route("gpt-4o")->name == "openai");
  CHECK(gw->route("gpt-4o-mini-2024")->name == "special");
  CHECK(gw->route("claude-3-haiku")->name == "anthropic");
  CHECK(gw->route("llama-3") == nullptr);
  CHECK_THROWS_AS(gw->register_provider(special), GatewayError);
  try {
    gw->register_provider(special);
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::DuplicateProfile);
  }
  try {
    gw->complete(request_for("llama-3"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::BadRequest);
  }

  gw->complete(request_for("gpt-4o"));
  gw->complete(request_for("claude-3-haiku"));
  gw->complete(request_for("gpt-4o"));
  REQUIRE(shared->seen.size() == 3);
  CHECK(shared->seen[0].headers.at("Authorization") == "Bearer sk-o");
  CHECK(shared->seen[1].headers.at("x-api-key") == "sk-a");
  CHECK(shared->seen[1].headers.count("Authorization") == 0);
  CHECK(shared->seen[1].headers.at("anthropic-version") == "2023-06-01");
  CHECK(shared->seen[2].headers.at("Authorization") == "Bearer sk-o");
}

TEST_CASE("gateway: request encoding per dialect") {
  auto r = request_for("m");
  r.seed = 42;
  r.max_output_tokens = 77;
  const auto openai = json::parse(Gateway::encode_request(r, openai_chat_dialect()));
  CHECK(openai["messages"].size() == 2);
  CHECK(openai["messages"][0]["role"] == "system");
  CHECK(openai["seed"] == 42);
  CHECK(openai["max_tokens"] == 77);
  const auto anthropic = json::parse(Gateway::encode_request(r, anthropic_messages_dialect()));
  CHECK(anthropic["system"] == "sys");
  CHECK(anthropic["messages"].size() == 1);
  CHECK_FALSE(anthropic.contains("seed"));

  CHECK_THROWS_AS(Gateway::decode_response("{}", openai_chat_dialect()), GatewayError);
  CHECK_THROWS_AS(Gateway::decode_response("not json", openai_chat_dialect()), GatewayError);
  const auto d = Gateway::decode_response(R"({"content":[{"text":"hi"}],"usage":{"input_tokens":5,"output_tokens":2}})",
                                          anthropic_messages_dialect());
  CHECK(d.content == "hi");
  CHECK(d.usage == TokenUsage{5, 2});
}

TEST_CASE("gateway: secrets never reach diagnostics") {
  const std::string secret = "sk-live-0123456789";
  auto shared = std::make_shared<Shared>();
  shared->statuses = {500, 400};
  std::vector<std::string> lines;
  GatewayOptions opts;
  opts.log = [&](const std::string& l) { lines.push_back(l); };
  auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(), env_with({{"OPENAI_API_KEY", secret}}), opts);
  gw->register_provider(openai_profile());
  try {
    gw->complete(request_for("gpt-4o"));
  } catch (const GatewayError& e) {
    CHECK(std::string(e.what()).find(secret) == std::string::npos);
  }
  CHECK_FALSE(lines.empty());
  for (const auto& l : lines) CHECK(l.find(secret) == std::string::npos);
  CHECK(redact("a " + secret + " b " + secret, secret) == "a [REDACTED] b [REDACTED]");
  CHECK(redact("abc", "") == "abc");
}

TEST_CASE("gateway: in-flight limit per profile") {
  auto shared = std::make_shared<Shared>();
  shared->hold = milliseconds(5);
  auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(), env_with({{"OPENAI_API_KEY", "k"}}));
  auto profile = openai_profile();
  profile.max_in_flight = 2;
  gw->register_provider(profile);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      for (int j = 0; j < 3; ++j) gw->complete(request_for("gpt-4o"));
    });
  }
  for (auto& t : threads) t.join();
  CHECK(shared->seen.size() == 24);
  CHECK(shared->peak.load() <= 2);
  CHECK(shared->peak.load() >= 1);
}

TEST_CASE("mock transport: deterministic replies keyed by state marker") {
  const auto dir = testing::temp_dir("mock");
  std::ofstream(dir / "gpt-4o.json") << R"({
    "ultimatum.Player1.propose": ["<propose split_to_p2=\"40\"/>"],
    "ultimatum.respond": ["<accept/>", "<reject/>"],
    "default": [{"status": 503}]
  })";
  auto gw = std::make_unique<Gateway>(
      [&](const ProviderProfile& p) { return make_mock_transport(dir.string(), p.dialect); }, env_with({}),
      std::make_shared<FakeClock>(), GatewayOptions{RetryPolicy{}, false});
  for (const auto& p : builtin_profiles()) gw->register_provider(p);

  const auto a = gw->complete(request_for("gpt-4o"));
  CHECK(a.content == "<propose split_to_p2=\"40\"/>");
  CHECK(a.usage.prompt_tokens > 0);
  CHECK(a.provider_request_id.rfind("mock-", 0) == 0);

  auto respond = request_for("gpt-4o");
  respond.messages[1].content = "state: game=ultimatum role=Player2 move=respond turn=2/8";
  const auto first = gw->complete(respond).content;
  CHECK((first == "<accept/>" || first == "<reject/>"));
  for (int i = 0; i < 5; ++i) CHECK(gw->complete(respond).content == first);

  auto other = request_for("gpt-4o");
  other.messages[1].content = "state: game=buysell role=Player1 move=propose turn=1/8";
  CHECK_THROWS_AS(gw->complete(other), GatewayError);

  try {
    gw->complete(request_for("gpt-unknown"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::BadRequest);
    CHECK(e.last_status() == 404);
  }
}

TEST_CASE("mock transport: the seed varies the reply for seeded dialects") {
  const auto dir = testing::temp_dir("mock_seed");
  json list = json::array();
  for (int i = 0; i <= 100; ++i) list.push_back("<propose split_to_p2=\"" + std::to_string(i) + "\"/>");
  std::ofstream(dir / "gpt-4o.json") << json{{"default", list}}.dump();
  std::ofstream(dir / "claude-x.json") << json{{"default", list}}.dump();
  Gateway gw([&](const ProviderProfile& p) { return make_mock_transport(dir.string(), p.dialect); }, env_with({}),
             std::make_shared<FakeClock>(), GatewayOptions{RetryPolicy{}, false});
  for (const auto& p : builtin_profiles()) gw.register_provider(p);
  std::set<std::string> openai_replies;
  std::set<std::string> anthropic_replies;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = request_for("gpt-4o");
    r.seed = seed;
    openai_replies.insert(gw.complete(r).content);
    r.model_id = "claude-x";
    anthropic_replies.insert(gw.complete(r).content);
  }
  CHECK(openai_replies.size() > 1);
  CHECK(anthropic_replies.size() == 1);
}

TEST_CASE("gateway: first message must be the system prompt") {
  auto shared = std::make_shared<Shared>();
  auto gw = scripted_gateway(shared, std::make_shared<FakeClock>(), env_with({{"OPENAI_API_KEY", "k"}}));
  gw->register_provider(openai_profile());
  auto r = request_for("gpt-4o");
  r.messages.erase(r.messages.begin());
  CHECK_THROWS_AS(gw->complete(r), GatewayError);
}
