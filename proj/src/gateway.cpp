#include "arena/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <json.hpp>

namespace arena::gateway {

using nlohmann::json;

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

std::string body_excerpt(const std::string& body) { return body.substr(0, std::min<std::size_t>(body.size(), 200)); }

}  // namespace

struct Gateway::Slot {
  ProviderProfile profile;
  std::unique_ptr<Transport> transport;
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
};

WireDialect openai_chat_dialect() {
  WireDialect d;
  d.name = "openai-chat";
  d.system_as_top_level_field = false;
  d.max_tokens_field = "max_tokens";
  d.seed_field = "seed";
  d.content_pointer = "/choices/0/message/content";
  d.prompt_tokens_pointer = "/usage/prompt_tokens";
  d.completion_tokens_pointer = "/usage/completion_tokens";
  return d;
}

WireDialect anthropic_messages_dialect() {
  WireDialect d;
  d.name = "anthropic-messages";
  d.system_as_top_level_field = true;
  d.max_tokens_field = "max_tokens";
  d.content_pointer = "/content/0/text";
  d.prompt_tokens_pointer = "/usage/input_tokens";
  d.completion_tokens_pointer = "/usage/output_tokens";
  d.extra_headers = {{"anthropic-version", "2023-06-01"}};
  return d;
}

WireDialect dialect_by_name(const std::string& name) {
  if (name == "openai-chat") return openai_chat_dialect();
  if (name == "anthropic-messages") return anthropic_messages_dialect();
  throw std::invalid_argument("unknown wire dialect: " + name);
}

std::vector<ProviderProfile> builtin_profiles() {
  ProviderProfile openai;
  openai.name = "openai";
  openai.model_prefixes = {"gpt-", "o1", "o3"};
  openai.endpoint_url = "https://api.openai.com/v1/chat/completions";
  openai.api_key_env = "OPENAI_API_KEY";
  openai.dialect = openai_chat_dialect();

  ProviderProfile anthropic;
  anthropic.name = "anthropic";
  anthropic.model_prefixes = {"claude-"};
  anthropic.endpoint_url = "https://api.anthropic.com/v1/messages";
  anthropic.api_key_env = "ANTHROPIC_API_KEY";
  anthropic.auth_header_name = "x-api-key";
  anthropic.auth_header_template = "{key}";
  anthropic.dialect = anthropic_messages_dialect();
  return {openai, anthropic};
}

std::string_view to_string(GatewayErrorKind k) {
  switch (k) {
    case GatewayErrorKind::Exhausted: return "Exhausted";
    case GatewayErrorKind::AuthError: return "AuthError";
    case GatewayErrorKind::BadRequest: return "BadRequest";
    case GatewayErrorKind::DuplicateProfile: return "DuplicateProfile";
  }
  return "?";
}

std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  return replace_all(std::move(text), secret, "[REDACTED]");
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
}

namespace {

class SystemClock : public Clock {
 public:
  std::chrono::milliseconds now() override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now().time_since_epoch());
  }
  void sleep_for(std::chrono::milliseconds d) override { std::this_thread::sleep_for(d); }
};

}  // namespace

std::shared_ptr<Clock> system_clock() { return std::make_shared<SystemClock>(); }

std::chrono::milliseconds FakeClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void FakeClock::sleep_for(std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  now_ += d;
  sleeps_.push_back(d);
}

std::vector<std::chrono::milliseconds> FakeClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, std::chrono::milliseconds previous,
                                        std::mt19937_64& rng) {
  using std::chrono::milliseconds;
  long long step = policy.base_delay.count();
  for (int i = 1; i < retry && step < policy.max_delay.count(); ++i) step *= 2;
  step = std::min(step, static_cast<long long>(policy.max_delay.count()));
  std::uniform_int_distribution<long long> jitter(0, step / 2);
  milliseconds d(step - step / 2 + jitter(rng));
  d = std::max(d, previous);
  return std::min(d, policy.max_delay);
}

Gateway::Gateway(TransportFactory transports, EnvLookup env, std::shared_ptr<Clock> clock, GatewayOptions options)
    : transports_(std::move(transports)),
      env_(std::move(env)),
      clock_(std::move(clock)),
      options_(std::move(options)),
      jitter_rng_(options_.jitter_seed) {}

Gateway::~Gateway() = default;

void Gateway::register_provider(const ProviderProfile& profile) {
  std::lock_guard lock(mu_);
  if (slots_.count(profile.name)) {
    throw GatewayError(GatewayErrorKind::DuplicateProfile, "provider profile '" + profile.name + "' already registered");
  }
  auto slot = std::make_unique<Slot>();
  slot->profile = profile;
  slot->transport = transports_(profile);
  slots_.emplace(profile.name, std::move(slot));
  profiles_.push_back(profile);
}

std::vector<ProviderProfile> Gateway::profiles() const {
  std::lock_guard lock(mu_);
  return profiles_;
}

const ProviderProfile* Gateway::route(const std::string& model_id) const {
  std::lock_guard lock(mu_);
  const ProviderProfile* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [name, slot] : slots_) {
    for (const auto& prefix : slot->profile.model_prefixes) {
      if (model_id.rfind(prefix, 0) != 0) continue;
      if (best == nullptr || prefix.size() > best_len) {
        best = &slot->profile;
        best_len = prefix.size();
      }
    }
  }
  return best;
}

bool Gateway::has_credentials(const ProviderProfile& profile) const {
  return env_(profile.api_key_env).has_value();
}

Gateway::Slot& Gateway::slot_for(const std::string& name) {
  std::lock_guard lock(mu_);
  return *slots_.at(name);
}

std::string Gateway::encode_request(const ChatRequest& request, const WireDialect& dialect) {
  json body;
  body["model"] = request.model_id;
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (dialect.system_as_top_level_field && m.role == "system") {
      body["system"] = m.content;
      continue;
    }
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body[dialect.max_tokens_field] = request.max_output_tokens;
  if (request.seed && !dialect.seed_field.empty()) body[dialect.seed_field] = *request.seed;
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

ChatResponse Gateway::decode_response(const std::string& body, const WireDialect& dialect) {
  auto parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) throw GatewayError(GatewayErrorKind::BadRequest, "provider returned non-JSON body");
  ChatResponse r;
  const json::json_pointer content_ptr(dialect.content_pointer);
  if (!parsed.contains(content_ptr) || !parsed.at(content_ptr).is_string()) {
    throw GatewayError(GatewayErrorKind::BadRequest, "response has no content at " + dialect.content_pointer);
  }
  r.content = parsed.at(content_ptr).get<std::string>();
  auto read_int = [&](const std::string& ptr) -> long long {
    if (ptr.empty()) return 0;
    json::json_pointer p(ptr);
    return parsed.contains(p) && parsed.at(p).is_number_integer() ? parsed.at(p).get<long long>() : 0;
  };
  r.usage.prompt_tokens = read_int(dialect.prompt_tokens_pointer);
  r.usage.completion_tokens = read_int(dialect.completion_tokens_pointer);
  if (!dialect.request_id_pointer.empty()) {
    json::json_pointer p(dialect.request_id_pointer);
    if (parsed.contains(p) && parsed.at(p).is_string()) r.provider_request_id = parsed.at(p).get<std::string>();
  }
  return r;
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  if (request.messages.empty() || request.messages.front().role != "system") {
    throw GatewayError(GatewayErrorKind::BadRequest, "first message must be the system prompt");
  }
  const ProviderProfile* routed = route(request.model_id);
  if (routed == nullptr) {
    throw GatewayError(GatewayErrorKind::BadRequest, "no provider profile serves model '" + request.model_id + "'");
  }
  Slot& slot = slot_for(routed->name);
  const ProviderProfile& profile = slot.profile;

  std::string key;
  if (auto k = env_(profile.api_key_env)) {
    key = *k;
  } else if (options_.require_credentials) {
    throw GatewayError(GatewayErrorKind::AuthError,
                       "missing credentials: set " + profile.api_key_env + " for provider '" + profile.name + "'");
  }

  HttpRequest http;
  http.url = profile.endpoint_url;
  http.headers["Content-Type"] = "application/json";
  http.headers[profile.auth_header_name] = replace_all(profile.auth_header_template, "{key}", key);
  for (const auto& [k, v] : profile.dialect.extra_headers) http.headers[k] = v;
  http.body = encode_request(request, profile.dialect);

  auto log = [&](const std::string& line) {
    if (options_.log) options_.log(redact(line, key));
  };

  {
    std::unique_lock lock(slot.mu);
    slot.cv.wait(lock, [&] { return slot.in_flight < std::max(1, profile.max_in_flight); });
    ++slot.in_flight;
  }
  struct Release {
    Slot& s;
    ~Release() {
      {
        std::lock_guard lock(s.mu);
        --s.in_flight;
      }
      s.cv.notify_one();
    }
  } release{slot};

  std::vector<std::chrono::milliseconds> schedule;
  std::chrono::milliseconds previous{0};
  int last_status = 0;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    const auto started = clock_->now();
    HttpResponse resp = slot.transport->post(http);
    last_status = resp.status;
    if (resp.status >= 200 && resp.status < 300) {
      ChatResponse out = decode_response(resp.body, profile.dialect);
      out.latency_ms = (clock_->now() - started).count();
      out.attempts = attempt;
      out.backoff_schedule = std::move(schedule);
      return out;
    }
    if (resp.status == 401 || resp.status == 403) {
      throw GatewayError(GatewayErrorKind::AuthError,
                         redact("provider '" + profile.name + "' rejected credentials (HTTP " +
                                    std::to_string(resp.status) + ")", key),
                         resp.status);
    }
    if (!retryable(resp.status)) {
      throw GatewayError(GatewayErrorKind::BadRequest,
                         redact("HTTP " + std::to_string(resp.status) + ": " + body_excerpt(resp.body), key),
                         resp.status);
    }
    if (attempt == options_.retry.max_attempts) break;
    std::chrono::milliseconds delay;
    {
      std::lock_guard lock(mu_);
      delay = backoff_delay(options_.retry, attempt, previous, jitter_rng_);
    }
    previous = delay;
    schedule.push_back(delay);
    log("[gateway] " + profile.name + " attempt " + std::to_string(attempt) + " got HTTP " +
        std::to_string(resp.status) + ", retrying in " + std::to_string(delay.count()) + " ms");
    clock_->sleep_for(delay);
  }
  throw GatewayError(GatewayErrorKind::Exhausted,
                     "provider '" + profile.name + "' still failing after " +
                         std::to_string(options_.retry.max_attempts) + " attempts (last HTTP " +
                         std::to_string(last_status) + ")",
                     last_status);
}

}  // namespace arena::gateway
