#pragma once

// Provider-agnostic chat-completion client: routing by model prefix,
// retry with exponential backoff, a per-profile in-flight limit, and
// declarative request/response field mapping per wire dialect.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace arena::gateway {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_output_tokens = 512;
  std::optional<std::uint64_t> seed;  // sent only by dialects with a seed field
};

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct ChatResponse {
  std::string content;
  TokenUsage usage;
  long long latency_ms = 0;
  std::string provider_request_id;
  int attempts = 1;
  std::vector<std::chrono::milliseconds> backoff_schedule;
};

/// How a vendor's JSON schema maps onto ChatRequest/ChatResponse. Paths are
/// JSON pointers into the response body.
struct WireDialect {
  std::string name;
  bool system_as_top_level_field = false;  // false: system prompt is the first message
  std::string max_tokens_field = "max_tokens";
  std::string seed_field;  // empty: the vendor has no sampling seed
  std::string content_pointer;
  std::string prompt_tokens_pointer;
  std::string completion_tokens_pointer;
  std::string request_id_pointer = "/id";
  std::map<std::string, std::string> extra_headers;
};

WireDialect openai_chat_dialect();
WireDialect anthropic_messages_dialect();
/// Looks up a built-in dialect by name; throws std::invalid_argument.
WireDialect dialect_by_name(const std::string& name);

struct ProviderProfile {
  std::string name;
  std::vector<std::string> model_prefixes;
  std::string endpoint_url;
  std::string api_key_env;
  std::string auth_header_name = "Authorization";
  std::string auth_header_template = "Bearer {key}";
  WireDialect dialect;
  int max_in_flight = 4;
};

/// The two built-in profiles: "openai" (gpt-*) and "anthropic" (claude-*).
std::vector<ProviderProfile> builtin_profiles();

struct HttpRequest {
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
};

/// status 0 means the request never produced an HTTP response.
struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// HTTP/1.1 (+TLS when built with OpenSSL) transport.
std::unique_ptr<Transport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(120));

/// Serves canned replies from `<fixture_dir>/<model_id>.json`, encoded in
/// `dialect`. See docs/protocol.md for the fixture layout.
std::unique_ptr<Transport> make_mock_transport(const std::string& fixture_dir, WireDialect dialect);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

/// Wall clock.
std::shared_ptr<Clock> system_clock();

/// Deterministic clock for tests: sleeping advances time and is recorded.
class FakeClock : public Clock {
 public:
  explicit FakeClock(std::chrono::milliseconds start = std::chrono::milliseconds(0)) : now_(start) {}
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
  std::vector<std::chrono::milliseconds> sleeps() const;

 private:
  mutable std::mutex mu_;
  std::chrono::milliseconds now_;
  std::vector<std::chrono::milliseconds> sleeps_;
};

/// A clock that never moves; sleeping returns immediately. Makes
/// timestamps reproducible.
class FrozenClock : public Clock {
 public:
  explicit FrozenClock(std::chrono::milliseconds at = std::chrono::milliseconds(0)) : at_(at) {}
  std::chrono::milliseconds now() override { return at_; }
  void sleep_for(std::chrono::milliseconds) override {}

 private:
  std::chrono::milliseconds at_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{60'000};
};

/// Delay before retry number `retry` (1-based). Equal jitter: half the
/// exponential step is fixed and half is random, then clamped so the
/// schedule never decreases and never exceeds max_delay.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, std::chrono::milliseconds previous,
                                        std::mt19937_64& rng);

enum class GatewayErrorKind { Exhausted, AuthError, BadRequest, DuplicateProfile };

class GatewayError : public std::runtime_error {
 public:
  GatewayError(GatewayErrorKind kind, std::string message, int last_status = 0)
      : std::runtime_error(std::move(message)), kind_(kind), last_status_(last_status) {}
  GatewayErrorKind kind() const { return kind_; }
  int last_status() const { return last_status_; }

 private:
  GatewayErrorKind kind_;
  int last_status_;
};

std::string_view to_string(GatewayErrorKind k);

/// Something that answers chat requests. Agents depend on this, not on
/// Gateway, so tests can substitute a scripted model.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
using TransportFactory = std::function<std::unique_ptr<Transport>(const ProviderProfile&)>;

EnvLookup process_env();

struct GatewayOptions {
  RetryPolicy retry;
  bool require_credentials = true;  // false in mock mode
  std::uint64_t jitter_seed = 0x5eed;
  std::function<void(const std::string&)> log;  // receives redacted diagnostics
};

class Gateway : public ChatBackend {
 public:
  Gateway(TransportFactory transports, EnvLookup env, std::shared_ptr<Clock> clock, GatewayOptions options = {});
  ~Gateway() override;

  /// Throws GatewayError(DuplicateProfile) if the name is taken.
  void register_provider(const ProviderProfile& profile);

  ChatResponse complete(const ChatRequest& request) override;

  /// Profile serving `model_id`, by longest matching prefix.
  const ProviderProfile* route(const std::string& model_id) const;
  bool has_credentials(const ProviderProfile& profile) const;
  std::vector<ProviderProfile> profiles() const;

  /// Request body for `request` in the profile's dialect.
  static std::string encode_request(const ChatRequest& request, const WireDialect& dialect);
  /// Throws GatewayError(BadRequest) when the body lacks the content field.
  static ChatResponse decode_response(const std::string& body, const WireDialect& dialect);

 private:
  struct Slot;
  Slot& slot_for(const std::string& name);

  TransportFactory transports_;
  EnvLookup env_;
  std::shared_ptr<Clock> clock_;
  GatewayOptions options_;
  mutable std::mutex mu_;
  std::vector<ProviderProfile> profiles_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::mt19937_64 jitter_rng_;
};

/// Replaces every occurrence of `secret` in `text` with "[REDACTED]".
std::string redact(std::string text, const std::string& secret);

}  // namespace arena::gateway
