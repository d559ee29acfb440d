#include <filesystem>
#include <fstream>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "arena/gateway.hpp"
#include "arena/hashing.hpp"

namespace arena::gateway {
namespace {

using nlohmann::json;

// Replies are picked by hashing the whole conversation, so the same
// request always gets the same reply regardless of scheduling.
class MockTransport : public Transport {
 public:
  MockTransport(std::string fixture_dir, WireDialect dialect)
      : fixture_dir_(std::move(fixture_dir)), dialect_(std::move(dialect)) {}

  HttpResponse post(const HttpRequest& request) override {
    auto body = json::parse(request.body, nullptr, false);
    if (body.is_discarded() || !body.contains("model") || !body.contains("messages")) {
      return {400, R"({"error":"mock: malformed request"})", {}};
    }
    const std::string model = body["model"].get<std::string>();
    const json* fixture = load(model);
    if (fixture == nullptr) return {404, R"({"error":"mock: no fixture for model"})", {}};

    std::string transcript = model;
    if (body.contains("system")) transcript += body["system"].get<std::string>();
    if (!dialect_.seed_field.empty() && body.contains(dialect_.seed_field)) {
      transcript += '\x1e' + body[dialect_.seed_field].dump();
    }
    std::string marker_source;
    for (const auto& m : body["messages"]) {
      const auto content = m.value("content", std::string{});
      transcript += '\x1f';
      transcript += content;
      if (m.value("role", std::string{}) == "user" && content.find("state: game=") != std::string::npos) {
        marker_source = content;
      }
    }

    const json* replies = pick_list(*fixture, marker_source);
    if (replies == nullptr || !replies->is_array() || replies->empty()) {
      return {400, R"({"error":"mock: fixture has no reply for this state"})", {}};
    }
    const auto h = fnv1a64(transcript);
    const json& entry = (*replies)[h % replies->size()];

    int status = 200;
    std::string content;
    if (entry.is_string()) {
      content = entry.get<std::string>();
    } else {
      status = entry.value("status", 200);
      content = entry.value("content", std::string{});
    }
    if (status != 200) return {status, R"({"error":"mock: scripted failure"})", {}};

    json out;
    out[json::json_pointer(dialect_.content_pointer)] = content;
    if (!dialect_.prompt_tokens_pointer.empty()) {
      out[json::json_pointer(dialect_.prompt_tokens_pointer)] = static_cast<long long>((transcript.size() + 3) / 4);
    }
    if (!dialect_.completion_tokens_pointer.empty()) {
      out[json::json_pointer(dialect_.completion_tokens_pointer)] = static_cast<long long>((content.size() + 3) / 4);
    }
    if (!dialect_.request_id_pointer.empty()) {
      std::ostringstream id;
      id << "mock-" << std::hex << h;
      out[json::json_pointer(dialect_.request_id_pointer)] = id.str();
    }
    return {200, out.dump(), {}};
  }

 private:
  // Value of the last `name=value` pair in `text`.
  static std::string field(const std::string& text, const std::string& name) {
    const std::string needle = name + "=";
    auto pos = text.rfind(needle);
    if (pos == std::string::npos) return {};
    auto begin = pos + needle.size();
    auto end = begin;
    while (end < text.size() && (std::isalnum(static_cast<unsigned char>(text[end])) || text[end] == '_')) ++end;
    return text.substr(begin, end - begin);
  }

  static const json* pick_list(const json& fixture, const std::string& marker_source) {
    const json& replies = fixture.contains("replies") ? fixture["replies"] : fixture;
    const auto game = field(marker_source, "game");
    const auto role = field(marker_source, "role");
    const auto move = field(marker_source, "move");
    for (const auto& key : {game + "." + role + "." + move, game + "." + move, std::string("default")}) {
      if (replies.contains(key)) return &replies[key];
    }
    return nullptr;
  }

  const json* load(const std::string& model) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(model);
    if (it != cache_.end()) return it->second.is_null() ? nullptr : &it->second;
    json loaded;
    std::ifstream in(std::filesystem::path(fixture_dir_) / (model + ".json"));
    if (in) {
      loaded = json::parse(in, nullptr, false);
      if (loaded.is_discarded()) loaded = nullptr;
    }
    auto [pos, _] = cache_.emplace(model, std::move(loaded));
    return pos->second.is_null() ? nullptr : &pos->second;
  }

  std::string fixture_dir_;
  WireDialect dialect_;
  std::mutex mu_;
  std::map<std::string, json> cache_;
};

}  // namespace

std::unique_ptr<Transport> make_mock_transport(const std::string& fixture_dir, WireDialect dialect) {
  return std::make_unique<MockTransport>(fixture_dir, std::move(dialect));
}

}  // namespace arena::gateway
