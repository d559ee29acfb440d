#include "arena/run_record.hpp"

#include <ctime>
#include <iomanip>
#include <sstream>

namespace arena::runlog {

using nlohmann::json;

namespace {

json bundle_to_json(const ResourceBundle& b) {
  json j = json::object();
  for (const auto& [k, v] : b) j[k] = v;
  return j;
}

ResourceBundle bundle_from_json(const json& j) {
  ResourceBundle b;
  for (const auto& [k, v] : j.items()) b[k] = v.get<int>();
  return b;
}

json utilities_to_json(const games::Utilities& u) { return json::array({u.p1, u.p2}); }

std::string_view failure_class_name(FailureClass c) {
  return c == FailureClass::Protocol ? "protocol" : "infrastructure";
}

FailureClass failure_class_from(const std::string& s) {
  if (s == "protocol") return FailureClass::Protocol;
  if (s == "infrastructure") return FailureClass::Infrastructure;
  throw RecordError("unknown failure class '" + s + "'");
}

}  // namespace

json terms_to_json(const Terms& t) {
  if (const auto* s = std::get_if<UltimatumSplit>(&t)) return {{"split_to_p2", s->to_p2}};
  if (const auto* p = std::get_if<Price>(&t)) return {{"price", p->coins}};
  const auto& o = std::get<TradeOffer>(t);
  return {{"give", bundle_to_json(o.give)}, {"receive", bundle_to_json(o.receive)}};
}

Terms terms_from_json(const json& j, GameKind kind) {
  switch (kind) {
    case GameKind::Ultimatum: return UltimatumSplit{j.at("split_to_p2").get<int>()};
    case GameKind::BuySell: return Price{j.at("price").get<int>()};
    case GameKind::ResourceExchange:
      return TradeOffer{bundle_from_json(j.at("give")), bundle_from_json(j.at("receive"))};
  }
  throw RecordError("unknown game kind");
}

json action_to_json(const Action& a) {
  if (const auto* p = std::get_if<Propose>(&a)) return {{"type", "propose"}, {"terms", terms_to_json(p->terms)}};
  if (is_accept(a)) return {{"type", "accept"}};
  return {{"type", "reject"}, {"final", std::get<Reject>(a).final}};
}

Action action_from_json(const json& j, GameKind kind) {
  const auto type = j.at("type").get<std::string>();
  if (type == "propose") return Propose{terms_from_json(j.at("terms"), kind)};
  if (type == "accept") return Accept{};
  if (type == "reject") return Reject{j.value("final", false)};
  throw RecordError("unknown action type '" + type + "'");
}

json config_to_json(const games::GameConfig& c) {
  if (const auto* u = std::get_if<games::UltimatumConfig>(&c)) {
    return {{"pool", u->pool}, {"max_turns", u->max_turns}};
  }
  if (const auto* b = std::get_if<games::BuySellConfig>(&c)) {
    return {{"seller_min", b->seller_min}, {"buyer_max", b->buyer_max}, {"max_turns", b->max_turns}};
  }
  const auto& r = std::get<games::ResourceConfig>(c);
  auto goal = [](const games::GoalSpec& g) {
    json w = json::object();
    for (const auto& [k, v] : g.weights) w[k] = v;
    return json{{"weights", w}};
  };
  return {{"endowment_p1", bundle_to_json(r.endowment_p1)},
          {"endowment_p2", bundle_to_json(r.endowment_p2)},
          {"goal_p1", goal(r.goal_p1)},
          {"goal_p2", goal(r.goal_p2)},
          {"max_turns", r.max_turns}};
}

games::GameConfig config_from_json(const json& j, GameKind kind) {
  switch (kind) {
    case GameKind::Ultimatum: {
      games::UltimatumConfig u;
      u.pool = j.value("pool", u.pool);
      u.max_turns = j.value("max_turns", u.max_turns);
      return u;
    }
    case GameKind::BuySell: {
      games::BuySellConfig b;
      b.seller_min = j.value("seller_min", b.seller_min);
      b.buyer_max = j.value("buyer_max", b.buyer_max);
      b.max_turns = j.value("max_turns", b.max_turns);
      return b;
    }
    case GameKind::ResourceExchange: {
      games::ResourceConfig r;
      if (j.contains("endowment_p1")) r.endowment_p1 = bundle_from_json(j["endowment_p1"]);
      if (j.contains("endowment_p2")) r.endowment_p2 = bundle_from_json(j["endowment_p2"]);
      auto goal = [&](const char* key, games::GoalSpec& g) {
        if (!j.contains(key)) return;
        const json weights = j[key].value("weights", json::object());
        for (const auto& [k, v] : weights.items()) g.weights[k] = v.get<int>();
      };
      goal("goal_p1", r.goal_p1);
      goal("goal_p2", r.goal_p2);
      r.max_turns = j.value("max_turns", r.max_turns);
      return r;
    }
  }
  throw RecordError("unknown game kind");
}

json agent_spec_to_json(const agents::AgentSpec& a) {
  json j{{"label", a.label}, {"role", std::string(to_string(a.role))}};
  if (const auto* s = std::get_if<agents::ScriptedSpec>(&a.kind)) {
    j["kind"] = "scripted";
    j["strategy"] = s->strategy;
    json params = json::object();
    for (const auto& [k, v] : s->params) params[k] = v;
    j["params"] = params;
  } else {
    const auto& l = std::get<agents::LlmSpec>(a.kind);
    j["kind"] = "llm";
    j["model_id"] = l.model_id;
    j["temperature"] = l.temperature;
    j["framing"] = std::string(agents::to_string(l.framing));
    j["max_output_tokens"] = l.max_output_tokens;
  }
  return j;
}

agents::AgentSpec agent_spec_from_json(const json& j) {
  agents::AgentSpec a;
  a.label = j.at("label").get<std::string>();
  a.role = role_from_string(j.at("role").get<std::string>());
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "scripted") {
    agents::ScriptedSpec s;
    s.strategy = j.at("strategy").get<std::string>();
    const json params = j.value("params", json::object());
    for (const auto& [k, v] : params.items()) s.params[k] = v.get<double>();
    a.kind = s;
  } else if (kind == "llm") {
    agents::LlmSpec l;
    l.model_id = j.at("model_id").get<std::string>();
    l.temperature = j.at("temperature").get<double>();
    l.framing = agents::framing_from_string(j.at("framing").get<std::string>());
    l.max_output_tokens = j.value("max_output_tokens", l.max_output_tokens);
    a.kind = l;
  } else {
    throw RecordError("unknown agent kind '" + kind + "'");
  }
  return a;
}

json record_to_json(const RunRecord& r) {
  const auto& s = r.spec;
  json j;
  j["schema_version"] = r.schema_version;
  j["run_id"] = s.run_id;
  j["game"] = std::string(to_string(s.game));
  j["language"] = std::string(agents::to_string(s.framing));
  j["model_p1"] = r.model_p1();
  j["model_p2"] = r.model_p2();
  j["repetition"] = s.repetition;
  j["seed"] = s.seed;
  j["pair_index"] = s.pair_index;
  j["language_index"] = s.language_index;
  j["game_index"] = s.game_index;
  j["config"] = config_to_json(s.config);
  j["agents"] = {{"p1", agent_spec_to_json(s.agent_p1)}, {"p2", agent_spec_to_json(s.agent_p2)}};

  json transcript = json::array();
  for (const auto& e : r.transcript) {
    transcript.push_back({{"turn", e.turn},
                          {"speaker", std::string(to_string(e.message.speaker))},
                          {"raw", e.message.raw_text},
                          {"rationale", e.message.rationale},
                          {"action", action_to_json(e.message.action)},
                          {"failed_attempts", e.failed_attempts}});
  }
  j["transcript"] = std::move(transcript);

  j["outcome"] = {{"kind", std::string(games::to_string(r.outcome.kind))},
                  {"terms", r.outcome.terms ? terms_to_json(*r.outcome.terms) : json(nullptr)},
                  {"utilities", utilities_to_json(r.outcome.utilities)},
                  {"rounds", r.outcome.rounds_used}};
  j["initial_offer"] = r.initial_offer ? json(*r.initial_offer) : json(nullptr);
  j["price"] = r.price ? json(*r.price) : json(nullptr);
  json trades = json::array();
  for (const auto& t : r.trades) {
    trades.push_back({{"proposer", std::string(to_string(t.proposer))},
                      {"give", bundle_to_json(t.offer.give)},
                      {"receive", bundle_to_json(t.offer.receive)}});
  }
  j["trades"] = std::move(trades);
  if (r.failure) {
    j["failure"] = {{"class", std::string(failure_class_name(r.failure->failure_class))},
                    {"agent", std::string(to_string(r.failure->agent))},
                    {"reason", r.failure->reason},
                    {"attempts", r.failure->attempts}};
  } else {
    j["failure"] = nullptr;
  }
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}};
  j["started_at"] = r.started_at;
  j["finished_at"] = r.finished_at;
  return j;
}

RunRecord record_from_json(const json& j) {
  if (!j.is_object()) throw RecordError("record is not a JSON object");
  if (!j.contains("schema_version")) throw RecordError("missing schema_version");
  const auto version = j["schema_version"];
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw RecordError("unsupported schema_version " + version.dump() + " (this build reads version " +
                      std::to_string(kSchemaVersion) + ")");
  }
  try {
    RunRecord r;
    auto& s = r.spec;
    s.run_id = j.at("run_id").get<std::string>();
    s.game = game_kind_from_string(j.at("game").get<std::string>());
    s.framing = agents::framing_from_string(j.at("language").get<std::string>());
    s.repetition = j.at("repetition").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.pair_index = j.at("pair_index").get<int>();
    s.language_index = j.at("language_index").get<int>();
    s.game_index = j.at("game_index").get<int>();
    s.config = config_from_json(j.at("config"), s.game);
    s.agent_p1 = agent_spec_from_json(j.at("agents").at("p1"));
    s.agent_p2 = agent_spec_from_json(j.at("agents").at("p2"));
    if (j.at("model_p1").get<std::string>() != s.agent_p1.label ||
        j.at("model_p2").get<std::string>() != s.agent_p2.label) {
      throw RecordError("model labels disagree with agent specs");
    }

    for (const auto& e : j.at("transcript")) {
      TranscriptEntry t;
      t.turn = e.at("turn").get<int>();
      t.message.speaker = role_from_string(e.at("speaker").get<std::string>());
      t.message.raw_text = e.at("raw").get<std::string>();
      t.message.rationale = e.at("rationale").get<std::string>();
      t.message.action = action_from_json(e.at("action"), s.game);
      t.failed_attempts = e.value("failed_attempts", std::vector<std::string>{});
      r.transcript.push_back(std::move(t));
    }

    const auto& o = j.at("outcome");
    r.outcome.kind = games::outcome_kind_from_string(o.at("kind").get<std::string>());
    if (!o.at("terms").is_null()) r.outcome.terms = terms_from_json(o["terms"], s.game);
    const auto& u = o.at("utilities");
    if (!u.is_array() || u.size() != 2) throw RecordError("outcome.utilities must be a pair");
    r.outcome.utilities = {u[0].get<long long>(), u[1].get<long long>()};
    r.outcome.rounds_used = o.at("rounds").get<int>();
    if (r.outcome.kind == games::OutcomeKind::Agreement && !r.outcome.terms) {
      throw RecordError("agreement without terms");
    }

    if (!j.at("initial_offer").is_null()) r.initial_offer = j["initial_offer"].get<int>();
    if (!j.at("price").is_null()) r.price = j["price"].get<int>();
    for (const auto& t : j.at("trades")) {
      r.trades.push_back({role_from_string(t.at("proposer").get<std::string>()),
                          TradeOffer{bundle_from_json(t.at("give")), bundle_from_json(t.at("receive"))}});
    }
    if (!j.at("failure").is_null()) {
      const auto& f = j["failure"];
      r.failure = FailureInfo{failure_class_from(f.at("class").get<std::string>()),
                              role_from_string(f.at("agent").get<std::string>()), f.at("reason").get<std::string>(),
                              f.value("attempts", std::vector<std::string>{})};
    }
    r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<long long>();
    r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<long long>();
    r.started_at = j.at("started_at").get<std::string>();
    r.finished_at = j.at("finished_at").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw RecordError(e.what());
  } catch (const std::invalid_argument& e) {
    throw RecordError(e.what());
  }
}

std::vector<std::string> validate_record_json(const json& j) {
  std::vector<std::string> errors;
  RunRecord r;
  try {
    r = record_from_json(j);
  } catch (const RecordError& e) {
    errors.emplace_back(e.what());
    return errors;
  }
  if (r.spec.run_id.empty()) errors.emplace_back("empty run_id");
  if (games::kind_of(r.spec.config) != r.spec.game) errors.emplace_back("config does not match game");
  if (r.outcome.rounds_used < 0 || r.outcome.rounds_used > games::max_turns_of(r.spec.config)) {
    errors.emplace_back("rounds outside [0, max_turns]");
  }
  if (r.outcome.kind == games::OutcomeKind::ProtocolFailure && !r.failure) {
    errors.emplace_back("protocol_failure outcome without failure details");
  }
  if (r.outcome.kind != games::OutcomeKind::ProtocolFailure && r.failure) {
    errors.emplace_back("failure details on a completed game");
  }
  for (std::size_t i = 0; i < r.transcript.size(); ++i) {
    if (r.transcript[i].turn != static_cast<int>(i) + 1) {
      errors.emplace_back("transcript turn numbers must be 1..n");
      break;
    }
  }
  return errors;
}

std::string to_line(const RunRecord& r) {
  return record_to_json(r).dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string format_timestamp(std::chrono::milliseconds since_epoch) {
  const auto secs = static_cast<std::time_t>(since_epoch.count() / 1000);
  const auto millis = since_epoch.count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << millis << 'Z';
  return out.str();
}

RunLog::RunLog(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (std::filesystem::exists(path_, ec)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw StorageError("cannot read run log " + path_.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto last_newline = content.rfind('\n');
    const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
    if (keep != content.size()) {
      std::filesystem::resize_file(path_, keep, ec);
      if (ec) throw StorageError("cannot repair torn final line in " + path_.string() + ": " + ec.message());
      content.resize(keep);
    }
    std::istringstream lines(content);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
      ++number;
      if (line.empty()) continue;
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("run_id") || !j["run_id"].is_string()) {
        throw StorageError("run log " + path_.string() + " line " + std::to_string(number) + " is corrupt");
      }
      existing_.insert(j["run_id"].get<std::string>());
    }
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw StorageError("cannot open run log " + path_.string() + " for appending");
}

void RunLog::append(const RunRecord& r) {
  const std::string line = to_line(r) + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw StorageError("write to run log " + path_.string() + " failed");
  existing_.insert(r.spec.run_id);
}

std::vector<RunRecord> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open run log " + path.string());
  std::vector<RunRecord> records;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw RecordError("line " + std::to_string(number) + ": not valid JSON");
    try {
      records.push_back(record_from_json(j));
    } catch (const RecordError& e) {
      throw RecordError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace arena::runlog
