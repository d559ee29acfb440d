#include "arena/orchestrator.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "arena/hashing.hpp"

namespace arena::orchestrator {

using nlohmann::json;

namespace {

constexpr char kCrockford[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " is missing or has the wrong type");
  }
}

agents::ScriptedSpec scripted_from(const json& j, const std::string& where) {
  agents::ScriptedSpec s;
  s.strategy = get_field<std::string>(j, "strategy", where);
  if (j.contains("params")) {
    require(j["params"].is_object(), where + ".params must be an object");
    for (const auto& [k, v] : j["params"].items()) {
      require(v.is_number(), where + ".params." + k + " must be a number");
      s.params[k] = v.get<double>();
    }
  }
  try {
    agents::make_scripted_agent(s);
  } catch (const agents::UnknownStrategy& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

json scripted_to_json(const agents::ScriptedSpec& s) {
  json params = json::object();
  for (const auto& [k, v] : s.params) params[k] = v;
  return {{"strategy", s.strategy}, {"params", params}};
}

gateway::ProviderProfile provider_from(const json& j, const std::string& where) {
  gateway::ProviderProfile p;
  p.name = get_field<std::string>(j, "name", where);
  p.model_prefixes = get_field<std::vector<std::string>>(j, "model_prefixes", where);
  p.endpoint_url = get_field<std::string>(j, "endpoint_url", where);
  p.api_key_env = get_field<std::string>(j, "api_key_env", where);
  p.auth_header_name = j.value("auth_header_name", p.auth_header_name);
  p.auth_header_template = j.value("auth_header_template", p.auth_header_template);
  p.max_in_flight = j.value("max_in_flight", p.max_in_flight);
  try {
    p.dialect = gateway::dialect_by_name(j.value("dialect", std::string("openai-chat")));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".dialect: " + e.what());
  }
  require(p.max_in_flight >= 1, where + ".max_in_flight must be at least 1");
  return p;
}

agents::AgentSpec agent_for(const ExperimentConfig& c, const ModelEntry& m, Role role, agents::LanguageFraming f) {
  agents::AgentSpec a;
  a.role = role;
  a.label = m.label;
  if (m.scripted) {
    a.kind = role == Role::Player1 ? m.as_p1 : m.as_p2;
  } else {
    a.kind = agents::LlmSpec{m.model_id, c.temperature, f, c.max_output_tokens};
  }
  return a;
}

}  // namespace

games::GameConfig ExperimentConfig::config_for(GameKind kind) const {
  auto it = game_configs.find(kind);
  return it == game_configs.end() ? games::default_config(kind) : it->second;
}

bool ExperimentConfig::uses_llm() const {
  return std::any_of(models.begin(), models.end(), [](const ModelEntry& m) { return !m.scripted; });
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  require(j.is_object(), "config must be a JSON object");
  static const std::set<std::string> known = {"schema_version", "models", "languages", "games", "runs_per_cell",
                                              "pairing", "seed", "concurrency", "temperature", "max_output_tokens",
                                              "game_configs", "providers", "mock_fixtures"};
  for (const auto& [k, v] : j.items()) require(known.count(k) == 1, "unknown config field '" + k + "'");
  require(j.contains("schema_version"), "config.schema_version is missing");
  require(j["schema_version"] == kConfigSchemaVersion,
          "unsupported config schema_version " + j["schema_version"].dump() + " (expected " +
              std::to_string(kConfigSchemaVersion) + ")");

  ExperimentConfig c;
  const auto& models = j.contains("models") ? j["models"] : json();
  require(models.is_array() && models.size() >= 2, "config.models must list at least two models");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string where = "models[" + std::to_string(i) + "]";
    const auto& mj = models[i];
    require(mj.is_object(), where + " must be an object");
    ModelEntry m;
    m.label = get_field<std::string>(mj, "label", where);
    require(!m.label.empty(), where + ".label is empty");
    require(labels.insert(m.label).second, "duplicate model label '" + m.label + "'");
    const auto kind = mj.value("kind", std::string("llm"));
    if (kind == "llm") {
      m.model_id = mj.value("model_id", m.label);
    } else if (kind == "scripted") {
      m.scripted = true;
      m.as_p1 = scripted_from(mj, where);
      m.as_p2 = mj.contains("as_p2") ? scripted_from(mj["as_p2"], where + ".as_p2") : m.as_p1;
    } else {
      throw ConfigError(where + ".kind must be \"llm\" or \"scripted\"");
    }
    c.models.push_back(std::move(m));
  }

  for (const auto& l : get_field<std::vector<std::string>>(j, "languages", "config")) {
    try {
      c.languages.push_back(agents::framing_from_string(l));
    } catch (const std::invalid_argument&) {
      throw ConfigError("config.languages: unknown language '" + l + "'");
    }
  }
  for (const auto& g : get_field<std::vector<std::string>>(j, "games", "config")) {
    try {
      c.games.push_back(game_kind_from_string(g));
    } catch (const std::invalid_argument&) {
      throw ConfigError("config.games: unknown game '" + g + "'");
    }
  }
  require(!c.languages.empty(), "config.languages is empty");
  require(!c.games.empty(), "config.games is empty");
  require(std::set(c.languages.begin(), c.languages.end()).size() == c.languages.size(), "config.languages has a duplicate");
  require(std::set(c.games.begin(), c.games.end()).size() == c.games.size(), "config.games has a duplicate");

  c.runs_per_cell = j.value("runs_per_cell", c.runs_per_cell);
  require(c.runs_per_cell >= 1, "config.runs_per_cell must be at least 1");
  const auto pairing = j.value("pairing", std::string("ordered"));
  if (pairing == "ordered") {
    c.pairing = Pairing::Ordered;
  } else if (pairing == "ordered-twice") {
    c.pairing = Pairing::OrderedTwice;
  } else {
    throw ConfigError("config.pairing must be \"ordered\" or \"ordered-twice\"");
  }
  require(!j.contains("seed") || j["seed"].is_number_unsigned() ||
              (j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0), "config.seed must be a non-negative integer");
  c.seed = j.value("seed", std::uint64_t{0});
  c.concurrency = j.value("concurrency", c.concurrency);
  require(c.concurrency >= 1, "config.concurrency must be at least 1");
  c.temperature = j.value("temperature", c.temperature);
  require(c.temperature >= 0.0 && c.temperature <= 2.0, "config.temperature must be within [0, 2]");
  c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
  require(c.max_output_tokens >= 1, "config.max_output_tokens must be positive");

  if (j.contains("game_configs")) {
    require(j["game_configs"].is_object(), "config.game_configs must be an object");
    for (const auto& [name, gj] : j["game_configs"].items()) {
      GameKind kind;
      try {
        kind = game_kind_from_string(name);
      } catch (const std::invalid_argument&) {
        throw ConfigError("config.game_configs: unknown game '" + name + "'");
      }
      try {
        auto gc = runlog::config_from_json(gj, kind);
        games::validate(gc);
        c.game_configs[kind] = gc;
      } catch (const std::exception& e) {
        throw ConfigError("game_configs." + name + ": " + e.what());
      }
    }
  }
  if (j.contains("providers")) {
    require(j["providers"].is_array(), "config.providers must be an array");
    for (std::size_t i = 0; i < j["providers"].size(); ++i) {
      c.providers.push_back(provider_from(j["providers"][i], "providers[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("mock_fixtures")) {
    std::filesystem::path p = get_field<std::string>(j, "mock_fixtures", "config");
    c.mock_fixtures = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return parse_config(j, path.parent_path());
}

std::uint64_t config_digest(const ExperimentConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) {
    json e{{"label", m.label}, {"scripted", m.scripted}};
    if (m.scripted) {
      e["as_p1"] = scripted_to_json(m.as_p1);
      e["as_p2"] = scripted_to_json(m.as_p2);
    } else {
      e["model_id"] = m.model_id;
    }
    models.push_back(e);
  }
  json languages = json::array();
  for (auto f : c.languages) languages.push_back(std::string(agents::to_string(f)));
  json games = json::array();
  for (auto g : c.games) games.push_back({{"game", std::string(to_string(g))}, {"config", runlog::config_to_json(c.config_for(g))}});
  const json canonical{{"models", models},
                       {"languages", languages},
                       {"games", games},
                       {"runs_per_cell", c.runs_per_cell},
                       {"pairing", c.pairing == Pairing::Ordered ? "ordered" : "ordered-twice"},
                       {"seed", c.seed},
                       {"temperature", c.temperature},
                       {"max_output_tokens", c.max_output_tokens}};
  return fnv1a64(canonical.dump());
}

std::string make_run_id(std::uint64_t digest, std::uint64_t index) {
  // 48-bit "time" and 16 high random bits from the digest, low 64 bits the index.
  unsigned __int128 v = (static_cast<unsigned __int128>(splitmix64(digest)) << 64) | index;
  std::string id(26, '0');
  for (int i = 25; i >= 0; --i) {
    id[static_cast<std::size_t>(i)] = kCrockford[static_cast<unsigned>(v & 31)];
    v >>= 5;
  }
  return id;
}

std::vector<std::pair<int, int>> model_pairs(const ExperimentConfig& c) {
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(c.models.size());
  const int copies = c.pairing == Pairing::OrderedTwice ? 2 : 1;
  for (int copy = 0; copy < copies; ++copy) {
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a != b) pairs.emplace_back(a, b);
      }
    }
  }
  return pairs;
}

std::vector<runlog::RunSpec> expand_matrix(const ExperimentConfig& c) {
  const auto digest = config_digest(c);
  const auto pairs = model_pairs(c);
  std::vector<runlog::RunSpec> specs;
  specs.reserve(pairs.size() * c.languages.size() * c.games.size() * static_cast<std::size_t>(c.runs_per_cell));
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto& [a, b] = pairs[pi];
    for (std::size_t li = 0; li < c.languages.size(); ++li) {
      for (std::size_t gi = 0; gi < c.games.size(); ++gi) {
        for (int rep = 0; rep < c.runs_per_cell; ++rep) {
          runlog::RunSpec s;
          s.run_id = make_run_id(digest, specs.size());
          s.game = c.games[gi];
          s.config = c.config_for(s.game);
          s.framing = c.languages[li];
          s.agent_p1 = agent_for(c, c.models[static_cast<std::size_t>(a)], Role::Player1, s.framing);
          s.agent_p2 = agent_for(c, c.models[static_cast<std::size_t>(b)], Role::Player2, s.framing);
          s.repetition = rep;
          s.pair_index = static_cast<int>(pi);
          s.language_index = static_cast<int>(li);
          s.game_index = static_cast<int>(gi);
          s.seed = mix_seed({c.seed, pi, li, gi, static_cast<std::uint64_t>(rep)});
          specs.push_back(std::move(s));
        }
      }
    }
  }
  return specs;
}

runlog::RunRecord execute_run(const runlog::RunSpec& spec, const ExecutionContext& ctx) {
  auto clock = ctx.clock ? ctx.clock : gateway::system_clock();
  runlog::RunRecord rec;
  rec.spec = spec;
  rec.started_at = runlog::format_timestamp(clock->now());

  games::GameState state;
  try {
    state = games::new_game(spec.game, spec.config, spec.seed);
  } catch (const std::exception& e) {
    // Only reachable with a hand-built spec; the record still has to exist.
    state = games::fail_protocol(games::new_game(spec.game, games::default_config(spec.game), spec.seed));
    rec.failure = runlog::FailureInfo{runlog::FailureClass::Infrastructure, Role::Player1,
                                      std::string("invalid game config: ") + e.what(), {}};
  }

  std::unique_ptr<agents::Agent> players[2];
  if (!state.terminal()) {
    for (Role r : {Role::Player1, Role::Player2}) {
      try {
        players[r == Role::Player1 ? 0 : 1] =
            agents::make_agent(r == Role::Player1 ? spec.agent_p1 : spec.agent_p2, spec.game, spec.config, ctx.backend);
      } catch (const std::exception& e) {
        state = games::fail_protocol(state);
        rec.failure = runlog::FailureInfo{runlog::FailureClass::Infrastructure, r,
                                          std::string("agent construction failed: ") + e.what(), {}};
        break;
      }
    }
  }

  while (!state.terminal()) {
    const Role speaker = state.current_speaker;
    auto& agent = *players[speaker == Role::Player1 ? 0 : 1];
    try {
      auto turn = agent.next_message(agents::make_view(state, speaker, spec.repetition));
      rec.usage += turn.usage;
      state = games::step(state, turn.message);
      rec.transcript.push_back({state.turn, std::move(turn.message), std::move(turn.failed_attempts)});
    } catch (const agents::AgentFailure& e) {
      rec.usage += e.usage();
      rec.failure = runlog::FailureInfo{
          e.infrastructure() ? runlog::FailureClass::Infrastructure : runlog::FailureClass::Protocol, speaker, e.what(),
          e.attempts()};
      state = games::fail_protocol(state);
    } catch (const std::exception& e) {
      rec.failure = runlog::FailureInfo{runlog::FailureClass::Protocol, speaker, e.what(), {}};
      state = games::fail_protocol(state);
    }
  }

  rec.outcome = *state.outcome;
  if (state.initial_offer) {
    if (const auto* s = std::get_if<UltimatumSplit>(&*state.initial_offer)) rec.initial_offer = s->to_p2;
  }
  if (rec.outcome.kind == games::OutcomeKind::Agreement && rec.outcome.terms) {
    if (const auto* p = std::get_if<Price>(&*rec.outcome.terms)) rec.price = p->coins;
  }
  rec.trades = state.trades;
  rec.finished_at = runlog::format_timestamp(clock->now());
  return rec;
}

std::vector<std::string> replay_divergences(const runlog::RunRecord& r) {
  std::vector<std::string> out;
  games::GameState state;
  try {
    state = games::new_game(r.spec.game, r.spec.config, r.spec.seed);
  } catch (const std::exception& e) {
    out.push_back(std::string("config rejected by engine: ") + e.what());
    return out;
  }
  for (const auto& entry : r.transcript) {
    const std::string at = "turn " + std::to_string(entry.turn) + ": ";
    if (state.terminal()) {
      out.push_back(at + "message after the game ended");
      return out;
    }
    const Role speaker = state.current_speaker;
    auto parsed = protocol::parse_message(entry.message.raw_text, r.spec.game, games::bounds_for(state, speaker), speaker);
    if (const auto* err = std::get_if<protocol::ParseError>(&parsed)) {
      out.push_back(at + "raw text does not parse: " + err->describe());
      return out;
    }
    if (std::get<AgentMessage>(parsed) != entry.message) out.push_back(at + "parsed action differs from stored action");
    try {
      state = games::step(state, entry.message);
    } catch (const games::IllegalMove& e) {
      out.push_back(at + "engine rejects move: " + e.what());
      return out;
    }
    if (state.turn != entry.turn) out.push_back(at + "turn number differs from engine (" + std::to_string(state.turn) + ")");
  }
  if (!state.terminal()) {
    if (!r.failure) {
      out.push_back("transcript ends before the game does and no failure is recorded");
      return out;
    }
    state = games::fail_protocol(state);
  } else if (r.failure) {
    out.push_back("failure recorded for a game that finished normally");
  }

  const auto& o = *state.outcome;
  if (o.kind != r.outcome.kind) {
    out.push_back("outcome kind: engine " + std::string(games::to_string(o.kind)) + ", log " +
                  std::string(games::to_string(r.outcome.kind)));
  }
  if (o.terms != r.outcome.terms) out.push_back("outcome terms differ");
  if (o.utilities != r.outcome.utilities) {
    out.push_back("utilities: engine [" + std::to_string(o.utilities.p1) + ", " + std::to_string(o.utilities.p2) +
                  "], log [" + std::to_string(r.outcome.utilities.p1) + ", " + std::to_string(r.outcome.utilities.p2) +
                  "]");
  }
  if (o.rounds_used != r.outcome.rounds_used) out.push_back("rounds differ");
  std::optional<int> initial;
  if (state.initial_offer) {
    if (const auto* s = std::get_if<UltimatumSplit>(&*state.initial_offer)) initial = s->to_p2;
  }
  if (initial != r.initial_offer) out.push_back("initial offer differs");
  std::optional<int> price;
  if (o.kind == games::OutcomeKind::Agreement && o.terms) {
    if (const auto* p = std::get_if<Price>(&*o.terms)) price = p->coins;
  }
  if (price != r.price) out.push_back("price differs");
  if (state.trades != r.trades) out.push_back("trade list differs");
  return out;
}

ExecuteSummary execute_all(const std::vector<runlog::RunSpec>& specs, runlog::RunLog& log, const ExecutionContext& ctx,
                           const ExecuteOptions& options) {
  ExecuteSummary summary;
  std::vector<const runlog::RunSpec*> todo;
  std::set<std::string> seen = log.existing_ids();
  for (const auto& s : specs) {
    if (seen.insert(s.run_id).second) {
      todo.push_back(&s);
    } else {
      ++summary.skipped;
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;  // guards summary, the log, callbacks and the first error
  std::exception_ptr error;

  auto worker = [&] {
    while (!abort.load()) {
      if (options.should_stop) {
        std::lock_guard lock(mu);
        if (options.should_stop()) {
          summary.interrupted = true;
          return;
        }
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      auto rec = execute_run(*todo[i], ctx);
      std::lock_guard lock(mu);
      if (abort.load()) return;
      try {
        log.append(rec);
      } catch (...) {
        error = std::current_exception();
        abort.store(true);
        return;
      }
      ++summary.completed;
      if (rec.outcome.kind == games::OutcomeKind::ProtocolFailure) ++summary.failed;
      if (options.on_record) options.on_record(rec);
    }
  };

  const int n = std::max(1, std::min<int>(options.concurrency, static_cast<int>(todo.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
  return summary;
}

std::unique_ptr<gateway::Gateway> build_gateway(const ExperimentConfig& config,
                                                const std::optional<std::filesystem::path>& mock_dir,
                                                gateway::EnvLookup env, std::shared_ptr<gateway::Clock> clock,
                                                gateway::GatewayOptions options) {
  gateway::TransportFactory factory;
  if (mock_dir) {
    const std::string dir = mock_dir->string();
    factory = [dir](const gateway::ProviderProfile& p) { return gateway::make_mock_transport(dir, p.dialect); };
    options.require_credentials = false;
  } else {
    factory = [](const gateway::ProviderProfile&) { return gateway::make_http_transport(); };
  }
  auto gw = std::make_unique<gateway::Gateway>(std::move(factory), std::move(env), std::move(clock), std::move(options));
  std::vector<gateway::ProviderProfile> profiles = gateway::builtin_profiles();
  for (const auto& p : config.providers) {
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](const auto& q) { return q.name == p.name; });
    if (it != profiles.end()) {
      *it = p;
    } else {
      profiles.push_back(p);
    }
  }
  for (auto& p : profiles) {
    if (mock_dir) p.max_in_flight = std::max(p.max_in_flight, config.concurrency);
    gw->register_provider(p);
  }
  return gw;
}

std::vector<std::string> unroutable_models(const ExperimentConfig& config, const gateway::Gateway& gw) {
  std::vector<std::string> problems;
  for (const auto& m : config.models) {
    if (!m.scripted && gw.route(m.model_id) == nullptr) {
      problems.push_back("no provider profile serves model '" + m.model_id + "'");
    }
  }
  return problems;
}

std::vector<std::string> missing_credentials(const ExperimentConfig& config, const gateway::Gateway& gw) {
  std::vector<std::string> problems;
  std::set<std::string> reported;
  for (const auto& m : config.models) {
    if (m.scripted) continue;
    const auto* p = gw.route(m.model_id);
    if (p == nullptr || gw.has_credentials(*p) || !reported.insert(p->name).second) continue;
    problems.push_back("provider '" + p->name + "' (model " + m.model_id + ") needs " + p->api_key_env);
  }
  return problems;
}

}  // namespace arena::orchestrator
