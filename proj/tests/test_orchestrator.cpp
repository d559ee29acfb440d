#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <set>

#include <json.hpp>

#include "arena/orchestrator.hpp"
#include "support.hpp"

using namespace arena;
using namespace arena::orchestrator;
using nlohmann::json;

namespace {

json scripted_config_json(int runs_per_cell = 3) {
  return json{{"schema_version", 1},
              {"seed", 7},
              {"models",
               {{{"label", "grid"},
                 {"kind", "scripted"},
                 {"strategy", "GridProposer"},
                 {"params", {{"start", 10}, {"stride", 7}}},
                 {"as_p2", {{"strategy", "ThresholdResponder"}, {"params", {{"t", 30}}}}}},
                {{"label", "concede"}, {"kind", "scripted"}, {"strategy", "ConcessionProposer"}},
                {{"label", "random"}, {"kind", "scripted"}, {"strategy", "RandomLegalAgent"}},
                {{"label", "easy"}, {"kind", "scripted"}, {"strategy", "AlwaysAccept"}}}},
              {"languages", {"English", "Hindi"}},
              {"games", {"ultimatum", "buysell", "resource"}},
              {"runs_per_cell", runs_per_cell}};
}

ExecutionContext frozen_ctx(gateway::ChatBackend* backend = nullptr) {
  return {backend, std::make_shared<gateway::FrozenClock>()};
}

std::vector<std::string> sorted_lines(const std::filesystem::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(testing::read_file(p));
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  std::sort(lines.begin(), lines.end());
  return lines;
}

}  // namespace

TEST_CASE("matrix: full configuration expands to 1800 runs") {
  const auto cfg = load_config(testing::source_path("configs/full_matrix.json"));
  const auto specs = expand_matrix(cfg);
  CHECK(specs.size() == 1800);
  std::set<std::string> ids;
  for (const auto& s : specs) ids.insert(s.run_id);
  CHECK(ids.size() == 1800);
  for (const auto& id : ids) CHECK(id.size() == 26);

  auto twice = cfg;
  twice.pairing = Pairing::OrderedTwice;
  CHECK(expand_matrix(twice).size() == 3600);
}

TEST_CASE("matrix: nesting order and pairs") {
  auto j = scripted_config_json(2);
  j["models"] = json::array({j["models"][0], j["models"][3]});
  const auto cfg = parse_config(j);
  CHECK(model_pairs(cfg) == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  const auto specs = expand_matrix(cfg);
  REQUIRE(specs.size() == 2 * 2 * 3 * 2);
  CHECK(specs[0].agent_p1.label == "grid");
  CHECK(specs[0].agent_p2.label == "easy");
  CHECK(specs[1].repetition == 1);
  CHECK(specs[2].game == GameKind::BuySell);
  CHECK(specs[6].framing == agents::LanguageFraming::Hindi);
  CHECK(specs[12].agent_p1.label == "easy");
  CHECK(std::get<agents::ScriptedSpec>(specs[12].agent_p2.kind).strategy == "ThresholdResponder");
}

TEST_CASE("matrix: ids and seeds are stable and depend on the config") {
  const auto a = expand_matrix(parse_config(scripted_config_json()));
  const auto b = expand_matrix(parse_config(scripted_config_json()));
  CHECK(a == b);
  auto j = scripted_config_json();
  j["seed"] = 8;
  const auto c = expand_matrix(parse_config(j));
  CHECK(a[0].run_id != c[0].run_id);
  CHECK(a[0].seed != c[0].seed);

  auto k = scripted_config_json();
  k["concurrency"] = 16;
  CHECK(config_digest(parse_config(k)) == config_digest(parse_config(scripted_config_json())));
  CHECK(make_run_id(1, 0) != make_run_id(1, 1));
  CHECK(make_run_id(1, 0) == make_run_id(1, 0));
}

TEST_CASE("config: rejects bad input with a field name") {
  auto expect_error = [](json j, const std::string& field) {
    try {
      parse_config(j);
      FAIL("expected ConfigError for " << field);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CAPTURE(what);
      CHECK(what.find(field) != std::string::npos);
    }
  };
  auto j = scripted_config_json();
  j["schema_version"] = 2;
  expect_error(j, "schema_version");
  j = scripted_config_json();
  j["models"] = json::array({j["models"][0]});
  expect_error(j, "models");
  j = scripted_config_json();
  j["languages"] = {"Klingon"};
  expect_error(j, "languages");
  j = scripted_config_json();
  j["games"] = {"chess"};
  expect_error(j, "games");
  j = scripted_config_json();
  j["runs_per_cell"] = 0;
  expect_error(j, "runs_per_cell");
  j = scripted_config_json();
  j["surprise"] = true;
  expect_error(j, "surprise");
  j = scripted_config_json();
  j["models"][1]["strategy"] = "Telepath";
  expect_error(j, "Telepath");
  j = scripted_config_json();
  j["game_configs"] = {{"buysell", {{"seller_min", 70}, {"buyer_max", 60}}}};
  expect_error(j, "buysell");
}

TEST_CASE("execute_run: GridProposer against AlwaysAccept") {
  auto j = scripted_config_json(1);
  j["models"] = json::array({j["models"][0], j["models"][3]});
  j["games"] = {"ultimatum"};
  j["languages"] = {"English"};
  const auto specs = expand_matrix(parse_config(j));
  const auto r = execute_run(specs[0], frozen_ctx());
  CHECK(r.outcome.kind == games::OutcomeKind::Agreement);
  CHECK(r.outcome.rounds_used == 2);
  CHECK(r.initial_offer == 10);
  CHECK(r.outcome.utilities == games::Utilities{90, 10});
  CHECK(r.transcript.size() == 2);
  CHECK_FALSE(r.failure);
  CHECK(replay_divergences(r).empty());
}

TEST_CASE("execute_run: deterministic down to the serialized line") {
  const auto specs = expand_matrix(parse_config(scripted_config_json()));
  for (std::size_t i = 0; i < specs.size(); i += 7) {
    CHECK(runlog::to_line(execute_run(specs[i], frozen_ctx())) == runlog::to_line(execute_run(specs[i], frozen_ctx())));
  }
}

TEST_CASE("execute_run: unusable model output becomes a protocol failure") {
  const auto dir = testing::temp_dir("garbage");
  for (const auto* m : {"gpt-a", "gpt-b"}) std::ofstream(dir / (std::string(m) + ".json")) << R"({"default": ["I refuse to use tags."]})";
  auto j = json{{"schema_version", 1},
                {"models", {{{"label", "gpt-a"}}, {{"label", "gpt-b"}}}},
                {"languages", {"English"}},
                {"games", {"ultimatum"}},
                {"runs_per_cell", 1}};
  const auto cfg = parse_config(j);
  auto clock = std::make_shared<gateway::FrozenClock>();
  auto gw = build_gateway(cfg, dir, [](const std::string&) { return std::nullopt; }, clock);
  const auto r = execute_run(expand_matrix(cfg)[0], {gw.get(), clock});
  CHECK(r.outcome.kind == games::OutcomeKind::ProtocolFailure);
  REQUIRE(r.failure);
  CHECK(r.failure->failure_class == runlog::FailureClass::Protocol);
  CHECK(r.failure->agent == Role::Player1);
  CHECK(r.failure->attempts.size() == static_cast<std::size_t>(agents::kMaxParseAttempts));
  CHECK(r.usage.prompt_tokens > 0);
  CHECK(replay_divergences(r).empty());

  // Without a fixture directory entry for the model the gateway fails instead.
  auto spec = expand_matrix(cfg)[0];
  std::get<agents::LlmSpec>(spec.agent_p1.kind).model_id = "gpt-missing";
  const auto infra = execute_run(spec, {gw.get(), clock});
  REQUIRE(infra.failure);
  CHECK(infra.failure->failure_class == runlog::FailureClass::Infrastructure);
}

TEST_CASE("execute_all: concurrency does not change the records") {
  const auto specs = expand_matrix(parse_config(scripted_config_json(5)));
  REQUIRE(specs.size() >= 100);
  const std::vector<runlog::RunSpec> first100(specs.begin(), specs.begin() + 100);
  const auto dir = testing::temp_dir("concurrency");

  runlog::RunLog serial(dir / "serial.jsonl");
  const auto s1 = execute_all(first100, serial, frozen_ctx(), {1});
  runlog::RunLog parallel(dir / "parallel.jsonl");
  const auto s8 = execute_all(first100, parallel, frozen_ctx(), {8});
  CHECK(s1.completed == 100);
  CHECK(s8.completed == 100);

  const auto a = sorted_lines(dir / "serial.jsonl");
  const auto b = sorted_lines(dir / "parallel.jsonl");
  CHECK(a.size() == 100);
  CHECK(a == b);
  std::set<std::string> ids;
  for (const auto& r : runlog::read_run_log(dir / "parallel.jsonl")) ids.insert(r.spec.run_id);
  CHECK(ids.size() == 100);
}

TEST_CASE("execute_all: interrupted run resumes without duplicates") {
  const auto specs = expand_matrix(parse_config(scripted_config_json(5)));
  const std::vector<runlog::RunSpec> first100(specs.begin(), specs.begin() + 100);
  const auto dir = testing::temp_dir("resume");
  const auto path = dir / "log.jsonl";
  {
    runlog::RunLog log(path);
    std::atomic<int> written{0};
    ExecuteOptions opts;
    opts.concurrency = 4;
    opts.should_stop = [&] { return written.load() >= 50; };
    opts.on_record = [&](const runlog::RunRecord&) { ++written; };
    const auto s = execute_all(first100, log, frozen_ctx(), opts);
    CHECK(s.interrupted);
    CHECK(s.completed >= 50);
    CHECK(s.completed < 100);
  }
  {
    runlog::RunLog log(path);
    const auto before = static_cast<int>(log.existing_ids().size());
    const auto s = execute_all(first100, log, frozen_ctx(), {4});
    CHECK(s.skipped == before);
    CHECK(s.completed == 100 - before);
  }
  runlog::RunLog reference(dir / "reference.jsonl");
  execute_all(first100, reference, frozen_ctx(), {2});
  CHECK(sorted_lines(path) == sorted_lines(dir / "reference.jsonl"));
}

TEST_CASE("run log: a torn final line is dropped on open") {
  const auto specs = expand_matrix(parse_config(scripted_config_json(1)));
  const auto dir = testing::temp_dir("torn");
  const auto path = dir / "log.jsonl";
  {
    runlog::RunLog log(path);
    execute_all({specs.begin(), specs.begin() + 3}, log, frozen_ctx());
  }
  const auto intact = testing::read_file(path);
  std::ofstream(path, std::ios::app) << runlog::to_line(execute_run(specs[3], frozen_ctx())).substr(0, 40);
  {
    runlog::RunLog log(path);
    CHECK(log.existing_ids().size() == 3);
  }
  CHECK(testing::read_file(path) == intact);
  CHECK(runlog::read_run_log(path).size() == 3);

  std::ofstream(path, std::ios::app) << "{not json}\n";
  CHECK_THROWS_AS(runlog::RunLog{path}, runlog::StorageError);
  CHECK_THROWS_AS(runlog::read_run_log(path), runlog::RecordError);
}

TEST_CASE("records: json round trip") {
  const auto specs = expand_matrix(parse_config(scripted_config_json(1)));
  for (const auto& spec : specs) {
    const auto r = execute_run(spec, frozen_ctx());
    const auto j = runlog::record_to_json(r);
    CHECK(runlog::validate_record_json(j).empty());
    CHECK(runlog::to_line(runlog::record_from_json(j)) == runlog::to_line(r));
  }
  auto j = runlog::record_to_json(execute_run(specs[0], frozen_ctx()));
  j["schema_version"] = 0;
  CHECK_THROWS_AS(runlog::record_from_json(j), runlog::RecordError);
  j.erase("schema_version");
  CHECK_THROWS_AS(runlog::record_from_json(j), runlog::RecordError);
}

TEST_CASE("replay: consistent records pass and tampering is caught") {
  const auto specs = expand_matrix(parse_config(scripted_config_json(1)));
  for (const auto& spec : specs) {
    const auto r = execute_run(spec, frozen_ctx());
    CHECK(replay_divergences(r).empty());
  }
  const auto agreed = std::find_if(specs.begin(), specs.end(), [](const runlog::RunSpec& s) {
    return s.game == GameKind::Ultimatum && s.agent_p1.label == "grid" && s.agent_p2.label == "easy";
  });
  REQUIRE(agreed != specs.end());
  auto r = execute_run(*agreed, frozen_ctx());
  REQUIRE(r.outcome.kind == games::OutcomeKind::Agreement);

  auto wrong_utility = r;
  wrong_utility.outcome.utilities.p1 += 1;
  CHECK_FALSE(replay_divergences(wrong_utility).empty());

  auto wrong_text = r;
  wrong_text.transcript[0].message.raw_text = "<propose split_to_p2=\"99\"/>";
  CHECK_FALSE(replay_divergences(wrong_text).empty());

  auto truncated = r;
  truncated.transcript.pop_back();
  CHECK_FALSE(replay_divergences(truncated).empty());

  auto wrong_offer = r;
  wrong_offer.initial_offer = 77;
  CHECK_FALSE(replay_divergences(wrong_offer).empty());
}

TEST_CASE("build_gateway: routing and credentials") {
  auto j = json{{"schema_version", 1},
                {"models", {{{"label", "gpt-4o"}}, {{"label", "claude-3-haiku"}}, {{"label", "llama"}}}},
                {"languages", {"English"}},
                {"games", {"ultimatum"}}};
  const auto cfg = parse_config(j);
  auto gw = build_gateway(cfg, std::nullopt,
                          [](const std::string& n) -> std::optional<std::string> {
                            if (n == "OPENAI_API_KEY") return "k";
                            return std::nullopt;
                          },
                          std::make_shared<gateway::FakeClock>());
  CHECK(unroutable_models(cfg, *gw).size() == 1);
  const auto missing = missing_credentials(cfg, *gw);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0].find("ANTHROPIC_API_KEY") != std::string::npos);
}
