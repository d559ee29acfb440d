#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "arena/cli.hpp"
#include "support.hpp"

using namespace arena;
using namespace arena::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

CliEnv no_keys() {
  CliEnv env;
  env.env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
  env.clock = std::make_shared<gateway::FrozenClock>();
  return env;
}

Result run(const std::vector<std::string>& args, const CliEnv& env = no_keys()) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, env);
  return {code, out.str(), err.str()};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::getline(in, l);
  return l;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("cli: run, validate and resume on the scripted config") {
  const auto dir = testing::temp_dir("cli_run");
  const auto log = (dir / "log.jsonl").string();
  const auto cfg = testing::source_path("configs/scripted.json");

  auto r = run({"run", "--config", cfg, "--out", log});
  CHECK(r.code == kOk);
  CHECK(r.out.find("216 planned, 216 completed") != std::string::npos);

  r = run({"validate", "--config", cfg, "--log", log});
  CHECK(r.code == kOk);
  CHECK(r.out.find("log ok: 216 records") != std::string::npos);

  r = run({"run", "--config", cfg, "--out", log});
  CHECK(r.code == kUsage);

  r = run({"resume", "--config", cfg, "--out", log});
  CHECK(r.code == kOk);
  CHECK(r.out.find("0 completed, 216 already in log") != std::string::npos);
}

TEST_CASE("cli: missing credentials stop the run before the log exists") {
  const auto dir = testing::temp_dir("cli_auth");
  const auto log = dir / "log.jsonl";
  const auto r = run({"run", "--config", testing::source_path("configs/demo.json"), "--out", log.string()});
  CHECK(r.code == kAuth);
  CHECK(r.err.find("OPENAI_API_KEY") != std::string::npos);
  CHECK_FALSE(fs::exists(log));
}

TEST_CASE("cli: providers lists env var names, never values") {
  CliEnv env = no_keys();
  env.env = [](const std::string& n) -> std::optional<std::string> {
    if (n == "OPENAI_API_KEY") return std::string("sk-very-secret");
    return std::nullopt;
  };
  const auto r = run({"providers", "--config", testing::source_path("configs/demo.json")}, env);
  CHECK(r.code == kOk);
  CHECK(r.out.find("OPENAI_API_KEY") != std::string::npos);
  CHECK(r.out.find("sk-very-secret") == std::string::npos);
  CHECK(r.err.find("sk-very-secret") == std::string::npos);
}

TEST_CASE("cli: analyze matches the golden output") {
  const auto log = testing::source_path("data/demo_runlog.jsonl");
  for (const std::string group : {"language", "pair"}) {
    const auto r = run({"analyze", "--log", log, "--group-by", group});
    CHECK(r.code == kOk);
    CHECK(r.out == testing::read_file(testing::source_path("tests/golden/analyze_" + group + ".txt")));
  }
}

TEST_CASE("cli: analyze and export edge cases") {
  const auto dir = testing::temp_dir("cli_analyze");
  const auto empty = dir / "empty.jsonl";
  std::ofstream(empty).close();
  CHECK(run({"analyze", "--log", empty.string()}).code == kUsage);
  CHECK(run({"analyze", "--log", (dir / "absent.jsonl").string()}).code == kStorage);

  const auto log = testing::source_path("data/demo_runlog.jsonl");
  CHECK(run({"analyze", "--log", log, "--group-by", "colour"}).code == kUsage);

  const auto out = dir / "ultimatum.csv";
  auto r = run({"export", "--log", log, "--game", "ultimatum", "--format", "csv", "--out", out.string()});
  CHECK(r.code == kOk);
  CHECK(first_line(out).rfind("game,language,records,protocol_failures,", 0) == 0);
  r = run({"export", "--log", log, "--game", "ultimatum", "--format", "heatmap-grid"});
  CHECK(r.code == kOk);
  CHECK(r.out.rfind("grid game=ultimatum", 0) == 0);
}

TEST_CASE("cli: replay reports consistency, divergence and unknown ids") {
  const auto dir = testing::temp_dir("cli_replay");
  const auto src = testing::source_path("data/demo_runlog.jsonl");
  const auto line = first_line(src);
  const auto j = nlohmann::json::parse(line);
  const auto id = j["run_id"].get<std::string>();

  auto r = run({"replay", "--log", src, "--run-id", id});
  CHECK(r.code == kOk);
  CHECK(r.out.find("replay: consistent with the engine") != std::string::npos);
  CHECK(r.out.find("  | ") != std::string::npos);

  auto tampered = j;
  tampered["outcome"]["utilities"][0] = tampered["outcome"]["utilities"][0].get<long long>() + 5;
  const auto bad = dir / "tampered.jsonl";
  write_lines(bad, {tampered.dump()});
  r = run({"replay", "--log", bad.string(), "--run-id", id});
  CHECK(r.code == kDivergence);
  CHECK(r.out.find("DIVERGENCE") != std::string::npos);

  CHECK(run({"replay", "--log", src, "--run-id", "01NOTAREALRUNID0000000000"}).code == kUnknownRunId);
}

TEST_CASE("cli: older or malformed logs are refused") {
  const auto dir = testing::temp_dir("cli_schema");
  auto j = nlohmann::json::parse(first_line(testing::source_path("data/demo_runlog.jsonl")));
  j["schema_version"] = 0;
  const auto old = dir / "old.jsonl";
  write_lines(old, {j.dump()});
  auto r = run({"analyze", "--log", old.string()});
  CHECK(r.code == kUsage);
  CHECK(r.err.find("schema_version") != std::string::npos);
  CHECK(run({"validate", "--log", old.string()}).code == kUsage);

  const auto garbage = dir / "garbage.jsonl";
  write_lines(garbage, {"{\"schema_version\": 1}", "not json"});
  r = run({"validate", "--log", garbage.string()});
  CHECK(r.code == kUsage);
  CHECK(r.err.find("line 1") != std::string::npos);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli: usage errors") {
  CHECK(run({}).code == kUsage);
  CHECK(run({"dance"}).code == kUsage);
  CHECK(run({"run", "--out", "x.jsonl"}).code == kUsage);
  CHECK(run({"validate", "--config", "/nonexistent/config.json"}).code == kUsage);
  CHECK(run({"--help"}).code == kOk);
}
