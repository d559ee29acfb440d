#pragma once

// Experiment configuration, matrix expansion and the run loop. Runs are
// executed by a small worker pool and appended to a RunLog as they finish.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arena/agents.hpp"
#include "arena/games.hpp"
#include "arena/gateway.hpp"
#include "arena/run_record.hpp"

namespace arena::orchestrator {

inline constexpr int kConfigSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A participant in the tournament. LLM models are addressed by model id;
/// scripted models name a strategy, optionally a different one when they
/// play Player 2.
struct ModelEntry {
  std::string label;
  bool scripted = false;
  std::string model_id;  // llm
  agents::ScriptedSpec as_p1;
  agents::ScriptedSpec as_p2;
  friend bool operator==(const ModelEntry&, const ModelEntry&) = default;
};

enum class Pairing { Ordered, OrderedTwice };

struct ExperimentConfig {
  std::vector<ModelEntry> models;
  std::vector<agents::LanguageFraming> languages;
  std::vector<GameKind> games;
  int runs_per_cell = 10;
  Pairing pairing = Pairing::Ordered;
  std::uint64_t seed = 0;
  int concurrency = 4;
  double temperature = 0.7;
  int max_output_tokens = 512;
  std::map<GameKind, games::GameConfig> game_configs;  // missing kinds use defaults
  std::vector<gateway::ProviderProfile> providers;     // added to / replacing the built-ins
  std::optional<std::string> mock_fixtures;            // relative to the config file

  games::GameConfig config_for(GameKind kind) const;
  bool uses_llm() const;
};

/// Throws ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Stable digest of everything that determines the run matrix and its
/// records (concurrency and provider wiring excluded).
std::uint64_t config_digest(const ExperimentConfig& config);

/// 26-character ULID-format id, deterministic in (digest, index).
std::string make_run_id(std::uint64_t digest, std::uint64_t index);

/// Ordered (p1, p2) model index pairs, self-play excluded.
std::vector<std::pair<int, int>> model_pairs(const ExperimentConfig& config);

/// One spec per (pair, language, game, repetition), in that nesting order.
std::vector<runlog::RunSpec> expand_matrix(const ExperimentConfig& config);

struct ExecutionContext {
  gateway::ChatBackend* backend = nullptr;  // required for LLM specs
  std::shared_ptr<gateway::Clock> clock;
};

/// Plays one game to the end. Never throws: every failure becomes a
/// ProtocolFailure record.
runlog::RunRecord execute_run(const runlog::RunSpec& spec, const ExecutionContext& ctx);

/// Re-drives the engine over the record's transcript and reports every
/// place where the stored data disagrees with it. Empty means consistent.
std::vector<std::string> replay_divergences(const runlog::RunRecord& record);

struct ExecuteOptions {
  int concurrency = 1;
  std::function<bool()> should_stop;                           // checked before each run is claimed
  std::function<void(const runlog::RunRecord&)> on_record;     // called under the writer lock
};

struct ExecuteSummary {
  int completed = 0;  // records written this session
  int skipped = 0;    // already in the log
  int failed = 0;     // ProtocolFailure among `completed`
  bool interrupted = false;
};

/// Runs every spec whose id is not already in `log`. Throws StorageError if
/// the log cannot be written; other failures are recorded.
ExecuteSummary execute_all(const std::vector<runlog::RunSpec>& specs, runlog::RunLog& log, const ExecutionContext& ctx,
                           const ExecuteOptions& options = {});

/// Gateway wired for `config`: built-in profiles plus configured ones,
/// served by the mock transport when `mock_dir` is set.
std::unique_ptr<gateway::Gateway> build_gateway(const ExperimentConfig& config,
                                                const std::optional<std::filesystem::path>& mock_dir,
                                                gateway::EnvLookup env, std::shared_ptr<gateway::Clock> clock,
                                                gateway::GatewayOptions options = {});

/// LLM models in `config` that no profile routes, or whose profile lacks an
/// API key. Each entry is a human-readable problem.
std::vector<std::string> unroutable_models(const ExperimentConfig& config, const gateway::Gateway& gw);
std::vector<std::string> missing_credentials(const ExperimentConfig& config, const gateway::Gateway& gw);

}  // namespace arena::orchestrator
