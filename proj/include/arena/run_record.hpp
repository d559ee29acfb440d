#pragma once

// RunSpec / RunRecord and their line-delimited JSON form. The field-by-field
// layout is documented in docs/runlog.md.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arena/agents.hpp"
#include "arena/games.hpp"
#include "arena/gateway.hpp"

namespace arena::runlog {

inline constexpr int kSchemaVersion = 1;

struct RunSpec {
  std::string run_id;
  GameKind game = GameKind::Ultimatum;
  games::GameConfig config;
  agents::AgentSpec agent_p1;
  agents::AgentSpec agent_p2;
  agents::LanguageFraming framing = agents::LanguageFraming::English;
  int repetition = 0;
  std::uint64_t seed = 0;
  int pair_index = 0;
  int language_index = 0;
  int game_index = 0;
  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

struct TranscriptEntry {
  int turn = 0;  // 1-based message number
  AgentMessage message;
  std::vector<std::string> failed_attempts;
  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

enum class FailureClass { Protocol, Infrastructure };

struct FailureInfo {
  FailureClass failure_class = FailureClass::Protocol;
  Role agent = Role::Player1;
  std::string reason;
  std::vector<std::string> attempts;
  friend bool operator==(const FailureInfo&, const FailureInfo&) = default;
};

struct RunRecord {
  int schema_version = kSchemaVersion;
  RunSpec spec;
  std::vector<TranscriptEntry> transcript;
  games::Outcome outcome;
  std::optional<int> initial_offer;  // Ultimatum: Player 1's first split_to_p2
  std::optional<int> price;          // Buy-Sell: agreed price
  std::vector<games::ExecutedTrade> trades;
  std::optional<FailureInfo> failure;
  gateway::TokenUsage usage;
  std::string started_at;
  std::string finished_at;

  const std::string& model_p1() const { return spec.agent_p1.label; }
  const std::string& model_p2() const { return spec.agent_p2.label; }
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Malformed or unsupported record content.
class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The run log could not be read or written.
class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json terms_to_json(const Terms& t);
Terms terms_from_json(const nlohmann::json& j, GameKind kind);
nlohmann::json action_to_json(const Action& a);
Action action_from_json(const nlohmann::json& j, GameKind kind);
nlohmann::json config_to_json(const games::GameConfig& c);
games::GameConfig config_from_json(const nlohmann::json& j, GameKind kind);
nlohmann::json agent_spec_to_json(const agents::AgentSpec& a);
agents::AgentSpec agent_spec_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const RunRecord& r);
/// Throws RecordError naming the offending field.
RunRecord record_from_json(const nlohmann::json& j);

/// Schema problems in `j`, empty when the record is valid.
std::vector<std::string> validate_record_json(const nlohmann::json& j);

/// One line of the log, without the trailing newline. Invalid UTF-8 in
/// model output is replaced with U+FFFD.
std::string to_line(const RunRecord& r);

/// ISO-8601 UTC timestamp with millisecond precision.
std::string format_timestamp(std::chrono::milliseconds since_epoch);

/// Append-only writer. Opening repairs a torn final line left by a crash
/// and collects the run ids already present.
class RunLog {
 public:
  explicit RunLog(std::filesystem::path path);
  const std::set<std::string>& existing_ids() const { return existing_; }
  void append(const RunRecord& r);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::set<std::string> existing_;
  std::mutex mu_;
  std::ofstream out_;
};

/// Reads every record; throws RecordError("line N: ...") on the first bad
/// line.
std::vector<RunRecord> read_run_log(const std::filesystem::path& path);

}  // namespace arena::runlog
