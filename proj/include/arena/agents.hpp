#pragma once

// Agents produce one AgentMessage per turn. Scripted agents are pure
// functions of (strategy, params, seed, view); LLM agents build a persona
// prompt, call a ChatBackend and parse the reply, re-prompting on protocol
// errors.

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "arena/games.hpp"
#include "arena/gateway.hpp"
#include "arena/protocol.hpp"
#include "arena/types.hpp"

namespace arena::agents {

enum class LanguageFraming { English, Hindi, Punjabi, Gujarati, Marwadi };

inline constexpr LanguageFraming kAllFramings[] = {LanguageFraming::English, LanguageFraming::Hindi,
                                                   LanguageFraming::Punjabi, LanguageFraming::Gujarati,
                                                   LanguageFraming::Marwadi};

std::string_view to_string(LanguageFraming f);
LanguageFraming framing_from_string(std::string_view s);

/// The sentence that assigns the bargaining language. Empty for English,
/// which is the unprompted baseline.
std::string persona_clause(LanguageFraming f);

struct ScriptedSpec {
  std::string strategy;
  std::map<std::string, double> params;
  friend bool operator==(const ScriptedSpec&, const ScriptedSpec&) = default;
};

struct LlmSpec {
  std::string model_id;
  double temperature = 0.7;
  LanguageFraming framing = LanguageFraming::English;
  int max_output_tokens = 512;
  friend bool operator==(const LlmSpec&, const LlmSpec&) = default;
};

struct AgentSpec {
  std::variant<ScriptedSpec, LlmSpec> kind;
  Role role = Role::Player1;
  std::string label;  // model name used for grouping results
  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

struct PromptBundle {
  std::string system_prompt;
  std::string turn_prompt_template;  // placeholders: {turn} {max_turns} {situation} {marker}
};

PromptBundle build_prompt(GameKind kind, const games::GameConfig& config, Role role, LanguageFraming framing);

/// What an agent may see: public game state plus its own private values.
struct StateView {
  GameKind kind = GameKind::Ultimatum;
  Role self = Role::Player1;
  games::Phase phase = games::Phase::AwaitingProposal;
  int turn = 0;
  int max_turns = 0;
  std::optional<Terms> pending_offer;
  std::vector<AgentMessage> transcript;
  int pool = 0;                         // Ultimatum
  std::optional<int> private_value;     // Buy-Sell: seller_min or buyer_max, own role only
  ResourceBundle own_holdings;          // Resource Exchange
  ResourceBundle counterpart_holdings;  // Resource Exchange
  games::GoalSpec own_goal;
  protocol::Bounds bounds;
  std::uint64_t seed = 0;
  int repetition = 0;
};

StateView make_view(const games::GameState& state, Role self, int repetition = 0);

/// The turn prompt for `view`, with the machine-readable state marker as
/// its last line.
std::string render_turn_prompt(const PromptBundle& bundle, const StateView& view);

struct AgentTurn {
  AgentMessage message;
  std::vector<std::string> failed_attempts;  // raw replies that were re-prompted
  gateway::TokenUsage usage;
};

/// The agent could not produce a usable message. `infrastructure` marks
/// gateway failures as opposed to repeated protocol errors.
class AgentFailure : public std::runtime_error {
 public:
  AgentFailure(std::string reason, std::vector<std::string> attempts, gateway::TokenUsage usage, bool infrastructure)
      : std::runtime_error(std::move(reason)),
        attempts_(std::move(attempts)),
        usage_(usage),
        infrastructure_(infrastructure) {}
  const std::vector<std::string>& attempts() const { return attempts_; }
  const gateway::TokenUsage& usage() const { return usage_; }
  bool infrastructure() const { return infrastructure_; }

 private:
  std::vector<std::string> attempts_;
  gateway::TokenUsage usage_;
  bool infrastructure_;
};

class UnknownStrategy : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentTurn next_message(const StateView& view) = 0;
};

struct StrategyInfo {
  std::string name;
  std::map<std::string, double> defaults;
  std::string summary;
};

/// Catalog of scripted strategies addressable by name in config files.
const std::vector<StrategyInfo>& scripted_strategies();

/// Throws UnknownStrategy for names outside the catalog or unknown params.
std::unique_ptr<Agent> make_scripted_agent(const ScriptedSpec& spec);

/// Parse attempts per turn before giving up (first try plus two corrective
/// re-prompts).
inline constexpr int kMaxParseAttempts = 3;

std::unique_ptr<Agent> make_llm_agent(const LlmSpec& spec, PromptBundle prompt, gateway::ChatBackend& backend);

/// Builds the agent described by `spec` for one game. `backend` may be null
/// when the spec is scripted.
std::unique_ptr<Agent> make_agent(const AgentSpec& spec, GameKind kind, const games::GameConfig& config,
                                  gateway::ChatBackend* backend);

}  // namespace arena::agents
