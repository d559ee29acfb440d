#pragma once

// State machines and payoff rules for the Ultimatum, Buy-Sell and Resource
// Exchange games. A GameState is a value: step() returns the successor and
// never mutates its argument.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "arena/protocol.hpp"
#include "arena/types.hpp"

namespace arena::games {

struct UltimatumConfig {
  int pool = 100;
  int max_turns = 8;
  friend bool operator==(const UltimatumConfig&, const UltimatumConfig&) = default;
};

struct BuySellConfig {
  int seller_min = 40;  // private to Player 1 (seller)
  int buyer_max = 60;   // private to Player 2 (buyer)
  int max_turns = 8;
  friend bool operator==(const BuySellConfig&, const BuySellConfig&) = default;
};

/// Per-kind weights for a Resource Exchange goal. Empty means every unit
/// counts once.
struct GoalSpec {
  std::map<std::string, int> weights;
  int weight_of(const std::string& kind) const;
  friend bool operator==(const GoalSpec&, const GoalSpec&) = default;
};

struct ResourceConfig {
  ResourceBundle endowment_p1{{"X", 25}, {"Y", 5}};
  ResourceBundle endowment_p2{{"X", 25}, {"Y", 5}};
  GoalSpec goal_p1;
  GoalSpec goal_p2;
  int max_turns = 8;
  friend bool operator==(const ResourceConfig&, const ResourceConfig&) = default;
};

using GameConfig = std::variant<UltimatumConfig, BuySellConfig, ResourceConfig>;

GameKind kind_of(const GameConfig& config);
int max_turns_of(const GameConfig& config);
GameConfig default_config(GameKind kind);

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IllegalMove : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Throws InvalidConfig describing the first violated constraint.
void validate(const GameConfig& config);

enum class Phase { AwaitingProposal, AwaitingResponse, Terminal };
enum class OutcomeKind { Agreement, Rejection, NoDealTimeout, ProtocolFailure };

std::string_view to_string(Phase p);
std::string_view to_string(OutcomeKind k);
OutcomeKind outcome_kind_from_string(std::string_view s);

struct Utilities {
  long long p1 = 0;
  long long p2 = 0;
  friend bool operator==(const Utilities&, const Utilities&) = default;
};

/// For Buy-Sell the utilities are (seller advantage, buyer advantage).
struct Outcome {
  OutcomeKind kind = OutcomeKind::NoDealTimeout;
  std::optional<Terms> terms;
  Utilities utilities;
  int rounds_used = 0;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct ExecutedTrade {
  Role proposer = Role::Player1;
  TradeOffer offer;
  friend bool operator==(const ExecutedTrade&, const ExecutedTrade&) = default;
};

struct GameState {
  GameConfig config;
  std::uint64_t seed = 0;
  Phase phase = Phase::AwaitingProposal;
  Role current_speaker = Role::Player1;
  std::vector<AgentMessage> transcript;
  std::optional<Terms> pending_offer;
  int turn = 0;
  std::optional<Outcome> outcome;
  ResourceBundle holdings_p1;
  ResourceBundle holdings_p2;
  std::vector<ExecutedTrade> trades;
  std::optional<Terms> initial_offer;  // first Player 1 proposal, kept even if superseded

  GameKind kind() const { return kind_of(config); }
  bool terminal() const { return phase == Phase::Terminal; }
  const ResourceBundle& holdings(Role r) const { return r == Role::Player1 ? holdings_p1 : holdings_p2; }
};

GameState new_game(GameKind kind, const GameConfig& config, std::uint64_t seed = 0);

/// Applies one message. Throws IllegalMove on a wrong speaker, a response
/// with nothing pending, out-of-bounds terms, or a terminal state.
GameState step(const GameState& state, const AgentMessage& msg);

/// Ends the game because the current speaker could not produce a usable
/// message.
GameState fail_protocol(const GameState& state);

/// Parser limits for the current speaker.
protocol::Bounds bounds_for(const GameState& state, Role speaker);

/// Empty when `action` may be played in `phase`; otherwise the reason.
std::optional<std::string> phase_violation(Phase phase, const Action& action);

Utilities ultimatum_payoffs(int pool, int split_to_p2, bool accepted);

struct Advantages {
  long long seller = 0;
  long long buyer = 0;
  friend bool operator==(const Advantages&, const Advantages&) = default;
};
Advantages buysell_advantages(int price, int seller_min, int buyer_max);

/// Holdings after applying every trade in order (proposer gives, then
/// receives).
std::pair<ResourceBundle, ResourceBundle> apply_trades(const ResourceBundle& p1, const ResourceBundle& p2,
                                                       const std::vector<ExecutedTrade>& trades);

Utilities resource_payoffs(const ResourceConfig& config, const std::vector<ExecutedTrade>& trades);

long long goal_value(const ResourceBundle& holdings, const GoalSpec& goal);

enum class Winner { Player1, Player2, Draw };
std::string_view to_string(Winner w);

Winner outcome_winner(const Outcome& outcome, GameKind kind);

/// Units that changed hands: every unit given plus every unit received.
int trade_volume(const std::vector<ExecutedTrade>& trades);

}  // namespace arena::games
