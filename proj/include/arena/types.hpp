#pragma once

// Core value types shared by every module: roles, game kinds, resource
// bundles, actions and agent messages.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace arena {

enum class Role { Player1, Player2 };
enum class GameKind { Ultimatum, BuySell, ResourceExchange };

inline Role opponent(Role r) { return r == Role::Player1 ? Role::Player2 : Role::Player1; }

std::string_view to_string(Role r);
std::string_view to_string(GameKind k);
Role role_from_string(std::string_view s);
GameKind game_kind_from_string(std::string_view s);

/// Resource kind name -> count. Ordered so serialization is deterministic.
using ResourceBundle = std::map<std::string, int>;

int bundle_total(const ResourceBundle& b);

/// Split of an Ultimatum pool, expressed as the amount going to Player 2.
struct UltimatumSplit {
  int to_p2 = 0;
  friend bool operator==(const UltimatumSplit&, const UltimatumSplit&) = default;
};

/// Buy-Sell price in integer coin units.
struct Price {
  int coins = 0;
  friend bool operator==(const Price&, const Price&) = default;
};

/// Resource Exchange offer seen from the proposer: it hands over `give` and
/// obtains `receive` from the counterpart.
struct TradeOffer {
  ResourceBundle give;
  ResourceBundle receive;
  friend bool operator==(const TradeOffer&, const TradeOffer&) = default;
};

using Terms = std::variant<UltimatumSplit, Price, TradeOffer>;

GameKind game_kind_of(const Terms& t);

struct Propose {
  Terms terms;
  friend bool operator==(const Propose&, const Propose&) = default;
};

struct Accept {
  friend bool operator==(const Accept&, const Accept&) = default;
};

/// A final reject ends the game; a plain reject hands the proposal back.
struct Reject {
  bool final = false;
  friend bool operator==(const Reject&, const Reject&) = default;
};

using Action = std::variant<Propose, Accept, Reject>;

inline bool is_propose(const Action& a) { return std::holds_alternative<Propose>(a); }
inline bool is_accept(const Action& a) { return std::holds_alternative<Accept>(a); }
inline bool is_reject(const Action& a) { return std::holds_alternative<Reject>(a); }

/// Upper bound on rationale length, counted in Unicode code points.
inline constexpr std::size_t kMaxRationaleChars = 500;

struct AgentMessage {
  Role speaker = Role::Player1;
  std::string rationale;
  Action action = Accept{};
  std::string raw_text;
  friend bool operator==(const AgentMessage&, const AgentMessage&) = default;
};

/// Thrown when a message violates the structural invariants of Action.
class InvalidAction : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace arena
