#include "arena/types.hpp"

#include <numeric>

namespace arena {

std::string_view to_string(Role r) { return r == Role::Player1 ? "Player1" : "Player2"; }

std::string_view to_string(GameKind k) {
  switch (k) {
    case GameKind::Ultimatum: return "ultimatum";
    case GameKind::BuySell: return "buysell";
    case GameKind::ResourceExchange: return "resource";
  }
  return "?";
}

Role role_from_string(std::string_view s) {
  if (s == "Player1" || s == "P1") return Role::Player1;
  if (s == "Player2" || s == "P2") return Role::Player2;
  throw std::invalid_argument("unknown role: " + std::string(s));
}

GameKind game_kind_from_string(std::string_view s) {
  if (s == "ultimatum") return GameKind::Ultimatum;
  if (s == "buysell" || s == "buy-sell") return GameKind::BuySell;
  if (s == "resource" || s == "resource-exchange") return GameKind::ResourceExchange;
  throw std::invalid_argument("unknown game kind: " + std::string(s));
}

int bundle_total(const ResourceBundle& b) {
  return std::accumulate(b.begin(), b.end(), 0, [](int acc, const auto& kv) { return acc + kv.second; });
}

GameKind game_kind_of(const Terms& t) {
  switch (t.index()) {
    case 0: return GameKind::Ultimatum;
    case 1: return GameKind::BuySell;
    default: return GameKind::ResourceExchange;
  }
}

}  // namespace arena
