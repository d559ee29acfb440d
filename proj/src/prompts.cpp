#include <sstream>

#include "arena/agents.hpp"

namespace arena::agents {
namespace {

std::string player_name(Role r) { return r == Role::Player1 ? "Player 1" : "Player 2"; }

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string describe_goal(const games::GoalSpec& goal) {
  if (goal.weights.empty()) return "maximize the total number of resources you hold (every unit of every kind counts once).";
  std::string s = "maximize the weighted total of the resources you hold, where ";
  bool first = true;
  for (const auto& [k, w] : goal.weights) {
    if (!first) s += ", ";
    s += "each " + k + " counts " + std::to_string(w);
    first = false;
  }
  return s + " (kinds not listed count 0).";
}

std::string rules_text(const games::GameConfig& config, Role role) {
  std::ostringstream out;
  if (const auto* u = std::get_if<games::UltimatumConfig>(&config)) {
    out << "Game: Ultimatum. Player 1 proposes how to divide a pool of " << u->pool
        << " units. A proposal states split_to_p2, the number of units Player 2 receives; Player 1 keeps the rest. "
           "Player 1 makes the first proposal. If the other player accepts, both receive the proposed split. "
           "If the other player rejects with final=\"true\", both receive zero. A plain rejection or a counter-proposal "
           "continues the negotiation, and counter-proposals also state split_to_p2. If there is no agreement after "
           << u->max_turns << " messages in total, both receive zero.\n";
  } else if (const auto* b = std::get_if<games::BuySellConfig>(&config)) {
    out << "Game: Buy-Sell. Player 1 is the seller and Player 2 is the buyer of a single item. The players negotiate "
           "its price in whole coins. The seller makes the first offer. If an offer is accepted, the item is sold at "
           "that price. A rejection with final=\"true\" ends the game without a sale. A plain rejection or a counter-offer "
           "continues the negotiation. If there is no agreement after "
        << b->max_turns << " messages in total, there is no sale.\n";
  } else {
    const auto& r = std::get<games::ResourceConfig>(config);
    const auto& own = role == Role::Player1 ? r.endowment_p1 : r.endowment_p2;
    const auto& other = role == Role::Player1 ? r.endowment_p2 : r.endowment_p1;
    out << "Game: Resource Exchange. Each player holds resources of several kinds and may trade with the other. "
           "A proposal lists what the proposer gives and what the proposer receives in return. Player 1 makes the "
           "first proposal. Accepting a proposal executes the trade and ends the game. A rejection with final=\"true\" "
           "ends the game with no trade. A plain rejection or a counter-proposal continues the negotiation. If there "
           "is no agreement after "
        << r.max_turns << " messages in total, both players keep what they hold.\n"
        << "You hold: " << protocol::format_bundle(own) << ".\n"
        << "The other player holds: " << protocol::format_bundle(other) << ".\n";
  }
  return out.str();
}

std::string private_text(const games::GameConfig& config, Role role) {
  if (const auto* b = std::get_if<games::BuySellConfig>(&config)) {
    if (role == Role::Player1) {
      return "Private information (known only to you): the lowest price you are willing to sell at is " +
             std::to_string(b->seller_min) + " coins.\n";
    }
    return "Private information (known only to you): the highest price you are willing to pay is " +
           std::to_string(b->buyer_max) + " coins.\n";
  }
  if (const auto* r = std::get_if<games::ResourceConfig>(&config)) {
    return "Your goal: " + describe_goal(role == Role::Player1 ? r->goal_p1 : r->goal_p2) + "\n";
  }
  return {};
}

std::string protocol_text(GameKind kind) {
  std::string propose;
  switch (kind) {
    case GameKind::Ultimatum: propose = "<propose split_to_p2=\"N\"/>"; break;
    case GameKind::BuySell: propose = "<propose price=\"N\"/>"; break;
    case GameKind::ResourceExchange: propose = "<propose give=\"X:5\" receive=\"Y:3\"/>"; break;
  }
  return "Reply format: first a <rationale>...</rationale> block, then exactly one action tag:\n"
         "  " + propose + "  to make or counter an offer\n"
         "  <accept/>  to accept the pending offer\n"
         "  <reject/>  to reject it and keep negotiating, or <reject final=\"true\"/> to end the game\n"
         "Numbers inside tags must be written with ASCII digits 0-9. Write the tags exactly as shown, in ASCII.\n";
}

constexpr const char* kRationaleRule =
    "Do not write out internal chain-of-thought. Give only a short rationale summary of at most 500 characters "
    "inside the rationale block.\n";

std::string describe_terms(const Terms& t, const StateView& v) {
  if (const auto* s = std::get_if<UltimatumSplit>(&t)) {
    const int mine = v.self == Role::Player2 ? s->to_p2 : v.pool - s->to_p2;
    return "split_to_p2=" + std::to_string(s->to_p2) + " (you would receive " + std::to_string(mine) + ")";
  }
  if (const auto* p = std::get_if<Price>(&t)) return "price=" + std::to_string(p->coins) + " coins";
  const auto& o = std::get<TradeOffer>(t);
  return "the other player gives " + protocol::format_bundle(o.give) + " and receives " +
         protocol::format_bundle(o.receive);
}

}  // namespace

std::string_view to_string(LanguageFraming f) {
  switch (f) {
    case LanguageFraming::English: return "English";
    case LanguageFraming::Hindi: return "Hindi";
    case LanguageFraming::Punjabi: return "Punjabi";
    case LanguageFraming::Gujarati: return "Gujarati";
    case LanguageFraming::Marwadi: return "Marwadi";
  }
  return "?";
}

LanguageFraming framing_from_string(std::string_view s) {
  for (auto f : kAllFramings) {
    if (to_string(f) == s) return f;
  }
  if (s == "Baseline") return LanguageFraming::English;
  throw std::invalid_argument("unknown language framing: " + std::string(s));
}

std::string persona_clause(LanguageFraming f) {
  if (f == LanguageFraming::English) return {};
  return "You speak and bargain only in " + std::string(to_string(f)) + ". Negotiate accordingly.";
}

PromptBundle build_prompt(GameKind kind, const games::GameConfig& config, Role role, LanguageFraming framing) {
  if (games::kind_of(config) != kind) throw games::InvalidConfig("config does not match game kind");
  std::string system = "You are " + player_name(role) + " in a two-player negotiation.\n";
  if (auto persona = persona_clause(framing); !persona.empty()) system += persona + "\n";
  system += rules_text(config, role);
  system += private_text(config, role);
  system += protocol_text(kind);
  system += kRationaleRule;

  PromptBundle bundle;
  bundle.system_prompt = std::move(system);
  bundle.turn_prompt_template =
      "Message {turn} of {max_turns}. {situation}\n"
      "Answer with a rationale block followed by exactly one action tag.\n"
      "{marker}";
  return bundle;
}

StateView make_view(const games::GameState& state, Role self, int repetition) {
  StateView v;
  v.kind = state.kind();
  v.self = self;
  v.phase = state.phase;
  v.turn = state.turn;
  v.max_turns = games::max_turns_of(state.config);
  v.pending_offer = state.pending_offer;
  v.transcript = state.transcript;
  if (const auto* u = std::get_if<games::UltimatumConfig>(&state.config)) v.pool = u->pool;
  if (const auto* b = std::get_if<games::BuySellConfig>(&state.config)) {
    v.private_value = self == Role::Player1 ? b->seller_min : b->buyer_max;
  }
  if (const auto* r = std::get_if<games::ResourceConfig>(&state.config)) {
    v.own_goal = self == Role::Player1 ? r->goal_p1 : r->goal_p2;
  }
  v.own_holdings = state.holdings(self);
  v.counterpart_holdings = state.holdings(opponent(self));
  v.bounds = games::bounds_for(state, self);
  v.seed = state.seed;
  v.repetition = repetition;
  return v;
}

std::string render_turn_prompt(const PromptBundle& bundle, const StateView& view) {
  std::string situation;
  const bool respond = view.pending_offer.has_value();
  if (respond) {
    situation = "Pending offer from the other player: " + describe_terms(*view.pending_offer, view) +
                ". You may accept, reject, or counter-propose.";
  } else {
    situation = "No offer is pending. Make a proposal.";
  }
  if (view.kind == GameKind::ResourceExchange) {
    situation += " You now hold " + protocol::format_bundle(view.own_holdings) + "; the other player holds " +
                 protocol::format_bundle(view.counterpart_holdings) + ".";
  }
  const std::string marker = "state: game=" + std::string(to_string(view.kind)) + " role=" +
                             std::string(to_string(view.self)) + " move=" + (respond ? "respond" : "propose") +
                             " turn=" + std::to_string(view.turn + 1) + "/" + std::to_string(view.max_turns);
  std::string out = bundle.turn_prompt_template;
  out = replace_all(out, "{turn}", std::to_string(view.turn + 1));
  out = replace_all(out, "{max_turns}", std::to_string(view.max_turns));
  out = replace_all(out, "{situation}", situation);
  out = replace_all(out, "{marker}", marker);
  return out;
}

}  // namespace arena::agents
