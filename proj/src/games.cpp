#include "arena/games.hpp"

#include <set>

namespace arena::games {
namespace {

Utilities no_deal_utilities(const GameState& s) {
  if (const auto* rc = std::get_if<ResourceConfig>(&s.config)) {
    return {goal_value(s.holdings_p1, rc->goal_p1), goal_value(s.holdings_p2, rc->goal_p2)};
  }
  return {0, 0};
}

GameState finish(GameState s, OutcomeKind kind, std::optional<Terms> terms, Utilities u) {
  s.phase = Phase::Terminal;
  s.pending_offer.reset();
  s.outcome = Outcome{kind, std::move(terms), u, s.turn};
  return s;
}

void check_terms_in_bounds(const Terms& terms, const protocol::Bounds& b) {
  if (const auto* split = std::get_if<UltimatumSplit>(&terms)) {
    if (split->to_p2 < 0 || split->to_p2 > b.pool) throw IllegalMove("split outside [0, pool]");
  } else if (const auto* price = std::get_if<Price>(&terms)) {
    if (price->coins < 0 || price->coins > b.max_price) throw IllegalMove("price out of range");
  } else {
    const auto& offer = std::get<TradeOffer>(terms);
    auto covered = [](const ResourceBundle& want, const ResourceBundle& stock) {
      for (const auto& [k, v] : want) {
        if (v < 0) return false;
        auto it = stock.find(k);
        if (v > (it == stock.end() ? 0 : it->second)) return false;
      }
      return true;
    };
    if (!covered(offer.give, b.own_stock)) throw IllegalMove("trade gives more than the proposer holds");
    if (!covered(offer.receive, b.counterpart_stock)) throw IllegalMove("trade asks for more than the counterpart holds");
  }
}

}  // namespace

int GoalSpec::weight_of(const std::string& kind) const {
  if (weights.empty()) return 1;
  auto it = weights.find(kind);
  return it == weights.end() ? 0 : it->second;
}

GameKind kind_of(const GameConfig& config) {
  switch (config.index()) {
    case 0: return GameKind::Ultimatum;
    case 1: return GameKind::BuySell;
    default: return GameKind::ResourceExchange;
  }
}

int max_turns_of(const GameConfig& config) {
  return std::visit([](const auto& c) { return c.max_turns; }, config);
}

GameConfig default_config(GameKind kind) {
  switch (kind) {
    case GameKind::Ultimatum: return UltimatumConfig{};
    case GameKind::BuySell: return BuySellConfig{};
    case GameKind::ResourceExchange: return ResourceConfig{};
  }
  return UltimatumConfig{};
}

void validate(const GameConfig& config) {
  if (max_turns_of(config) < 2) throw InvalidConfig("max_turns must be at least 2");
  if (const auto* u = std::get_if<UltimatumConfig>(&config)) {
    if (u->pool <= 0) throw InvalidConfig("pool must be positive");
  } else if (const auto* b = std::get_if<BuySellConfig>(&config)) {
    if (b->seller_min < 0) throw InvalidConfig("seller_min must be non-negative");
    if (b->buyer_max <= b->seller_min) throw InvalidConfig("buyer_max must exceed seller_min (empty bargaining zone)");
  } else {
    const auto& r = std::get<ResourceConfig>(config);
    std::set<std::string> kinds;
    for (const auto* e : {&r.endowment_p1, &r.endowment_p2}) {
      for (const auto& [k, v] : *e) {
        if (v < 0) throw InvalidConfig("resource counts must be non-negative");
        if (k.empty()) throw InvalidConfig("resource kinds need a name");
        kinds.insert(k);
      }
    }
    if (kinds.size() < 2) throw InvalidConfig("at least two resource kinds are required");
    for (const auto* g : {&r.goal_p1, &r.goal_p2}) {
      for (const auto& [k, w] : g->weights) {
        if (w < 0) throw InvalidConfig("goal weights must be non-negative");
      }
    }
  }
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::AwaitingProposal: return "AwaitingProposal";
    case Phase::AwaitingResponse: return "AwaitingResponse";
    case Phase::Terminal: return "Terminal";
  }
  return "?";
}

std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Agreement: return "agreement";
    case OutcomeKind::Rejection: return "rejection";
    case OutcomeKind::NoDealTimeout: return "no_deal_timeout";
    case OutcomeKind::ProtocolFailure: return "protocol_failure";
  }
  return "?";
}

OutcomeKind outcome_kind_from_string(std::string_view s) {
  if (s == "agreement") return OutcomeKind::Agreement;
  if (s == "rejection") return OutcomeKind::Rejection;
  if (s == "no_deal_timeout") return OutcomeKind::NoDealTimeout;
  if (s == "protocol_failure") return OutcomeKind::ProtocolFailure;
  throw std::invalid_argument("unknown outcome kind: " + std::string(s));
}

std::string_view to_string(Winner w) {
  switch (w) {
    case Winner::Player1: return "Player1";
    case Winner::Player2: return "Player2";
    case Winner::Draw: return "Draw";
  }
  return "?";
}

GameState new_game(GameKind kind, const GameConfig& config, std::uint64_t seed) {
  if (kind_of(config) != kind) throw InvalidConfig("config does not match game kind");
  validate(config);
  GameState s;
  s.config = config;
  s.seed = seed;
  if (const auto* r = std::get_if<ResourceConfig>(&config)) {
    s.holdings_p1 = r->endowment_p1;
    s.holdings_p2 = r->endowment_p2;
  }
  return s;
}

protocol::Bounds bounds_for(const GameState& state, Role speaker) {
  protocol::Bounds b;
  if (const auto* u = std::get_if<UltimatumConfig>(&state.config)) b.pool = u->pool;
  b.own_stock = state.holdings(speaker);
  b.counterpart_stock = state.holdings(opponent(speaker));
  return b;
}

std::optional<std::string> phase_violation(Phase phase, const Action& action) {
  if (phase == Phase::Terminal) return "game is over";
  if (phase == Phase::AwaitingProposal && !is_propose(action)) {
    return "no offer is pending; only a proposal is allowed";
  }
  return std::nullopt;
}

GameState step(const GameState& state, const AgentMessage& msg) {
  if (state.terminal()) throw IllegalMove("step on a terminal state");
  if (msg.speaker != state.current_speaker) throw IllegalMove("message from the wrong speaker");
  if (auto why = phase_violation(state.phase, msg.action)) throw IllegalMove(*why);

  GameState next = state;
  next.transcript.push_back(msg);
  next.turn += 1;
  next.current_speaker = opponent(state.current_speaker);

  if (const auto* p = std::get_if<Propose>(&msg.action)) {
    if (game_kind_of(p->terms) != state.kind()) throw IllegalMove("proposal terms belong to another game");
    check_terms_in_bounds(p->terms, bounds_for(state, msg.speaker));
    if (msg.speaker == Role::Player1 && !next.initial_offer) next.initial_offer = p->terms;
    next.pending_offer = p->terms;
    next.phase = Phase::AwaitingResponse;
  } else if (is_accept(msg.action)) {
    const Terms terms = *state.pending_offer;
    Utilities u;
    if (const auto* uc = std::get_if<UltimatumConfig>(&state.config)) {
      u = ultimatum_payoffs(uc->pool, std::get<UltimatumSplit>(terms).to_p2, true);
    } else if (const auto* bc = std::get_if<BuySellConfig>(&state.config)) {
      auto adv = buysell_advantages(std::get<Price>(terms).coins, bc->seller_min, bc->buyer_max);
      u = {adv.seller, adv.buyer};
    } else {
      const auto& rc = std::get<ResourceConfig>(state.config);
      const Role proposer = opponent(msg.speaker);
      check_terms_in_bounds(terms, bounds_for(state, proposer));
      next.trades.push_back({proposer, std::get<TradeOffer>(terms)});
      std::tie(next.holdings_p1, next.holdings_p2) = apply_trades(state.holdings_p1, state.holdings_p2, {next.trades.back()});
      u = {goal_value(next.holdings_p1, rc.goal_p1), goal_value(next.holdings_p2, rc.goal_p2)};
    }
    return finish(std::move(next), OutcomeKind::Agreement, terms, u);
  } else {
    const auto& r = std::get<Reject>(msg.action);
    if (r.final) return finish(next, OutcomeKind::Rejection, std::nullopt, no_deal_utilities(next));
    next.pending_offer.reset();
    next.phase = Phase::AwaitingProposal;
  }

  if (next.turn >= max_turns_of(state.config)) {
    return finish(next, OutcomeKind::NoDealTimeout, std::nullopt, no_deal_utilities(next));
  }
  return next;
}

GameState fail_protocol(const GameState& state) {
  if (state.terminal()) throw IllegalMove("game already finished");
  return finish(state, OutcomeKind::ProtocolFailure, std::nullopt, no_deal_utilities(state));
}

Utilities ultimatum_payoffs(int pool, int split_to_p2, bool accepted) {
  if (!accepted) return {0, 0};
  return {pool - split_to_p2, split_to_p2};
}

Advantages buysell_advantages(int price, int seller_min, int buyer_max) {
  return {static_cast<long long>(price) - seller_min, static_cast<long long>(buyer_max) - price};
}

std::pair<ResourceBundle, ResourceBundle> apply_trades(const ResourceBundle& p1, const ResourceBundle& p2,
                                                       const std::vector<ExecutedTrade>& trades) {
  ResourceBundle h1 = p1;
  ResourceBundle h2 = p2;
  for (const auto& t : trades) {
    auto& mine = t.proposer == Role::Player1 ? h1 : h2;
    auto& theirs = t.proposer == Role::Player1 ? h2 : h1;
    for (const auto& [k, v] : t.offer.give) {
      mine[k] -= v;
      theirs[k] += v;
    }
    for (const auto& [k, v] : t.offer.receive) {
      theirs[k] -= v;
      mine[k] += v;
    }
  }
  return {std::move(h1), std::move(h2)};
}

long long goal_value(const ResourceBundle& holdings, const GoalSpec& goal) {
  long long total = 0;
  for (const auto& [k, v] : holdings) total += static_cast<long long>(v) * goal.weight_of(k);
  return total;
}

Utilities resource_payoffs(const ResourceConfig& config, const std::vector<ExecutedTrade>& trades) {
  auto [h1, h2] = apply_trades(config.endowment_p1, config.endowment_p2, trades);
  return {goal_value(h1, config.goal_p1), goal_value(h2, config.goal_p2)};
}

Winner outcome_winner(const Outcome& outcome, GameKind) {
  // Buy-Sell utilities already hold (seller advantage, buyer advantage).
  if (outcome.utilities.p1 > outcome.utilities.p2) return Winner::Player1;
  if (outcome.utilities.p2 > outcome.utilities.p1) return Winner::Player2;
  return Winner::Draw;
}

int trade_volume(const std::vector<ExecutedTrade>& trades) {
  int v = 0;
  for (const auto& t : trades) v += bundle_total(t.offer.give) + bundle_total(t.offer.receive);
  return v;
}

}  // namespace arena::games
