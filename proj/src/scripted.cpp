#include <algorithm>
#include <functional>
#include <random>

#include "arena/agents.hpp"
#include "arena/hashing.hpp"

namespace arena::agents {
namespace {

using Params = std::map<std::string, double>;

int param_int(const Params& p, const std::string& name) { return static_cast<int>(std::llround(p.at(name))); }

// Value of `terms` to the viewer. `proposed_by_self` tells whose
// perspective TradeOffer give/receive is written from.
long long gain_for(const StateView& v, const Terms& terms, bool proposed_by_self) {
  if (const auto* s = std::get_if<UltimatumSplit>(&terms)) {
    return v.self == Role::Player2 ? s->to_p2 : v.pool - s->to_p2;
  }
  if (const auto* p = std::get_if<Price>(&terms)) {
    return v.self == Role::Player1 ? p->coins : -static_cast<long long>(p->coins);
  }
  const auto& o = std::get<TradeOffer>(terms);
  long long got = 0;
  long long lost = 0;
  for (const auto& [k, n] : o.give) (proposed_by_self ? lost : got) += static_cast<long long>(n) * v.own_goal.weight_of(k);
  for (const auto& [k, n] : o.receive) (proposed_by_self ? got : lost) += static_cast<long long>(n) * v.own_goal.weight_of(k);
  return got - lost;
}

int stock_of(const ResourceBundle& b, const std::string& k) {
  auto it = b.find(k);
  return it == b.end() ? 0 : it->second;
}

std::vector<std::string> kinds_of(const StateView& v) {
  std::vector<std::string> kinds;
  for (const auto& [k, n] : v.own_holdings) kinds.push_back(k);
  for (const auto& [k, n] : v.counterpart_holdings) {
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

// Terms parameterised by one number: the amount conceded to the other side
// in Ultimatum, the asking price in Buy-Sell, and the units of the first
// kind handed over in Resource Exchange (swapped one-for-one against the
// second kind, as far as the other side's stock allows).
Terms terms_for_value(const StateView& v, long long value) {
  switch (v.kind) {
    case GameKind::Ultimatum: {
      const int to_other = static_cast<int>(std::clamp<long long>(value, 0, v.pool));
      return UltimatumSplit{v.self == Role::Player1 ? to_other : v.pool - to_other};
    }
    case GameKind::BuySell:
      return Price{static_cast<int>(std::clamp<long long>(value, 0, v.bounds.max_price))};
    case GameKind::ResourceExchange: {
      TradeOffer offer;
      auto kinds = kinds_of(v);
      if (kinds.size() >= 2) {
        const int give = static_cast<int>(std::clamp<long long>(value, 0, stock_of(v.own_holdings, kinds[0])));
        const int receive = std::min(give, stock_of(v.counterpart_holdings, kinds[1]));
        if (give > 0) offer.give[kinds[0]] = give;
        if (receive > 0) offer.receive[kinds[1]] = receive;
      }
      return offer;
    }
  }
  return UltimatumSplit{0};
}

Terms default_terms(const StateView& v) {
  switch (v.kind) {
    case GameKind::Ultimatum: return terms_for_value(v, v.pool / 2);
    case GameKind::BuySell: return Price{std::max(0, v.private_value.value_or(0))};
    case GameKind::ResourceExchange: return terms_for_value(v, 1);
  }
  return UltimatumSplit{0};
}

int own_proposals(const StateView& v) {
  return static_cast<int>(std::count_if(v.transcript.begin(), v.transcript.end(), [&](const AgentMessage& m) {
    return m.speaker == v.self && is_propose(m.action);
  }));
}

std::string describe(const StateView& v, const Action& a) {
  if (is_accept(a)) return "The pending offer is acceptable.";
  if (const auto* r = std::get_if<Reject>(&a)) {
    return r->final ? "The pending offer is not acceptable; ending the negotiation." : "The pending offer is not acceptable.";
  }
  const auto& t = std::get<Propose>(a).terms;
  if (const auto* s = std::get_if<UltimatumSplit>(&t)) {
    return "Proposing " + std::to_string(s->to_p2) + " of " + std::to_string(v.pool) + " units for Player 2.";
  }
  if (const auto* p = std::get_if<Price>(&t)) return "Proposing a price of " + std::to_string(p->coins) + " coins.";
  const auto& o = std::get<TradeOffer>(t);
  return "Offering " + (o.give.empty() ? std::string("nothing") : protocol::format_bundle(o.give)) + " for " +
         (o.receive.empty() ? std::string("nothing") : protocol::format_bundle(o.receive)) + ".";
}

using Decide = std::function<Action(const StateView&)>;

class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(Decide decide) : decide_(std::move(decide)) {}

  AgentTurn next_message(const StateView& view) override {
    AgentTurn turn;
    turn.message.speaker = view.self;
    turn.message.action = decide_(view);
    turn.message.rationale = describe(view, turn.message.action);
    turn.message.raw_text = protocol::serialize_message(turn.message, view.kind);
    return turn;
  }

 private:
  Decide decide_;
};

// Accepts a pending offer that is at least as good as `own`, otherwise
// proposes `own`.
Action accept_or_propose(const StateView& v, const Terms& own) {
  if (v.pending_offer && gain_for(v, *v.pending_offer, false) >= gain_for(v, own, true)) return Accept{};
  return Propose{own};
}

const std::vector<StrategyInfo> kCatalog = {
    {"AlwaysAccept", {}, "accepts any pending offer; proposes an even default otherwise"},
    {"AlwaysReject", {{"final", 1}}, "rejects every pending offer"},
    {"ThresholdResponder", {{"t", 50}, {"final", 1}}, "accepts iff the offer is worth at least t to it"},
    {"GridProposer", {{"start", 0}, {"stride", 1}},
     "proposes start + stride * repetition (mod pool+1 in Ultimatum) every time it proposes"},
    {"ConcessionProposer", {{"start", 20}, {"step", 5}},
     "its k-th proposal (0-based) is start + step * k; accepts offers at least that good"},
    {"FixedPriceSeller", {{"p", 50}}, "always asks p; accepts any price >= p"},
    {"ReservationBuyer", {{"margin", 0}}, "accepts any price within its private limit less margin"},
    {"RandomLegalAgent", {{"seed", -1}}, "uniformly random legal action; seed -1 uses the run seed"},
};

Decide build(const std::string& name, const Params& p) {
  if (name == "AlwaysAccept") {
    return [](const StateView& v) -> Action {
      if (v.pending_offer) return Accept{};
      return Propose{default_terms(v)};
    };
  }
  if (name == "AlwaysReject") {
    const bool final = param_int(p, "final") != 0;
    return [final](const StateView& v) -> Action {
      if (v.pending_offer) return Reject{final};
      return Propose{default_terms(v)};
    };
  }
  if (name == "ThresholdResponder") {
    const long long t = param_int(p, "t");
    const bool final = param_int(p, "final") != 0;
    return [t, final](const StateView& v) -> Action {
      if (!v.pending_offer) return Propose{default_terms(v)};
      const auto& offer = *v.pending_offer;
      bool ok = false;
      if (const auto* price = std::get_if<Price>(&offer)) {
        ok = v.self == Role::Player1 ? price->coins >= t : price->coins <= t;
      } else {
        ok = gain_for(v, offer, false) >= t;
      }
      if (ok) return Accept{};
      return Reject{final};
    };
  }
  if (name == "GridProposer") {
    const long long start = param_int(p, "start");
    const long long stride = param_int(p, "stride");
    return [start, stride](const StateView& v) -> Action {
      long long value = start + stride * v.repetition;
      if (v.kind == GameKind::Ultimatum) value = ((value % (v.pool + 1)) + (v.pool + 1)) % (v.pool + 1);
      return accept_or_propose(v, terms_for_value(v, value));
    };
  }
  if (name == "ConcessionProposer") {
    const long long start = param_int(p, "start");
    const long long step = param_int(p, "step");
    return [start, step](const StateView& v) -> Action {
      return accept_or_propose(v, terms_for_value(v, start + step * own_proposals(v)));
    };
  }
  if (name == "FixedPriceSeller") {
    const long long price = param_int(p, "p");
    return [price](const StateView& v) -> Action { return accept_or_propose(v, terms_for_value(v, price)); };
  }
  if (name == "ReservationBuyer") {
    const long long margin = param_int(p, "margin");
    return [margin](const StateView& v) -> Action {
      if (v.kind != GameKind::BuySell || !v.private_value) return accept_or_propose(v, terms_for_value(v, margin));
      const long long limit = v.self == Role::Player2 ? *v.private_value - margin : *v.private_value + margin;
      return accept_or_propose(v, terms_for_value(v, limit));
    };
  }
  if (name == "RandomLegalAgent") {
    const long long seed_param = param_int(p, "seed");
    return [seed_param](const StateView& v) -> Action {
      const std::uint64_t base = seed_param < 0 ? v.seed : static_cast<std::uint64_t>(seed_param);
      std::mt19937_64 rng(mix_seed({base, static_cast<std::uint64_t>(v.turn), static_cast<std::uint64_t>(v.self)}));
      auto uniform = [&](long long lo, long long hi) { return std::uniform_int_distribution<long long>(lo, hi)(rng); };
      auto random_terms = [&]() -> Terms {
        switch (v.kind) {
          case GameKind::Ultimatum: return UltimatumSplit{static_cast<int>(uniform(0, v.pool))};
          case GameKind::BuySell: return Price{static_cast<int>(uniform(0, std::max(100, 2 * v.private_value.value_or(50))))};
          case GameKind::ResourceExchange: {
            TradeOffer o;
            for (const auto& [k, n] : v.own_holdings) {
              if (n > 0 && uniform(0, 1) == 1) o.give[k] = static_cast<int>(uniform(1, n));
            }
            for (const auto& [k, n] : v.counterpart_holdings) {
              if (n > 0 && uniform(0, 1) == 1) o.receive[k] = static_cast<int>(uniform(1, n));
            }
            return o;
          }
        }
        return UltimatumSplit{0};
      };
      if (!v.pending_offer) return Propose{random_terms()};
      switch (uniform(0, 2)) {
        case 0: return Accept{};
        case 1: return Reject{uniform(0, 1) == 1};
        default: return Propose{random_terms()};
      }
    };
  }
  throw UnknownStrategy("unknown scripted strategy: " + name);
}

}  // namespace

const std::vector<StrategyInfo>& scripted_strategies() { return kCatalog; }

std::unique_ptr<Agent> make_scripted_agent(const ScriptedSpec& spec) {
  auto it = std::find_if(kCatalog.begin(), kCatalog.end(), [&](const StrategyInfo& s) { return s.name == spec.strategy; });
  if (it == kCatalog.end()) throw UnknownStrategy("unknown scripted strategy: " + spec.strategy);
  Params params = it->defaults;
  for (const auto& [k, v] : spec.params) {
    if (!params.count(k)) throw UnknownStrategy("strategy " + spec.strategy + " has no parameter '" + k + "'");
    params[k] = v;
  }
  return std::make_unique<ScriptedAgent>(build(spec.strategy, params));
}

}  // namespace arena::agents
