#pragma once

// Generators and record builders shared by the unit tests and the
// acceptance binary.

#include <climits>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "arena/games.hpp"
#include "arena/protocol.hpp"
#include "arena/run_record.hpp"

namespace arena::testing {

inline std::string source_path(const std::string& rel) { return std::string(ARENA_SOURCE_DIR) + "/" + rel; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("arena_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::string random_rationale(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "a", "Z", "7", " ", "offer", "&", "<", ">", "\"", "'", "&amp;", "<accept>", "\n", "\t",
      "यह", "प्रस्ताव", "ਸੌਦਾ", "સોદો", "₹", "😀", "é", "</rationale", "=", "/"};
  std::string s;
  const int n = uniform(rng, 0, 40);
  for (int i = 0; i < n; ++i) s += pieces[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(pieces.size()) - 1))];
  return protocol::clamp_rationale(s);
}

inline ResourceBundle random_bundle(std::mt19937_64& rng) {
  static const std::vector<std::string> kinds = {"X", "Y", "Z", "gold", "wood_2"};
  ResourceBundle b;
  for (const auto& k : kinds) {
    if (uniform(rng, 0, 2) == 0) b[k] = uniform(rng, 1, 999);
  }
  return b;
}

inline Terms random_terms(GameKind kind, std::mt19937_64& rng) {
  switch (kind) {
    case GameKind::Ultimatum: return UltimatumSplit{uniform(rng, 0, 100)};
    case GameKind::BuySell: return Price{uniform(rng, 0, 1'000'000)};
    case GameKind::ResourceExchange: return TradeOffer{random_bundle(rng), random_bundle(rng)};
  }
  return UltimatumSplit{0};
}

inline AgentMessage random_message(GameKind kind, std::mt19937_64& rng) {
  AgentMessage m;
  m.speaker = uniform(rng, 0, 1) == 0 ? Role::Player1 : Role::Player2;
  m.rationale = random_rationale(rng);
  switch (uniform(rng, 0, 3)) {
    case 0: m.action = Accept{}; break;
    case 1: m.action = Reject{uniform(rng, 0, 1) == 1}; break;
    default: m.action = Propose{random_terms(kind, rng)}; break;
  }
  return m;
}

/// Bounds loose enough that every random_terms() value is in range.
inline protocol::Bounds wide_bounds() {
  protocol::Bounds b;
  b.pool = 100;
  b.max_price = INT_MAX;
  for (const auto* k : {"X", "Y", "Z", "gold", "wood_2"}) {
    b.own_stock[k] = 1000;
    b.counterpart_stock[k] = 1000;
  }
  return b;
}

/// Random bytes, or a valid message with a few bytes mutated.
inline std::string fuzz_input(std::mt19937_64& rng) {
  std::string s;
  if (uniform(rng, 0, 1) == 0) {
    const int n = uniform(rng, 0, 300);
    for (int i = 0; i < n; ++i) s += static_cast<char>(uniform(rng, 0, 255));
    return s;
  }
  static const GameKind kinds[] = {GameKind::Ultimatum, GameKind::BuySell, GameKind::ResourceExchange};
  const auto kind = kinds[uniform(rng, 0, 2)];
  try {
    s = protocol::serialize_message(random_message(kind, rng), kind);
  } catch (const InvalidAction&) {
    s = "<accept/>";
  }
  static const std::vector<std::string> inserts = {"<", ">", "/", "\"", "=", "<propose", "<accept/>", "<reject",
                                                   "split_to_p2=\"", "price=\"9999999999\"", "\xff", "\xe0\xa5",
                                                   "१२", "-", ":", ","};
  const int edits = uniform(rng, 1, 4);
  for (int i = 0; i < edits && !s.empty(); ++i) {
    const auto pos = static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(s.size()) - 1));
    switch (uniform(rng, 0, 2)) {
      case 0: s.erase(pos, static_cast<std::size_t>(uniform(rng, 1, 5))); break;
      case 1: s.insert(pos, inserts[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(inserts.size()) - 1))]); break;
      default: s[pos] = static_cast<char>(uniform(rng, 0, 255)); break;
    }
  }
  return s;
}

/// Minimal record of a finished Ultimatum game, for metric tests.
inline runlog::RunRecord ultimatum_record(std::optional<int> split_to_p2, bool accepted, int rounds,
                                          agents::LanguageFraming lang = agents::LanguageFraming::English,
                                          const std::string& p1 = "A", const std::string& p2 = "B") {
  runlog::RunRecord r;
  r.spec.run_id = "r";
  r.spec.game = GameKind::Ultimatum;
  r.spec.config = games::UltimatumConfig{};
  r.spec.framing = lang;
  r.spec.agent_p1 = {agents::ScriptedSpec{"GridProposer", {}}, Role::Player1, p1};
  r.spec.agent_p2 = {agents::ScriptedSpec{"ThresholdResponder", {}}, Role::Player2, p2};
  r.initial_offer = split_to_p2;
  r.outcome.rounds_used = rounds;
  if (accepted && split_to_p2) {
    r.outcome.kind = games::OutcomeKind::Agreement;
    r.outcome.terms = UltimatumSplit{*split_to_p2};
    r.outcome.utilities = games::ultimatum_payoffs(100, *split_to_p2, true);
  } else {
    r.outcome.kind = games::OutcomeKind::Rejection;
  }
  return r;
}

inline runlog::RunRecord buysell_record(std::optional<int> price, int rounds,
                                        agents::LanguageFraming lang = agents::LanguageFraming::English) {
  runlog::RunRecord r = ultimatum_record(std::nullopt, false, rounds, lang);
  r.spec.game = GameKind::BuySell;
  r.spec.config = games::BuySellConfig{};
  r.initial_offer.reset();
  if (price) {
    r.outcome.kind = games::OutcomeKind::Agreement;
    r.outcome.terms = Price{*price};
    r.price = price;
    const auto adv = games::buysell_advantages(*price, 40, 60);
    r.outcome.utilities = {adv.seller, adv.buyer};
  } else {
    r.outcome.kind = games::OutcomeKind::NoDealTimeout;
  }
  return r;
}

inline runlog::RunRecord failure_record(GameKind kind) {
  runlog::RunRecord r = ultimatum_record(std::nullopt, false, 0);
  r.spec.game = kind;
  r.spec.config = games::default_config(kind);
  r.initial_offer.reset();
  r.outcome.kind = games::OutcomeKind::ProtocolFailure;
  r.failure = runlog::FailureInfo{runlog::FailureClass::Protocol, Role::Player1, "no usable reply", {}};
  return r;
}

}  // namespace arena::testing
