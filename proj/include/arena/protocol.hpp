#pragma once

// Wire grammar between agents and the engine.
//
//   <rationale>free text, entity-escaped</rationale>
//   <propose split_to_p2="30"/>            Ultimatum
//   <propose price="47"/>                  Buy-Sell
//   <propose give="X:5" receive="Y:3"/>    Resource Exchange
//   <accept/>
//   <reject/>  or  <reject final="true"/>
//
// Tags are ASCII; the prose around them may be in any script. See
// docs/protocol.md for the full grammar.

#include <climits>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include "arena/types.hpp"

namespace arena::protocol {

/// Limits a proposal must respect. Only the fields for the active game
/// kind are consulted.
struct Bounds {
  int pool = 100;
  int max_price = INT_MAX;
  ResourceBundle own_stock;
  ResourceBundle counterpart_stock;
};

enum class ParseErrorKind { MissingActionTag, MalformedTerms, OutOfRangeTerms, MultipleActions };

std::string_view to_string(ParseErrorKind k);

struct ParseError {
  ParseErrorKind kind = ParseErrorKind::MissingActionTag;
  std::size_t offset = 0;
  std::string snippet;
  std::string detail;

  std::string describe() const;
  friend bool operator==(const ParseError&, const ParseError&) = default;
};

using ParseResult = std::variant<AgentMessage, ParseError>;

/// Canonical tagged text for `msg`. Throws InvalidAction when the terms do
/// not belong to `kind` or break the intrinsic bounds (negative amounts,
/// bad resource names, over-long rationale).
std::string serialize_message(const AgentMessage& msg, GameKind kind);

/// Extracts the rationale and the single action from arbitrary model
/// output. Never throws on malformed input.
ParseResult parse_message(std::string_view text, GameKind kind, const Bounds& bounds,
                          Role speaker = Role::Player1);

/// Serialized attribute form of a bundle, e.g. "X:5,Y:3". Zero counts are
/// omitted.
std::string format_bundle(const ResourceBundle& b);

/// Truncates to kMaxRationaleChars code points without splitting a UTF-8
/// sequence.
std::string clamp_rationale(std::string_view text);

/// Number of code points in a (possibly invalid) UTF-8 string.
std::size_t utf8_length(std::string_view text);

}  // namespace arena::protocol
