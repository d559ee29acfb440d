#include "arena/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <utility>
#include <vector>

namespace arena::protocol {
namespace {

constexpr std::size_t kSnippetBytes = 80;
constexpr std::size_t kMaxDigits = 9;

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_ident_char(char c) { return is_ascii_alpha(c) || is_ascii_digit(c) || c == '_'; }
char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ascii_lower(a[i]) != ascii_lower(b[i])) return false;
  }
  return true;
}

std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    if (iequals(hay.substr(i, needle.size()), needle)) return i;
  }
  return std::string_view::npos;
}

bool valid_kind_name(std::string_view name) {
  if (name.empty() || !is_ascii_alpha(name.front())) return false;
  return std::all_of(name.begin(), name.end(), is_ident_char);
}

enum class TagName { Propose, Accept, Reject };

struct TagSite {
  TagName name;
  std::size_t start;  // offset of '<'
};

// Opening action tags in document order. A tag name must be followed by
// whitespace, '/', '>' or end of input, so "<proposal>" is not a tag.
std::vector<TagSite> find_action_tags(std::string_view text) {
  static constexpr std::pair<std::string_view, TagName> kNames[] = {
      {"propose", TagName::Propose}, {"accept", TagName::Accept}, {"reject", TagName::Reject}};
  std::vector<TagSite> sites;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    for (const auto& [name, tag] : kNames) {
      if (i + 1 + name.size() > text.size()) continue;
      if (!iequals(text.substr(i + 1, name.size()), name)) continue;
      std::size_t after = i + 1 + name.size();
      if (after == text.size() || is_ascii_space(text[after]) || text[after] == '/' || text[after] == '>') {
        sites.push_back({tag, i});
      }
    }
  }
  return sites;
}

std::string snippet_at(std::string_view text, std::size_t offset) {
  auto end = text.find('>', offset);
  std::size_t len = end == std::string_view::npos ? text.size() - offset : end - offset + 1;
  len = std::min(len, kSnippetBytes);
  while (offset + len < text.size() && len > 0 && (static_cast<unsigned char>(text[offset + len]) & 0xC0) == 0x80) --len;
  return std::string(text.substr(offset, len));
}

struct Attribute {
  std::string name;
  std::string value;
};

// Parses `<name attr="v" .../>` starting at the tag's '<'. Returns nullopt
// with a reason on any structural problem.
std::optional<std::vector<Attribute>> parse_tag_attributes(std::string_view text, std::size_t start,
                                                           std::size_t name_len, std::string& why) {
  std::size_t i = start + 1 + name_len;
  std::vector<Attribute> attrs;
  auto skip_ws = [&] {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
  };
  while (true) {
    skip_ws();
    if (i >= text.size()) {
      why = "unterminated tag";
      return std::nullopt;
    }
    if (text[i] == '/') {
      if (i + 1 < text.size() && text[i + 1] == '>') return attrs;
      why = "expected '/>'";
      return std::nullopt;
    }
    if (text[i] == '>') {
      why = "action tags must be self-closing";
      return std::nullopt;
    }
    std::size_t name_start = i;
    while (i < text.size() && is_ident_char(text[i])) ++i;
    if (i == name_start) {
      why = "unexpected character in tag";
      return std::nullopt;
    }
    std::string name(text.substr(name_start, i - name_start));
    std::transform(name.begin(), name.end(), name.begin(), ascii_lower);
    skip_ws();
    if (i >= text.size() || text[i] != '=') {
      why = "attribute '" + name + "' has no value";
      return std::nullopt;
    }
    ++i;
    skip_ws();
    if (i >= text.size() || (text[i] != '"' && text[i] != '\'')) {
      why = "attribute '" + name + "' value must be quoted";
      return std::nullopt;
    }
    char quote = text[i++];
    auto close = text.find(quote, i);
    if (close == std::string_view::npos) {
      why = "unterminated attribute value";
      return std::nullopt;
    }
    std::string value(text.substr(i, close - i));
    if (value.find_first_of("<>") != std::string::npos) {
      why = "angle bracket inside attribute value";
      return std::nullopt;
    }
    i = close + 1;
    if (std::any_of(attrs.begin(), attrs.end(), [&](const Attribute& a) { return a.name == name; })) {
      why = "duplicate attribute '" + name + "'";
      return std::nullopt;
    }
    attrs.push_back({std::move(name), std::move(value)});
  }
}

enum class NumberStatus { Ok, Malformed, TooLarge };

NumberStatus parse_count(std::string_view s, int& out) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string_view::npos) return NumberStatus::Malformed;
  s = s.substr(b, e - b + 1);
  if (!std::all_of(s.begin(), s.end(), is_ascii_digit)) return NumberStatus::Malformed;
  auto first_nonzero = s.find_first_not_of('0');
  if (first_nonzero != std::string_view::npos && s.size() - first_nonzero > kMaxDigits) return NumberStatus::TooLarge;
  long long v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  out = static_cast<int>(v);
  return NumberStatus::Ok;
}

struct BundleParse {
  NumberStatus status = NumberStatus::Ok;
  ResourceBundle bundle;
  std::string why;
};

BundleParse parse_bundle(std::string_view s) {
  BundleParse r;
  if (s.find_first_not_of(" \t") == std::string_view::npos) return r;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    auto item = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      r.status = NumberStatus::Malformed;
      r.why = "bundle item without ':'";
      return r;
    }
    auto name = item.substr(0, colon);
    auto b = name.find_first_not_of(" \t");
    auto e = name.find_last_not_of(" \t");
    name = b == std::string_view::npos ? std::string_view{} : name.substr(b, e - b + 1);
    if (!valid_kind_name(name)) {
      r.status = NumberStatus::Malformed;
      r.why = "bad resource name";
      return r;
    }
    int count = 0;
    auto st = parse_count(item.substr(colon + 1), count);
    if (st != NumberStatus::Ok) {
      r.status = st;
      r.why = st == NumberStatus::TooLarge ? "count too large" : "count must be ASCII digits";
      return r;
    }
    std::string key(name);
    if (r.bundle.count(key)) {
      r.status = NumberStatus::Malformed;
      r.why = "duplicate resource '" + key + "'";
      return r;
    }
    r.bundle.emplace(std::move(key), count);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::erase_if(r.bundle, [](const auto& kv) { return kv.second == 0; });
  return r;
}

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_text(std::string_view s) {
  static constexpr std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [ent, ch] : kEntities) {
        if (s.substr(i, ent.size()) == ent) {
          out += ch;
          i += ent.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += s[i++];
  }
  return out;
}

std::string extract_rationale(std::string_view text) {
  constexpr std::string_view kOpen = "<rationale>";
  constexpr std::string_view kClose = "</rationale>";
  auto open = ifind(text, kOpen);
  if (open == std::string_view::npos) return {};
  auto body = open + kOpen.size();
  auto close = ifind(text, kClose, body);
  if (close == std::string_view::npos) return {};
  return clamp_rationale(unescape_text(text.substr(body, close - body)));
}

const Attribute* find_attr(const std::vector<Attribute>& attrs, std::string_view name) {
  for (const auto& a : attrs) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

ParseError make_error(ParseErrorKind kind, std::string_view text, std::size_t offset, std::string detail) {
  return ParseError{kind, offset, snippet_at(text, offset), std::move(detail)};
}

void check_terms_intrinsic(const Terms& terms) {
  std::visit(
      [](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, UltimatumSplit>) {
          if (t.to_p2 < 0) throw InvalidAction("split_to_p2 must be non-negative");
        } else if constexpr (std::is_same_v<T, Price>) {
          if (t.coins < 0) throw InvalidAction("price must be non-negative");
        } else {
          for (const auto* side : {&t.give, &t.receive}) {
            for (const auto& [k, v] : *side) {
              if (!valid_kind_name(k)) throw InvalidAction("bad resource name '" + k + "'");
              if (v < 0) throw InvalidAction("resource counts must be non-negative");
            }
          }
        }
      },
      terms);
}

}  // namespace

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::MissingActionTag: return "MissingActionTag";
    case ParseErrorKind::MalformedTerms: return "MalformedTerms";
    case ParseErrorKind::OutOfRangeTerms: return "OutOfRangeTerms";
    case ParseErrorKind::MultipleActions: return "MultipleActions";
  }
  return "?";
}

std::string ParseError::describe() const {
  std::string s(to_string(kind));
  s += " at offset " + std::to_string(offset);
  if (!detail.empty()) s += ": " + detail;
  if (!snippet.empty()) s += " (near \"" + snippet + "\")";
  return s;
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::string clamp_rationale(std::string_view text) {
  std::size_t points = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (points == kMaxRationaleChars) return std::string(text.substr(0, i));
      ++points;
    }
  }
  return std::string(text);
}

std::string format_bundle(const ResourceBundle& b) {
  std::string out;
  for (const auto& [k, v] : b) {
    if (v == 0) continue;
    if (!out.empty()) out += ',';
    out += k + ":" + std::to_string(v);
  }
  return out;
}

std::string serialize_message(const AgentMessage& msg, GameKind kind) {
  if (utf8_length(msg.rationale) > kMaxRationaleChars) throw InvalidAction("rationale exceeds 500 characters");
  std::string out = "<rationale>" + escape_text(msg.rationale) + "</rationale>";
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Accept>) {
          out += "<accept/>";
        } else if constexpr (std::is_same_v<T, Reject>) {
          out += a.final ? "<reject final=\"true\"/>" : "<reject/>";
        } else {
          if (game_kind_of(a.terms) != kind) throw InvalidAction("proposal terms do not match the game");
          check_terms_intrinsic(a.terms);
          if (const auto* s = std::get_if<UltimatumSplit>(&a.terms)) {
            out += "<propose split_to_p2=\"" + std::to_string(s->to_p2) + "\"/>";
          } else if (const auto* p = std::get_if<Price>(&a.terms)) {
            out += "<propose price=\"" + std::to_string(p->coins) + "\"/>";
          } else {
            const auto& t = std::get<TradeOffer>(a.terms);
            out += "<propose give=\"" + format_bundle(t.give) + "\" receive=\"" + format_bundle(t.receive) + "\"/>";
          }
        }
      },
      msg.action);
  return out;
}

ParseResult parse_message(std::string_view text, GameKind kind, const Bounds& bounds, Role speaker) {
  auto sites = find_action_tags(text);
  if (sites.empty()) {
    return make_error(ParseErrorKind::MissingActionTag, text, text.size(), "no <propose/>, <accept/> or <reject/> tag");
  }
  if (sites.size() > 1) {
    return make_error(ParseErrorKind::MultipleActions, text, sites[1].start,
                      std::to_string(sites.size()) + " action tags; exactly one is required");
  }

  const auto site = sites.front();
  const std::size_t name_len = site.name == TagName::Propose ? 7 : 6;
  std::string why;
  auto attrs = parse_tag_attributes(text, site.start, name_len, why);
  if (!attrs) return make_error(ParseErrorKind::MalformedTerms, text, site.start, why);

  auto malformed = [&](std::string detail) {
    return make_error(ParseErrorKind::MalformedTerms, text, site.start, std::move(detail));
  };
  auto out_of_range = [&](std::string detail) {
    return make_error(ParseErrorKind::OutOfRangeTerms, text, site.start, std::move(detail));
  };

  AgentMessage msg;
  msg.speaker = speaker;
  msg.raw_text = std::string(text);
  msg.rationale = extract_rationale(text);

  if (site.name == TagName::Accept) {
    if (!attrs->empty()) return malformed("<accept/> takes no attributes");
    msg.action = Accept{};
    return msg;
  }
  if (site.name == TagName::Reject) {
    Reject r;
    for (const auto& a : *attrs) {
      if (a.name != "final") return malformed("unknown attribute '" + a.name + "' on <reject/>");
      if (a.value == "true") r.final = true;
      else if (a.value == "false") r.final = false;
      else return malformed("final must be \"true\" or \"false\"");
    }
    msg.action = r;
    return msg;
  }

  auto only_attrs = [&](std::initializer_list<std::string_view> allowed) -> std::optional<std::string> {
    for (const auto& a : *attrs) {
      if (std::find(allowed.begin(), allowed.end(), a.name) == allowed.end()) {
        return "unexpected attribute '" + a.name + "' for " + std::string(to_string(kind));
      }
    }
    for (auto name : allowed) {
      if (!find_attr(*attrs, name)) return "missing attribute '" + std::string(name) + "'";
    }
    return std::nullopt;
  };

  switch (kind) {
    case GameKind::Ultimatum: {
      if (auto bad = only_attrs({"split_to_p2"})) return malformed(*bad);
      int v = 0;
      auto st = parse_count(find_attr(*attrs, "split_to_p2")->value, v);
      if (st == NumberStatus::Malformed) return malformed("split_to_p2 must be ASCII digits");
      if (st == NumberStatus::TooLarge || v > bounds.pool) {
        return out_of_range("split_to_p2 outside [0, " + std::to_string(bounds.pool) + "]");
      }
      msg.action = Propose{UltimatumSplit{v}};
      return msg;
    }
    case GameKind::BuySell: {
      if (auto bad = only_attrs({"price"})) return malformed(*bad);
      int v = 0;
      auto st = parse_count(find_attr(*attrs, "price")->value, v);
      if (st == NumberStatus::Malformed) return malformed("price must be ASCII digits");
      if (st == NumberStatus::TooLarge || v > bounds.max_price) return out_of_range("price above the allowed maximum");
      msg.action = Propose{Price{v}};
      return msg;
    }
    case GameKind::ResourceExchange: {
      if (auto bad = only_attrs({"give", "receive"})) return malformed(*bad);
      auto give = parse_bundle(find_attr(*attrs, "give")->value);
      if (give.status == NumberStatus::Malformed) return malformed("give: " + give.why);
      auto receive = parse_bundle(find_attr(*attrs, "receive")->value);
      if (receive.status == NumberStatus::Malformed) return malformed("receive: " + receive.why);
      if (give.status == NumberStatus::TooLarge || receive.status == NumberStatus::TooLarge) {
        return out_of_range("resource count too large");
      }
      auto exceeds = [](const ResourceBundle& want, const ResourceBundle& stock) -> std::optional<std::string> {
        for (const auto& [k, v] : want) {
          auto it = stock.find(k);
          int have = it == stock.end() ? 0 : it->second;
          if (v > have) return k + ":" + std::to_string(v) + " exceeds stock " + std::to_string(have);
        }
        return std::nullopt;
      };
      if (auto e = exceeds(give.bundle, bounds.own_stock)) return out_of_range("give " + *e);
      if (auto e = exceeds(receive.bundle, bounds.counterpart_stock)) return out_of_range("receive " + *e);
      msg.action = Propose{TradeOffer{std::move(give.bundle), std::move(receive.bundle)}};
      return msg;
    }
  }
  return malformed("unknown game kind");
}

}  // namespace arena::protocol
