#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geopo/defaults.hpp"
#include "geopo/errors.hpp"
#include "geopo/spatial.hpp"

namespace geopo {

// Grammar:
//   episode := round* final
//   round   := "<think>" text "</think>" "<imagine>" action "</imagine>"
//   final   := "<think>" text "</think>" "<answer>" letter "</answer>"
//   action  := ("forward" | "left" | "right") ws decimal
// Whitespace between blocks is ignored; tags are case-sensitive; decimals
// use '.' with no exponent form.

struct Round {
  std::string think;
  PrimitiveAction imagine;

  bool operator==(const Round&) const = default;
};

struct Episode {
  std::vector<Round> rounds;
  std::string final_think;
  char answer = 'A';

  bool operator==(const Episode&) const = default;
};

enum class ViolationKind {
  MissingThink,
  UnclosedTag,
  UnexpectedContent,
  NestedTag,
  BadAction,
  BadAnswer,
  TrailingContent,
  MissingAnswer,
  DepthExceeded,
};

inline const char* violation_kind_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::MissingThink: return "missing-think";
    case ViolationKind::UnclosedTag: return "unclosed-tag";
    case ViolationKind::UnexpectedContent: return "unexpected-content";
    case ViolationKind::NestedTag: return "nested-tag";
    case ViolationKind::BadAction: return "bad-action";
    case ViolationKind::BadAnswer: return "bad-answer";
    case ViolationKind::TrailingContent: return "trailing-content";
    case ViolationKind::MissingAnswer: return "missing-answer";
    case ViolationKind::DepthExceeded: return "depth-exceeded";
  }
  return "?";
}

struct Violation {
  std::size_t position = 0;  // byte offset into the input
  ViolationKind kind = ViolationKind::UnexpectedContent;

  bool operator==(const Violation&) const = default;
};

struct FormatDiagnostics {
  bool valid = false;
  std::vector<Violation> violations;
};

struct ParseResult {
  std::optional<Episode> episode;
  FormatDiagnostics diagnostics;
};

// "forward 0.75" -> PrimitiveAction. Surrounding whitespace tolerated;
// magnitude must be a plain positive decimal (no sign, no exponent).
inline std::optional<PrimitiveAction> parse_action(std::string_view text) {
  auto is_ws = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
  };
  std::size_t b = 0, e = text.size();
  while (b < e && is_ws(text[b])) ++b;
  while (e > b && is_ws(text[e - 1])) --e;
  text = text.substr(b, e - b);

  std::size_t sp = 0;
  while (sp < text.size() && !is_ws(text[sp])) ++sp;
  std::string_view word = text.substr(0, sp);
  ActionKind kind;
  if (word == "forward")
    kind = ActionKind::Forward;
  else if (word == "left")
    kind = ActionKind::Left;
  else if (word == "right")
    kind = ActionKind::Right;
  else
    return std::nullopt;

  std::size_t np = sp;
  while (np < text.size() && is_ws(text[np])) ++np;
  if (np == sp || np == text.size()) return std::nullopt;  // missing separator
  std::string_view num = text.substr(np);

  bool seen_dot = false, digit_before = false, digit_after = false;
  for (char c : num) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
    } else if (c >= '0' && c <= '9') {
      (seen_dot ? digit_after : digit_before) = true;
    } else {
      return std::nullopt;
    }
  }
  if (!digit_before || (seen_dot && !digit_after)) return std::nullopt;

  double magnitude = 0.0;
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(),
                                   magnitude, std::chars_format::fixed);
  if (ec != std::errc() || ptr != num.data() + num.size()) return std::nullopt;
  if (!(magnitude > 0.0) || !std::isfinite(magnitude)) return std::nullopt;
  return PrimitiveAction{kind, magnitude};
}

namespace detail {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kImagineOpen = "<imagine>";
inline constexpr std::string_view kImagineClose = "</imagine>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline bool contains_tag_token(std::string_view s) {
  constexpr std::array<std::string_view, 5> toks = {
      kThinkOpen, kImagineOpen, kAnswerOpen, kImagineClose, kAnswerClose};
  for (auto t : toks)
    if (s.find(t) != std::string_view::npos) return true;
  return false;
}

inline std::size_t skip_ws(std::string_view s, std::size_t p) {
  while (p < s.size() &&
         (s[p] == ' ' || s[p] == '\t' || s[p] == '\n' || s[p] == '\r'))
    ++p;
  return p;
}

}  // namespace detail

// Total: every input yields either an Episode or non-empty diagnostics.
inline ParseResult parse(std::string_view text,
                         int max_rounds = kDefaultMaxDepth) {
  using namespace detail;
  ParseResult out;
  auto fail = [&](std::size_t pos, ViolationKind kind) -> ParseResult& {
    out.diagnostics.valid = false;
    out.diagnostics.violations.push_back({pos, kind});
    out.episode.reset();
    return out;
  };

  Episode ep;
  std::size_t pos = 0;
  while (true) {
    pos = skip_ws(text, pos);
    if (pos == text.size()) return fail(pos, ViolationKind::MissingAnswer);

    if (text.substr(pos).starts_with(kImagineOpen) ||
        text.substr(pos).starts_with(kAnswerOpen))
      return fail(pos, ViolationKind::MissingThink);
    if (!text.substr(pos).starts_with(kThinkOpen))
      return fail(pos, ViolationKind::UnexpectedContent);

    std::size_t think_open = pos;
    std::size_t body = pos + kThinkOpen.size();
    std::size_t close = text.find(kThinkClose, body);
    if (close == std::string_view::npos)
      return fail(think_open, ViolationKind::UnclosedTag);
    std::string_view think = text.substr(body, close - body);
    if (contains_tag_token(think)) {
      // report the earliest embedded tag token
      std::size_t best = std::string_view::npos;
      for (auto tok : {kThinkOpen, kImagineOpen, kAnswerOpen, kImagineClose,
                       kAnswerClose}) {
        auto at = think.find(tok);
        if (at != std::string_view::npos) best = std::min(best, at);
      }
      return fail(body + best, ViolationKind::NestedTag);
    }
    pos = close + kThinkClose.size();

    pos = skip_ws(text, pos);
    if (pos == text.size()) return fail(pos, ViolationKind::MissingAnswer);

    if (text.substr(pos).starts_with(kImagineOpen)) {
      std::size_t open = pos;
      std::size_t abody = pos + kImagineOpen.size();
      std::size_t aclose = text.find(kImagineClose, abody);
      if (aclose == std::string_view::npos)
        return fail(open, ViolationKind::UnclosedTag);
      auto action = parse_action(text.substr(abody, aclose - abody));
      if (!action) return fail(abody, ViolationKind::BadAction);
      if (static_cast<int>(ep.rounds.size()) >= max_rounds)
        return fail(open, ViolationKind::DepthExceeded);
      ep.rounds.push_back({std::string(think), *action});
      pos = aclose + kImagineClose.size();
      continue;
    }

    if (text.substr(pos).starts_with(kAnswerOpen)) {
      std::size_t open = pos;
      std::size_t abody = pos + kAnswerOpen.size();
      std::size_t aclose = text.find(kAnswerClose, abody);
      if (aclose == std::string_view::npos)
        return fail(open, ViolationKind::UnclosedTag);
      std::string_view letter = text.substr(abody, aclose - abody);
      std::size_t lb = skip_ws(letter, 0);
      std::size_t le = letter.size();
      while (le > lb && (letter[le - 1] == ' ' || letter[le - 1] == '\t' ||
                         letter[le - 1] == '\n' || letter[le - 1] == '\r'))
        --le;
      if (le - lb != 1 || letter[lb] < 'A' || letter[lb] > 'D')
        return fail(abody, ViolationKind::BadAnswer);
      ep.final_think = std::string(think);
      ep.answer = letter[lb];
      pos = aclose + kAnswerClose.size();
      pos = skip_ws(text, pos);
      if (pos != text.size()) return fail(pos, ViolationKind::TrailingContent);
      out.episode = std::move(ep);
      out.diagnostics.valid = true;
      return out;
    }

    return fail(pos, ViolationKind::UnexpectedContent);
  }
}

// Shortest fixed-notation form that parses back to the same double; never
// uses exponent notation, so serialized actions always re-parse.
inline std::string format_magnitude(double v) {
  char buf[512];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v,
                                 std::chars_format::fixed);
  if (ec != std::errc()) throw SerializeError("magnitude not representable");
  return std::string(buf, ptr);
}

inline std::string format_action(const PrimitiveAction& a) {
  return std::string(action_kind_name(a.kind)) + " " +
         format_magnitude(a.magnitude);
}

inline std::string serialize(const Episode& ep,
                             int max_rounds = kDefaultMaxDepth) {
  using namespace detail;
  if (static_cast<int>(ep.rounds.size()) > max_rounds)
    throw SerializeError("episode exceeds the round cap");
  if (ep.answer < 'A' || ep.answer > 'D')
    throw SerializeError("answer letter outside A-D");
  auto check_think = [](const std::string& t) {
    if (contains_tag_token(t))
      throw SerializeError("think text contains a tag token");
  };
  std::string out;
  for (const auto& r : ep.rounds) {
    check_think(r.think);
    if (!(r.imagine.magnitude > 0.0) || !std::isfinite(r.imagine.magnitude))
      throw SerializeError("action magnitude must be positive and finite");
    out += kThinkOpen;
    out += r.think;
    out += kThinkClose;
    out += kImagineOpen;
    out += format_action(r.imagine);
    out += kImagineClose;
  }
  check_think(ep.final_think);
  out += kThinkOpen;
  out += ep.final_think;
  out += kThinkClose;
  out += kAnswerOpen;
  out += ep.answer;
  out += kAnswerClose;
  return out;
}

}  // namespace geopo
