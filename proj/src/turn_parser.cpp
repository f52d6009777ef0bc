// SPDX-License-Identifier: Apache-2.0
#include "toolr1/turn_parser.hpp"

#include <cctype>

namespace toolr1 {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool iequals_at(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    auto a = static_cast<unsigned char>(text[pos + i]);
    auto b = static_cast<unsigned char>(word[i]);
    if (std::tolower(a) != std::tolower(b)) return false;
  }
  return true;
}

// Finds `header` at the start of a line (leading blanks allowed), from `from`.
// Returns the offset of the header's first character.
std::size_t find_line_header(std::string_view text, std::string_view header, std::size_t from) {
  std::size_t line = from;
  while (line <= text.size()) {
    std::size_t pos = line;
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    if (iequals_at(text, pos, header)) return pos;
    std::size_t nl = text.find('\n', line);
    if (nl == std::string_view::npos) break;
    line = nl + 1;
  }
  return std::string_view::npos;
}

bool at_line_start(std::string_view text, std::size_t pos) {
  while (pos > 0) {
    char c = text[pos - 1];
    if (c == '\n') return true;
    if (c != ' ' && c != '\t') return false;
    --pos;
  }
  return true;
}

constexpr std::string_view kFence = "```";

}  // namespace

const char* to_string(ParseFailureKind kind) {
  switch (kind) {
    case ParseFailureKind::MissingThought: return "MissingThought";
    case ParseFailureKind::MissingCode: return "MissingCode";
    case ParseFailureKind::UnterminatedFence: return "UnterminatedFence";
    case ParseFailureKind::MissingEndMarker: return "MissingEndMarker";
  }
  return "Unknown";
}

TurnParseResult parse_turn(std::string_view text, const ParserConfig& config) {
  const std::size_t n = text.size();

  std::size_t thought_at = find_line_header(text, "thought:", 0);
  if (thought_at == std::string_view::npos) return ParseFailure{ParseFailureKind::MissingThought, 0, n};
  std::size_t thought_begin = thought_at + 8;

  std::size_t code_at = find_line_header(text, "code:", thought_begin);
  if (code_at == std::string_view::npos) return ParseFailure{ParseFailureKind::MissingCode, thought_begin, n};
  std::size_t after_header = code_at + 5;

  // Opening fence: line-initial ``` with an optional tag, after the header.
  std::size_t open = after_header;
  while (true) {
    open = text.find(kFence, open);
    if (open == std::string_view::npos) return ParseFailure{ParseFailureKind::MissingCode, after_header, n};
    if (at_line_start(text, open) || text.substr(after_header, open - after_header).find('\n') ==
                                         std::string_view::npos) {
      break;
    }
    open += kFence.size();
  }
  std::size_t tag_begin = open + kFence.size();
  std::size_t line_end = text.find('\n', tag_begin);
  if (line_end == std::string_view::npos) {
    return ParseFailure{ParseFailureKind::UnterminatedFence, open, n};
  }
  std::string_view tag = trim(text.substr(tag_begin, line_end - tag_begin));
  if (config.fence_tag && tag != *config.fence_tag) {
    return ParseFailure{ParseFailureKind::MissingCode, open, line_end};
  }
  // A tag containing a fence means the block opened and closed on one line.
  if (tag.find(kFence) != std::string_view::npos) {
    return ParseFailure{ParseFailureKind::MissingCode, open, line_end};
  }

  std::size_t body_begin = line_end + 1;
  std::size_t close = text.find(kFence, body_begin);
  if (close == std::string_view::npos) return ParseFailure{ParseFailureKind::UnterminatedFence, open, n};

  std::string_view body = text.substr(body_begin, close - body_begin);
  if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  if (!body.empty() && body.back() == '\r') body.remove_suffix(1);

  std::size_t rest = close + kFence.size();
  std::size_t probe = rest;
  while (probe < n && is_space(text[probe])) ++probe;
  bool has_marker = false;
  if (text.compare(probe, 10, "<end_code>") == 0) {
    rest = probe + 10;
    has_marker = true;
  } else if (text.compare(probe, 8, "end_code") == 0) {
    rest = probe + 8;
    has_marker = true;
  }
  if (config.require_end_marker && !has_marker) {
    return ParseFailure{ParseFailureKind::MissingEndMarker, close, probe};
  }

  ParsedStep step;
  step.thought = std::string(trim(text.substr(thought_begin, code_at - thought_begin)));
  step.code = std::string(body);
  step.trailing_text = std::string(text.substr(rest));
  return step;
}

std::string render_turn(std::string_view thought, std::string_view code) {
  std::string out = "Thought: ";
  out += thought;
  out += "\nCode:\n```py\n";
  out += code;
  out += "\n```<end_code>";
  return out;
}

}  // namespace toolr1
