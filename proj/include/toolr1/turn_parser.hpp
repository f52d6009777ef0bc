// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace toolr1 {

struct ParserConfig {
  /// When true, `<end_code>` or bare `end_code` must follow the closing fence.
  bool require_end_marker = false;
  /// When set, the opening fence must carry exactly this language tag.
  std::optional<std::string> fence_tag;
};

struct ParsedStep {
  std::string thought;
  std::string code;
  std::string trailing_text;

  friend bool operator==(const ParsedStep&, const ParsedStep&) = default;
};

enum class ParseFailureKind { MissingThought, MissingCode, UnterminatedFence, MissingEndMarker };

struct ParseFailure {
  ParseFailureKind kind;
  /// Character offsets [begin, end) of the region where the violation was detected.
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const ParseFailure&, const ParseFailure&) = default;
};

using TurnParseResult = std::variant<ParsedStep, ParseFailure>;

const char* to_string(ParseFailureKind kind);

/// Splits one policy turn into its thought and the first fenced code block.
///
/// Headers match case-insensitively at line starts. The code is the body of the
/// first fence opened after the "Code:" header; later fences stay in
/// trailing_text. Never throws on arbitrary input.
TurnParseResult parse_turn(std::string_view turn, const ParserConfig& config = {});

/// Per-trajectory turn counter: every parse is counted, parsed or not.
class CountingTurnParser {
 public:
  explicit CountingTurnParser(ParserConfig config = {}) : config_(std::move(config)) {}

  TurnParseResult parse(std::string_view turn) {
    ++turns_;
    auto result = parse_turn(turn, config_);
    if (std::holds_alternative<ParsedStep>(result)) ++parsed_;
    return result;
  }

  std::size_t turns() const { return turns_; }
  std::size_t parsed() const { return parsed_; }

 private:
  ParserConfig config_;
  std::size_t turns_ = 0;
  std::size_t parsed_ = 0;
};

/// Canonical turn text: "Thought: ...\nCode:\n```py\n...\n```<end_code>".
std::string render_turn(std::string_view thought, std::string_view code);

}  // namespace toolr1
