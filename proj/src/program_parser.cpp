// SPDX-License-Identifier: Apache-2.0
#include "toolr1/interpreter.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>
#include <stdexcept>

namespace toolr1 {

std::string SyntaxError::describe() const {
  return fmt::format("SyntaxError: {} (line {}, column {})", message, line, column);
}

namespace {

using ast::Location;

enum class TokKind { Name, Int, Float, String, Op, Newline, End };

struct Token {
  TokKind kind;
  std::string text;  // name, operator, number spelling, or raw string body
  Location loc;
  bool fstring = false;
  bool raw = false;
  Location body_loc{};  // location of the first character of a string body
};

struct ParseError : std::runtime_error {
  Location loc;
  ParseError(std::string msg, Location l) : std::runtime_error(std::move(msg)), loc(l) {}
};

const std::set<std::string, std::less<>> kReserved = {
    "and",  "as",     "assert", "async", "await",  "break", "class", "continue", "def",
    "del",  "elif",   "else",   "except", "finally", "for",  "from",  "global",   "if",
    "in",   "is",     "lambda", "nonlocal", "not",  "or",    "pass",  "raise",    "return",
    "try",  "while",  "with",   "yield"};

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src, Location origin = {}) : src_(src), line_(origin.line), col_(origin.column) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    bool line_start = true;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (line_start && depth_ == 0) {
        line_start = false;
        std::size_t p = pos_;
        while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) ++p;
        bool blank = p >= src_.size() || src_[p] == '\n' || src_[p] == '#' || src_[p] == '\r';
        if (p != pos_ && !blank && !continued_) throw ParseError("unexpected indent", here());
        continued_ = false;
        advance(p - pos_);
        continue;
      }
      if (c == '\n') {
        if (depth_ == 0) out.push_back({TokKind::Newline, "\n", here()});
        advance(1);
        line_start = true;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
        advance(1);
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
        continue;
      }
      if (c == '\\') {
        std::size_t p = pos_ + 1;
        if (p < src_.size() && src_[p] == '\r') ++p;
        if (p < src_.size() && src_[p] == '\n') {
          advance(p + 1 - pos_);
          continued_ = true;
          line_start = true;
          continue;
        }
        throw ParseError("unexpected character after line continuation", here());
      }
      if (is_name_start(c)) {
        if (auto str = try_string_with_prefix()) {
          out.push_back(std::move(*str));
          continue;
        }
        Location loc = here();
        std::size_t start = pos_;
        while (pos_ < src_.size() && is_name_char(src_[pos_])) advance(1);
        out.push_back({TokKind::Name, std::string(src_.substr(start, pos_ - start)), loc});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        out.push_back(number());
        continue;
      }
      if (c == '"' || c == '\'') {
        out.push_back(string_literal(false, false, here()));
        continue;
      }
      out.push_back(op());
    }
    if (depth_ > 0) throw ParseError("unexpected end of input inside brackets", here());
    out.push_back({TokKind::Newline, "\n", here()});
    out.push_back({TokKind::End, "", here()});
    return out;
  }

 private:
  Location here() const { return {line_, col_}; }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  std::optional<Token> try_string_with_prefix() {
    std::size_t p = pos_;
    bool f = false, r = false;
    while (p < src_.size() && p - pos_ < 2) {
      char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[p])));
      if (lc == 'f' && !f) f = true;
      else if (lc == 'r' && !r) r = true;
      else break;
      ++p;
    }
    if (p == pos_ || p >= src_.size() || (src_[p] != '"' && src_[p] != '\'')) return std::nullopt;
    Location loc = here();
    advance(p - pos_);
    return string_literal(f, r, loc);
  }

  Token string_literal(bool f, bool r, Location loc) {
    char q = src_[pos_];
    bool triple = src_.substr(pos_, 3) == std::string(3, q);
    std::size_t qlen = triple ? 3 : 1;
    advance(qlen);
    Location body = here();
    std::size_t start = pos_;
    while (true) {
      if (pos_ >= src_.size()) throw ParseError("unterminated string literal", loc);
      char c = src_[pos_];
      if (c == '\\') {
        advance(2);
        continue;
      }
      if (!triple && c == '\n') throw ParseError("unterminated string literal", loc);
      if (c == q && (!triple || src_.substr(pos_, 3) == std::string(3, q))) break;
      advance(1);
    }
    Token t{TokKind::String, std::string(src_.substr(start, pos_ - start)), loc};
    t.fstring = f;
    t.raw = r;
    t.body_loc = body;
    advance(qlen);
    return t;
  }

  Token number() {
    Location loc = here();
    std::size_t start = pos_;
    bool is_float = false;
    auto digits = [&] {
      while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        advance(1);
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      is_float = true;
      advance(1);
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        is_float = true;
        advance(p - pos_);
        digits();
      }
    }
    if (pos_ < src_.size() && is_name_char(src_[pos_])) throw ParseError("invalid numeric literal", loc);
    std::string text;
    for (char c : src_.substr(start, pos_ - start))
      if (c != '_') text.push_back(c);
    return {is_float ? TokKind::Float : TokKind::Int, text, loc};
  }

  Token op() {
    Location loc = here();
    static const char* const kOps[] = {"**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "->",
                                       "+",  "-",  "*",  "/",  "%",  "(",  ")",  "[",  "]",  "{",  "}",
                                       ",",  "=",  ".",  ":",  ";",  "<",  ">",  "@",  "&",  "|",  "^",  "~", "!"};
    for (const char* o : kOps) {
      std::string_view ov(o);
      if (src_.substr(pos_, ov.size()) == ov) {
        if (ov == "(" || ov == "[" || ov == "{") ++depth_;
        if ((ov == ")" || ov == "]" || ov == "}") && depth_ > 0) --depth_;
        advance(ov.size());
        return {TokKind::Op, std::string(ov), loc};
      }
    }
    throw ParseError(fmt::format("invalid character '{}'", src_[pos_]), loc);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_;
  int col_;
  int depth_ = 0;
  bool continued_ = false;
};

std::string decode_escapes(std::string_view body, Location loc) {
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c != '\\' || i + 1 >= body.size()) {
      out.push_back(c);
      continue;
    }
    char e = body[++i];
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '0': out.push_back('\0'); break;
      case '\\': out.push_back('\\'); break;
      case '\'': out.push_back('\''); break;
      case '"': out.push_back('"'); break;
      case '\n': break;
      case 'x': {
        if (i + 2 >= body.size()) throw ParseError("truncated \\x escape", loc);
        int v = 0;
        auto r = std::from_chars(body.data() + i + 1, body.data() + i + 3, v, 16);
        if (r.ptr != body.data() + i + 3) throw ParseError("truncated \\x escape", loc);
        out.push_back(static_cast<char>(v));
        i += 2;
        break;
      }
      default:
        out.push_back('\\');
        out.push_back(e);
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ast::Program program() {
    ast::Program prog;
    while (true) {
      skip_separators();
      if (peek().kind == TokKind::End) break;
      prog.body.push_back(statement());
      const Token& t = peek();
      if (t.kind == TokKind::Newline || (t.kind == TokKind::Op && t.text == ";") || t.kind == TokKind::End) continue;
      throw ParseError(fmt::format("invalid syntax near '{}'", t.text), t.loc);
    }
    return prog;
  }

  ast::ExprPtr lone_expression() {
    auto e = expression();
    skip_separators();
    if (peek().kind != TokKind::End) throw ParseError("invalid syntax in f-string expression", peek().loc);
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  Token take() {
    Token t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_op(std::string_view op, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == TokKind::Op && t.text == op;
  }
  void expect_op(std::string_view op) {
    if (!is_op(op)) throw ParseError(fmt::format("expected '{}'", op), peek().loc);
    take();
  }
  void skip_separators() {
    while (peek().kind == TokKind::Newline || is_op(";")) take();
  }
  void reject_reserved(const Token& t) const {
    if (t.kind == TokKind::Name && kReserved.count(t.text))
      throw ParseError(fmt::format("unsupported syntax '{}'", t.text), t.loc);
  }

  ast::Stmt statement() {
    const Token& first = peek();
    Location loc = first.loc;
    if (first.kind == TokKind::Name && first.text == "import") {
      take();
      ast::Import imp;
      while (true) {
        const Token& t = peek();
        if (t.kind != TokKind::Name || kReserved.count(t.text)) throw ParseError("expected module name", t.loc);
        std::string mod = take().text;
        while (is_op(".")) {
          take();
          if (peek().kind != TokKind::Name) throw ParseError("expected module name", peek().loc);
          mod += "." + take().text;
        }
        imp.modules.push_back(std::move(mod));
        if (!is_op(",")) break;
        take();
      }
      return {loc, std::move(imp)};
    }
    reject_reserved(first);

    // Assignment: NAME (',' NAME)* [','] '='
    std::size_t i = 0;
    std::vector<std::string> targets;
    while (peek(i).kind == TokKind::Name && !kReserved.count(peek(i).text)) {
      targets.push_back(peek(i).text);
      ++i;
      if (is_op(",", i)) {
        ++i;
        continue;
      }
      break;
    }
    if (!targets.empty() && is_op("=", i)) {
      for (std::size_t k = 0; k <= i; ++k) take();
      for (const auto& t : targets)
        if (t == "True" || t == "False" || t == "None") throw ParseError("cannot assign to literal", loc);
      ast::Assign assign;
      assign.targets = std::move(targets);
      assign.value = assignment_value();
      if (is_op("=")) throw ParseError("chained assignment is not supported", peek().loc);
      return {loc, std::move(assign)};
    }

    auto expr = expression();
    if (is_op("=")) throw ParseError("cannot assign to expression", peek().loc);
    if (peek().kind == TokKind::Op) {
      const std::string& o = peek().text;
      if (o == "+=" || o == "-=" || o == "*=" || o == "/=")
        throw ParseError("augmented assignment is not supported", peek().loc);
    }
    return {loc, ast::ExprStmt{std::move(expr)}};
  }

  ast::ExprPtr assignment_value() {
    Location loc = peek().loc;
    auto first = expression();
    if (!is_op(",")) return first;
    ast::TupleExpr tuple;
    tuple.items.push_back(std::move(first));
    while (is_op(",")) {
      take();
      if (at_statement_end()) break;
      tuple.items.push_back(expression());
    }
    return make(loc, std::move(tuple));
  }

  bool at_statement_end() const {
    const Token& t = peek();
    return t.kind == TokKind::Newline || t.kind == TokKind::End || (t.kind == TokKind::Op && t.text == ";");
  }

  template <class Node>
  static ast::ExprPtr make(Location loc, Node node) {
    auto e = std::make_unique<ast::Expr>();
    e->loc = loc;
    e->node = std::move(node);
    return e;
  }

  ast::ExprPtr expression() { return comparison(); }

  ast::ExprPtr comparison() {
    Location loc = peek().loc;
    auto first = arith();
    ast::Compare cmp;
    while (true) {
      std::optional<ast::CmpOp> op;
      if (is_op("==")) op = ast::CmpOp::Eq;
      else if (is_op("!=")) op = ast::CmpOp::Ne;
      else if (is_op("<")) op = ast::CmpOp::Lt;
      else if (is_op("<=")) op = ast::CmpOp::Le;
      else if (is_op(">")) op = ast::CmpOp::Gt;
      else if (is_op(">=")) op = ast::CmpOp::Ge;
      if (!op) break;
      take();
      cmp.rest.emplace_back(*op, arith());
    }
    if (cmp.rest.empty()) return first;
    cmp.first = std::move(first);
    return make(loc, std::move(cmp));
  }

  ast::ExprPtr arith() {
    auto lhs = term();
    while (is_op("+") || is_op("-")) {
      Location loc = peek().loc;
      auto op = take().text == "+" ? ast::BinOp::Add : ast::BinOp::Sub;
      lhs = make(loc, ast::Binary{op, std::move(lhs), term()});
    }
    return lhs;
  }

  ast::ExprPtr term() {
    auto lhs = factor();
    while (is_op("*") || is_op("/") || is_op("//") || is_op("%")) {
      Location loc = peek().loc;
      std::string o = take().text;
      ast::BinOp op = o == "*" ? ast::BinOp::Mul : o == "/" ? ast::BinOp::Div : o == "//" ? ast::BinOp::FloorDiv
                                                                                          : ast::BinOp::Mod;
      lhs = make(loc, ast::Binary{op, std::move(lhs), factor()});
    }
    return lhs;
  }

  ast::ExprPtr factor() {
    if (is_op("-") || is_op("+")) {
      Location loc = peek().loc;
      auto op = take().text == "-" ? ast::UnaryOp::Neg : ast::UnaryOp::Pos;
      return make(loc, ast::Unary{op, factor()});
    }
    return power();
  }

  ast::ExprPtr power() {
    auto base = primary();
    if (is_op("**")) {
      Location loc = take().loc;
      return make(loc, ast::Binary{ast::BinOp::Pow, std::move(base), factor()});
    }
    return base;
  }

  ast::ExprPtr primary() {
    auto expr = atom();
    while (true) {
      if (is_op("(")) {
        bool callable = std::holds_alternative<ast::Name>(expr->node) ||
                        std::holds_alternative<ast::ModuleAttr>(expr->node);
        if (!callable) throw ParseError("only names and module functions can be called", peek().loc);
        Location loc = expr->loc;
        expr = make(loc, call_args(std::move(expr)));
        continue;
      }
      if (is_op(".")) {
        auto* name = std::get_if<ast::Name>(&expr->node);
        if (!name) throw ParseError("attribute access is only supported on module names", peek().loc);
        take();
        const Token& attr = peek();
        if (attr.kind != TokKind::Name) throw ParseError("expected attribute name", attr.loc);
        Location loc = expr->loc;
        expr = make(loc, ast::ModuleAttr{name->id, take().text});
        if (!is_op("(") && is_op(".")) throw ParseError("nested attribute access is not supported", peek().loc);
        continue;
      }
      if (is_op("[")) throw ParseError("subscripting is not supported", peek().loc);
      return expr;
    }
  }

  ast::Call call_args(ast::ExprPtr callee) {
    expect_op("(");
    ast::Call call;
    call.callee = std::move(callee);
    while (!is_op(")")) {
      if (is_op("*") || is_op("**")) throw ParseError("argument unpacking is not supported", peek().loc);
      if (peek().kind == TokKind::Name && is_op("=", 1)) {
        reject_reserved(peek());
        std::string name = take().text;
        take();
        for (const auto& kw : call.kwargs)
          if (kw.name == name) throw ParseError(fmt::format("keyword argument repeated: {}", name), peek().loc);
        call.kwargs.push_back({std::move(name), expression()});
      } else {
        if (!call.kwargs.empty())
          throw ParseError("positional argument follows keyword argument", peek().loc);
        call.args.push_back(expression());
      }
      if (!is_op(",")) break;
      take();
    }
    expect_op(")");
    return call;
  }

  ast::ExprPtr atom() {
    const Token& t = peek();
    Location loc = t.loc;
    switch (t.kind) {
      case TokKind::Int: {
        std::int64_t v = 0;
        auto r = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (r.ec != std::errc() || r.ptr != t.text.data() + t.text.size())
          throw ParseError("integer literal out of range", loc);
        if (t.text.size() > 1 && t.text[0] == '0' && v != 0)
          throw ParseError("leading zeros in decimal integer literals are not permitted", loc);
        take();
        return make(loc, ast::IntLiteral{v});
      }
      case TokKind::Float: {
        double v = std::strtod(t.text.c_str(), nullptr);
        take();
        return make(loc, ast::FloatLiteral{v});
      }
      case TokKind::String: return string_atom();
      case TokKind::Name: {
        reject_reserved(t);
        if (t.text == "import") throw ParseError("import is only allowed as a statement", loc);
        std::string id = take().text;
        if (id == "True") return make(loc, ast::BoolLiteral{true});
        if (id == "False") return make(loc, ast::BoolLiteral{false});
        if (id == "None") return make(loc, ast::NoneLiteral{});
        return make(loc, ast::Name{std::move(id)});
      }
      case TokKind::Op: {
        if (t.text == "(") {
          take();
          auto inner = expression();
          if (is_op(",")) throw ParseError("tuples are not supported", peek().loc);
          expect_op(")");
          return inner;
        }
        if (t.text == "[") {
          take();
          ast::ListLiteral list;
          while (!is_op("]")) {
            list.items.push_back(expression());
            if (!is_op(",")) break;
            take();
          }
          if (peek().kind == TokKind::Name) reject_reserved(peek());
          expect_op("]");
          return make(loc, std::move(list));
        }
        if (t.text == "{") throw ParseError("dict and set literals are not supported", loc);
        throw ParseError(fmt::format("invalid syntax near '{}'", t.text), loc);
      }
      case TokKind::Newline:
      case TokKind::End: throw ParseError("unexpected end of statement", loc);
    }
    throw ParseError("invalid syntax", loc);
  }

  ast::ExprPtr string_atom() {
    Location loc = peek().loc;
    ast::StringLiteral lit;
    while (peek().kind == TokKind::String) {
      Token t = take();
      if (t.fstring) {
        append_fstring(lit, t);
      } else {
        append_text(lit, t.raw ? t.text : decode_escapes(t.text, t.loc));
      }
    }
    return make(loc, std::move(lit));
  }

  static void append_text(ast::StringLiteral& lit, std::string text) {
    if (text.empty()) {
      if (lit.parts.empty()) lit.parts.emplace_back(std::string());
      return;
    }
    if (!lit.parts.empty()) {
      if (auto* s = std::get_if<std::string>(&lit.parts.back())) {
        *s += text;
        return;
      }
    }
    lit.parts.emplace_back(std::move(text));
  }

  void append_fstring(ast::StringLiteral& lit, const Token& t) {
    const std::string& body = t.text;
    std::string literal;
    auto flush = [&] {
      append_text(lit, t.raw ? literal : decode_escapes(literal, t.loc));
      literal.clear();
    };
    for (std::size_t i = 0; i < body.size(); ++i) {
      char c = body[i];
      if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
        literal.push_back('{');
        ++i;
        continue;
      }
      if (c == '}') {
        if (i + 1 < body.size() && body[i + 1] == '}') {
          literal.push_back('}');
          ++i;
          continue;
        }
        throw ParseError("f-string: single '}' is not allowed", t.loc);
      }
      if (c != '{') {
        literal.push_back(c);
        continue;
      }
      // Field: find the matching close brace and a top-level ':' spec.
      std::size_t start = i + 1;
      int depth = 0;
      char quote = 0;
      std::size_t colon = std::string::npos;
      std::size_t j = start;
      for (; j < body.size(); ++j) {
        char d = body[j];
        if (quote) {
          if (d == quote) quote = 0;
          continue;
        }
        if (d == '\'' || d == '"') quote = d;
        else if (d == '(' || d == '[' || d == '{') ++depth;
        else if (d == ')' || d == ']') --depth;
        else if (d == '}') {
          if (depth == 0) break;
          --depth;
        } else if (d == ':' && depth == 0 && colon == std::string::npos) colon = j;
      }
      if (j >= body.size()) throw ParseError("f-string: expecting '}'", t.loc);
      std::size_t expr_end = colon == std::string::npos ? j : colon;
      std::string expr_text = body.substr(start, expr_end - start);
      if (expr_text.find_first_not_of(" \t") == std::string::npos)
        throw ParseError("f-string: empty expression not allowed", t.loc);
      if (expr_text.find('!') != std::string::npos && expr_text.find("!=") == std::string::npos)
        throw ParseError("f-string: conversions are not supported", t.loc);

      ast::FormatField field;
      Location sub = t.body_loc;
      sub.column += static_cast<int>(start);
      std::vector<Token> toks = Lexer(expr_text, sub).run();
      Parser inner(std::move(toks));
      field.expr = inner.lone_expression();
      if (colon != std::string::npos) {
        std::string spec = body.substr(colon + 1, j - colon - 1);
        field.fixed_precision = parse_fixed_spec(spec, t.loc);
      }
      flush();
      lit.parts.emplace_back(std::move(field));
      i = j;
    }
    flush();
  }

  static std::optional<int> parse_fixed_spec(const std::string& spec, Location loc) {
    if (spec.empty()) return std::nullopt;
    if (spec.size() >= 3 && spec.front() == '.' && spec.back() == 'f') {
      int n = 0;
      auto r = std::from_chars(spec.data() + 1, spec.data() + spec.size() - 1, n);
      if (r.ec == std::errc() && r.ptr == spec.data() + spec.size() - 1 && n <= 100) return n;
    }
    throw ParseError(fmt::format("unsupported format specifier '{}'", spec), loc);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

ProgramParseResult parse_program(std::string_view code) {
  try {
    Parser parser(Lexer(code).run());
    return parser.program();
  } catch (const ParseError& e) {
    return SyntaxError{e.what(), e.loc.line, e.loc.column};
  }
}

}  // namespace toolr1
