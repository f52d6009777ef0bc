// SPDX-License-Identifier: Apache-2.0
#include "toolr1/interpreter.hpp"

#include "exact_math.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

namespace toolr1 {

const char* to_string(ExecErrorKind kind) {
  switch (kind) {
    case ExecErrorKind::NameError: return "NameError";
    case ExecErrorKind::TypeError: return "TypeError";
    case ExecErrorKind::ArityError: return "ArityError";
    case ExecErrorKind::ImportError: return "ImportError";
    case ExecErrorKind::ToolError: return "ToolError";
    case ExecErrorKind::LimitExceeded: return "LimitExceeded";
  }
  return "Error";
}

ToolResult NullToolHost::invoke(const std::string& name, const Kwargs&) {
  return {ExecError{ExecErrorKind::ToolError, fmt::format("UnknownTool: '{}' is not a registered tool", name)}, {}};
}

namespace {

struct Raise {
  ExecError error;
};

[[noreturn]] void raise(ExecErrorKind kind, std::string message) { throw Raise{{kind, std::move(message)}}; }
[[noreturn]] void type_error(std::string message) { raise(ExecErrorKind::TypeError, std::move(message)); }
[[noreturn]] void overflow() { raise(ExecErrorKind::LimitExceeded, "integer result exceeds the 64-bit range"); }

constexpr std::int64_t kExactDoubleInt = std::int64_t{1} << 53;

bool is_builtin(std::string_view name) {
  static constexpr std::string_view kNames[] = {"print", "round", "abs", "min", "max", "sum",
                                                "len",   "int",   "float", "str"};
  return std::find(std::begin(kNames), std::end(kNames), name) != std::end(kNames);
}

bool is_implemented_module(std::string_view name) { return name == "math" || name == "statistics"; }

// Numbers view: Bool behaves as Int.
bool numeric_int(const Value& v) { return v.is_int() || v.is_bool(); }
std::int64_t to_i64(const Value& v) { return v.is_bool() ? (v.as_bool() ? 1 : 0) : v.as_int(); }
double to_f64(const Value& v) {
  if (v.is_float()) return v.as_float();
  return static_cast<double>(to_i64(v));
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) overflow();
  return r;
}
std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_sub_overflow(a, b, &r)) overflow();
  return r;
}
std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) overflow();
  return r;
}

double int_true_div(std::int64_t a, std::int64_t b) {
  if (std::abs(static_cast<double>(a)) <= kExactDoubleInt && std::abs(static_cast<double>(b)) <= kExactDoubleInt)
    return static_cast<double>(a) / static_cast<double>(b);
  return exact::to_double(exact::Rational(exact::Int(a), exact::Int(b)));
}

std::pair<double, double> float_divmod(double vx, double wx) {
  double mod = std::fmod(vx, wx);
  double div = (vx - mod) / wx;
  if (mod != 0.0) {
    if ((wx < 0) != (mod < 0)) {
      mod += wx;
      div -= 1.0;
    }
  } else {
    mod = std::copysign(0.0, wx);
  }
  double floordiv;
  if (div != 0.0) {
    floordiv = std::floor(div);
    if (div - floordiv > 0.5) floordiv += 1.0;
  } else {
    floordiv = std::copysign(0.0, vx / wx);
  }
  return {floordiv, mod};
}

std::int64_t ipow(std::int64_t base, std::int64_t exp) {
  std::int64_t result = 1;
  while (exp > 0) {
    if (exp & 1) result = checked_mul(result, base);
    exp >>= 1;
    if (exp > 0) base = checked_mul(base, base);
  }
  return result;
}

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

// Three-way comparison; returns nullopt for incomparable pairs.
std::optional<int> compare_values(const Value& a, const Value& b);

int compare_int_float(std::int64_t i, double f) {
  if (std::isnan(f)) return 2;  // unordered
  if (std::abs(static_cast<double>(i)) <= kExactDoubleInt) {
    double d = static_cast<double>(i);
    return d < f ? -1 : (d > f ? 1 : 0);
  }
  if (std::isinf(f)) return f > 0 ? -1 : 1;
  exact::Rational ri(i), rf = exact::from_double(f);
  return ri < rf ? -1 : (ri > rf ? 1 : 0);
}

std::optional<int> compare_values(const Value& a, const Value& b) {
  if (a.is_number() && b.is_number()) {
    if (numeric_int(a) && numeric_int(b)) {
      auto x = to_i64(a), y = to_i64(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is_float() && b.is_float()) {
      double x = a.as_float(), y = b.as_float();
      if (std::isnan(x) || std::isnan(y)) return 2;
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is_float()) {
      int c = compare_int_float(to_i64(b), a.as_float());
      return c == 2 ? 2 : -c;
    }
    return compare_int_float(to_i64(a), b.as_float());
  }
  if (a.is_str() && b.is_str()) {
    int c = a.as_str().compare(b.as_str());
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (a.is_list() && b.is_list()) {
    const auto& x = a.as_list();
    const auto& y = b.as_list();
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
      auto c = compare_values(x[i], y[i]);
      if (!c) return std::nullopt;
      if (*c != 0) return c;
    }
    return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
  }
  return std::nullopt;
}

bool values_equal(const Value& a, const Value& b) {
  if (a.is_number() && b.is_number()) {
    auto c = compare_values(a, b);
    return c && *c == 0;
  }
  if (a.is_list() && b.is_list()) {
    const auto& x = a.as_list();
    const auto& y = b.as_list();
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!values_equal(x[i], y[i])) return false;
    return true;
  }
  return a == b;
}

std::string_view strip_ws(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Digits with single underscores between digit groups.
std::optional<std::string> clean_digits(std::string_view s) {
  std::string out;
  bool last_digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      out.push_back(c);
      last_digit = true;
    } else if (c == '_' && last_digit) {
      last_digit = false;
    } else {
      return std::nullopt;
    }
  }
  if (out.empty() || !last_digit) return std::nullopt;
  return out;
}

std::optional<std::int64_t> parse_int_literal(std::string_view text) {
  std::string_view s = strip_ws(text);
  bool negative = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  auto digits = clean_digits(s);
  if (!digits) return std::nullopt;
  std::string full = (negative ? "-" : "") + *digits;
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(full.c_str(), &end, 10);
  if (errno == ERANGE) overflow();
  return static_cast<std::int64_t>(v);
}

std::optional<double> parse_float_literal(std::string_view text) {
  std::string_view s = strip_ws(text);
  std::string body(s);
  std::string lower;
  for (char c : body) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::string_view l = lower;
  bool negative = false;
  if (!l.empty() && (l.front() == '+' || l.front() == '-')) {
    negative = l.front() == '-';
    l.remove_prefix(1);
  }
  if (l == "inf" || l == "infinity") return negative ? -HUGE_VAL : HUGE_VAL;
  if (l == "nan") return std::numeric_limits<double>::quiet_NaN();
  // mantissa [eE [sign] digits]
  std::string cleaned;
  std::size_t epos = l.find('e');
  std::string_view mant = l.substr(0, epos);
  std::size_t dot = mant.find('.');
  std::string_view ip = mant.substr(0, dot);
  std::string_view fp = dot == std::string_view::npos ? std::string_view{} : mant.substr(dot + 1);
  if (ip.empty() && fp.empty()) return std::nullopt;
  if (!ip.empty()) {
    auto d = clean_digits(ip);
    if (!d) return std::nullopt;
    cleaned += *d;
  }
  if (dot != std::string_view::npos) {
    cleaned += '.';
    if (!fp.empty()) {
      auto d = clean_digits(fp);
      if (!d) return std::nullopt;
      cleaned += *d;
    }
  }
  if (epos != std::string_view::npos) {
    std::string_view ex = l.substr(epos + 1);
    cleaned += 'e';
    if (!ex.empty() && (ex.front() == '+' || ex.front() == '-')) {
      cleaned += ex.front();
      ex.remove_prefix(1);
    }
    auto d = clean_digits(ex);
    if (!d) return std::nullopt;
    cleaned += *d;
  }
  double v = std::strtod(cleaned.c_str(), nullptr);
  return negative ? -v : v;
}

double round_float(double x, std::int64_t ndigits) {
  if (!std::isfinite(x) || x == 0.0) return x;
  if (ndigits > 323) return x;
  if (ndigits < -308) return std::copysign(0.0, x);
  exact::Rational q = exact::from_double(x);
  exact::Int scale = boost::multiprecision::pow(exact::Int(10), static_cast<unsigned>(std::abs(ndigits)));
  exact::Int rounded = ndigits >= 0 ? exact::round_half_even(q * scale) : exact::round_half_even(q / scale);
  exact::Rational back = ndigits >= 0 ? exact::Rational(rounded, scale) : exact::Rational(rounded * scale);
  double r = exact::to_double(back);
  if (std::isinf(r)) type_error("OverflowError: rounded value too large to represent");
  if (r == 0.0) r = std::copysign(0.0, x);
  return r;
}

class Executor {
 public:
  Executor(Namespace& ns, ToolHost& tools, const ExecLimits& limits) : ns_(ns), tools_(tools), limits_(limits) {}

  ExecOutcome run(const ast::Program& program) {
    try {
      for (const auto& stmt : program.body) {
        if (++statements_ > limits_.max_statements)
          raise(ExecErrorKind::LimitExceeded,
                fmt::format("statement limit of {} exceeded", limits_.max_statements));
        exec(stmt);
        if (outcome_.final_answer) break;
      }
    } catch (const Raise& r) {
      outcome_.error = r.error;
    }
    return std::move(outcome_);
  }

 private:
  void write(std::string_view text) {
    auto& out = outcome_.stdout_text;
    if (truncated_) return;
    if (out.size() + text.size() <= limits_.max_stdout) {
      out += text;
      return;
    }
    out.append(text.substr(0, limits_.max_stdout - out.size()));
    out += "...[truncated]";
    truncated_ = true;
    raise(ExecErrorKind::LimitExceeded, fmt::format("output exceeded {} characters", limits_.max_stdout));
  }

  void exec(const ast::Stmt& stmt) {
    std::visit([&](const auto& node) { exec_node(node); }, stmt.node);
  }

  void exec_node(const ast::Import& imp) {
    for (const auto& mod : imp.modules) {
      if (!limits_.allowed_imports.count(mod)) {
        std::string allowed;
        for (const auto& m : limits_.allowed_imports) allowed += (allowed.empty() ? "'" : ", '") + m + "'";
        raise(ExecErrorKind::ImportError,
              fmt::format("Import of {} is not allowed. Authorized imports are: [{}]", mod, allowed));
      }
      if (!is_implemented_module(mod))
        raise(ExecErrorKind::ImportError, fmt::format("module '{}' is not available in this executor", mod));
      if (tools_.has_tool(mod))
        raise(ExecErrorKind::ToolError, fmt::format("cannot bind '{}': it is the name of a tool", mod));
      ns_.bindings.erase(mod);
      ns_.imported_modules.insert(mod);
    }
  }

  void exec_node(const ast::Assign& assign) {
    for (const auto& target : assign.targets)
      if (tools_.has_tool(target))
        raise(ExecErrorKind::ToolError,
              fmt::format("cannot assign to '{}': it is the name of a tool; choose another variable name", target));

    if (assign.targets.size() == 1) {
      if (std::holds_alternative<ast::TupleExpr>(assign.value->node))
        type_error("tuple values are not supported; assign each name separately");
      bind(assign.targets[0], eval(*assign.value));
      return;
    }
    std::vector<Value> values;
    if (const auto* tuple = std::get_if<ast::TupleExpr>(&assign.value->node)) {
      for (const auto& item : tuple->items) values.push_back(eval(*item));
    } else {
      Value v = eval(*assign.value);
      if (!v.is_list()) type_error(fmt::format("cannot unpack non-iterable {} object", v.type_name()));
      values = v.as_list();
    }
    if (values.size() != assign.targets.size()) {
      if (values.size() > assign.targets.size())
        type_error(fmt::format("ValueError: too many values to unpack (expected {})", assign.targets.size()));
      type_error(fmt::format("ValueError: not enough values to unpack (expected {}, got {})", assign.targets.size(),
                             values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) bind(assign.targets[i], std::move(values[i]));
  }

  void exec_node(const ast::ExprStmt& stmt) {
    Value v = eval(*stmt.expr);
    if (!v.is_none()) {
      write(render_value(v));
      write("\n");
    }
  }

  void bind(const std::string& name, Value v) {
    ns_.imported_modules.erase(name);
    ns_.bindings[name] = std::move(v);
  }

  void check_list(std::size_t n) const {
    if (n > limits_.max_list_length)
      raise(ExecErrorKind::LimitExceeded, fmt::format("list length exceeds {}", limits_.max_list_length));
  }
  void check_string(std::size_t n) const {
    if (n > limits_.max_string_length)
      raise(ExecErrorKind::LimitExceeded, fmt::format("string length exceeds {}", limits_.max_string_length));
  }

  Value eval(const ast::Expr& e) {
    return std::visit([&](const auto& node) { return eval_node(node); }, e.node);
  }

  Value eval_node(const ast::IntLiteral& n) { return n.value; }
  Value eval_node(const ast::FloatLiteral& n) { return n.value; }
  Value eval_node(const ast::BoolLiteral& n) { return n.value; }
  Value eval_node(const ast::NoneLiteral&) { return NoneType{}; }

  Value eval_node(const ast::StringLiteral& lit) {
    std::string out;
    for (const auto& part : lit.parts) {
      if (const auto* text = std::get_if<std::string>(&part)) {
        out += *text;
        continue;
      }
      const auto& field = std::get<ast::FormatField>(part);
      Value v = eval(*field.expr);
      if (field.fixed_precision) {
        if (!v.is_number())
          type_error(fmt::format("ValueError: Unknown format code 'f' for object of type '{}'", v.type_name()));
        double d = to_f64(v);
        if (std::isnan(d)) {
          out += "nan";
        } else if (std::isinf(d)) {
          out += d > 0 ? "inf" : "-inf";
        } else {
          out += fmt::format("{:.{}f}", d, *field.fixed_precision);
        }
      } else {
        out += render_value(v);
      }
      check_string(out.size());
    }
    return out;
  }

  Value eval_node(const ast::ListLiteral& lit) {
    check_list(lit.items.size());
    List items;
    items.reserve(lit.items.size());
    for (const auto& item : lit.items) items.push_back(eval(*item));
    return items;
  }

  Value eval_node(const ast::TupleExpr&) { type_error("tuple values are not supported"); }

  Value eval_node(const ast::Name& name) {
    if (auto it = ns_.bindings.find(name.id); it != ns_.bindings.end()) return it->second;
    if (ns_.imported_modules.count(name.id))
      type_error(fmt::format("module '{}' cannot be used as a value", name.id));
    if (tools_.has_tool(name.id) || is_builtin(name.id))
      type_error(fmt::format("function '{}' cannot be used as a value; call it instead", name.id));
    raise(ExecErrorKind::NameError, fmt::format("name '{}' is not defined", name.id));
  }

  void require_module(const std::string& module) {
    if (!ns_.imported_modules.count(module)) {
      if (ns_.bindings.count(module))
        type_error(fmt::format("'{}' object has no attribute access in this executor",
                               ns_.bindings.at(module).type_name()));
      raise(ExecErrorKind::NameError, fmt::format("name '{}' is not defined", module));
    }
  }

  Value eval_node(const ast::ModuleAttr& attr) {
    require_module(attr.module);
    if (attr.module == "math" && attr.attr == "pi") return 3.141592653589793;
    if ((attr.module == "math" && (attr.attr == "sqrt" || attr.attr == "floor" || attr.attr == "ceil")) ||
        (attr.module == "statistics" && (attr.attr == "mean" || attr.attr == "pstdev" || attr.attr == "stdev")))
      type_error(fmt::format("function '{}.{}' cannot be used as a value; call it instead", attr.module, attr.attr));
    raise(ExecErrorKind::NameError,
          fmt::format("AttributeError: module '{}' has no attribute '{}'", attr.module, attr.attr));
  }

  Value eval_node(const ast::Unary& u) {
    Value v = eval(*u.operand);
    if (!v.is_number()) type_error(fmt::format("bad operand type for unary {}: '{}'",
                                               u.op == ast::UnaryOp::Neg ? "-" : "+", v.type_name()));
    if (u.op == ast::UnaryOp::Pos) return v.is_bool() ? Value(to_i64(v)) : v;
    if (v.is_float()) return -v.as_float();
    return checked_sub(0, to_i64(v));
  }

  Value eval_node(const ast::Binary& b) {
    Value lhs = eval(*b.lhs);
    Value rhs = eval(*b.rhs);
    return binary(b.op, lhs, rhs);
  }

  static const char* op_symbol(ast::BinOp op) {
    switch (op) {
      case ast::BinOp::Add: return "+";
      case ast::BinOp::Sub: return "-";
      case ast::BinOp::Mul: return "*";
      case ast::BinOp::Div: return "/";
      case ast::BinOp::FloorDiv: return "//";
      case ast::BinOp::Mod: return "%";
      case ast::BinOp::Pow: return "**";
    }
    return "?";
  }

  [[noreturn]] static void unsupported(ast::BinOp op, const Value& a, const Value& b) {
    type_error(fmt::format("unsupported operand type(s) for {}: '{}' and '{}'", op_symbol(op), a.type_name(),
                           b.type_name()));
  }

  Value repeat(const Value& seq, std::int64_t times) {
    if (times < 0) times = 0;
    if (seq.is_str()) {
      const auto& s = seq.as_str();
      if (!s.empty() && static_cast<std::uint64_t>(times) > limits_.max_string_length / s.size())
        check_string(limits_.max_string_length + 1);
      std::string out;
      for (std::int64_t i = 0; i < times; ++i) out += s;
      return out;
    }
    const auto& l = seq.as_list();
    if (!l.empty() && static_cast<std::uint64_t>(times) > limits_.max_list_length / l.size())
      check_list(limits_.max_list_length + 1);
    List out;
    for (std::int64_t i = 0; i < times; ++i) out.insert(out.end(), l.begin(), l.end());
    return out;
  }

  Value binary(ast::BinOp op, const Value& a, const Value& b) {
    using ast::BinOp;
    if (op == BinOp::Add) {
      if (a.is_str() && b.is_str()) {
        check_string(a.as_str().size() + b.as_str().size());
        return a.as_str() + b.as_str();
      }
      if (a.is_list() && b.is_list()) {
        check_list(a.as_list().size() + b.as_list().size());
        List out = a.as_list();
        out.insert(out.end(), b.as_list().begin(), b.as_list().end());
        return out;
      }
    }
    if (op == BinOp::Mul) {
      if ((a.is_str() || a.is_list()) && numeric_int(b)) return repeat(a, to_i64(b));
      if (numeric_int(a) && (b.is_str() || b.is_list())) return repeat(b, to_i64(a));
    }
    if (!a.is_number() || !b.is_number()) unsupported(op, a, b);

    if (numeric_int(a) && numeric_int(b)) {
      std::int64_t x = to_i64(a), y = to_i64(b);
      switch (op) {
        case BinOp::Add: return checked_add(x, y);
        case BinOp::Sub: return checked_sub(x, y);
        case BinOp::Mul: return checked_mul(x, y);
        case BinOp::Div:
          if (y == 0) type_error("ZeroDivisionError: division by zero");
          return int_true_div(x, y);
        case BinOp::FloorDiv:
        case BinOp::Mod: {
          if (y == 0)
            type_error(op == BinOp::Mod ? "ZeroDivisionError: integer modulo by zero"
                                        : "ZeroDivisionError: integer division or modulo by zero");
          if (x == std::numeric_limits<std::int64_t>::min() && y == -1) {
            if (op == BinOp::Mod) return std::int64_t{0};
            overflow();
          }
          std::int64_t q = x / y, r = x % y;
          if (r != 0 && ((r < 0) != (y < 0))) {
            q -= 1;
            r += y;
          }
          return op == BinOp::FloorDiv ? q : r;
        }
        case BinOp::Pow:
          if (y < 0) {
            if (x == 0) type_error("ZeroDivisionError: 0.0 cannot be raised to a negative power");
            return std::pow(static_cast<double>(x), static_cast<double>(y));
          }
          return ipow(x, y);
      }
    }

    double x = to_f64(a), y = to_f64(b);
    switch (op) {
      case BinOp::Add: return x + y;
      case BinOp::Sub: return x - y;
      case BinOp::Mul: return x * y;
      case BinOp::Div:
        if (y == 0.0) type_error("ZeroDivisionError: float division by zero");
        return x / y;
      case BinOp::FloorDiv:
        if (y == 0.0) type_error("ZeroDivisionError: float floor division by zero");
        return float_divmod(x, y).first;
      case BinOp::Mod:
        if (y == 0.0) type_error("ZeroDivisionError: float modulo");
        return float_divmod(x, y).second;
      case BinOp::Pow: {
        if (x == 0.0 && y < 0.0) type_error("ZeroDivisionError: 0.0 cannot be raised to a negative power");
        if (x < 0.0 && std::isfinite(y) && std::floor(y) != y)
          type_error("complex results are not supported");
        double r = std::pow(x, y);
        if (std::isinf(r) && std::isfinite(x) && std::isfinite(y))
          type_error("OverflowError: (34, 'Numerical result out of range')");
        return r;
      }
    }
    unsupported(op, a, b);
  }

  Value eval_node(const ast::Compare& cmp) {
    Value lhs = eval(*cmp.first);
    bool result = true;
    for (const auto& [op, expr] : cmp.rest) {
      Value rhs = eval(*expr);
      bool ok;
      if (op == ast::CmpOp::Eq) {
        ok = values_equal(lhs, rhs);
      } else if (op == ast::CmpOp::Ne) {
        ok = !values_equal(lhs, rhs);
      } else {
        auto c = compare_values(lhs, rhs);
        static const char* const kSym[] = {"==", "!=", "<", "<=", ">", ">="};
        if (!c)
          type_error(fmt::format("'{}' not supported between instances of '{}' and '{}'",
                                 kSym[static_cast<int>(op)], lhs.type_name(), rhs.type_name()));
        if (*c == 2) {
          ok = false;
        } else {
          switch (op) {
            case ast::CmpOp::Lt: ok = *c < 0; break;
            case ast::CmpOp::Le: ok = *c <= 0; break;
            case ast::CmpOp::Gt: ok = *c > 0; break;
            default: ok = *c >= 0; break;
          }
        }
      }
      if (!ok) {
        result = false;
        break;
      }
      lhs = std::move(rhs);
    }
    return result;
  }

  Value eval_node(const ast::Call& call) {
    std::vector<Value> args;
    Kwargs kwargs;
    if (const auto* attr = std::get_if<ast::ModuleAttr>(&call.callee->node)) {
      require_module(attr->module);
      for (const auto& a : call.args) args.push_back(eval(*a));
      for (const auto& kw : call.kwargs) kwargs.emplace_back(kw.name, eval(*kw.value));
      return call_module(attr->module, attr->attr, args, kwargs);
    }
    const std::string& name = std::get<ast::Name>(call.callee->node).id;
    bool tool = tools_.has_tool(name);
    if (!tool) {
      if (auto it = ns_.bindings.find(name); it != ns_.bindings.end())
        type_error(fmt::format("'{}' object is not callable", it->second.type_name()));
      if (ns_.imported_modules.count(name)) type_error("'module' object is not callable");
    }
    for (const auto& a : call.args) args.push_back(eval(*a));
    for (const auto& kw : call.kwargs) kwargs.emplace_back(kw.name, eval(*kw.value));
    if (!tool && is_builtin(name)) return call_builtin(name, args, kwargs);
    return call_tool(name, args, kwargs);
  }

  Value call_tool(const std::string& name, const std::vector<Value>& args, const Kwargs& kwargs) {
    if (!args.empty() && tools_.has_tool(name))
      raise(ExecErrorKind::ArityError,
            fmt::format("tool '{}' takes keyword arguments only, e.g. {}(query=...)", name, name));
    outcome_.tool_calls.push_back({name, kwargs});
    ToolResult result = tools_.invoke(name, kwargs);
    if (auto* err = std::get_if<ExecError>(&result.result)) throw Raise{*err};
    if (result.final_value) outcome_.final_answer = std::move(result.final_value);
    return std::get<std::string>(std::move(result.result));
  }

  static void arity(std::string_view fn, std::size_t got, std::size_t lo, std::size_t hi) {
    if (got < lo || got > hi) {
      if (lo == hi)
        raise(ExecErrorKind::ArityError, fmt::format("{}() takes exactly {} argument(s) ({} given)", fn, lo, got));
      raise(ExecErrorKind::ArityError,
            fmt::format("{}() takes from {} to {} arguments ({} given)", fn, lo, hi, got));
    }
  }

  static void no_kwargs(std::string_view fn, const Kwargs& kwargs) {
    if (!kwargs.empty())
      raise(ExecErrorKind::ArityError,
            fmt::format("{}() got an unexpected keyword argument '{}'", fn, kwargs.front().first));
  }

  static const Value* kwarg(const Kwargs& kwargs, std::string_view name) {
    for (const auto& [k, v] : kwargs)
      if (k == name) return &v;
    return nullptr;
  }

  static std::vector<exact::Rational> exact_data(std::string_view fn, const Value& data, bool& all_int) {
    if (!data.is_list()) type_error(fmt::format("{}() expects a list of numbers", fn));
    std::vector<exact::Rational> out;
    all_int = true;
    for (const auto& v : data.as_list()) {
      if (!v.is_number()) type_error(fmt::format("can't convert type '{}' to numerator/denominator", v.type_name()));
      if (v.is_float()) {
        all_int = false;
        if (!std::isfinite(v.as_float())) type_error("StatisticsError: non-finite data is not supported");
        out.push_back(exact::from_double(v.as_float()));
      } else {
        out.emplace_back(exact::Int(to_i64(v)));
      }
    }
    return out;
  }

  Value call_module(const std::string& module, const std::string& fn, const std::vector<Value>& args,
                    const Kwargs& kwargs) {
    std::string full = module + "." + fn;
    if (module == "math") {
      if (fn == "sqrt" || fn == "floor" || fn == "ceil") {
        no_kwargs(full, kwargs);
        arity(full, args.size(), 1, 1);
        const Value& x = args[0];
        if (!x.is_number()) type_error(fmt::format("must be real number, not {}", x.type_name()));
        if (fn == "sqrt") {
          double d = to_f64(x);
          if (d < 0) type_error("ValueError: math domain error");
          return std::sqrt(d);
        }
        if (numeric_int(x)) return to_i64(x);
        double d = fn == "floor" ? std::floor(x.as_float()) : std::ceil(x.as_float());
        if (std::isnan(d)) type_error("ValueError: cannot convert float NaN to integer");
        if (std::isinf(d)) type_error("OverflowError: cannot convert float infinity to integer");
        if (d >= 9.2233720368547758e18 || d < -9.2233720368547758e18) overflow();
        return static_cast<std::int64_t>(d);
      }
    } else if (module == "statistics") {
      if (fn == "mean" || fn == "pstdev" || fn == "stdev") {
        no_kwargs(full, kwargs);
        arity(full, args.size(), 1, 1);
        bool all_int = true;
        auto data = exact_data(full, args[0], all_int);
        std::size_t need = fn == "stdev" ? 2 : 1;
        if (data.size() < need)
          type_error(fmt::format("StatisticsError: {} requires at least {} data point{}", fn,
                                 need == 1 ? "one" : "two", need == 1 ? "" : "s"));
        if (fn == "mean") {
          exact::Rational mu = exact::mean(data);
          if (all_int && boost::multiprecision::denominator(mu) == 1) {
            exact::Int whole = boost::multiprecision::numerator(mu);
            return whole.convert_to<std::int64_t>();
          }
          return exact::to_double(mu);
        }
        exact::Rational ss = exact::sum_sq_dev(data);
        long denom = static_cast<long>(data.size()) - (fn == "stdev" ? 1 : 0);
        return exact::sqrt_to_double(ss / denom);
      }
    }
    raise(ExecErrorKind::NameError, fmt::format("AttributeError: module '{}' has no attribute '{}'", module, fn));
  }

  Value call_builtin(const std::string& name, const std::vector<Value>& args, const Kwargs& kwargs) {
    if (name == "print") {
      std::string sep = " ", end = "\n";
      for (const auto& [k, v] : kwargs) {
        if (k == "sep" || k == "end") {
          if (!v.is_str() && !v.is_none())
            type_error(fmt::format("{} must be None or a string, not {}", k, v.type_name()));
          if (v.is_str()) (k == "sep" ? sep : end) = v.as_str();
        } else if (k != "flush") {
          raise(ExecErrorKind::ArityError, fmt::format("print() got an unexpected keyword argument '{}'", k));
        }
      }
      std::string line;
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) line += sep;
        line += render_value(args[i]);
      }
      line += end;
      write(line);
      return NoneType{};
    }
    if (name == "round") {
      std::vector<Value> a = args;
      for (const auto& [k, v] : kwargs) {
        if (k != "ndigits" && k != "number")
          raise(ExecErrorKind::ArityError, fmt::format("round() got an unexpected keyword argument '{}'", k));
      }
      if (const Value* n = kwarg(kwargs, "number")) a.insert(a.begin(), *n);
      if (const Value* nd = kwarg(kwargs, "ndigits")) a.push_back(*nd);
      arity("round", a.size(), 1, 2);
      const Value& x = a[0];
      if (!x.is_number()) type_error(fmt::format("type {} doesn't define __round__ method", x.type_name()));
      if (a.size() == 1 || a[1].is_none()) {
        if (numeric_int(x)) return to_i64(x);
        double d = x.as_float();
        if (std::isnan(d)) type_error("ValueError: cannot convert float NaN to integer");
        if (std::isinf(d)) type_error("OverflowError: cannot convert float infinity to integer");
        exact::Int r = exact::round_half_even(exact::from_double(d));
        if (r > std::numeric_limits<std::int64_t>::max() || r < std::numeric_limits<std::int64_t>::min())
          overflow();
        return r.convert_to<std::int64_t>();
      }
      if (!numeric_int(a[1]))
        type_error(fmt::format("'{}' object cannot be interpreted as an integer", a[1].type_name()));
      std::int64_t nd = to_i64(a[1]);
      if (numeric_int(x)) {
        std::int64_t v = to_i64(x);
        if (nd >= 0) return v;
        if (nd < -18) return std::int64_t{0};
        std::int64_t scale = ipow(10, -nd);
        exact::Int r = exact::round_half_even(exact::Rational(exact::Int(v), exact::Int(scale))) * scale;
        if (r > std::numeric_limits<std::int64_t>::max() || r < std::numeric_limits<std::int64_t>::min())
          overflow();
        return r.convert_to<std::int64_t>();
      }
      return round_float(x.as_float(), nd);
    }
    if (name == "abs") {
      no_kwargs(name, kwargs);
      arity(name, args.size(), 1, 1);
      const Value& x = args[0];
      if (x.is_float()) return std::fabs(x.as_float());
      if (numeric_int(x)) {
        std::int64_t v = to_i64(x);
        return v < 0 ? checked_sub(0, v) : v;
      }
      type_error(fmt::format("bad operand type for abs(): '{}'", x.type_name()));
    }
    if (name == "min" || name == "max") {
      no_kwargs(name, kwargs);
      if (args.empty()) raise(ExecErrorKind::ArityError, fmt::format("{} expected at least 1 argument, got 0", name));
      const List* items;
      List holder;
      if (args.size() == 1) {
        if (!args[0].is_list()) type_error(fmt::format("'{}' object is not iterable", args[0].type_name()));
        items = &args[0].as_list();
      } else {
        holder = List(args.begin(), args.end());
        items = &holder;
      }
      if (items->empty()) type_error(fmt::format("ValueError: {}() arg is an empty sequence", name));
      const Value* best = &(*items)[0];
      for (std::size_t i = 1; i < items->size(); ++i) {
        auto c = compare_values((*items)[i], *best);
        if (!c)
          type_error(fmt::format("'{}' not supported between instances of '{}' and '{}'", name == "min" ? "<" : ">",
                                 (*items)[i].type_name(), best->type_name()));
        if ((name == "min" && *c == -1) || (name == "max" && *c == 1)) best = &(*items)[i];
      }
      return *best;
    }
    if (name == "sum") {
      for (const auto& [k, v] : kwargs)
        if (k != "start") raise(ExecErrorKind::ArityError, fmt::format("sum() got an unexpected keyword argument '{}'", k));
      std::vector<Value> a = args;
      if (const Value* s = kwarg(kwargs, "start")) a.push_back(*s);
      arity(name, a.size(), 1, 2);
      if (!a[0].is_list()) type_error(fmt::format("'{}' object is not iterable", a[0].type_name()));
      Value total = a.size() == 2 ? a[1] : Value(std::int64_t{0});
      if (total.is_str()) type_error("sum() can't sum strings [use ''.join(seq) instead]");
      for (const auto& item : a[0].as_list()) total = binary(ast::BinOp::Add, total, item);
      return total;
    }
    if (name == "len") {
      no_kwargs(name, kwargs);
      arity(name, args.size(), 1, 1);
      if (args[0].is_str()) return static_cast<std::int64_t>(utf8_length(args[0].as_str()));
      if (args[0].is_list()) return static_cast<std::int64_t>(args[0].as_list().size());
      type_error(fmt::format("object of type '{}' has no len()", args[0].type_name()));
    }
    if (name == "int") {
      no_kwargs(name, kwargs);
      arity(name, args.size(), 0, 1);
      if (args.empty()) return std::int64_t{0};
      const Value& x = args[0];
      if (numeric_int(x)) return to_i64(x);
      if (x.is_float()) {
        double d = x.as_float();
        if (std::isnan(d)) type_error("ValueError: cannot convert float NaN to integer");
        if (std::isinf(d)) type_error("OverflowError: cannot convert float infinity to integer");
        double t = std::trunc(d);
        if (t >= 9.2233720368547758e18 || t < -9.2233720368547758e18) overflow();
        return static_cast<std::int64_t>(t);
      }
      if (x.is_str()) {
        if (auto v = parse_int_literal(x.as_str())) return *v;
        type_error(fmt::format("ValueError: invalid literal for int() with base 10: {}", quote_string(x.as_str())));
      }
      type_error(fmt::format("int() argument must be a string or a real number, not '{}'", x.type_name()));
    }
    if (name == "float") {
      no_kwargs(name, kwargs);
      arity(name, args.size(), 0, 1);
      if (args.empty()) return 0.0;
      const Value& x = args[0];
      if (x.is_number()) return to_f64(x);
      if (x.is_str()) {
        if (auto v = parse_float_literal(x.as_str())) return *v;
        type_error(fmt::format("ValueError: could not convert string to float: {}", quote_string(x.as_str())));
      }
      type_error(fmt::format("float() argument must be a string or a real number, not '{}'", x.type_name()));
    }
    // str
    no_kwargs(name, kwargs);
    arity(name, args.size(), 0, 1);
    if (args.empty()) return std::string();
    return render_value(args[0]);
  }

  Namespace& ns_;
  ToolHost& tools_;
  const ExecLimits& limits_;
  ExecOutcome outcome_;
  std::size_t statements_ = 0;
  bool truncated_ = false;
};

}  // namespace

ExecOutcome execute(const ast::Program& program, Namespace& ns, ToolHost& tools, const ExecLimits& limits) {
  return Executor(ns, tools, limits).run(program);
}

RunResult run_code(std::string_view code, Namespace& ns, ToolHost& tools, const ExecLimits& limits) {
  RunResult result;
  auto parsed = parse_program(code);
  if (auto* err = std::get_if<SyntaxError>(&parsed)) {
    result.syntax_error = *err;
    return result;
  }
  result.outcome = execute(std::get<ast::Program>(parsed), ns, tools, limits);
  return result;
}

}  // namespace toolr1
