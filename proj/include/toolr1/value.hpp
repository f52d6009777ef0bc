// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace toolr1 {

struct NoneType {
  friend bool operator==(NoneType, NoneType) { return true; }
};

struct Value;
using List = std::vector<Value>;

/// Dynamic value of the restricted interpreter. Int is 64-bit signed, Float
/// is an IEEE-754 double, Lists own their elements.
struct Value {
  std::variant<NoneType, bool, std::int64_t, double, std::string, List> data;

  Value() = default;
  Value(NoneType n) : data(n) {}
  Value(bool b) : data(b) {}
  Value(std::int64_t i) : data(i) {}
  Value(int i) : data(static_cast<std::int64_t>(i)) {}
  Value(double d) : data(d) {}
  Value(std::string s) : data(std::move(s)) {}
  Value(const char* s) : data(std::string(s)) {}
  Value(List l) : data(std::move(l)) {}

  bool is_none() const { return std::holds_alternative<NoneType>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
  bool is_float() const { return std::holds_alternative<double>(data); }
  bool is_str() const { return std::holds_alternative<std::string>(data); }
  bool is_list() const { return std::holds_alternative<List>(data); }
  /// Int, Float or Bool (Bool behaves as Int in arithmetic).
  bool is_number() const { return is_int() || is_float() || is_bool(); }

  bool as_bool() const { return std::get<bool>(data); }
  std::int64_t as_int() const { return std::get<std::int64_t>(data); }
  double as_float() const { return std::get<double>(data); }
  const std::string& as_str() const { return std::get<std::string>(data); }
  const List& as_list() const { return std::get<List>(data); }

  const char* type_name() const;

  friend bool operator==(const Value& a, const Value& b) { return a.data == b.data; }
};

/// Shortest round-trip decimal in the interpreter's float notation
/// ("5.0", "1e-05", "1e+16", "inf", "nan").
std::string format_float(double v);

/// Quoted literal form used for strings nested inside rendered lists.
std::string quote_string(std::string_view s);

/// Observation text for a value: Ints in decimal, Floats shortest round-trip,
/// Strs verbatim, Bools as True/False, None as "None", Lists with quoted strings.
std::string render_value(const Value& v);

/// Literal form (strings quoted); used for list elements.
std::string repr_value(const Value& v);

}  // namespace toolr1
