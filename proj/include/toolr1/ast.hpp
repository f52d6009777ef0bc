// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace toolr1::ast {

struct Location {
  int line = 1;
  int column = 1;
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct IntLiteral { std::int64_t value; };
struct FloatLiteral { double value; };
struct BoolLiteral { bool value; };
struct NoneLiteral {};

/// `{expr}` or `{expr:.Nf}` inside an f-string.
struct FormatField {
  ExprPtr expr;
  std::optional<int> fixed_precision;
};
using StringPart = std::variant<std::string, FormatField>;

/// Plain strings are a single text part; f-strings interleave fields.
struct StringLiteral { std::vector<StringPart> parts; };

struct ListLiteral { std::vector<ExprPtr> items; };
struct TupleExpr { std::vector<ExprPtr> items; };  // assignment right-hand side only
struct Name { std::string id; };
struct ModuleAttr { std::string module; std::string attr; };

enum class UnaryOp { Neg, Pos };
struct Unary { UnaryOp op; ExprPtr operand; };

enum class BinOp { Add, Sub, Mul, Div, FloorDiv, Mod, Pow };
struct Binary { BinOp op; ExprPtr lhs; ExprPtr rhs; };

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
struct Compare {
  ExprPtr first;
  std::vector<std::pair<CmpOp, ExprPtr>> rest;
};

struct Keyword {
  std::string name;
  ExprPtr value;
};

/// Callee is a Name or a ModuleAttr.
struct Call {
  ExprPtr callee;
  std::vector<ExprPtr> args;
  std::vector<Keyword> kwargs;
};

struct Expr {
  Location loc;
  std::variant<IntLiteral, FloatLiteral, BoolLiteral, NoneLiteral, StringLiteral, ListLiteral, TupleExpr,
               Name, ModuleAttr, Unary, Binary, Compare, Call>
      node;
};

struct Assign {
  std::vector<std::string> targets;  // more than one means tuple assignment
  ExprPtr value;
};
struct ExprStmt { ExprPtr expr; };
struct Import { std::vector<std::string> modules; };

struct Stmt {
  Location loc;
  std::variant<Assign, ExprStmt, Import> node;
};

struct Program {
  std::vector<Stmt> body;
};

}  // namespace toolr1::ast
