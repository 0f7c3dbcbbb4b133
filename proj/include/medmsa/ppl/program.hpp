#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "medmsa/error.hpp"
#include "medmsa/ppl/ast.hpp"

namespace medmsa::ppl {

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column, std::string expected)
      : Error("SyntaxError", message), line_(line), column_(column), expected_(std::move(expected)) {}
  int line() const { return line_; }
  int column() const { return column_; }
  // What the parser was looking for, e.g. "')'" or "expression".
  const std::string& expected() const { return expected_; }

 private:
  int line_;
  int column_;
  std::string expected_;
};

class UnknownIdentifier : public Error {
 public:
  UnknownIdentifier(const std::string& name, int line, int column);
  const std::string& name() const { return name_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string name_;
  int line_;
  int column_;
};

class UnsupportedConstruct : public Error {
 public:
  UnsupportedConstruct(const std::string& construct, int line, int column);
  const std::string& construct() const { return construct_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string construct_;
  int line_;
  int column_;
};

// A top-level `var name = function(...) {...}` or `var name = mem(function ...)`.
struct NamedFunction {
  std::string name;
  std::vector<std::string> params;
  const ast::FunctionLit* function = nullptr;
  bool memoized = false;
  ast::Span span;
};

// A top-level `condition(expr)` statement of the model body.
struct ConditionStatement {
  const ast::Expr* argument = nullptr;
  ast::Span statement;  // `condition(...)` including a trailing ';'
  ast::Span argument_span;
};

struct Query {
  std::string name;
  const ast::Expr* expr = nullptr;
};

struct Comment {
  ast::Span span;
  std::string text;  // including the `//` or `/* */` markers
};

struct NumericLiteral {
  double value = 0;
  ast::Span span;
};

// Parsed, name-resolved MedPPL program. Immutable; copies share the tree and
// are safe to use from several threads.
class Program {
 public:
  struct Impl;

  const std::string& source() const;
  // True when the source wraps the body in `var model = function() {...}`.
  bool wrapped() const;
  // Name of the wrapping model variable ("model" for bare bodies).
  const std::string& model_name() const;
  // The model body as a zero-parameter function scope.
  const ast::FunctionLit& model() const;
  const std::vector<NamedFunction>& definitions() const;
  const std::vector<ConditionStatement>& conditions() const;
  const std::vector<Query>& queries() const;
  const std::vector<Comment>& comments() const;
  // Every numeric literal inside the model body, in source order.
  const std::vector<NumericLiteral>& numeric_literals() const;
  // True if any gaussian(...) call appears in the model.
  bool has_continuous() const;

  explicit Program(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<const Impl> impl_;
};

// Parses and name-resolves a program. Throws SyntaxError, UnknownIdentifier
// or UnsupportedConstruct.
Program parse(std::string_view source);

// Parses a standalone expression without name resolution (used for
// translation statements and edit payloads). Throws SyntaxError or
// UnsupportedConstruct.
ast::ExprPtr parse_expression(std::string_view text);

// Identifiers referenced by an unresolved expression that are not MedPPL
// primitives, excluding names bound inside it (function parameters, vars).
std::set<std::string> free_identifiers(const ast::Expr& expr);

// Normalized source text; parse(render(p)) is structurally equal to p.
std::string render(const Program& program);
std::string render(const ast::Expr& expr);

bool structurally_equal(const Program& a, const Program& b);

}  // namespace medmsa::ppl
