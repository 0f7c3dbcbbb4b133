#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace medmsa::ppl::ast {

// Half-open byte range into the program source plus the 1-based line/column
// of `begin`.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  int line = 1;
  int column = 1;

  std::size_t size() const { return end - begin; }
};

enum class Primitive { Flip, Categorical, Gaussian, Mem, Condition };

const char* primitive_name(Primitive p);

// Lexical address of an identifier: `depth` function scopes outward, then
// `slot` in that scope's frame.
struct Ref {
  enum class Kind { Unresolved, Local, Primitive };
  Kind kind = Kind::Unresolved;
  int depth = 0;
  int slot = 0;
  ast::Primitive primitive = ast::Primitive::Flip;
};

struct Expr;
struct Stmt;
using ExprPtr = std::unique_ptr<Expr>;
using StmtPtr = std::unique_ptr<Stmt>;
using Block = std::vector<StmtPtr>;

enum class UnaryOp { Not, Negate, Plus };
enum class BinaryOp { Or, And, Eq, Ne, StrictEq, StrictNe, Lt, Le, Gt, Ge, Add, Sub, Mul, Div, Mod };

const char* unary_symbol(UnaryOp op);
const char* binary_symbol(BinaryOp op);

struct NumberLit {
  double value = 0;
};
struct StringLit {
  std::string value;
};
struct BoolLit {
  bool value = false;
};
struct Identifier {
  std::string name;
  Ref ref;
};
struct ListLit {
  std::vector<ExprPtr> elements;
};
struct RecordField {
  std::string key;
  ExprPtr value;
};
struct RecordLit {
  std::vector<RecordField> fields;
};
struct FunctionLit {
  std::vector<std::string> params;
  Block body;
  // Filled by name resolution: params first, then hoisted `var` names.
  std::vector<std::string> slot_names;
};
struct Call {
  ExprPtr callee;
  std::vector<ExprPtr> args;
};
// Property access. Only legal inside discarded inference directives
// (`viz.table(...)`); `xs.includes(y)` parses to Includes instead.
struct Member {
  ExprPtr object;
  std::string name;
};
struct Includes {
  ExprPtr list;
  ExprPtr item;
};
struct Unary {
  UnaryOp op;
  ExprPtr operand;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};
struct Conditional {
  ExprPtr test;
  ExprPtr then_expr;
  ExprPtr else_expr;
};

struct Expr {
  Span span;
  std::variant<NumberLit, StringLit, BoolLit, Identifier, ListLit, RecordLit, FunctionLit, Call,
               Member, Includes, Unary, Binary, Conditional>
      node;
};

struct VarDecl {
  std::string name;
  int slot = -1;
  ExprPtr init;
};
struct ExprStmt {
  ExprPtr expr;
};
struct Return {
  ExprPtr value;
};
// `else if` chains are an If as the sole statement of else_block.
struct If {
  ExprPtr test;
  Block then_block;
  Block else_block;
  bool has_else = false;
};

struct Stmt {
  Span span;
  std::variant<VarDecl, ExprStmt, Return, If> node;
};

// Structural equality: ignores spans and resolution results.
bool equal(const Expr& a, const Expr& b);
bool equal(const Block& a, const Block& b);

template <class T>
const T* get_if(const Expr& e) {
  return std::get_if<T>(&e.node);
}

// If `e` is a call to a primitive, returns it.
const Call* primitive_call(const Expr& e, Primitive p);

}  // namespace medmsa::ppl::ast
