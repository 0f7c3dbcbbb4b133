#include "medmsa/ppl/ast.hpp"

namespace medmsa::ppl::ast {

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Flip: return "flip";
    case Primitive::Categorical: return "categorical";
    case Primitive::Gaussian: return "gaussian";
    case Primitive::Mem: return "mem";
    case Primitive::Condition: return "condition";
  }
  return "?";
}

const char* unary_symbol(UnaryOp op) {
  switch (op) {
    case UnaryOp::Not: return "!";
    case UnaryOp::Negate: return "-";
    case UnaryOp::Plus: return "+";
  }
  return "?";
}

const char* binary_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Or: return "||";
    case BinaryOp::And: return "&&";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::StrictEq: return "===";
    case BinaryOp::StrictNe: return "!==";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
  }
  return "?";
}

namespace {

bool equal_ptr(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return equal(*a, *b);
}

bool equal_list(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal_ptr(a[i], b[i])) return false;
  return true;
}

bool equal(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  if (auto* x = std::get_if<VarDecl>(&a.node)) {
    const auto& y = std::get<VarDecl>(b.node);
    return x->name == y.name && equal_ptr(x->init, y.init);
  }
  if (auto* x = std::get_if<ExprStmt>(&a.node)) return equal_ptr(x->expr, std::get<ExprStmt>(b.node).expr);
  if (auto* x = std::get_if<Return>(&a.node)) return equal_ptr(x->value, std::get<Return>(b.node).value);
  const auto& x = std::get<If>(a.node);
  const auto& y = std::get<If>(b.node);
  return equal_ptr(x.test, y.test) && equal(x.then_block, y.then_block) &&
         x.has_else == y.has_else && equal(x.else_block, y.else_block);
}

}  // namespace

bool equal(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(*a[i], *b[i])) return false;
  return true;
}

bool equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, NumberLit>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, StringLit> || std::is_same_v<T, BoolLit>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, Identifier>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, ListLit>) {
          return equal_list(x.elements, y.elements);
        } else if constexpr (std::is_same_v<T, RecordLit>) {
          if (x.fields.size() != y.fields.size()) return false;
          for (std::size_t i = 0; i < x.fields.size(); ++i)
            if (x.fields[i].key != y.fields[i].key || !equal_ptr(x.fields[i].value, y.fields[i].value))
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, FunctionLit>) {
          return x.params == y.params && equal(x.body, y.body);
        } else if constexpr (std::is_same_v<T, Call>) {
          return equal_ptr(x.callee, y.callee) && equal_list(x.args, y.args);
        } else if constexpr (std::is_same_v<T, Member>) {
          return x.name == y.name && equal_ptr(x.object, y.object);
        } else if constexpr (std::is_same_v<T, Includes>) {
          return equal_ptr(x.list, y.list) && equal_ptr(x.item, y.item);
        } else if constexpr (std::is_same_v<T, Unary>) {
          return x.op == y.op && equal_ptr(x.operand, y.operand);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && equal_ptr(x.lhs, y.lhs) && equal_ptr(x.rhs, y.rhs);
        } else {
          return equal_ptr(x.test, y.test) && equal_ptr(x.then_expr, y.then_expr) &&
                 equal_ptr(x.else_expr, y.else_expr);
        }
      },
      a.node);
}

const Call* primitive_call(const Expr& e, Primitive p) {
  const auto* call = get_if<Call>(e);
  if (!call) return nullptr;
  const auto* id = get_if<Identifier>(*call->callee);
  if (!id || id->ref.kind != Ref::Kind::Primitive || id->ref.primitive != p) return nullptr;
  return call;
}

}  // namespace medmsa::ppl::ast
