#include <cctype>
#include <sstream>

#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/value.hpp"
#include "program_impl.hpp"

namespace medmsa::ppl {
namespace {

using namespace ast;

constexpr int kConditionalPrec = 1;
constexpr int kUnaryPrec = 8;
constexpr int kPostfixPrec = 9;
constexpr int kPrimaryPrec = 10;

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::Or: return 2;
    case BinaryOp::And: return 3;
    case BinaryOp::Eq:
    case BinaryOp::Ne:
    case BinaryOp::StrictEq:
    case BinaryOp::StrictNe: return 4;
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: return 5;
    case BinaryOp::Add:
    case BinaryOp::Sub: return 6;
    default: return 7;
  }
}

int precedence(const Expr& e) {
  if (const auto* b = get_if<Binary>(e)) return precedence(b->op);
  if (get_if<Conditional>(e)) return kConditionalPrec;
  if (get_if<Unary>(e)) return kUnaryPrec;
  if (get_if<Call>(e) || get_if<Includes>(e) || get_if<Member>(e)) return kPostfixPrec;
  return kPrimaryPrec;
}

bool is_identifier_name(const std::string& s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '$') return false;
  return true;
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    switch (c) {
      case '\'': out += "\\'"; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "'";
}

class Renderer {
 public:
  std::string take() { return out_.str(); }

  void block(const Block& b, int indent) {
    for (const auto& s : b) statement(*s, indent);
  }

  void expr(const Expr& e, int min_prec, int indent) {
    bool parens = precedence(e) < min_prec;
    if (parens) out_ << '(';
    std::visit([&](const auto& n) { node(n, indent); }, e.node);
    if (parens) out_ << ')';
  }

 private:
  void pad(int indent) {
    for (int i = 0; i < indent; ++i) out_ << "  ";
  }

  void statement(const Stmt& s, int indent) {
    pad(indent);
    if (const auto* v = std::get_if<VarDecl>(&s.node)) {
      out_ << "var " << v->name << " = ";
      expr(*v->init, kConditionalPrec, indent);
      out_ << ";\n";
    } else if (const auto* x = std::get_if<ExprStmt>(&s.node)) {
      bool wrap = get_if<RecordLit>(*x->expr) || get_if<FunctionLit>(*x->expr);
      if (wrap) out_ << '(';
      expr(*x->expr, kConditionalPrec, indent);
      if (wrap) out_ << ')';
      out_ << ";\n";
    } else if (const auto* r = std::get_if<Return>(&s.node)) {
      out_ << "return ";
      expr(*r->value, kConditionalPrec, indent);
      out_ << ";\n";
    } else {
      if_chain(std::get<If>(s.node), indent);
      out_ << '\n';
    }
  }

  void if_chain(const If& i, int indent) {
    out_ << "if (";
    expr(*i.test, kConditionalPrec, indent);
    out_ << ") {\n";
    block(i.then_block, indent + 1);
    pad(indent);
    out_ << '}';
    if (!i.has_else) return;
    if (i.else_block.size() == 1) {
      if (const auto* nested = std::get_if<If>(&i.else_block.front()->node)) {
        out_ << " else ";
        if_chain(*nested, indent);
        return;
      }
    }
    out_ << " else {\n";
    block(i.else_block, indent + 1);
    pad(indent);
    out_ << '}';
  }

  void node(const NumberLit& n, int) { out_ << format_number(n.value); }
  void node(const StringLit& n, int) { out_ << quote(n.value); }
  void node(const BoolLit& n, int) { out_ << (n.value ? "true" : "false"); }
  void node(const Identifier& n, int) { out_ << n.name; }

  void node(const ListLit& n, int indent) {
    out_ << '[';
    for (std::size_t i = 0; i < n.elements.size(); ++i) {
      if (i) out_ << ", ";
      expr(*n.elements[i], kConditionalPrec, indent);
    }
    out_ << ']';
  }

  void node(const RecordLit& n, int indent) {
    out_ << '{';
    for (std::size_t i = 0; i < n.fields.size(); ++i) {
      if (i) out_ << ", ";
      const auto& f = n.fields[i];
      out_ << (is_identifier_name(f.key) ? f.key : quote(f.key)) << ": ";
      expr(*f.value, kConditionalPrec, indent);
    }
    out_ << '}';
  }

  void node(const FunctionLit& n, int indent) {
    out_ << "function(";
    for (std::size_t i = 0; i < n.params.size(); ++i) {
      if (i) out_ << ", ";
      out_ << n.params[i];
    }
    out_ << ") {\n";
    block(n.body, indent + 1);
    pad(indent);
    out_ << '}';
  }

  void node(const Call& n, int indent) {
    if (get_if<FunctionLit>(*n.callee)) {
      out_ << '(';
      expr(*n.callee, kConditionalPrec, indent);
      out_ << ')';
    } else {
      expr(*n.callee, kPostfixPrec, indent);
    }
    out_ << '(';
    for (std::size_t i = 0; i < n.args.size(); ++i) {
      if (i) out_ << ", ";
      expr(*n.args[i], kConditionalPrec, indent);
    }
    out_ << ')';
  }

  void node(const Member& n, int indent) {
    expr(*n.object, kPostfixPrec, indent);
    out_ << '.' << n.name;
  }

  void node(const Includes& n, int indent) {
    // A bare number literal before '.' would lex as a decimal point.
    bool wrap = get_if<NumberLit>(*n.list) != nullptr;
    if (wrap) out_ << '(';
    expr(*n.list, kPostfixPrec, indent);
    if (wrap) out_ << ')';
    out_ << ".includes(";
    expr(*n.item, kConditionalPrec, indent);
    out_ << ')';
  }

  void node(const Unary& n, int indent) {
    Renderer inner;
    inner.expr(*n.operand, kUnaryPrec, indent);
    std::string operand = inner.take();
    out_ << unary_symbol(n.op);
    if (n.op != UnaryOp::Not && !operand.empty() && (operand[0] == '-' || operand[0] == '+')) out_ << ' ';
    out_ << operand;
  }

  void node(const Binary& n, int indent) {
    int p = precedence(n.op);
    expr(*n.lhs, p, indent);
    out_ << ' ' << binary_symbol(n.op) << ' ';
    expr(*n.rhs, p + 1, indent);
  }

  void node(const Conditional& n, int indent) {
    expr(*n.test, kConditionalPrec + 1, indent);
    out_ << " ? ";
    expr(*n.then_expr, kConditionalPrec, indent);
    out_ << " : ";
    expr(*n.else_expr, kConditionalPrec, indent);
  }

  std::ostringstream out_;
};

}  // namespace

std::string render(const Program& program) {
  Renderer r;
  if (!program.wrapped()) {
    r.block(program.model().body, 0);
    return r.take();
  }
  std::string head = "var " + program.model_name() + " = function() {\n";
  r.block(program.model().body, 1);
  return head + r.take() + "}\n";
}

std::string render(const ast::Expr& expr) {
  Renderer r;
  r.expr(expr, kConditionalPrec, 0);
  return r.take();
}

}  // namespace medmsa::ppl
