#include "medmsa/ppl/validate.hpp"

#include <map>
#include <optional>

namespace medmsa::ppl {
namespace {

using namespace ast;

enum class Type { Unknown, Bool, Number, String, List, Record, Function };

const char* type_name(Type t) {
  switch (t) {
    case Type::Bool: return "boolean";
    case Type::Number: return "number";
    case Type::String: return "string";
    case Type::List: return "list";
    case Type::Record: return "record";
    case Type::Function: return "function";
    default: return "unknown";
  }
}

class Checker {
 public:
  std::vector<Diagnostic> run(const FunctionLit& model) {
    function(model);
    return std::move(out_);
  }

 private:
  // Initializers assigned to each slot of a function scope.
  using Inits = std::map<int, std::vector<const Expr*>>;

  void report(const char* code, const std::string& message, const Span& at) {
    out_.push_back(Diagnostic{code, message, at.line, at.column});
  }

  static void collect_inits(const Block& b, Inits& inits) {
    for (const auto& s : b) {
      if (const auto* v = std::get_if<VarDecl>(&s->node)) {
        inits[v->slot].push_back(v->init.get());
      } else if (const auto* i = std::get_if<If>(&s->node)) {
        collect_inits(i->then_block, inits);
        collect_inits(i->else_block, inits);
      }
    }
  }

  void function(const FunctionLit& fn) {
    Inits inits;
    collect_inits(fn.body, inits);
    scopes_.push_back(std::move(inits));
    block(fn.body);
    scopes_.pop_back();
  }

  void block(const Block& b) {
    for (const auto& s : b) {
      if (const auto* v = std::get_if<VarDecl>(&s->node)) {
        expr(*v->init);
      } else if (const auto* x = std::get_if<ExprStmt>(&s->node)) {
        expr(*x->expr);
      } else if (const auto* r = std::get_if<Return>(&s->node)) {
        expr(*r->value);
      } else {
        const auto& i = std::get<If>(s->node);
        expr(*i.test);
        block(i.then_block);
        block(i.else_block);
      }
    }
  }

  // The unique initializer of a local variable, when there is exactly one.
  const Expr* single_init(const Identifier& id) const {
    if (id.ref.kind != Ref::Kind::Local) return nullptr;
    auto depth = static_cast<std::size_t>(id.ref.depth);
    if (depth >= scopes_.size()) return nullptr;
    const Inits& inits = scopes_[scopes_.size() - 1 - depth];
    auto it = inits.find(id.ref.slot);
    if (it == inits.end() || it->second.size() != 1) return nullptr;
    return it->second.front();
  }

  std::optional<std::size_t> static_list_length(const Expr& e) const {
    if (const auto* l = get_if<ListLit>(e)) return l->elements.size();
    if (const auto* id = get_if<Identifier>(e)) {
      if (const Expr* init = single_init(*id)) {
        if (const auto* l = get_if<ListLit>(*init)) return l->elements.size();
      }
    }
    return std::nullopt;
  }

  Type type_of(const Expr& e) const {
    if (get_if<BoolLit>(e) || get_if<Includes>(e)) return Type::Bool;
    if (get_if<NumberLit>(e)) return Type::Number;
    if (get_if<StringLit>(e)) return Type::String;
    if (get_if<ListLit>(e)) return Type::List;
    if (get_if<RecordLit>(e)) return Type::Record;
    if (get_if<FunctionLit>(e)) return Type::Function;
    if (const auto* u = get_if<Unary>(e)) return u->op == UnaryOp::Not ? Type::Bool : Type::Number;
    if (const auto* b = get_if<Binary>(e)) {
      switch (b->op) {
        case BinaryOp::Eq:
        case BinaryOp::Ne:
        case BinaryOp::StrictEq:
        case BinaryOp::StrictNe:
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge: return Type::Bool;
        case BinaryOp::Sub:
        case BinaryOp::Mul:
        case BinaryOp::Div:
        case BinaryOp::Mod: return Type::Number;
        case BinaryOp::Add: {
          Type l = type_of(*b->lhs), r = type_of(*b->rhs);
          if (l == Type::String || r == Type::String) return Type::String;
          return l == Type::Number && r == Type::Number ? Type::Number : Type::Unknown;
        }
        case BinaryOp::And:
        case BinaryOp::Or: {
          Type l = type_of(*b->lhs), r = type_of(*b->rhs);
          return l == r ? l : Type::Unknown;
        }
      }
    }
    if (const auto* c = get_if<Conditional>(e)) {
      Type t = type_of(*c->then_expr);
      return t == type_of(*c->else_expr) ? t : Type::Unknown;
    }
    if (primitive_call(e, Primitive::Flip)) return Type::Bool;
    if (primitive_call(e, Primitive::Gaussian)) return Type::Number;
    if (primitive_call(e, Primitive::Mem)) return Type::Function;
    return Type::Unknown;
  }

  void primitive(Primitive p, const Call& call, const Expr& e) {
    std::size_t expected = p == Primitive::Gaussian ? 2 : 1;
    if (call.args.size() != expected) {
      report("ArityMismatch",
             std::string(primitive_name(p)) + " expects " + std::to_string(expected) + " argument(s), got " +
                 std::to_string(call.args.size()),
             e.span);
      return;
    }
    if (p == Primitive::Categorical) {
      const auto* rec = get_if<RecordLit>(*call.args[0]);
      if (!rec) {
        Type t = type_of(*call.args[0]);
        if (t != Type::Unknown && t != Type::Record)
          report("MissingField", std::string("categorical expects a record {ps, vs}, got a ") + type_name(t), e.span);
        return;
      }
      const Expr* ps = nullptr;
      const Expr* vs = nullptr;
      for (const auto& f : rec->fields) {
        if (f.key == "ps") ps = f.value.get();
        if (f.key == "vs") vs = f.value.get();
      }
      if (!ps || !vs) {
        report("MissingField", std::string("categorical record is missing '") + (!ps ? "ps" : "vs") + "'", e.span);
        return;
      }
      auto np = static_list_length(*ps);
      auto nv = static_list_length(*vs);
      if (np && nv && *np != *nv)
        report("LengthMismatch",
               "categorical ps has " + std::to_string(*np) + " entries but vs has " + std::to_string(*nv), e.span);
    }
    if (p == Primitive::Condition) {
      Type t = type_of(*call.args[0]);
      if (t != Type::Unknown && t != Type::Bool)
        report("ConditionNotBoolean", std::string("condition argument is a ") + type_name(t), call.args[0]->span);
    }
  }

  void expr(const Expr& e) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Identifier>) {
            if (n.ref.kind == Ref::Kind::Unresolved) report("UnresolvedName", "unresolved name '" + n.name + "'", e.span);
          } else if constexpr (std::is_same_v<T, ListLit>) {
            for (const auto& x : n.elements) expr(*x);
          } else if constexpr (std::is_same_v<T, RecordLit>) {
            for (const auto& f : n.fields) expr(*f.value);
          } else if constexpr (std::is_same_v<T, FunctionLit>) {
            function(n);
          } else if constexpr (std::is_same_v<T, Call>) {
            const auto* id = get_if<Identifier>(*n.callee);
            if (id && id->ref.kind == Ref::Kind::Primitive) {
              primitive(id->ref.primitive, n, e);
            } else {
              expr(*n.callee);
            }
            for (const auto& a : n.args) expr(*a);
          } else if constexpr (std::is_same_v<T, Member>) {
            expr(*n.object);
          } else if constexpr (std::is_same_v<T, Includes>) {
            expr(*n.list);
            expr(*n.item);
          } else if constexpr (std::is_same_v<T, Unary>) {
            expr(*n.operand);
          } else if constexpr (std::is_same_v<T, Binary>) {
            expr(*n.lhs);
            expr(*n.rhs);
          } else if constexpr (std::is_same_v<T, Conditional>) {
            expr(*n.test);
            expr(*n.then_expr);
            expr(*n.else_expr);
          }
        },
        e.node);
  }

  std::vector<Inits> scopes_;
  std::vector<Diagnostic> out_;
};

}  // namespace

std::vector<Diagnostic> validate(const Program& program) { return Checker().run(program.model()); }

Diagnostic diagnostic_from(const Error& error) {
  Diagnostic d{error.code(), error.what(), 0, 0};
  if (const auto* s = dynamic_cast<const SyntaxError*>(&error)) {
    d.line = s->line();
    d.column = s->column();
  } else if (const auto* u = dynamic_cast<const UnknownIdentifier*>(&error)) {
    d.line = u->line();
    d.column = u->column();
  } else if (const auto* c = dynamic_cast<const UnsupportedConstruct*>(&error)) {
    d.line = c->line();
    d.column = c->column();
  }
  return d;
}

}  // namespace medmsa::ppl
