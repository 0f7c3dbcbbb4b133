#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <optional>

#include "medmsa/ppl/inference.hpp"

namespace medmsa::ppl {

using namespace ast;

namespace {

constexpr int kMaxCallDepth = 1000;

struct Frame {
  std::vector<Value> slots;
  Frame* parent = nullptr;
};

struct Rejection {};

std::string where(const Span& s) { return "line " + std::to_string(s.line) + ": "; }

double number_arg(const Value& v, const char* what, const Span& at) {
  if (!v.is_number()) throw RuntimeError(where(at) + what + " expects a number, got " + v.type_name());
  return v.as_number();
}

Value checked(double d, const Span& at) {
  if (!std::isfinite(d)) throw RuntimeError(where(at) + "arithmetic produced a non-finite number");
  return Value(d);
}

}  // namespace

// Closures point at frames owned by the executing Evaluator's arena; they never
// outlive one execution because query values must be data.
struct Callable {
  const FunctionLit* function = nullptr;
  Frame* env = nullptr;
  // Set for mem(f): the wrapped callable and its per-execution cache.
  Value inner;
  std::shared_ptr<std::map<std::string, Value>> cache;
};

namespace {

class Evaluator {
 public:
  explicit Evaluator(ChoiceSource& choices) : choices_(choices) {}

  Outcome run(const Program& program) {
    Outcome out;
    const FunctionLit& model = program.model();
    Frame* root = new_frame(model, nullptr);
    try {
      Value result;
      exec_block(model.body, root, result);
      const Record& rec = result.as_record();
      for (const auto& [name, value] : rec) {
        if (!value.is_data())
          throw RuntimeError("query '" + name + "' evaluated to a " + value.type_name() + ", not a data value");
      }
      out.status = Outcome::Status::Accepted;
      out.sample = rec;
    } catch (const Rejection&) {
      out.status = Outcome::Status::Rejected;
    }
    out.trace_choices = choices_count_;
    return out;
  }

 private:
  Frame* new_frame(const FunctionLit& fn, Frame* parent) {
    arena_.push_back(std::make_unique<Frame>());
    Frame* f = arena_.back().get();
    f->slots.resize(fn.slot_names.size());
    f->parent = parent;
    return f;
  }

  // Returns true when a `return` executed; its value is stored in `ret`.
  bool exec_block(const Block& block, Frame* frame, Value& ret) {
    for (const auto& s : block) {
      if (const auto* v = std::get_if<VarDecl>(&s->node)) {
        frame->slots[v->slot] = eval(*v->init, frame);
      } else if (const auto* x = std::get_if<ExprStmt>(&s->node)) {
        eval(*x->expr, frame);
      } else if (const auto* r = std::get_if<Return>(&s->node)) {
        ret = eval(*r->value, frame);
        return true;
      } else {
        const auto& i = std::get<If>(s->node);
        const Block& branch = eval(*i.test, frame).truthy() ? i.then_block : i.else_block;
        if (exec_block(branch, frame, ret)) return true;
      }
    }
    return false;
  }

  Value lookup(const Identifier& id, Frame* frame, const Span& at) {
    for (int d = 0; d < id.ref.depth; ++d) frame = frame->parent;
    const Value& v = frame->slots[id.ref.slot];
    if (v.is_undefined()) throw RuntimeError(where(at) + "'" + id.name + "' used before it is defined");
    return v;
  }

  Value eval(const Expr& e, Frame* frame) {
    return std::visit([&](const auto& n) { return eval_node(n, e, frame); }, e.node);
  }

  Value eval_node(const NumberLit& n, const Expr&, Frame*) { return Value(n.value); }
  Value eval_node(const StringLit& n, const Expr&, Frame*) { return Value(n.value); }
  Value eval_node(const BoolLit& n, const Expr&, Frame*) { return Value(n.value); }
  Value eval_node(const Identifier& n, const Expr& e, Frame* frame) { return lookup(n, frame, e.span); }

  Value eval_node(const ListLit& n, const Expr&, Frame* frame) {
    List out;
    out.reserve(n.elements.size());
    for (const auto& x : n.elements) out.push_back(eval(*x, frame));
    return Value(std::move(out));
  }

  Value eval_node(const RecordLit& n, const Expr&, Frame* frame) {
    Record out;
    out.reserve(n.fields.size());
    for (const auto& f : n.fields) out.emplace_back(f.key, eval(*f.value, frame));
    return Value(std::move(out));
  }

  Value eval_node(const FunctionLit& n, const Expr&, Frame* frame) {
    auto c = std::make_shared<Callable>();
    c->function = &n;
    c->env = frame;
    return Value(std::shared_ptr<const Callable>(std::move(c)));
  }

  Value eval_node(const Member& n, const Expr& e, Frame*) {
    throw RuntimeError(where(e.span) + "property access '." + n.name + "' is not supported");
  }

  Value eval_node(const Includes& n, const Expr& e, Frame* frame) {
    Value list = eval(*n.list, frame);
    Value item = eval(*n.item, frame);
    if (list.is_list()) {
      const auto& xs = list.as_list();
      return Value(std::find(xs.begin(), xs.end(), item) != xs.end());
    }
    if (list.is_string() && item.is_string())
      return Value(list.as_string().find(item.as_string()) != std::string::npos);
    throw RuntimeError(where(e.span) + "includes() called on a " + list.type_name());
  }

  Value eval_node(const Unary& n, const Expr& e, Frame* frame) {
    Value v = eval(*n.operand, frame);
    switch (n.op) {
      case UnaryOp::Not: return Value(!v.truthy());
      case UnaryOp::Negate: return Value(-number_arg(v, "unary '-'", e.span));
      case UnaryOp::Plus: return Value(number_arg(v, "unary '+'", e.span));
    }
    return {};
  }

  Value eval_node(const Binary& n, const Expr& e, Frame* frame) {
    if (n.op == BinaryOp::Or) {
      Value l = eval(*n.lhs, frame);
      return l.truthy() ? l : eval(*n.rhs, frame);
    }
    if (n.op == BinaryOp::And) {
      Value l = eval(*n.lhs, frame);
      return l.truthy() ? eval(*n.rhs, frame) : l;
    }
    Value l = eval(*n.lhs, frame);
    Value r = eval(*n.rhs, frame);
    switch (n.op) {
      case BinaryOp::Eq: return Value(loose_equal(l, r));
      case BinaryOp::Ne: return Value(!loose_equal(l, r));
      case BinaryOp::StrictEq: return Value(l == r);
      case BinaryOp::StrictNe: return Value(!(l == r));
      case BinaryOp::Lt:
      case BinaryOp::Le:
      case BinaryOp::Gt:
      case BinaryOp::Ge: return compare(n.op, l, r, e.span);
      case BinaryOp::Add:
        if (l.is_string() || r.is_string()) {
          if (!l.is_data() || !r.is_data()) break;
          return Value(canonical_string(l) + canonical_string(r));
        }
        return checked(number_arg(l, "'+'", e.span) + number_arg(r, "'+'", e.span), e.span);
      case BinaryOp::Sub: return checked(number_arg(l, "'-'", e.span) - number_arg(r, "'-'", e.span), e.span);
      case BinaryOp::Mul: return checked(number_arg(l, "'*'", e.span) * number_arg(r, "'*'", e.span), e.span);
      case BinaryOp::Div: return checked(number_arg(l, "'/'", e.span) / number_arg(r, "'/'", e.span), e.span);
      case BinaryOp::Mod:
        return checked(std::fmod(number_arg(l, "'%'", e.span), number_arg(r, "'%'", e.span)), e.span);
      default: break;
    }
    throw RuntimeError(where(e.span) + "invalid operands to '" + binary_symbol(n.op) + "'");
  }

  // JavaScript `==` for mixed primitive types: booleans and numeric strings
  // compare as numbers. Lists and records compare structurally (not by
  // reference, unlike JavaScript).
  static std::optional<double> loose_number(const Value& v) {
    if (v.is_number()) return v.as_number();
    if (v.is_bool()) return v.as_bool() ? 1.0 : 0.0;
    if (v.is_string()) {
      const std::string& s = v.as_string();
      auto first = s.find_first_not_of(" \t\n");
      if (first == std::string::npos) return 0.0;
      auto last = s.find_last_not_of(" \t\n");
      double d = 0;
      auto [ptr, ec] = std::from_chars(s.data() + first, s.data() + last + 1, d);
      if (ec == std::errc() && ptr == s.data() + last + 1) return d;
    }
    return std::nullopt;
  }

  static bool loose_equal(const Value& l, const Value& r) {
    if (l == r) return true;
    bool mixed = (l.is_number() || l.is_bool() || l.is_string()) && (r.is_number() || r.is_bool() || r.is_string()) &&
                 !(l.is_string() && r.is_string());
    if (!mixed) return false;
    auto a = loose_number(l), b = loose_number(r);
    return a && b && *a == *b;
  }

  static Value compare(BinaryOp op, const Value& l, const Value& r, const Span& at) {
    int c;
    if (l.is_number() && r.is_number()) {
      c = l.as_number() < r.as_number() ? -1 : (l.as_number() > r.as_number() ? 1 : 0);
    } else if (l.is_string() && r.is_string()) {
      c = l.as_string().compare(r.as_string());
    } else {
      throw RuntimeError(where(at) + "cannot compare " + l.type_name() + " with " + r.type_name());
    }
    switch (op) {
      case BinaryOp::Lt: return Value(c < 0);
      case BinaryOp::Le: return Value(c <= 0);
      case BinaryOp::Gt: return Value(c > 0);
      default: return Value(c >= 0);
    }
  }

  Value eval_node(const Conditional& n, const Expr&, Frame* frame) {
    return eval(*n.test, frame).truthy() ? eval(*n.then_expr, frame) : eval(*n.else_expr, frame);
  }

  Value eval_node(const Call& n, const Expr& e, Frame* frame) {
    if (const auto* id = get_if<Identifier>(*n.callee); id && id->ref.kind == Ref::Kind::Primitive)
      return primitive(id->ref.primitive, n, e, frame);
    Value f = eval(*n.callee, frame);
    if (!f.is_callable()) throw RuntimeError(where(e.span) + "attempt to call a " + std::string(f.type_name()));
    std::vector<Value> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) args.push_back(eval(*a, frame));
    return call(f, std::move(args), e.span);
  }

  Value call(const Value& f, std::vector<Value> args, const Span& at) {
    const Callable& c = *f.as_callable();
    if (c.cache) {
      std::string key;
      for (const auto& a : args) key += cache_key(a) + ";";
      auto it = c.cache->find(key);
      if (it != c.cache->end()) return it->second;
      Value v = call(c.inner, std::move(args), at);
      c.cache->emplace(std::move(key), v);
      return v;
    }
    if (++depth_ > kMaxCallDepth) throw RuntimeError(where(at) + "maximum call depth exceeded");
    Frame* callee = new_frame(*c.function, c.env);
    for (std::size_t i = 0; i < c.function->params.size() && i < args.size(); ++i) callee->slots[i] = std::move(args[i]);
    Value ret;
    exec_block(c.function->body, callee, ret);
    --depth_;
    return ret;
  }

  Value primitive(Primitive p, const Call& call_node, const Expr& e, Frame* frame) {
    const auto& args = call_node.args;
    auto arity = [&](std::size_t n) {
      if (args.size() != n)
        throw RuntimeError(where(e.span) + primitive_name(p) + " expects " + std::to_string(n) + " argument(s)");
    };
    switch (p) {
      case Primitive::Flip: {
        arity(1);
        double prob = number_arg(eval(*args[0], frame), "flip", e.span);
        if (!(prob >= 0.0 && prob <= 1.0))
          throw RuntimeError(where(e.span) + "flip probability " + format_number(prob) + " outside [0, 1]");
        ++choices_count_;
        return Value(choices_.flip(prob));
      }
      case Primitive::Gaussian: {
        arity(2);
        double mu = number_arg(eval(*args[0], frame), "gaussian", e.span);
        double sigma = number_arg(eval(*args[1], frame), "gaussian", e.span);
        if (!(sigma > 0.0)) throw RuntimeError(where(e.span) + "gaussian sigma must be positive");
        ++choices_count_;
        return checked(choices_.gaussian(mu, sigma), e.span);
      }
      case Primitive::Categorical: {
        arity(1);
        Value spec = eval(*args[0], frame);
        if (!spec.is_record()) throw RuntimeError(where(e.span) + "categorical expects {ps: [...], vs: [...]}");
        const Value* ps = nullptr;
        const Value* vs = nullptr;
        for (const auto& [k, v] : spec.as_record()) {
          if (k == "ps") ps = &v;
          if (k == "vs") vs = &v;
        }
        if (!ps || !vs || !ps->is_list() || !vs->is_list())
          throw RuntimeError(where(e.span) + "categorical expects list fields 'ps' and 'vs'");
        const auto& weights = ps->as_list();
        const auto& values = vs->as_list();
        if (weights.size() != values.size())
          throw RuntimeError(where(e.span) + "categorical ps and vs differ in length");
        std::vector<double> probs(weights.size());
        double total = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
          double w = number_arg(weights[i], "categorical weight", e.span);
          if (!(w >= 0.0) || !std::isfinite(w)) throw RuntimeError(where(e.span) + "categorical weight is negative");
          probs[i] = w;
          total += w;
        }
        if (!(total > 0.0)) throw RuntimeError(where(e.span) + "categorical weights sum to zero");
        for (auto& x : probs) x /= total;
        ++choices_count_;
        return values[choices_.categorical(probs)];
      }
      case Primitive::Mem: {
        arity(1);
        Value f = eval(*args[0], frame);
        if (!f.is_callable()) throw RuntimeError(where(e.span) + "mem expects a function");
        auto c = std::make_shared<Callable>();
        c->inner = std::move(f);
        c->cache = std::make_shared<std::map<std::string, Value>>();
        return Value(std::shared_ptr<const Callable>(std::move(c)));
      }
      case Primitive::Condition: {
        arity(1);
        if (!eval(*args[0], frame).truthy()) throw Rejection{};
        return Value(true);
      }
    }
    return {};
  }

  ChoiceSource& choices_;
  std::vector<std::unique_ptr<Frame>> arena_;
  std::uint64_t choices_count_ = 0;
  int depth_ = 0;
};

class RngChoices : public ChoiceSource {
 public:
  explicit RngChoices(Rng& rng) : rng_(rng) {}
  bool flip(double p) override { return rng_.uniform() < p; }
  std::size_t categorical(std::span<const double> probs) override {
    double u = rng_.uniform();
    double acc = 0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0) continue;
      last = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    return last;
  }
  double gaussian(double mu, double sigma) override { return mu + sigma * rng_.normal(); }

 private:
  Rng& rng_;
};

}  // namespace

Outcome execute(const Program& program, ChoiceSource& choices) { return Evaluator(choices).run(program); }

Outcome run_once(const Program& program, Rng& rng) {
  RngChoices choices(rng);
  return execute(program, choices);
}

const std::vector<Value>* SampleSet::find(const std::string& query) const {
  for (std::size_t i = 0; i < query_names.size(); ++i)
    if (query_names[i] == query) return &values[i];
  return nullptr;
}

std::map<std::string, double> SampleSet::frequencies(const std::string& query) const {
  std::map<std::string, double> out;
  const auto* xs = find(query);
  if (!xs || xs->empty()) return out;
  std::map<std::string, std::uint64_t> counts;
  for (const auto& v : *xs) ++counts[canonical_string(v)];
  for (const auto& [k, n] : counts) out[k] = static_cast<double>(n) / static_cast<double>(xs->size());
  return out;
}

SampleSet rejection_sample(const Program& program, const SampleOptions& options) {
  using Clock = std::chrono::steady_clock;
  SampleSet set;
  set.model_id = options.model_id;
  set.seed = options.seed;
  set.stream = options.stream;
  set.target = options.target_samples;
  for (const auto& q : program.queries()) set.query_names.push_back(q.name);
  set.values.resize(set.query_names.size());

  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(options.budget.wall_clock);
  while (set.accepted_count < options.target_samples) {
    if (set.proposed_count >= options.budget.max_proposals ||
        ((set.proposed_count & 63) == 0 && Clock::now() >= deadline)) {
      set.budget_exhausted = true;
      break;
    }
    Rng rng = Rng::stream(options.seed, {options.stream, set.proposed_count});
    ++set.proposed_count;
    Outcome out = run_once(program, rng);
    if (!out.accepted()) continue;
    for (std::size_t i = 0; i < out.sample.size(); ++i) set.values[i].push_back(std::move(out.sample[i].second));
    ++set.accepted_count;
  }
  set.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return set;
}

double total_variation(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double sum = 0;
  for (const auto& [k, v] : p) {
    auto it = q.find(k);
    sum += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q)
    if (!p.count(k)) sum += std::abs(v);
  return 0.5 * sum;
}

}  // namespace medmsa::ppl
