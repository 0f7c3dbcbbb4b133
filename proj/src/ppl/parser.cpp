#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>

#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/value.hpp"
#include "program_impl.hpp"

namespace medmsa::ppl {

UnknownIdentifier::UnknownIdentifier(const std::string& name, int line, int column)
    : Error("UnknownIdentifier", "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                     ": unknown identifier '" + name + "'"),
      name_(name),
      line_(line),
      column_(column) {}

UnsupportedConstruct::UnsupportedConstruct(const std::string& construct, int line, int column)
    : Error("UnsupportedConstruct", "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                        ": unsupported construct: " + construct),
      construct_(construct),
      line_(line),
      column_(column) {}

namespace {

using namespace ast;

const std::set<std::string, std::less<>> kUnsupportedKeywords = {
    "let", "const", "for", "while", "do", "switch", "case", "new", "class", "this",
    "null", "undefined", "typeof", "break", "continue", "throw", "try", "catch", "delete",
    "instanceof", "in", "of", "yield", "await", "async", "import", "export", "default"};

const std::map<std::string, Primitive, std::less<>> kPrimitives = {
    {"flip", Primitive::Flip},
    {"categorical", Primitive::Categorical},
    {"gaussian", Primitive::Gaussian},
    {"mem", Primitive::Mem},
    {"condition", Primitive::Condition}};

enum class Tok { Ident, Number, String, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0;
  Span span;
};

class LineIndex {
 public:
  explicit LineIndex(std::string_view src) {
    starts_.push_back(0);
    for (std::size_t i = 0; i < src.size(); ++i)
      if (src[i] == '\n') starts_.push_back(i + 1);
  }
  std::pair<int, int> locate(std::size_t offset) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), offset);
    auto line = static_cast<int>(it - starts_.begin());
    return {line, static_cast<int>(offset - starts_[line - 1]) + 1};
  }

 private:
  std::vector<std::size_t> starts_;
};

class Lexer {
 public:
  Lexer(std::string_view src, const LineIndex& lines) : src_(src), lines_(lines) {}

  std::vector<Token> run(std::vector<Comment>* comments) {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments(comments);
      if (pos_ >= src_.size()) {
        out.push_back(make(Tok::End, pos_, pos_, ""));
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  Token make(Tok kind, std::size_t begin, std::size_t end, std::string text) const {
    Token t;
    t.kind = kind;
    t.text = std::move(text);
    t.span.begin = begin;
    t.span.end = end;
    std::tie(t.span.line, t.span.column) = lines_.locate(begin);
    return t;
  }

  [[noreturn]] void fail(std::size_t at, const std::string& msg, const std::string& expected) const {
    auto [line, col] = lines_.locate(at);
    throw SyntaxError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg, line,
                      col, expected);
  }

  [[noreturn]] void unsupported(std::size_t at, const std::string& what) const {
    auto [line, col] = lines_.locate(at);
    throw UnsupportedConstruct(what, line, col);
  }

  void skip_space_and_comments(std::vector<Comment>* comments) {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (src_.compare(pos_, 2, "//") == 0) {
        std::size_t begin = pos_;
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        record(comments, begin, pos_);
      } else if (src_.compare(pos_, 2, "/*") == 0) {
        std::size_t begin = pos_;
        auto close = src_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) fail(begin, "unterminated block comment", "'*/'");
        pos_ = close + 2;
        record(comments, begin, pos_);
      } else {
        break;
      }
    }
  }

  void record(std::vector<Comment>* comments, std::size_t begin, std::size_t end) const {
    if (!comments) return;
    Comment c;
    c.span.begin = begin;
    c.span.end = end;
    std::tie(c.span.line, c.span.column) = lines_.locate(begin);
    c.text = std::string(src_.substr(begin, end - begin));
    comments->push_back(std::move(c));
  }

  Token next() {
    std::size_t begin = pos_;
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' || src_[pos_] == '$'))
        ++pos_;
      return make(Tok::Ident, begin, pos_, std::string(src_.substr(begin, pos_ - begin)));
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      return number(begin);
    }
    if (c == '\'' || c == '"') return string(begin, c);
    if (c == '`') unsupported(begin, "template literal");

    static const char* kPuncts[] = {"===", "!==", "=>", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=",
                                    "*=", "/=", "%=", "!", "<", ">", "+", "-", "*", "/", "%", "(", ")", "{", "}",
                                    "[", "]", ",", ";", ":", "?", ".", "="};
    for (const char* p : kPuncts) {
      std::size_t n = std::char_traits<char>::length(p);
      if (src_.compare(pos_, n, p) == 0) {
        std::string text(p);
        if (text == "=>") unsupported(begin, "arrow function");
        if (text == "++" || text == "--") unsupported(begin, "increment/decrement operator '" + text + "'");
        if (text.size() == 2 && text[1] == '=' && std::string("+-*/%").find(text[0]) != std::string::npos)
          unsupported(begin, "compound assignment '" + text + "'");
        pos_ += n;
        return make(Tok::Punct, begin, pos_, text);
      }
    }
    fail(begin, std::string("unexpected character '") + c + "'", "token");
  }

  Token number(std::size_t begin) {
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      fail(pos_, "malformed number", "digit");
    std::string text(src_.substr(begin, pos_ - begin));
    Token t = make(Tok::Number, begin, pos_, text);
    t.number = std::strtod(text.c_str(), nullptr);
    return t;
  }

  Token string(std::size_t begin, char quote) {
    ++pos_;
    std::string value;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail(begin, "unterminated string literal", "closing quote");
      char c = src_[pos_++];
      if (c == quote) break;
      if (c == '\\') {
        if (pos_ >= src_.size()) fail(begin, "unterminated string literal", "closing quote");
        char e = src_[pos_++];
        switch (e) {
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case 'r': value += '\r'; break;
          case '\\': value += '\\'; break;
          case '\'': value += '\''; break;
          case '"': value += '"'; break;
          default: fail(pos_ - 2, std::string("unsupported escape '\\") + e + "'", "escape sequence");
        }
      } else {
        value += c;
      }
    }
    Token t = make(Tok::String, begin, pos_, value);
    return t;
  }

  std::string_view src_;
  const LineIndex& lines_;
  std::size_t pos_ = 0;
};

// Binding power of binary operators; higher binds tighter.
int binary_precedence(const std::string& op) {
  if (op == "||") return 2;
  if (op == "&&") return 3;
  if (op == "==" || op == "!=" || op == "===" || op == "!==") return 4;
  if (op == "<" || op == "<=" || op == ">" || op == ">=") return 5;
  if (op == "+" || op == "-") return 6;
  if (op == "*" || op == "/" || op == "%") return 7;
  return -1;
}

BinaryOp binary_op(const std::string& op) {
  static const std::map<std::string, BinaryOp> ops = {
      {"||", BinaryOp::Or},  {"&&", BinaryOp::And},       {"==", BinaryOp::Eq},
      {"!=", BinaryOp::Ne},  {"===", BinaryOp::StrictEq}, {"!==", BinaryOp::StrictNe},
      {"<", BinaryOp::Lt},   {"<=", BinaryOp::Le},        {">", BinaryOp::Gt},
      {">=", BinaryOp::Ge},  {"+", BinaryOp::Add},        {"-", BinaryOp::Sub},
      {"*", BinaryOp::Mul},  {"/", BinaryOp::Div},        {"%", BinaryOp::Mod}};
  return ops.at(op);
}

class Parser {
 public:
  Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Block parse_statements_until_end() {
    Block out;
    while (!at_end()) {
      if (accept(";")) continue;
      out.push_back(statement());
    }
    return out;
  }

  ExprPtr parse_single_expression() {
    auto e = expression();
    accept(";");
    if (!at_end()) fail_expected("end of expression");
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  bool is_punct(const char* p, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
  }
  bool is_ident(const char* p) const { return peek().kind == Tok::Ident && peek().text == p; }
  bool accept(const char* p) {
    if (is_punct(p)) {
      ++pos_;
      return true;
    }
    return false;
  }
  const Token& advance() { return toks_[pos_++]; }

  std::string describe(const Token& t) const {
    switch (t.kind) {
      case Tok::End: return "end of input";
      case Tok::String: return "string literal";
      case Tok::Number: return "number '" + t.text + "'";
      default: return "'" + t.text + "'";
    }
  }

  [[noreturn]] void fail_expected(const std::string& expected) const {
    const Token& t = peek();
    throw SyntaxError("line " + std::to_string(t.span.line) + ", column " + std::to_string(t.span.column) +
                          ": expected " + expected + " but found " + describe(t),
                      t.span.line, t.span.column, expected);
  }

  [[noreturn]] void unsupported(const Token& at, const std::string& what) const {
    throw UnsupportedConstruct(what, at.span.line, at.span.column);
  }

  const Token& expect(const char* p) {
    if (!is_punct(p)) fail_expected(std::string("'") + p + "'");
    return advance();
  }

  std::string expect_identifier(const char* what) {
    if (peek().kind != Tok::Ident) fail_expected(what);
    if (kUnsupportedKeywords.count(peek().text)) unsupported(peek(), "keyword '" + peek().text + "'");
    return advance().text;
  }

  Span span_from(const Span& start) const {
    Span s = start;
    s.end = toks_[pos_ - 1].span.end;
    return s;
  }

  StmtPtr statement() {
    const Token& start = peek();
    auto stmt = std::make_unique<Stmt>();
    if (start.kind == Tok::Ident) {
      if (start.text == "var") {
        advance();
        VarDecl decl;
        decl.name = expect_identifier("variable name");
        if (!is_punct("=")) fail_expected("'='");
        advance();
        decl.init = expression();
        stmt->node = std::move(decl);
      } else if (start.text == "if") {
        advance();
        stmt->node = if_statement();
        stmt->span = span_from(start.span);
        return stmt;
      } else if (start.text == "return") {
        advance();
        if (is_punct(";") || is_punct("}")) fail_expected("expression after 'return'");
        stmt->node = Return{expression()};
      } else if (start.text == "function") {
        unsupported(start, "function declaration (use 'var name = function(...) {...}')");
      } else if (start.text == "else") {
        fail_expected("statement");
      } else if (kUnsupportedKeywords.count(start.text)) {
        unsupported(start, "keyword '" + start.text + "'");
      } else {
        stmt->node = ExprStmt{expression()};
      }
    } else if (start.kind == Tok::Punct && start.text == "{") {
      unsupported(start, "block statement");
    } else {
      stmt->node = ExprStmt{expression()};
    }
    if (is_punct("=")) unsupported(peek(), "assignment");
    accept(";");
    stmt->span = span_from(start.span);
    return stmt;
  }

  Block branch_body() {
    Block body;
    if (accept("{")) {
      while (!is_punct("}")) {
        if (at_end()) fail_expected("'}'");
        if (accept(";")) continue;
        body.push_back(statement());
      }
      advance();
    } else {
      body.push_back(statement());
    }
    return body;
  }

  If if_statement() {
    If node;
    expect("(");
    node.test = expression();
    expect(")");
    node.then_block = branch_body();
    if (is_ident("else")) {
      advance();
      node.has_else = true;
      if (is_ident("if")) {
        const Token& start = advance();
        auto nested = std::make_unique<Stmt>();
        nested->node = if_statement();
        nested->span = span_from(start.span);
        node.else_block.push_back(std::move(nested));
      } else {
        node.else_block = branch_body();
      }
    }
    return node;
  }

  ExprPtr expression() { return conditional(); }

  ExprPtr conditional() {
    auto test = binary(2);
    if (!is_punct("?")) return test;
    advance();
    auto e = std::make_unique<Expr>();
    Conditional c;
    c.test = std::move(test);
    c.then_expr = conditional();
    expect(":");
    c.else_expr = conditional();
    e->span = c.test->span;
    e->span.end = c.else_expr->span.end;
    e->node = std::move(c);
    return e;
  }

  ExprPtr binary(int min_prec) {
    auto lhs = unary();
    for (;;) {
      if (peek().kind != Tok::Punct) break;
      int prec = binary_precedence(peek().text);
      if (prec < min_prec) break;
      BinaryOp op = binary_op(advance().text);
      auto rhs = binary(prec + 1);
      auto e = std::make_unique<Expr>();
      e->span = lhs->span;
      e->span.end = rhs->span.end;
      e->node = Binary{op, std::move(lhs), std::move(rhs)};
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr unary() {
    if (peek().kind == Tok::Punct && (peek().text == "!" || peek().text == "-" || peek().text == "+")) {
      const Token& t = advance();
      UnaryOp op = t.text == "!" ? UnaryOp::Not : t.text == "-" ? UnaryOp::Negate : UnaryOp::Plus;
      auto operand = unary();
      auto e = std::make_unique<Expr>();
      e->span = t.span;
      e->span.end = operand->span.end;
      e->node = Unary{op, std::move(operand)};
      return e;
    }
    return postfix();
  }

  ExprPtr postfix() {
    auto e = primary();
    for (;;) {
      if (is_punct("(")) {
        advance();
        Call call;
        call.callee = std::move(e);
        call.args = arguments(")");
        auto next = std::make_unique<Expr>();
        next->span = call.callee->span;
        next->span.end = toks_[pos_ - 1].span.end;
        next->node = std::move(call);
        e = std::move(next);
      } else if (is_punct(".")) {
        advance();
        std::string name = expect_identifier("property name");
        auto next = std::make_unique<Expr>();
        next->span = e->span;
        if (name == "includes" && is_punct("(")) {
          advance();
          auto args = arguments(")");
          if (args.size() != 1) {
            throw SyntaxError("line " + std::to_string(e->span.line) + ": includes expects exactly one argument",
                              e->span.line, e->span.column, "one argument");
          }
          next->node = Includes{std::move(e), std::move(args.front())};
        } else {
          next->node = Member{std::move(e), name};
        }
        next->span.end = toks_[pos_ - 1].span.end;
        e = std::move(next);
      } else if (is_punct("[")) {
        unsupported(peek(), "index access");
      } else {
        return e;
      }
    }
  }

  std::vector<ExprPtr> arguments(const char* close) {
    std::vector<ExprPtr> args;
    while (!is_punct(close)) {
      args.push_back(expression());
      if (!accept(",")) break;
    }
    expect(close);
    return args;
  }

  ExprPtr primary() {
    const Token& t = peek();
    auto e = std::make_unique<Expr>();
    e->span = t.span;
    switch (t.kind) {
      case Tok::Number:
        advance();
        e->node = NumberLit{t.number};
        return e;
      case Tok::String:
        advance();
        e->node = StringLit{t.text};
        return e;
      case Tok::Ident: {
        if (t.text == "true" || t.text == "false") {
          advance();
          e->node = BoolLit{t.text == "true"};
          return e;
        }
        if (t.text == "function") return function_literal();
        if (kUnsupportedKeywords.count(t.text)) unsupported(t, "keyword '" + t.text + "'");
        if (t.text == "var" || t.text == "if" || t.text == "else" || t.text == "return")
          fail_expected("expression");
        advance();
        e->node = Identifier{t.text, {}};
        return e;
      }
      case Tok::Punct:
        if (t.text == "(") {
          advance();
          auto inner = expression();
          expect(")");
          inner->span.begin = t.span.begin;
          inner->span.line = t.span.line;
          inner->span.column = t.span.column;
          inner->span.end = toks_[pos_ - 1].span.end;
          return inner;
        }
        if (t.text == "[") {
          advance();
          ListLit list;
          list.elements = arguments("]");
          e->node = std::move(list);
          e->span = span_from(t.span);
          return e;
        }
        if (t.text == "{") return record_literal();
        break;
      case Tok::End:
        break;
    }
    fail_expected("expression");
  }

  ExprPtr record_literal() {
    const Token& open = advance();
    RecordLit rec;
    while (!is_punct("}")) {
      RecordField field;
      if (peek().kind == Tok::Ident || peek().kind == Tok::String) {
        field.key = advance().text;
      } else {
        fail_expected("record key");
      }
      expect(":");
      field.value = expression();
      rec.fields.push_back(std::move(field));
      if (!accept(",")) break;
    }
    expect("}");
    auto e = std::make_unique<Expr>();
    e->node = std::move(rec);
    e->span = span_from(open.span);
    return e;
  }

  ExprPtr function_literal() {
    const Token& start = advance();
    if (peek().kind == Tok::Ident) unsupported(peek(), "named function expression");
    FunctionLit fn;
    expect("(");
    while (!is_punct(")")) {
      fn.params.push_back(expect_identifier("parameter name"));
      if (!accept(",")) break;
    }
    expect(")");
    expect("{");
    while (!is_punct("}")) {
      if (at_end()) fail_expected("'}'");
      if (accept(";")) continue;
      fn.body.push_back(statement());
    }
    advance();
    auto e = std::make_unique<Expr>();
    e->node = std::move(fn);
    e->span = span_from(start.span);
    return e;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---- name resolution --------------------------------------------------------

class Resolver {
 public:
  void function(FunctionLit& fn) {
    Scope scope;
    fn.slot_names.clear();
    for (const auto& p : fn.params) add_slot(scope, fn, p);
    hoist(fn.body, scope, fn);
    scopes_.push_back(std::move(scope));
    block(fn.body);
    scopes_.pop_back();
  }

 private:
  struct Scope {
    std::map<std::string, int, std::less<>> slots;
  };

  static void add_slot(Scope& scope, FunctionLit& fn, const std::string& name) {
    if (scope.slots.count(name)) return;
    scope.slots[name] = static_cast<int>(fn.slot_names.size());
    fn.slot_names.push_back(name);
  }

  static void hoist(const Block& b, Scope& scope, FunctionLit& fn) {
    for (const auto& s : b) {
      if (auto* v = std::get_if<VarDecl>(&s->node)) {
        add_slot(scope, fn, v->name);
      } else if (auto* i = std::get_if<If>(&s->node)) {
        hoist(i->then_block, scope, fn);
        hoist(i->else_block, scope, fn);
      }
    }
  }

  void block(Block& b) {
    for (auto& s : b) statement(*s);
  }

  void statement(Stmt& s) {
    if (auto* v = std::get_if<VarDecl>(&s.node)) {
      v->slot = scopes_.back().slots.at(v->name);
      expr(*v->init);
    } else if (auto* e = std::get_if<ExprStmt>(&s.node)) {
      expr(*e->expr);
    } else if (auto* r = std::get_if<Return>(&s.node)) {
      expr(*r->value);
    } else {
      auto& i = std::get<If>(s.node);
      expr(*i.test);
      block(i.then_block);
      block(i.else_block);
    }
  }

  void identifier(Expr& e, Identifier& id, bool callee) {
    for (std::size_t i = scopes_.size(); i-- > 0;) {
      auto it = scopes_[i].slots.find(id.name);
      if (it != scopes_[i].slots.end()) {
        id.ref.kind = Ref::Kind::Local;
        id.ref.depth = static_cast<int>(scopes_.size() - 1 - i);
        id.ref.slot = it->second;
        return;
      }
    }
    auto prim = kPrimitives.find(id.name);
    if (prim != kPrimitives.end()) {
      if (!callee) throw UnsupportedConstruct("primitive '" + id.name + "' used as a value", e.span.line, e.span.column);
      id.ref.kind = Ref::Kind::Primitive;
      id.ref.primitive = prim->second;
      return;
    }
    throw UnknownIdentifier(id.name, e.span.line, e.span.column);
  }

  void expr(Expr& e, bool callee = false) {
    std::visit(
        [&](auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Identifier>) {
            identifier(e, n, callee);
          } else if constexpr (std::is_same_v<T, ListLit>) {
            for (auto& x : n.elements) expr(*x);
          } else if constexpr (std::is_same_v<T, RecordLit>) {
            for (auto& f : n.fields) expr(*f.value);
          } else if constexpr (std::is_same_v<T, FunctionLit>) {
            function(n);
          } else if constexpr (std::is_same_v<T, Call>) {
            expr(*n.callee, true);
            for (auto& a : n.args) expr(*a);
          } else if constexpr (std::is_same_v<T, Member>) {
            throw UnsupportedConstruct("property access '." + n.name + "'", e.span.line, e.span.column);
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

  std::vector<Scope> scopes_;
};

// ---- program assembly -------------------------------------------------------

const Identifier* callee_identifier(const Expr& e) {
  const auto* call = get_if<Call>(e);
  if (!call) return nullptr;
  if (const auto* id = get_if<Identifier>(*call->callee)) return id;
  if (const auto* m = get_if<Member>(*call->callee)) return get_if<Identifier>(*m->object);
  return nullptr;
}

bool is_directive_call(const Expr& e) {
  const auto* id = callee_identifier(e);
  return id && (id->name == "Infer" || id->name == "viz");
}

std::optional<std::string> infer_model_name(const Expr& e) {
  const auto* id = callee_identifier(e);
  if (!id || id->name != "Infer") return std::nullopt;
  const auto& call = std::get<Call>(e.node);
  if (call.args.empty()) return std::nullopt;
  const auto* rec = get_if<RecordLit>(*call.args.front());
  if (!rec) return std::nullopt;
  for (const auto& f : rec->fields) {
    if (f.key != "model") continue;
    if (const auto* m = get_if<Identifier>(*f.value)) return m->name;
  }
  return std::nullopt;
}

bool is_zero_arg_function(const Expr& e) {
  const auto* fn = get_if<FunctionLit>(e);
  return fn && fn->params.empty();
}

template <class F>
void walk(const Expr& e, const F& f);

template <class F>
void walk(const Block& b, const F& f) {
  for (const auto& s : b) {
    if (auto* v = std::get_if<VarDecl>(&s->node)) {
      walk(*v->init, f);
    } else if (auto* x = std::get_if<ExprStmt>(&s->node)) {
      walk(*x->expr, f);
    } else if (auto* r = std::get_if<Return>(&s->node)) {
      walk(*r->value, f);
    } else {
      const auto& i = std::get<If>(s->node);
      walk(*i.test, f);
      walk(i.then_block, f);
      walk(i.else_block, f);
    }
  }
}

template <class F>
void walk(const Expr& e, const F& f) {
  f(e);
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ListLit>) {
          for (const auto& x : n.elements) walk(*x, f);
        } else if constexpr (std::is_same_v<T, RecordLit>) {
          for (const auto& x : n.fields) walk(*x.value, f);
        } else if constexpr (std::is_same_v<T, FunctionLit>) {
          walk(n.body, f);
        } else if constexpr (std::is_same_v<T, Call>) {
          walk(*n.callee, f);
          for (const auto& a : n.args) walk(*a, f);
        } else if constexpr (std::is_same_v<T, Member>) {
          walk(*n.object, f);
        } else if constexpr (std::is_same_v<T, Includes>) {
          walk(*n.list, f);
          walk(*n.item, f);
        } else if constexpr (std::is_same_v<T, Unary>) {
          walk(*n.operand, f);
        } else if constexpr (std::is_same_v<T, Binary>) {
          walk(*n.lhs, f);
          walk(*n.rhs, f);
        } else if constexpr (std::is_same_v<T, Conditional>) {
          walk(*n.test, f);
          walk(*n.then_expr, f);
          walk(*n.else_expr, f);
        }
      },
      e.node);
}

void collect_free(const Expr& e, const std::set<std::string>& bound, std::set<std::string>& out);

void collect_free_block(const Block& b, std::set<std::string> bound, std::set<std::string>& out) {
  for (const auto& s : b)
    if (auto* v = std::get_if<VarDecl>(&s->node)) bound.insert(v->name);
  for (const auto& s : b) {
    if (auto* v = std::get_if<VarDecl>(&s->node)) {
      collect_free(*v->init, bound, out);
    } else if (auto* x = std::get_if<ExprStmt>(&s->node)) {
      collect_free(*x->expr, bound, out);
    } else if (auto* r = std::get_if<Return>(&s->node)) {
      collect_free(*r->value, bound, out);
    } else {
      const auto& i = std::get<If>(s->node);
      collect_free(*i.test, bound, out);
      collect_free_block(i.then_block, bound, out);
      collect_free_block(i.else_block, bound, out);
    }
  }
}

void collect_free(const Expr& e, const std::set<std::string>& bound, std::set<std::string>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Identifier>) {
          if (!bound.count(n.name) && !kPrimitives.count(n.name)) out.insert(n.name);
        } else if constexpr (std::is_same_v<T, ListLit>) {
          for (const auto& x : n.elements) collect_free(*x, bound, out);
        } else if constexpr (std::is_same_v<T, RecordLit>) {
          for (const auto& x : n.fields) collect_free(*x.value, bound, out);
        } else if constexpr (std::is_same_v<T, FunctionLit>) {
          auto inner = bound;
          inner.insert(n.params.begin(), n.params.end());
          collect_free_block(n.body, inner, out);
        } else if constexpr (std::is_same_v<T, Call>) {
          collect_free(*n.callee, bound, out);
          for (const auto& a : n.args) collect_free(*a, bound, out);
        } else if constexpr (std::is_same_v<T, Member>) {
          collect_free(*n.object, bound, out);
        } else if constexpr (std::is_same_v<T, Includes>) {
          collect_free(*n.list, bound, out);
          collect_free(*n.item, bound, out);
        } else if constexpr (std::is_same_v<T, Unary>) {
          collect_free(*n.operand, bound, out);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_free(*n.lhs, bound, out);
          collect_free(*n.rhs, bound, out);
        } else if constexpr (std::is_same_v<T, Conditional>) {
          collect_free(*n.test, bound, out);
          collect_free(*n.then_expr, bound, out);
          collect_free(*n.else_expr, bound, out);
        }
      },
      e.node);
}

}  // namespace

Program parse(std::string_view source) {
  auto impl = std::make_shared<Program::Impl>();
  impl->source = std::string(source);
  LineIndex lines(impl->source);
  auto tokens = Lexer(impl->source, lines).run(&impl->comments);
  Parser parser(std::move(tokens));
  Block top = parser.parse_statements_until_end();

  bool bare = std::any_of(top.begin(), top.end(),
                          [](const StmtPtr& s) { return std::holds_alternative<Return>(s->node); });
  if (bare) {
    impl->wrapped = false;
    auto model = std::make_unique<Expr>();
    model->span.begin = 0;
    model->span.end = impl->source.size();
    model->node = FunctionLit{{}, std::move(top), {}};
    impl->model = std::move(model);
  } else {
    impl->wrapped = true;
    std::optional<std::string> named;
    for (const auto& s : top) {
      if (auto* v = std::get_if<VarDecl>(&s->node)) {
        if (auto n = infer_model_name(*v->init)) named = n;
      } else if (auto* x = std::get_if<ExprStmt>(&s->node)) {
        if (auto n = infer_model_name(*x->expr)) named = n;
      }
    }
    int model_index = -1;
    for (std::size_t i = 0; i < top.size(); ++i) {
      auto& s = top[i];
      if (auto* v = std::get_if<VarDecl>(&s->node)) {
        if (is_directive_call(*v->init)) continue;
        bool candidate = is_zero_arg_function(*v->init) && (!named || *named == v->name);
        if (candidate && model_index < 0) {
          model_index = static_cast<int>(i);
          continue;
        }
        throw UnsupportedConstruct("top-level definition '" + v->name + "' outside the model function",
                                   s->span.line, s->span.column);
      }
      if (auto* x = std::get_if<ExprStmt>(&s->node); x && is_directive_call(*x->expr)) continue;
      throw UnsupportedConstruct("top-level statement outside the model function", s->span.line, s->span.column);
    }
    if (model_index < 0) throw UnsupportedConstruct("program has no model function or top-level return", 1, 1);
    auto& decl = std::get<VarDecl>(top[model_index]->node);
    impl->model_name = decl.name;
    impl->model = std::move(decl.init);
  }

  auto& model = std::get<FunctionLit>(impl->model->node);
  if (model.body.empty() || !std::holds_alternative<Return>(model.body.back()->node)) {
    const Span& at = model.body.empty() ? impl->model->span : model.body.back()->span;
    throw UnsupportedConstruct("model must end with 'return {...}'", at.line, at.column);
  }
  for (std::size_t i = 0; i + 1 < model.body.size(); ++i) {
    if (std::holds_alternative<Return>(model.body[i]->node))
      throw UnsupportedConstruct("statements after the model's return", model.body[i]->span.line,
                                 model.body[i]->span.column);
  }
  const auto& ret = std::get<Return>(model.body.back()->node);
  const auto* record = get_if<RecordLit>(*ret.value);
  if (!record) throw UnsupportedConstruct("model must return a record literal", ret.value->span.line, ret.value->span.column);
  if (record->fields.empty())
    throw UnsupportedConstruct("empty query record", ret.value->span.line, ret.value->span.column);

  Resolver().function(model);

  for (const auto& f : record->fields) impl->queries.push_back(Query{f.key, f.value.get()});

  for (const auto& s : model.body) {
    if (auto* v = std::get_if<VarDecl>(&s->node)) {
      const Expr* init = v->init.get();
      bool memo = false;
      if (const auto* call = primitive_call(*init, Primitive::Mem); call && call->args.size() == 1) {
        init = call->args.front().get();
        memo = true;
      }
      if (const auto* fn = get_if<FunctionLit>(*init))
        impl->definitions.push_back(NamedFunction{v->name, fn->params, fn, memo, s->span});
    } else if (auto* x = std::get_if<ExprStmt>(&s->node)) {
      if (const auto* call = primitive_call(*x->expr, Primitive::Condition); call && call->args.size() == 1) {
        ConditionStatement c;
        c.argument = call->args.front().get();
        c.statement = s->span;
        c.argument_span = call->args.front()->span;
        impl->conditions.push_back(c);
      }
    }
  }

  walk(*impl->model, [&](const Expr& e) {
    if (const auto* n = get_if<NumberLit>(e)) impl->numeric_literals.push_back(NumericLiteral{n->value, e.span});
    if (primitive_call(e, Primitive::Gaussian)) impl->has_continuous = true;
  });
  std::sort(impl->numeric_literals.begin(), impl->numeric_literals.end(),
            [](const NumericLiteral& a, const NumericLiteral& b) { return a.span.begin < b.span.begin; });
  return Program(std::move(impl));
}

ast::ExprPtr parse_expression(std::string_view text) {
  std::string owned(text);
  LineIndex lines(owned);
  auto tokens = Lexer(owned, lines).run(nullptr);
  Parser parser(std::move(tokens));
  auto e = parser.parse_single_expression();
  walk(*e, [](const Expr& x) {
    if (const auto* m = get_if<Member>(x))
      throw UnsupportedConstruct("property access '." + m->name + "'", x.span.line, x.span.column);
  });
  return e;
}

std::set<std::string> free_identifiers(const ast::Expr& expr) {
  std::set<std::string> out;
  collect_free(expr, {}, out);
  return out;
}

const std::string& Program::source() const { return impl_->source; }
bool Program::wrapped() const { return impl_->wrapped; }
const std::string& Program::model_name() const { return impl_->model_name; }
const ast::FunctionLit& Program::model() const { return std::get<ast::FunctionLit>(impl_->model->node); }
const std::vector<NamedFunction>& Program::definitions() const { return impl_->definitions; }
const std::vector<ConditionStatement>& Program::conditions() const { return impl_->conditions; }
const std::vector<Query>& Program::queries() const { return impl_->queries; }
const std::vector<Comment>& Program::comments() const { return impl_->comments; }
const std::vector<NumericLiteral>& Program::numeric_literals() const { return impl_->numeric_literals; }
bool Program::has_continuous() const { return impl_->has_continuous; }

bool structurally_equal(const Program& a, const Program& b) {
  return a.wrapped() == b.wrapped() && ast::equal(a.model().body, b.model().body);
}

}  // namespace medmsa::ppl
