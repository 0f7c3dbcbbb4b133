#include "medmsa/ppl/edit.hpp"

#include <cmath>

#include "medmsa/ppl/value.hpp"

namespace medmsa::ppl {
namespace {

std::string trim(std::string s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string summarize(const std::vector<Diagnostic>& ds) {
  std::string out = "edit produces an invalid program";
  if (!ds.empty()) out += ": " + ds.front().message;
  return out;
}

// Checks the payload on its own and strips a `condition(...)` wrapper.
std::string condition_payload(const std::string& text) {
  std::string t = trim(text);
  while (!t.empty() && t.back() == ';') t = trim(t.substr(0, t.size() - 1));
  if (t.empty()) throw EditProducesInvalidProgram({Diagnostic{"SyntaxError", "empty condition expression", 1, 1}});
  ast::ExprPtr e;
  try {
    e = parse_expression(t);
  } catch (const Error& err) {
    throw EditProducesInvalidProgram({diagnostic_from(err)});
  }
  if (const auto* call = ast::get_if<ast::Call>(*e); call && call->args.size() == 1) {
    const auto* id = ast::get_if<ast::Identifier>(*call->callee);
    if (id && id->name == "condition") {
      const auto& span = call->args.front()->span;
      return t.substr(span.begin, span.size());
    }
  }
  return t;
}

std::size_t line_start(const std::string& s, std::size_t pos) {
  while (pos > 0 && s[pos - 1] != '\n') --pos;
  return pos;
}

bool blank(const std::string& s, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to; ++i)
    if (s[i] != ' ' && s[i] != '\t' && s[i] != '\r') return false;
  return true;
}

const ConditionStatement& condition_at(const Program& p, std::size_t index) {
  if (index >= p.conditions().size())
    throw EditTargetMissing("no condition at index " + std::to_string(index) + " (program has " +
                            std::to_string(p.conditions().size()) + ")");
  return p.conditions()[index];
}

std::string splice(const Program& p, const Edit& edit) {
  std::string src = p.source();
  switch (edit.kind) {
    case Edit::Kind::ReplaceCondition: {
      const auto& c = condition_at(p, edit.index);
      std::string payload = condition_payload(edit.expression);
      return src.replace(c.argument_span.begin, c.argument_span.size(), payload);
    }
    case Edit::Kind::RemoveCondition: {
      const auto& c = condition_at(p, edit.index);
      std::size_t begin = c.statement.begin;
      std::size_t end = c.statement.end;
      std::size_t ls = line_start(src, begin);
      std::size_t le = src.find('\n', end);
      if (le == std::string::npos) le = src.size();
      if (blank(src, ls, begin) && blank(src, end, le)) {
        begin = ls;
        end = le < src.size() ? le + 1 : le;
      }
      return src.erase(begin, end - begin);
    }
    case Edit::Kind::AddCondition: {
      std::string payload = condition_payload(edit.expression);
      // New conditions go just before the final return, after every binding.
      const auto& ret = p.model().body.back()->span;
      std::size_t ls = line_start(src, ret.begin);
      if (blank(src, ls, ret.begin)) {
        std::string indent = src.substr(ls, ret.begin - ls);
        return src.insert(ls, indent + "condition(" + payload + ")\n");
      }
      return src.insert(ret.begin, "condition(" + payload + "); ");
    }
    case Edit::Kind::ReplaceNumericLiteral: {
      const NumericLiteral* target = nullptr;
      for (const auto& n : p.numeric_literals())
        if (n.span.begin == edit.span_begin && n.span.end == edit.span_end) target = &n;
      if (!target)
        throw EditTargetMissing("no numeric literal at bytes [" + std::to_string(edit.span_begin) + ", " +
                                std::to_string(edit.span_end) + ")");
      if (!std::isfinite(edit.number))
        throw EditProducesInvalidProgram({Diagnostic{"SyntaxError", "replacement number is not finite",
                                                     target->span.line, target->span.column}});
      std::string text = format_number(edit.number);
      if (edit.number < 0) text = "(" + text + ")";
      return src.replace(target->span.begin, target->span.size(), text);
    }
  }
  return src;
}

}  // namespace

EditProducesInvalidProgram::EditProducesInvalidProgram(std::vector<Diagnostic> diagnostics)
    : Error("EditProducesInvalidProgram", summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

const char* kind_name(Edit::Kind kind) {
  switch (kind) {
    case Edit::Kind::ReplaceCondition: return "ReplaceCondition";
    case Edit::Kind::AddCondition: return "AddCondition";
    case Edit::Kind::RemoveCondition: return "RemoveCondition";
    case Edit::Kind::ReplaceNumericLiteral: return "ReplaceNumericLiteral";
  }
  return "";
}

Edit::Kind parse_kind(const std::string& name) {
  for (auto k : {Edit::Kind::ReplaceCondition, Edit::Kind::AddCondition, Edit::Kind::RemoveCondition,
                 Edit::Kind::ReplaceNumericLiteral})
    if (name == kind_name(k)) return k;
  throw Error("BadEdit", "unknown edit kind '" + name + "'");
}

Program apply_edit(const Program& program, const Edit& edit) {
  std::string source = splice(program, edit);
  std::optional<Program> out;
  try {
    out.emplace(parse(source));
  } catch (const Error& err) {
    throw EditProducesInvalidProgram({diagnostic_from(err)});
  }
  auto diagnostics = validate(*out);
  if (!diagnostics.empty()) throw EditProducesInvalidProgram(std::move(diagnostics));
  return *out;
}

}  // namespace medmsa::ppl
