#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "medmsa/error.hpp"
#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/validate.hpp"

namespace medmsa::ppl {

// A point edit on a program. Condition indices are 0-based over the
// top-level condition statements of the model body. Numeric literals are
// addressed by their exact byte range in the source.
struct Edit {
  enum class Kind { ReplaceCondition, AddCondition, RemoveCondition, ReplaceNumericLiteral };

  Kind kind = Kind::AddCondition;
  std::size_t index = 0;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  // Boolean expression for Replace/AddCondition; `condition(...)` wrappers
  // are accepted and unwrapped.
  std::string expression;
  double number = 0;
  std::string note;

  bool operator==(const Edit&) const = default;
};

const char* kind_name(Edit::Kind kind);
// Throws Error("BadEdit") for unknown names.
Edit::Kind parse_kind(const std::string& name);

class EditTargetMissing : public Error {
 public:
  explicit EditTargetMissing(const std::string& message) : Error("EditTargetMissing", message) {}
};

class EditProducesInvalidProgram : public Error {
 public:
  explicit EditProducesInvalidProgram(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

// Splices the edit into the source text and re-parses. The result parses
// and validates, or an exception is thrown and nothing changes.
Program apply_edit(const Program& program, const Edit& edit);

}  // namespace medmsa::ppl
