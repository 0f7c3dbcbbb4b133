#pragma once

#include <string>
#include <vector>

#include "medmsa/ppl/program.hpp"

namespace medmsa::ppl {

struct Diagnostic {
  // One of: UnresolvedName, ArityMismatch, LengthMismatch, MissingField,
  // ConditionNotBoolean; parse failures map to SyntaxError,
  // UnknownIdentifier and UnsupportedConstruct; synthesis adds MissingQuery.
  std::string code;
  std::string message;
  int line = 0;
  int column = 0;

  bool operator==(const Diagnostic&) const = default;
};

// Static checks: name resolution, primitive arity, categorical ps/vs
// presence and lengths, statically typed condition arguments.
// An empty result means the program may be executed.
std::vector<Diagnostic> validate(const Program& program);

// Converts a parse failure into a diagnostic.
Diagnostic diagnostic_from(const Error& error);

}  // namespace medmsa::ppl
