#pragma once

#include "medmsa/ppl/program.hpp"

namespace medmsa::ppl {

struct Program::Impl {
  std::string source;
  bool wrapped = false;
  std::string model_name = "model";
  ast::ExprPtr model;  // holds a FunctionLit
  std::vector<NamedFunction> definitions;
  std::vector<ConditionStatement> conditions;
  std::vector<Query> queries;
  std::vector<Comment> comments;
  std::vector<NumericLiteral> numeric_literals;
  bool has_continuous = false;
};

}  // namespace medmsa::ppl
