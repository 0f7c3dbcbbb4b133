#pragma once

#include <string>
#include <vector>

#include "medmsa/json.hpp"

namespace medmsa::service {

// Published machine codes of error bodies.
inline const std::vector<std::string>& error_codes() {
  static const std::vector<std::string> codes = {
      "BAD_REQUEST",     "RUN_NOT_FOUND",     "MODEL_NOT_FOUND",    "MODEL_NOT_COMPILED",  "EDIT_INVALID",
      "EDIT_TARGET_MISSING", "NO_VALID_MODELS", "FIXTURE_MISSING",  "QUERY_NOT_FOUND",     "RUN_INCOMPLETE",
      "RUN_IN_PROGRESS", "DUPLICATE_RUN",     "BACKEND_UNAVAILABLE", "NOT_FOUND",          "INTERNAL"};
  return codes;
}

struct ApiError {
  int status = 500;
  std::string code = "INTERNAL";
  std::string message;
  Json details = Json::object();

  Json body() const;
};

// Maps library exceptions to API errors; unknown ones become INTERNAL.
ApiError api_error_from(const std::exception& e);

}  // namespace medmsa::service
