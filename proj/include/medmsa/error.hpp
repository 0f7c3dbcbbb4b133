#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace medmsa {

// Base for every error raised by the library. `code()` is a stable
// machine-readable name (e.g. "SyntaxError", "FixtureMissing").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace medmsa
