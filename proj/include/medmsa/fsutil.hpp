#pragma once

#include <filesystem>
#include <string>

#include "medmsa/error.hpp"

namespace medmsa {

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("IoError", message) {}
};

// Writes to a sibling temporary file and renames it into place, creating
// parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace medmsa
