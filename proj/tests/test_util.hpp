#pragma once

#include <string>

#include "medmsa/fsutil.hpp"

using medmsa::read_file;

inline std::string test_data(const std::string& rel) { return read_file(std::string(MEDMSA_TEST_DATA) + "/" + rel); }
