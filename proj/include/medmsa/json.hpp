#pragma once

#include <nlohmann/json.hpp>

namespace medmsa {

// Insertion-ordered so persisted files keep a stable, readable key order.
using Json = nlohmann::ordered_json;

}  // namespace medmsa
