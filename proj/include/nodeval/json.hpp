#pragma once

#include <json.hpp>

namespace nodeval {

// Insertion-ordered, so emitted files keep a stable, readable key order.
using Json = nlohmann::ordered_json;

}  // namespace nodeval
