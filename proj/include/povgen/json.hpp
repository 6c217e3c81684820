#pragma once
// Project-wide JSON alias. ordered_json keeps object key order, which the
// workflow document renderer depends on for byte-stable output.

#include <nlohmann/json.hpp>

namespace povgen {

using Json = nlohmann::ordered_json;

}  // namespace povgen
