#pragma once

#include <string>

#include "json.hpp"

namespace scmrl {

// Shortest text that still round-trips any double: 17 significant digits
// (printf %.17g). Every float the project serializes goes through here so
// that emitted files are byte-stable.
std::string g17(double value);

// Serialize a json tree with g17 for doubles, two-space indent, "\n" line
// ends, keys in insertion order. nlohmann's own dump() picks its float
// digits per value, which is round-trip safe but not the fixed-width format
// the report files promise.
std::string dump_json17(const nlohmann::ordered_json& value);

}  // namespace scmrl
