#pragma once

#include <string>
#include <vector>

#include "incisor/constraints.hpp"

namespace incisor {

// Validator for the JSON-schema subset our agent configs use: type, enum,
// const, properties, required, additionalProperties (boolean), items,
// minItems, maxItems, uniqueItems, minimum, maximum, exclusiveMinimum,
// exclusiveMaximum, minLength, maxLength. Unknown keywords are ignored, as
// JSON schema prescribes.
//
// Returns one message per violation, each prefixed with the JSON pointer of
// the offending value; empty when the document conforms.
std::vector<std::string> validate_json_schema(const json& doc, const json& schema);

// Checks that a schema document uses the supported keywords with well-typed
// arguments. Empty when the schema is usable.
std::vector<std::string> check_schema_document(const json& schema);

}  // namespace incisor
