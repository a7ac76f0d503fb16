#pragma once

// JSON forms shared by the CLI, the dataset store and the sync service:
//   transform: {"scale", "rotation_rad", "tx", "ty"}
//   pairs:     [{"source": [x, y], "target": [x, y]}, ...]

#include <vector>

#include "amdprep/geometry.hpp"
#include "json.hpp"

namespace amdprep {

nlohmann::json transform_to_json(const SimilarityTransform& t);
/// Throws Error(ValidationFailed) on missing or mistyped fields.
SimilarityTransform transform_from_json(const nlohmann::json& j);

nlohmann::json pairs_to_json(const std::vector<PointPair>& pairs);
std::vector<PointPair> pairs_from_json(const nlohmann::json& j);

/// Parses text, mapping syntax errors to Error(ValidationFailed).
nlohmann::json parse_json(std::string_view text, std::string_view what);

}  // namespace amdprep
