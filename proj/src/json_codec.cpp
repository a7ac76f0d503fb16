#include "amdprep/json_codec.hpp"

#include <string>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

double number_field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_number()) {
    throw Error(Errc::ValidationFailed, std::string("transform field '") + key + "' must be a number",
                "transform must have numeric scale, rotation_rad, tx, ty");
  }
  return j.at(key).get<double>();
}

Point2 point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(Errc::ValidationFailed, "points must be [x, y] number arrays",
                "points must be [x, y] number arrays");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

nlohmann::json transform_to_json(const SimilarityTransform& t) {
  return {{"scale", t.scale()}, {"rotation_rad", t.rotation()}, {"tx", t.tx()}, {"ty", t.ty()}};
}

SimilarityTransform transform_from_json(const nlohmann::json& j) {
  try {
    return SimilarityTransform(number_field(j, "scale"), number_field(j, "rotation_rad"),
                               number_field(j, "tx"), number_field(j, "ty"));
  } catch (const Error& e) {
    if (e.code() == Errc::ValidationFailed) throw;
    throw Error(Errc::ValidationFailed, e.what(), "transform scale must be positive and finite");
  }
}

nlohmann::json pairs_to_json(const std::vector<PointPair>& pairs) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pairs) {
    arr.push_back({{"source", {p.source.x, p.source.y}}, {"target", {p.target.x, p.target.y}}});
  }
  return arr;
}

std::vector<PointPair> pairs_from_json(const nlohmann::json& j) {
  if (!j.is_array()) {
    throw Error(Errc::ValidationFailed, "point pairs must be a JSON array",
                "point pairs must be a JSON array");
  }
  std::vector<PointPair> pairs;
  pairs.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("source") || !item.contains("target")) {
      throw Error(Errc::ValidationFailed, "each pair needs 'source' and 'target'",
                  "each pair needs 'source' and 'target'");
    }
    pairs.push_back({point_from_json(item.at("source")), point_from_json(item.at("target"))});
  }
  return pairs;
}

nlohmann::json parse_json(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ValidationFailed, std::string(what) + " is not valid JSON: " + e.what(),
                std::string(what) + " must be valid JSON");
  }
}

}  // namespace amdprep
