#pragma once

#include "cirnn/linalg.hpp"

#include <json.hpp>

#include <vector>

namespace cirnn::detail {

using json = nlohmann::json;

json matrix_to_json(const Mat& m);
Mat matrix_from_json(const json& j);
json vector_to_json(const Vec& v);
Vec vector_from_json(const json& j);
json matrices_to_json(const std::vector<Mat>& ms);
std::vector<Mat> matrices_from_json(const json& j);
json vectors_to_json(const std::vector<Vec>& vs);
std::vector<Vec> vectors_from_json(const json& j);

// Pretty-printed, trailing newline.
std::string dump(const json& j);

}  // namespace cirnn::detail
