#pragma once

#include "cirnn/models.hpp"

#include <filesystem>
#include <string>

namespace cirnn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned JSON checkpoint: dims, activation, model kind and every weight
/// matrix as {"shape": [rows, cols], "data": [row-major values]}. Finite
/// values round-trip bit-exactly.
std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);

void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cirnn
