#pragma once

#include "trident/image.hpp"
#include "trident/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace trident {

/// 8-bit PNG, grayscale or RGB depending on Image::channels (1 or 3).
/// Pixels are quantized as round(clamp(v, 0, 1) * 255).
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Quantize a float pixel onto the 8-bit grid PNG can represent, so that a
/// write/read round trip is exact.
inline float quantize_unit(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return std::round(clamped * 255.0f) / 255.0f;
}

/// Raw little-endian float32 matrix (`<base>.bin`) with a JSON sidecar
/// (`<base>.json`) holding shape, dtype and caller-provided metadata.
void write_matrix(const std::string& base_path, const RowMat& values, const nlohmann::json& meta);
RowMat read_matrix(const std::string& base_path, nlohmann::json* meta_out = nullptr);

/// Minimal CSV support; fields must not contain commas or newlines.
void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace trident
