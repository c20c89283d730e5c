#pragma once

#include "trident/types.hpp"

#include <Eigen/Dense>

namespace trident {

/// Dense H x W x C image, interleaved channels, float pixels. The library
/// keeps pixel values in [0, 1] unless an operation states otherwise.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  Eigen::ArrayXf data;  // (y * width + x) * channels + c

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c), data(Eigen::ArrayXf::Zero(h * w * c)) {}

  float& at(int y, int x, int c) { return data[(y * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(y * width + x) * channels + c]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

/// Bilinear resample to (out_h, out_w) with half-pixel centers; an identity
/// shape maps each pixel onto itself exactly.
Image resize_bilinear(const Image& src, int out_h, int out_w);

}  // namespace trident
