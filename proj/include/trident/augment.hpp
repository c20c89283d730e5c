#pragma once

// Stochastic train-time augmentation operators for images and gene-count
// vectors. Every operator preserves the input shape and draws all of its
// randomness from an explicit RngStream.

#include "trident/image.hpp"
#include "trident/types.hpp"

#include <array>

namespace trident {

struct ImageAugmentConfig {
  double flip_prob = 1.0;
  std::array<double, 2> crop_scale_range = {0.75, 1.0};  // fraction of area
  double gaussian_noise_prob = 0.3;
  double gaussian_noise_std = 0.05;  // normalized-pixel units
  int gaussian_noise_grid = 0;       // 0 = per-pixel; g > 0 = smooth g x g field
  double rotation_prob = 0.4;
  bool rotation_right_angles = true;  // false: arbitrary angle, reflect padding
  double solarize_prob = 0.3;
  double solarize_threshold = 0.5;
  double color_jitter_prob = 1.0;
  double brightness_delta = 0.4;
  double contrast_delta = 0.4;
  double saturation_delta = 0.4;
  double hue_delta = 0.1;

  /// Identity configuration: every probability zero, crop pinned to scale 1.
  static ImageAugmentConfig disabled();
  /// Gaussian noise only, at the given std; used by the synthetic runs where
  /// the noise level defines the weak-feature threshold.
  static ImageAugmentConfig noise_only(double noise_std, int grid = 0);

  void validate() const;
};

struct GeneAugmentConfig {
  std::array<double, 2> mask_prob_range = {0.0, 0.2};
  std::array<double, 2> shuffle_prob_range = {0.0, 0.1};
  bool gaussian_noise = true;  // N(0, 1) on every entry; test hook only

  static GeneAugmentConfig disabled();

  void validate() const;
};

/// Side lengths of the square-aspect crop window for an area fraction.
std::pair<int, int> crop_geometry(int height, int width, double scale);

/// Applies, in fixed order, flip, crop-resize, noise, rotation, solarize and
/// colour jitter, each gated by its probability; output is clipped to [0, 1].
Image augment_image(const Image& img, const ImageAugmentConfig& cfg, RngStream& rng);

/// Masks genes with a per-call probability drawn from mask_prob_range,
/// shuffles a random subset among themselves, then adds unit-variance noise.
VecF augment_counts(const VecF& counts, const GeneAugmentConfig& cfg, RngStream& rng);

/// Exact identity; the evaluation-path transform.
template <class T>
const T& identity_eval_transform(const T& x) {
  return x;
}

}  // namespace trident
