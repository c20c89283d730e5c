#include "trident/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace trident {

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (out_h == src.height && out_w == src.width) return src;
  Image dst(out_h, out_w, src.channels);
  const float sy = static_cast<float>(src.height) / static_cast<float>(out_h);
  const float sx = static_cast<float>(src.width) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < out_w; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < src.channels; ++c) {
        const float top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const float bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

ImageAugmentConfig ImageAugmentConfig::disabled() {
  ImageAugmentConfig cfg;
  cfg.flip_prob = 0.0;
  cfg.crop_scale_range = {1.0, 1.0};
  cfg.gaussian_noise_prob = 0.0;
  cfg.rotation_prob = 0.0;
  cfg.solarize_prob = 0.0;
  cfg.color_jitter_prob = 0.0;
  return cfg;
}

ImageAugmentConfig ImageAugmentConfig::noise_only(double noise_std, int grid) {
  ImageAugmentConfig cfg = disabled();
  cfg.gaussian_noise_prob = 1.0;
  cfg.gaussian_noise_std = noise_std;
  cfg.gaussian_noise_grid = grid;
  return cfg;
}

void ImageAugmentConfig::validate() const {
  auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(is_prob(flip_prob) && is_prob(gaussian_noise_prob) && is_prob(rotation_prob) &&
              is_prob(solarize_prob) && is_prob(color_jitter_prob),
          "ImageAugmentConfig: probabilities must lie in [0, 1]");
  require(crop_scale_range[0] > 0.0 && crop_scale_range[0] <= crop_scale_range[1] &&
              crop_scale_range[1] <= 1.0,
          "ImageAugmentConfig: crop_scale_range must be within (0, 1]");
  require(gaussian_noise_std >= 0.0, "ImageAugmentConfig: noise std must be >= 0");
  require(gaussian_noise_grid >= 0, "ImageAugmentConfig: noise grid must be >= 0");
}

GeneAugmentConfig GeneAugmentConfig::disabled() {
  GeneAugmentConfig cfg;
  cfg.mask_prob_range = {0.0, 0.0};
  cfg.shuffle_prob_range = {0.0, 0.0};
  cfg.gaussian_noise = false;
  return cfg;
}

void GeneAugmentConfig::validate() const {
  auto in_unit = [](const std::array<double, 2>& r) {
    return r[0] >= 0.0 && r[0] <= r[1] && r[1] <= 1.0;
  };
  require(in_unit(mask_prob_range) && in_unit(shuffle_prob_range),
          "GeneAugmentConfig: probability ranges must be within [0, 1]");
}

std::pair<int, int> crop_geometry(int height, int width, double scale) {
  const double side = std::sqrt(scale);
  const int h = std::max(1, static_cast<int>(std::floor(height * side)));
  const int w = std::max(1, static_cast<int>(std::floor(width * side)));
  return {h, w};
}

namespace {

Image flip(const Image& img, bool horizontal) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = horizontal ? img.at(y, img.width - 1 - x, c)
                                     : img.at(img.height - 1 - y, x, c);
  return out;
}

Image rotate_quarter(const Image& img, int quarters) {
  if (quarters % 4 == 0) return img;
  Image out = img;
  for (int q = 0; q < quarters % 4; ++q) {
    Image next(out.width, out.height, out.channels);  // 90 degrees clockwise
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < out.channels; ++c)
          next.at(x, out.height - 1 - y, c) = out.at(y, x, c);
    out = std::move(next);
  }
  return out;
}

// Arbitrary-angle rotation about the center with reflect padding.
Image rotate_free(const Image& img, double angle) {
  Image out(img.height, img.width, img.channels);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  auto reflect = [](double v, int size) {
    const double period = 2.0 * (size - 1);
    v = std::fmod(std::abs(v), period);
    return v <= size - 1 ? v : period - v;
  };
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double dy = y - cy, dx = x - cx;
      const double syf = reflect(cy + (ca * dy - sa * dx), img.height);
      const double sxf = reflect(cx + (sa * dy + ca * dx), img.width);
      const int y0 = static_cast<int>(syf), x0 = static_cast<int>(sxf);
      const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
      const double wy = syf - y0, wx = sxf - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  return out;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  const float d = mx - mn;
  s = mx == 0.0f ? 0.0f : d / mx;
  if (d == 0.0f) {
    h = 0.0f;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0f) / 6.0f;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0f) / 6.0f;
  } else {
    h = ((r - g) / d + 4.0f) / 6.0f;
  }
  if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  const float hh = h * 6.0f;
  const int i = static_cast<int>(hh) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void color_jitter(Image& img, const ImageAugmentConfig& cfg, RngStream& rng) {
  const float brightness = static_cast<float>(rng.uniform(-cfg.brightness_delta, cfg.brightness_delta));
  const float contrast = static_cast<float>(rng.uniform(-cfg.contrast_delta, cfg.contrast_delta));
  const float saturation = static_cast<float>(rng.uniform(-cfg.saturation_delta, cfg.saturation_delta));
  const float hue = static_cast<float>(rng.uniform(-cfg.hue_delta, cfg.hue_delta));

  const float mean = img.data.mean();
  img.data += brightness;
  img.data = mean + (img.data - mean) * (1.0f + contrast);

  if (img.channels != 3) return;  // saturation/hue are no-ops off RGB
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float h, s, v;
      float r = std::clamp(img.at(y, x, 0), 0.0f, 1.0f);
      float g = std::clamp(img.at(y, x, 1), 0.0f, 1.0f);
      float b = std::clamp(img.at(y, x, 2), 0.0f, 1.0f);
      rgb_to_hsv(r, g, b, h, s, v);
      s = std::clamp(s * (1.0f + saturation), 0.0f, 1.0f);
      h = h + hue;
      h -= std::floor(h);
      hsv_to_rgb(h, s, v, r, g, b);
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
}

void add_noise(Image& img, const ImageAugmentConfig& cfg, RngStream& rng) {
  if (cfg.gaussian_noise_grid <= 0) {
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
      img.data[i] += static_cast<float>(rng.normal(0.0, cfg.gaussian_noise_std));
    return;
  }
  // Smooth field: draw on a coarse grid, bilinearly upsample per channel.
  const int g = cfg.gaussian_noise_grid;
  Image field(g, g, img.channels);
  for (Eigen::Index i = 0; i < field.data.size(); ++i)
    field.data[i] = static_cast<float>(rng.normal(0.0, cfg.gaussian_noise_std));
  const Image up = resize_bilinear(field, img.height, img.width);
  img.data += up.data;
}

}  // namespace

Image augment_image(const Image& img, const ImageAugmentConfig& cfg, RngStream& rng) {
  cfg.validate();
  require(img.height >= 8 && img.width >= 8, "augment_image: image must be at least 8x8");
  require(img.channels >= 1, "augment_image: channel count must be >= 1");
  require((img.data >= 0.0f).all() && (img.data <= 1.0f).all(),
          "augment_image: pixel values must be normalized to [0, 1]");

  Image out = img;

  if (rng.bernoulli(cfg.flip_prob)) out = flip(out, rng.bernoulli(0.5));

  const double scale = rng.uniform(cfg.crop_scale_range[0], cfg.crop_scale_range[1]);
  const auto [crop_h, crop_w] = crop_geometry(img.height, img.width, scale);
  if (crop_h != img.height || crop_w != img.width) {
    const int y0 = static_cast<int>(rng.integer(img.height - crop_h + 1));
    const int x0 = static_cast<int>(rng.integer(img.width - crop_w + 1));
    Image crop(crop_h, crop_w, img.channels);
    for (int y = 0; y < crop_h; ++y)
      for (int x = 0; x < crop_w; ++x)
        for (int c = 0; c < img.channels; ++c) crop.at(y, x, c) = out.at(y0 + y, x0 + x, c);
    out = resize_bilinear(crop, img.height, img.width);
  }

  if (rng.bernoulli(cfg.gaussian_noise_prob)) add_noise(out, cfg, rng);

  if (rng.bernoulli(cfg.rotation_prob)) {
    if (cfg.rotation_right_angles) {
      // non-square inputs keep their shape by restricting to 180 degrees
      const int quarters = img.height == img.width ? 1 + static_cast<int>(rng.integer(3)) : 2;
      out = rotate_quarter(out, quarters);
    } else {
      out = rotate_free(out, rng.uniform(0.0, 6.283185307179586));
    }
  }

  if (rng.bernoulli(cfg.solarize_prob)) {
    for (Eigen::Index i = 0; i < out.data.size(); ++i)
      if (out.data[i] > cfg.solarize_threshold) out.data[i] = 1.0f - out.data[i];
  }

  if (rng.bernoulli(cfg.color_jitter_prob)) color_jitter(out, cfg, rng);

  out.data = out.data.cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

VecF augment_counts(const VecF& counts, const GeneAugmentConfig& cfg, RngStream& rng) {
  cfg.validate();
  require(counts.allFinite(), "augment_counts: non-finite count entry");

  const double p_mask = rng.uniform(cfg.mask_prob_range[0], cfg.mask_prob_range[1]);
  const double p_shuffle = rng.uniform(cfg.shuffle_prob_range[0], cfg.shuffle_prob_range[1]);

  VecF out = counts;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (rng.bernoulli(p_mask)) out[i] = 0.0f;

  std::vector<Eigen::Index> selected;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (rng.bernoulli(p_shuffle)) selected.push_back(i);
  if (selected.size() > 1) {
    std::vector<float> values;
    values.reserve(selected.size());
    for (Eigen::Index i : selected) values.push_back(out[i]);
    rng.shuffle(values);
    for (std::size_t k = 0; k < selected.size(); ++k) out[selected[k]] = values[k];
  }

  if (cfg.gaussian_noise)
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += static_cast<float>(rng.normal());
  return out;
}

}  // namespace trident
