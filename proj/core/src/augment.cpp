#include "ctt/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctt {

Tensor rotate_bilinear(const Tensor& image, double degrees) {
  if (image.rank() != 2) throw ShapeError("rotate_bilinear: image must be [H,W]");
  if (degrees == 0.0) return image;
  const std::size_t h = image.dim(0), w = image.dim(1);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse mapping: sample the source at the un-rotated position.
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = cy + c * dy + s * dx;
      const double sx = cx - s * dy + c * dx;
      double value = 0.0;
      if (sy >= 0.0 && sx >= 0.0 && sy <= static_cast<double>(h - 1) &&
          sx <= static_cast<double>(w - 1)) {
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t x0 = static_cast<std::size_t>(sx);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double wy = sy - static_cast<double>(y0);
        const double wx = sx - static_cast<double>(x0);
        const double top = image.at(y0 * w + x0) * (1.0 - wx) +
                           image.at(y0 * w + x1) * wx;
        const double bottom = image.at(y1 * w + x0) * (1.0 - wx) +
                              image.at(y1 * w + x1) * wx;
        value = top * (1.0 - wy) + bottom * wy;
      }
      out.mutable_values()[y * w + x] = value;
    }
  }
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.mutable_values()[y * w + x] = image.at((h - 1 - y) * w + x);
    }
  }
  return out;
}

Tensor mirror_horizontal(const Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.mutable_values()[y * w + x] = image.at(y * w + (w - 1 - x));
    }
  }
  return out;
}

SampleRecord augment(const SampleRecord& sample, const AugmentationPolicy& policy,
                     Rng& rng) {
  if (policy.is_identity()) return sample;

  // One draw set per sample; both views get the same transform.
  double angle = 0.0;
  bool do_flip = false, do_mirror = false;
  double brightness = 0.0, contrast = 1.0;
  if (policy.rotation_degrees != 0.0) {
    angle = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees);
  }
  if (policy.flip_probability != 0.0) {
    do_flip = rng.uniform() < policy.flip_probability;
  }
  if (policy.mirror_probability != 0.0) {
    do_mirror = rng.uniform() < policy.mirror_probability;
  }
  if (policy.brightness_range != 0.0) {
    brightness = rng.uniform(-policy.brightness_range, policy.brightness_range);
  }
  if (policy.contrast_range != 0.0) {
    contrast = rng.uniform(1.0 - policy.contrast_range, 1.0 + policy.contrast_range);
  }

  const auto apply = [&](const Tensor& image) {
    Tensor img = rotate_bilinear(image, angle);
    if (do_flip) img = flip_vertical(img);
    if (do_mirror) img = mirror_horizontal(img);
    if (brightness != 0.0 || contrast != 1.0) {
      Tensor adjusted(img.shape());
      for (std::size_t i = 0; i < img.size(); ++i) {
        adjusted.mutable_values()[i] =
            std::clamp(img.at(i) * contrast + brightness, 0.0, 1.0);
      }
      return adjusted;
    }
    return img;
  };

  SampleRecord out = sample;
  out.hor_image = apply(sample.hor_image);
  out.ver_image = apply(sample.ver_image);
  return out;
}

}  // namespace ctt
