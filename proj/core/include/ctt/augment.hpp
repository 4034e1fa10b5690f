#pragma once

#include <cstdint>

#include "ctt/manifest.hpp"
#include "ctt/rng.hpp"
#include "ctt/tensor.hpp"

namespace ctt {

// Train-time augmentation. Rotation, flip (vertical axis) and mirror
// (horizontal axis) are drawn once per sample and applied identically to
// both views; brightness is additive, contrast multiplicative (the stand-in
// for gray-scale jitter on already-gray images), both followed by a clamp
// to [0,1]. An all-zero policy is the bit-exact identity.
struct AugmentationPolicy {
  double rotation_degrees = 0.0;
  double flip_probability = 0.0;
  double mirror_probability = 0.0;
  double brightness_range = 0.0;
  double contrast_range = 0.0;
  std::uint64_t seed = 0;

  bool is_identity() const {
    return rotation_degrees == 0.0 && flip_probability == 0.0 &&
           mirror_probability == 0.0 && brightness_range == 0.0 &&
           contrast_range == 0.0;
  }
};

SampleRecord augment(const SampleRecord& sample, const AugmentationPolicy& policy,
                     Rng& rng);

// Building blocks; exposed for tests.
Tensor rotate_bilinear(const Tensor& image, double degrees);  // zero fill outside
Tensor flip_vertical(const Tensor& image);                    // top <-> bottom
Tensor mirror_horizontal(const Tensor& image);                // left <-> right

}  // namespace ctt
