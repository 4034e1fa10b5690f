#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctt/manifest.hpp"

namespace ctt {

// Paired-view dataset with a planted cross-view signal. Each sample draws
// latents u, v in [0,1]; the horizontal view renders a Gaussian blob whose
// x-position encodes u, the vertical view one whose y-position encodes v.
// The target mixes both latents and the preoperative VA, so no single view
// can reach the two-view error floor.
struct SyntheticConfig {
  std::size_t count = 512;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  double blob_sigma_fraction = 0.12;  // of image size
  double margin_fraction = 0.15;      // blob-center margin from the border
  double noise_sigma = 0.02;
  double coeff_u = 0.4;
  double coeff_v = 0.4;
  double coeff_pre = 0.3;
};

struct SyntheticSample {
  SampleRecord record;
  double u = 0.0;
  double v = 0.0;
  double noise = 0.0;
};

// post = clip(cu*u + cv*v + cp*pre + noise, 0, 1.5)
double planted_post_va(double u, double v, double pre_va, double noise,
                       const SyntheticConfig& cfg);

// Deterministic in cfg.seed: the same config yields byte-identical samples.
// Pixels are already quantized to the 8-bit grid, so in-memory training and
// a write/reload round trip see identical images.
std::vector<SyntheticSample> generate_synthetic(const SyntheticConfig& cfg);

// Writes images/<id>_{hor,ver}.pgm, manifest.csv and latents.csv under dir.
void write_synthetic_dataset(const std::filesystem::path& dir,
                             const std::vector<SyntheticSample>& samples);

std::vector<SampleRecord> strip_latents(const std::vector<SyntheticSample>& samples);

}  // namespace ctt
