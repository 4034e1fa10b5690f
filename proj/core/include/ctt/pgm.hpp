#pragma once

#include <filesystem>

#include "ctt/tensor.hpp"

namespace ctt {

// Reads a binary 8-bit PGM (magic P5, maxval 255) into an [H,W] tensor with
// values scaled to [0,1] by /255. Comments in the header are skipped. Any
// other magic, maxval, or a truncated payload raises DataError.
Tensor load_pgm(const std::filesystem::path& path);

// Writes an [H,W] image in [0,1]; values are clamped and rounded to 8 bits,
// so a save/load round trip moves each pixel by at most 1/255.
void save_pgm(const std::filesystem::path& path, const Tensor& image);

// Bilinear resample with half-pixel centers; resizing to the source extents
// is the bit-exact identity.
Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w);

// load_pgm followed by a resize to the target extents.
Tensor load_image(const std::filesystem::path& path, std::size_t target_h,
                  std::size_t target_w);

}  // namespace ctt
