#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ctt/tensor.hpp"

namespace ctt {

struct SampleRecord {
  std::string id;
  Tensor hor_image;  // [H,W] in [0,1]
  Tensor ver_image;  // same extents
  double pre_va = 0.0;
  double post_va = 0.0;
};

inline constexpr double kVaMax = 1.5;
inline constexpr const char* kManifestHeader = "id,hor_path,ver_path,pre_va,post_va";

// Parses a CSV manifest (header exactly id,hor_path,ver_path,pre_va,post_va)
// and loads both view images, resized to the target extents. Image paths are
// resolved relative to the manifest's directory. Malformed rows, out-of-range
// VA values, duplicate ids and missing images raise DataError naming the
// data row (first data row is row 1).
std::vector<SampleRecord> load_manifest(const std::filesystem::path& manifest_path,
                                        std::size_t image_h, std::size_t image_w);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic k-fold partition of n indices: a seeded shuffle dealt into k
// folds whose sizes differ by at most one; fold i's test set is fold i,
// its train set everything else.
std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k,
                                   std::uint64_t seed);

}  // namespace ctt
