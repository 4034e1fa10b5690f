#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctt/rng.hpp"
#include "ctt/tensor.hpp"

namespace ctt {

// Initialization recipe for a parameter tensor.
struct Init {
  enum class Kind { kZeros, kOnes, kNormal, kFanInUniform };
  Kind kind = Kind::kZeros;
  double arg = 0.0;  // sigma for kNormal, fan-in for kFanInUniform

  static Init zeros() { return {Kind::kZeros, 0.0}; }
  static Init ones() { return {Kind::kOnes, 0.0}; }
  static Init normal(double sigma) { return {Kind::kNormal, sigma}; }
  static Init fan_in_uniform(std::size_t fan_in) {
    return {Kind::kFanInUniform, static_cast<double>(fan_in)};
  }
};

// Registry of named learnable tensors. Registration order is the creation
// order in the model constructor; it fixes both the RNG draw sequence at
// initialization and the optimizer update order, so a (config, seed) pair
// fully determines every parameter value.
class ParameterStore {
 public:
  Tensor create(const std::string& path, Shape shape, Init init, Rng& rng);

  bool contains(const std::string& path) const;
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return ordered_;
  }
  std::size_t count() const { return ordered_.size(); }
  std::size_t total_elements() const;
  // Number of parameter elements whose path starts with `prefix`.
  std::size_t elements_with_prefix(const std::string& prefix) const;

  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> ordered_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ctt
