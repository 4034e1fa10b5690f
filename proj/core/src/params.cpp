#include "ctt/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ctt {

Tensor ParameterStore::create(const std::string& path, Shape shape, Init init,
                              Rng& rng) {
  if (index_.count(path)) {
    throw std::logic_error("ParameterStore: duplicate parameter path " + path);
  }
  Tensor t(std::move(shape), 0.0, /*requires_grad=*/true);
  auto& v = t.mutable_values();
  switch (init.kind) {
    case Init::Kind::kZeros:
      break;
    case Init::Kind::kOnes:
      for (double& x : v) x = 1.0;
      break;
    case Init::Kind::kNormal:
      for (double& x : v) x = rng.normal(0.0, init.arg);
      break;
    case Init::Kind::kFanInUniform: {
      const double bound = 1.0 / std::sqrt(init.arg);
      for (double& x : v) x = rng.uniform(-bound, bound);
      break;
    }
  }
  index_[path] = ordered_.size();
  ordered_.emplace_back(path, t);
  return t;
}

bool ParameterStore::contains(const std::string& path) const {
  return index_.count(path) != 0;
}

Tensor& ParameterStore::at(const std::string& path) {
  auto it = index_.find(path);
  if (it == index_.end()) {
    throw std::logic_error("ParameterStore: unknown parameter path " + path);
  }
  return ordered_[it->second].second;
}

const Tensor& ParameterStore::at(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) {
    throw std::logic_error("ParameterStore: unknown parameter path " + path);
  }
  return ordered_[it->second].second;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [path, t] : ordered_) n += t.size();
  return n;
}

std::size_t ParameterStore::elements_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [path, t] : ordered_) {
    if (path.rfind(prefix, 0) == 0) n += t.size();
  }
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& [path, t] : ordered_) t.zero_grad();
}

}  // namespace ctt
