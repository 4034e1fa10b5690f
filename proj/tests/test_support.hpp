#pragma once

// Shared helpers for the test suites: independent central-difference
// gradient oracle, random tensor builders, scratch directories.

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ctt/rng.hpp"
#include "ctt/tensor.hpp"

namespace ctt_test {

inline ctt::Tensor random_tensor(ctt::Shape shape, ctt::Rng& rng,
                                 bool requires_grad = true, double lo = -1.0,
                                 double hi = 1.0) {
  ctt::Tensor t(std::move(shape), 0.0, requires_grad);
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

inline double relative_error(double a, double b, double floor = 1e-3) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

// Central finite differences of `loss()` (a pure forward evaluation) with
// respect to every element of `inputs`, compared against the analytic
// gradients already accumulated on the tensors. Returns the max relative
// error over all elements.
inline double max_gradcheck_error(const std::function<double()>& loss,
                                  std::vector<ctt::Tensor> inputs,
                                  double h = 1e-5) {
  double worst = 0.0;
  for (ctt::Tensor& t : inputs) {
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.mutable_values()[i];
      t.mutable_values()[i] = saved + h;
      const double up = loss();
      t.mutable_values()[i] = saved - h;
      const double down = loss();
      t.mutable_values()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
  }
  return worst;
}

// Runs loss_expr under a fresh tape, backpropagates, then finite-differences
// each input. loss_expr must be a pure function of the inputs.
inline double gradcheck(const std::function<ctt::Tensor()>& loss_expr,
                        std::vector<ctt::Tensor> inputs, double h = 1e-5) {
  ctt::Tape tape;
  for (ctt::Tensor& t : inputs) t.zero_grad();
  {
    ctt::TapeScope scope(tape);
    ctt::Tensor loss = loss_expr();
    tape.backward(loss);
  }
  return max_gradcheck_error([&] { return loss_expr().at(0); },
                             std::move(inputs), h);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ctt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ctt_test
