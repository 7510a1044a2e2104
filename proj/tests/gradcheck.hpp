#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"

namespace factorgcn::testing {

/// Largest relative error between the reverse-mode gradient of `f` and a
/// central difference, over every element of every input.
inline double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                             double step = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& x : inputs) analytic.push_back(x.grad());

  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = f().item();
      values[i] = saved - step;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({1e-4, std::abs(numeric), std::abs(analytic[k][i])});
      worst = std::max(worst, std::abs(numeric - analytic[k][i]) / denom);
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1, bool grad = true) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

}  // namespace factorgcn::testing
