#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "vitas/nn.hpp"
#include "vitas/tensor.hpp"

namespace vitas::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = random_tensor<T>(std::move(shape), rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0.0;
  auto n = std::min<std::size_t>(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.values();
  auto y = b.values();
  return std::equal(x.begin(), x.end(), y.begin());
}

/// Fixed random projection of a tensor to a scalar, used as a generic loss.
template <typename T>
Tensor<T> probe_loss(const Tensor<T>& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = random_tensor<T>(x.shape(), rng);
  return ops::sum_all(ops::mul(x, w));
}

}  // namespace vitas::testing
