#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vitas/nn.hpp"

namespace vitas {

struct GradCheckOptions {
  double eps = 1e-4;
  /// Elements probed per leaf; <= 0 probes all of them. Probed indices are
  /// drawn deterministically from `seed` when sampling.
  std::int64_t max_elements_per_leaf = 0;
  std::uint64_t seed = 0;
  /// Denominator floor, so gradients below it are compared absolutely.
  double abs_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_leaf;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t elements_checked = 0;
};

struct GradLeaf {
  std::string name;
  Tensor<double> tensor;
};

/// Central finite differences against the tape gradient for every probed
/// element of each leaf. Runs in 64-bit; `loss` must rebuild the graph on
/// each call. Throws std::runtime_error on a non-finite loss.
GradCheckReport grad_check(const std::vector<GradLeaf>& leaves, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options = {});

/// Checks every non-frozen parameter of the set.
GradCheckReport grad_check(ParameterSet<double>& params, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options = {});

}  // namespace vitas
