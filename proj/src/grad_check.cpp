#include "vitas/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vitas {

namespace {

double evaluate(const std::function<Tensor<double>()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite (" + std::to_string(v) + ")");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::vector<GradLeaf>& leaves, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options) {
  for (const auto& leaf : leaves) {
    Tensor<double> t = leaf.tensor;
    t.zero_grad();
  }
  {
    Tensor<double> l = loss();
    if (!std::isfinite(l.item())) {
      throw std::runtime_error("grad_check: loss is not finite (" + std::to_string(l.item()) + ")");
    }
    l.backward();
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (const auto& leaf : leaves) {
    Tensor<double> t = leaf.tensor;
    const std::vector<double> analytic = t.grad();
    const auto n = t.numel();
    std::vector<std::int64_t> probe(static_cast<std::size_t>(n));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_elements_per_leaf > 0 && n > options.max_elements_per_leaf) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(static_cast<std::size_t>(options.max_elements_per_leaf));
      std::sort(probe.begin(), probe.end());
    }
    auto values = t.mutable_values();
    for (auto i : probe) {
      const double saved = values[static_cast<std::size_t>(i)];
      values[static_cast<std::size_t>(i)] = saved + options.eps;
      const double up = evaluate(loss);
      values[static_cast<std::size_t>(i)] = saved - options.eps;
      const double down = evaluate(loss);
      values[static_cast<std::size_t>(i)] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[static_cast<std::size_t>(i)];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.elements_checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_leaf = leaf.name;
          report.worst_index = i;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

GradCheckReport grad_check(ParameterSet<double>& params, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options) {
  std::vector<GradLeaf> leaves;
  for (auto& p : params.all()) {
    if (!p.frozen()) leaves.push_back({p.name(), p.value()});
  }
  return grad_check(leaves, loss, options);
}

}  // namespace vitas
