#include "vitas/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace vitas {

MetricAccumulator::MetricAccumulator(std::vector<double> deltas)
    : deltas_(std::move(deltas)), over_(deltas_.size(), 0) {}

void MetricAccumulator::add(const DisparityMap& pred, const DisparityMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("metrics: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                                " vs gt " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double g = gt.values[i];
    const double err = std::abs(static_cast<double>(pred.values[i]) - g);
    abs_sum_ += err;
    for (std::size_t k = 0; k < deltas_.size(); ++k) over_[k] += err > deltas_[k] ? 1 : 0;
    d1_ += (err > 3.0 && err > 0.05 * std::abs(g)) ? 1 : 0;
    ++count_;
  }
}

MetricReport MetricAccumulator::report() const {
  if (count_ == 0) throw std::invalid_argument("metrics: no valid ground-truth pixels");
  MetricReport r;
  const double n = static_cast<double>(count_);
  r.valid_count = count_;
  r.epe = abs_sum_ / n;
  for (std::size_t k = 0; k < deltas_.size(); ++k) r.pep[deltas_[k]] = 100.0 * static_cast<double>(over_[k]) / n;
  r.d1 = 100.0 * static_cast<double>(d1_) / n;
  return r;
}

MetricReport compute_metrics(const DisparityMap& pred, const DisparityMap& gt, const std::vector<double>& deltas) {
  MetricAccumulator acc(deltas);
  acc.add(pred, gt);
  return acc.report();
}

}  // namespace vitas
