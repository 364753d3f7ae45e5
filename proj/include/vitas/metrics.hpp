#pragma once

#include <map>
#include <vector>

#include "vitas/disparity.hpp"

namespace vitas {

struct MetricReport {
  double epe = 0.0;              // mean |error| in pixels
  std::map<double, double> pep;  // delta -> percentage of pixels with |error| > delta
  double d1 = 0.0;               // percentage with |error| > 3 and > 5% of gt
  std::int64_t valid_count = 0;
};

inline const std::vector<double> kDefaultDeltas{1.0, 2.0, 3.0, 5.0};

/// Metrics over pixels valid in gt. Throws std::invalid_argument on a shape
/// mismatch or an empty valid mask.
MetricReport compute_metrics(const DisparityMap& pred, const DisparityMap& gt,
                             const std::vector<double>& deltas = kDefaultDeltas);

/// Pools raw counts over several samples; the result weights each sample by
/// its valid pixel count.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<double> deltas = kDefaultDeltas);
  void add(const DisparityMap& pred, const DisparityMap& gt);
  MetricReport report() const;
  std::int64_t valid_count() const { return count_; }

 private:
  std::vector<double> deltas_;
  double abs_sum_ = 0.0;
  std::vector<std::int64_t> over_;
  std::int64_t d1_ = 0, count_ = 0;
};

}  // namespace vitas
