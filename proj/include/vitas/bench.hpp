#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

namespace vitas {

struct BenchRow {
  std::int64_t n = 0;  // coarse positions h * w
  std::int64_t h = 0, w = 0;
  std::uint64_t local_flops = 0;
  std::uint64_t dense_flops = 0;
  double local_seconds = 0.0;
  double dense_seconds = 0.0;
  double pafm_seconds = 0.0;  // full module forward on the tensor engine, 0 if skipped
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double analytic_local_slope = 0.0;
  double analytic_dense_slope = 0.0;
  double measured_local_slope = 0.0;
  double measured_dense_slope = 0.0;
  double measured_pafm_slope = 0.0;
};

struct BenchOptions {
  std::vector<std::int64_t> sizes;  // N values; grids are chosen near-square
  std::int64_t channels = 16;
  double min_seconds = 0.02;  // repeat each kernel until this much time has elapsed
  bool time_pafm = true;
  std::uint64_t seed = 0;
};

/// Powers of two 2^lo .. 2^hi.
std::vector<std::int64_t> power_of_two_sizes(int lo, int hi);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Times streaming float kernels for local patch attention and dense
/// coarse-to-fine attention; the dense kernel processes one score row at a
/// time so memory stays linear in N.
BenchReport run_attention_bench(const BenchOptions& options);

void write_bench_csv(std::ostream& os, const BenchReport& report);

/// Raw kernels, exposed for tests. q, v_d: [n, 4, c]; k: [n, c].
/// local out: [n, 4, c]; dense out: [n, c].
void local_attention_kernel(const float* q, const float* k, const float* v_d, float* out, std::int64_t n,
                            std::int64_t c);
void dense_attention_kernel(const float* q, const float* k, const float* v_d, float* out, std::int64_t n,
                            std::int64_t c);

}  // namespace vitas
