#include "vitas/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <stdexcept>

#include "vitas/pafm.hpp"

namespace vitas {

std::vector<std::int64_t> power_of_two_sizes(int lo, int hi) {
  std::vector<std::int64_t> out;
  for (int k = lo; k <= hi; ++k) out.push_back(std::int64_t{1} << k);
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 matched points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void local_attention_kernel(const float* q, const float* k, const float* v_d, float* out, std::int64_t n,
                            std::int64_t c) {
  const float inv = 1.0f / std::sqrt(static_cast<float>(c));
  for (std::int64_t p = 0; p < n; ++p) {
    const float* kp = k + p * c;
    float s[4];
    float mx = -INFINITY;
    for (int slot = 0; slot < 4; ++slot) {
      const float* qs = q + (p * 4 + slot) * c;
      float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
      for (std::int64_t ch = 0; ch < c; ++ch) acc += qs[ch] * kp[ch];
      s[slot] = acc * inv;
      mx = std::max(mx, s[slot]);
    }
    float z = 0.0f;
    for (float& v : s) z += (v = std::exp(v - mx));
    for (int slot = 0; slot < 4; ++slot) {
      const float wgt = s[slot] / z;
      const float* vs = v_d + (p * 4 + slot) * c;
      float* os = out + (p * 4 + slot) * c;
#pragma omp simd
      for (std::int64_t ch = 0; ch < c; ++ch) os[ch] = wgt * vs[ch];
    }
  }
}

void dense_attention_kernel(const float* q, const float* k, const float* v_d, float* out, std::int64_t n,
                            std::int64_t c) {
  const float inv = 1.0f / std::sqrt(static_cast<float>(c));
  const std::int64_t m = 4 * n;
  std::vector<float> row(static_cast<std::size_t>(m));
  for (std::int64_t j = 0; j < n; ++j) {
    const float* kj = k + j * c;
    float mx = -INFINITY;
    for (std::int64_t i = 0; i < m; ++i) {
      const float* qi = q + i * c;
      float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
      for (std::int64_t ch = 0; ch < c; ++ch) acc += qi[ch] * kj[ch];
      row[static_cast<std::size_t>(i)] = acc * inv;
      mx = std::max(mx, acc * inv);
    }
    float z = 0.0f;
    for (auto& v : row) z += (v = std::exp(v - mx));
    float* oj = out + j * c;
    std::fill(oj, oj + c, 0.0f);
    for (std::int64_t i = 0; i < m; ++i) {
      const float a = row[static_cast<std::size_t>(i)] / z;
      const float* vi = v_d + i * c;
#pragma omp simd
      for (std::int64_t ch = 0; ch < c; ++ch) oj[ch] += a * vi[ch];
    }
  }
}

namespace {

template <typename F>
double time_per_call(F&& fn, double min_seconds) {
  using clock = std::chrono::steady_clock;
  fn();  // warm-up
  std::int64_t reps = 0;
  const auto start = clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++reps;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(reps);
}

std::pair<std::int64_t, std::int64_t> near_square(std::int64_t n) {
  std::int64_t h = 1;
  while (h * h * 4 <= n && n % (h * 2) == 0) h *= 2;
  return {h, n / h};
}

}  // namespace

BenchReport run_attention_bench(const BenchOptions& o) {
  if (o.sizes.size() < 2) throw std::invalid_argument("bench: need at least two sizes");
  if (o.channels < 1) throw std::invalid_argument("bench: channels must be >= 1");
  BenchReport report;
  Rng rng(o.seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  const auto c = o.channels;
  for (auto n : o.sizes) {
    if (n < 1) throw std::invalid_argument("bench: sizes must be positive");
    BenchRow row;
    row.n = n;
    std::tie(row.h, row.w) = near_square(n);
    const auto flops = pafm_flop_count(row.h, row.w, c);
    row.local_flops = flops.local;
    row.dense_flops = flops.dense;
    std::vector<float> q(static_cast<std::size_t>(4 * n * c)), vd(q.size()), k(static_cast<std::size_t>(n * c));
    for (auto* buf : {&q, &vd, &k})
      for (auto& v : *buf) v = nd(rng);
    std::vector<float> out_local(q.size()), out_dense(k.size());
    row.local_seconds = time_per_call(
        [&] { local_attention_kernel(q.data(), k.data(), vd.data(), out_local.data(), n, c); }, o.min_seconds);
    row.dense_seconds = time_per_call(
        [&] { dense_attention_kernel(q.data(), k.data(), vd.data(), out_dense.data(), n, c); }, o.min_seconds);
    if (o.time_pafm) {
      ParameterSet<float> ps;
      Pafm<float> pafm(ps, "pafm", c, c, rng);
      Tensor<float> coarse({c, row.h, row.w});
      Tensor<float> fine({c, 2 * row.h, 2 * row.w});
      for (auto* t : {&coarse, &fine})
        for (auto& v : t->mutable_values()) v = nd(rng);
      NoGradGuard no_grad;
      row.pafm_seconds = time_per_call([&] { (void)pafm.forward(coarse, fine); }, o.min_seconds);
    }
    report.rows.push_back(row);
  }
  std::vector<double> ns, lf, df, lt, dt, pt;
  for (const auto& r : report.rows) {
    ns.push_back(static_cast<double>(r.n));
    lf.push_back(static_cast<double>(r.local_flops));
    df.push_back(static_cast<double>(r.dense_flops));
    lt.push_back(r.local_seconds);
    dt.push_back(r.dense_seconds);
    pt.push_back(r.pafm_seconds);
  }
  report.analytic_local_slope = loglog_slope(ns, lf);
  report.analytic_dense_slope = loglog_slope(ns, df);
  report.measured_local_slope = loglog_slope(ns, lt);
  report.measured_dense_slope = loglog_slope(ns, dt);
  if (o.time_pafm) report.measured_pafm_slope = loglog_slope(ns, pt);
  return report;
}

void write_bench_csv(std::ostream& os, const BenchReport& r) {
  os << "n,h,w,local_flops,dense_flops,local_seconds,dense_seconds,pafm_seconds\n";
  os << std::setprecision(6);
  for (const auto& row : r.rows) {
    os << row.n << ',' << row.h << ',' << row.w << ',' << row.local_flops << ',' << row.dense_flops << ','
       << row.local_seconds << ',' << row.dense_seconds << ',' << row.pafm_seconds << '\n';
  }
  os << "# slope,analytic_local," << r.analytic_local_slope << '\n';
  os << "# slope,analytic_dense," << r.analytic_dense_slope << '\n';
  os << "# slope,measured_local," << r.measured_local_slope << '\n';
  os << "# slope,measured_dense," << r.measured_dense_slope << '\n';
  os << "# slope,measured_pafm," << r.measured_pafm_slope << '\n';
}

}  // namespace vitas
