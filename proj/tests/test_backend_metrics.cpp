#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vitas/backend.hpp"
#include "vitas/grad_check.hpp"
#include "vitas/metrics.hpp"

using namespace vitas;
using vitas::testing::probe_loss;
using vitas::testing::random_tensor;

namespace {

// right(y, x) = left(y, x + s), zero beyond the border.
template <typename T>
Tensor<T> shift_left_by(const Tensor<T>& f, std::int64_t s) {
  const auto c = f.dim(0), h = f.dim(1), w = f.dim(2);
  std::vector<T> v(static_cast<std::size_t>(c * h * w), T(0));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x + s < w; ++x) v[static_cast<std::size_t>((ch * h + y) * w + x)] = f.at({ch, y, x + s});
  return Tensor<T>(f.shape(), std::move(v));
}

DisparityMap map_of(std::vector<float> values) {
  DisparityMap m(1, static_cast<std::int64_t>(values.size()));
  m.values = std::move(values);
  return m;
}

}  // namespace

TEST_CASE("cost volume recovers a constructed one-pixel quarter-res shift") {
  Rng data(1);
  auto left = random_tensor<float>({16, 4, 12}, data);
  auto right = shift_left_by(left, 1);
  auto vol = build_cost_volume(left, right, 16);
  CHECK(vol.shape() == Shape{5, 4, 12});
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 1; x < 11; ++x) {
      int best = 0;
      for (int d = 1; d < 5; ++d)
        if (vol.at({d, y, x}) > vol.at({best, y, x})) best = d;
      CHECK(best == 1);
    }
  // Soft-argmin with the default inverse temperature stays within 0.25 px.
  ParameterSet<float> ps;
  StereoBackend<float> backend(ps, "backend", 16);
  const float t = std::exp(backend.log_temperature().value().item());
  auto disp = soft_argmin(ops::scale(vol, t));
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 4; x < 11; ++x) CHECK(std::abs(disp.at({y, x}) - 1.0f) < 0.25f);
}

TEST_CASE("d=0 plane is the eps-regularized cosine of aligned features") {
  Rng data(2);
  auto left = random_tensor<double>({5, 3, 4}, data);
  auto right = random_tensor<double>({5, 3, 4}, data);
  auto vol = build_cost_volume(left, right, 8);
  for (std::int64_t y = 0; y < 3; ++y)
    for (std::int64_t x = 0; x < 4; ++x) {
      double dot = 0, nl = 0, nr = 0;
      for (std::int64_t c = 0; c < 5; ++c) {
        dot += left.at({c, y, x}) * right.at({c, y, x});
        nl += left.at({c, y, x}) * left.at({c, y, x});
        nr += right.at({c, y, x}) * right.at({c, y, x});
      }
      CHECK(vol.at({0, y, x}) == doctest::Approx(dot / std::sqrt((nl + 1e-6) * (nr + 1e-6))).epsilon(1e-12));
    }
}

TEST_CASE("masked shifts never win the argmax") {
  Rng data(3);
  auto left = random_tensor<float>({4, 2, 6}, data);
  auto vol = build_cost_volume(left, left, 16);
  for (std::int64_t y = 0; y < 2; ++y)
    for (std::int64_t x = 0; x < 6; ++x)
      for (int d = 0; d < 5; ++d) {
        if (x < d) {
          CHECK(vol.at({d, y, x}) <= kMaskedCost + 1.0);
          CHECK(vol.at({d, y, x}) < vol.at({0, y, x}));
        } else {
          CHECK(vol.at({d, y, x}) >= -1.0 - 1e-5);
        }
      }
  CHECK_THROWS_AS(build_cost_volume(left, left, 6), std::invalid_argument);
}

TEST_CASE("soft-argmin of delta and uniform volumes") {
  const std::int64_t d = 5;
  std::vector<double> v(static_cast<std::size_t>(d * 2), -1e4);
  v[3 * 2 + 0] = 0.0;  // pixel 0 peaks at 3
  v[1 * 2 + 1] = 0.0;  // pixel 1 peaks at 1
  auto out = soft_argmin(Tensor<double>({d, 1, 2}, v));
  CHECK(out.at({0, 0}) == doctest::Approx(3.0));
  CHECK(out.at({0, 1}) == doctest::Approx(1.0));
  auto uniform = soft_argmin(Tensor<double>({d, 2, 2}, 0.7));
  for (auto x : uniform.values()) CHECK(x == doctest::Approx(2.0));
}

TEST_CASE("soft-argmin matches a direct expectation and stays in [0, D]") {
  Rng data(4);
  auto vol = random_tensor<double>({9, 3, 3}, data, -20, 20);
  auto out = soft_argmin(vol);
  for (std::int64_t y = 0; y < 3; ++y)
    for (std::int64_t x = 0; x < 3; ++x) {
      double mx = -1e300, z = 0, e = 0;
      for (int k = 0; k < 9; ++k) mx = std::max(mx, vol.at({k, y, x}));
      for (int k = 0; k < 9; ++k) {
        const double p = std::exp(vol.at({k, y, x}) - mx);
        z += p;
        e += k * p;
      }
      CHECK(out.at({y, x}) == doctest::Approx(e / z).epsilon(1e-12));
      CHECK(out.at({y, x}) >= 0.0);
      CHECK(out.at({y, x}) <= 8.0);
    }
}

TEST_CASE("upsampling scales values by 4 and dims by 4") {
  auto up = upsample_disparity(Tensor<float>({16, 32}, 1.5f));
  CHECK(up.shape() == Shape{64, 128});
  for (auto v : up.values()) CHECK(v == 6.0f);
}

TEST_CASE("disparity loss closed forms") {
  auto gt = map_of({1.0f});
  CHECK(disparity_loss(Tensor<double>({1, 1}, 1.0), gt).item() == 0.0);
  CHECK(disparity_loss(Tensor<double>({1, 1}, 1.5), gt).item() == doctest::Approx(0.125));
  CHECK(disparity_loss(Tensor<double>({1, 1}, 3.0), gt).item() == doctest::Approx(1.5));
  auto masked = map_of({0.0f, 10.0f});
  masked.valid[1] = 0;
  CHECK(disparity_loss(Tensor<double>({1, 2}, 0.0), masked).item() == 0.0);
  CHECK_THROWS_AS(disparity_loss(Tensor<double>({2, 1}, 0.0), masked), ShapeError);
}

TEST_CASE("backend output is full resolution and gradient reaches both feature maps") {
  ParameterSet<double> ps;
  StereoBackend<double> backend(ps, "backend", 8);
  Rng data(5);
  auto l = random_tensor<double>({4, 2, 4}, data), r = random_tensor<double>({4, 2, 4}, data);
  l.set_requires_grad(true);
  r.set_requires_grad(true);
  auto pred = backend.forward(l, r);
  CHECK(pred.shape() == Shape{8, 16});
  DisparityMap gt(8, 16, 2.0f);
  auto loss = [&] { return disparity_loss(backend.forward(l, r), gt); };
  loss().backward();
  for (const auto* t : {&l, &r}) {
    double g = 0;
    for (auto v : t->grad()) g += std::abs(v);
    CHECK(g > 0);
  }
  CHECK(grad_check({{"left", l}, {"right", r}}, loss).max_rel_error < 1e-3);
  CHECK(grad_check(ps, loss).max_rel_error < 1e-3);
}

TEST_CASE("metric definitions on hand-made examples") {
  auto gt = map_of({0, 0, 0});
  auto r = compute_metrics(map_of({1, 2, 3}), gt);
  CHECK(r.epe == 2.0);
  CHECK(r.valid_count == 3);

  auto r2 = compute_metrics(map_of({0.5f, 2.0f, 3.5f, 10.0f}), map_of({0, 0, 0, 0}), {3.0});
  CHECK(r2.pep.at(3.0) == 50.0);

  auto r3 = compute_metrics(map_of({96}), map_of({100}));
  CHECK(r3.pep.at(3.0) == 100.0);
  CHECK(r3.d1 == 0.0);
  auto r4 = compute_metrics(map_of({90}), map_of({100}));
  CHECK(r4.d1 == 100.0);
}

TEST_CASE("metrics skip invalid pixels and reject empty masks and size mismatches") {
  auto gt = map_of({1, 1, 1});
  gt.valid[2] = 0;
  auto r = compute_metrics(map_of({2, 3, 100}), gt);
  CHECK(r.epe == 1.5);
  CHECK(r.valid_count == 2);
  std::fill(gt.valid.begin(), gt.valid.end(), 0);
  CHECK_THROWS_AS(compute_metrics(map_of({2, 3, 100}), gt), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics(map_of({2, 3}), map_of({1, 1, 1})), std::invalid_argument);
}

TEST_CASE("pep is non-increasing in delta and d1 never exceeds pep(3)") {
  Rng rng(7);
  std::uniform_real_distribution<float> u(0, 40), e(-8, 8);
  for (int trial = 0; trial < 200; ++trial) {
    DisparityMap gt(4, 8), pred(4, 8);
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
      gt.values[i] = u(rng);
      pred.values[i] = gt.values[i] + e(rng);
      gt.valid[i] = (i % 5) != 0;
    }
    auto r = compute_metrics(pred, gt);
    double prev = 100.0;
    for (auto [delta, pct] : r.pep) {
      CHECK(pct <= prev);
      CHECK(pct >= 0.0);
      prev = pct;
    }
    CHECK(r.d1 <= r.pep.at(3.0));
  }
}

TEST_CASE("pooled metrics weight samples by valid pixel count") {
  Rng rng(8);
  std::uniform_real_distribution<float> u(0, 20), e(-6, 6);
  MetricAccumulator acc;
  double abs_sum = 0;
  std::int64_t n = 0, over3 = 0;
  for (std::int64_t s = 0; s < 3; ++s) {
    DisparityMap gt(2 + s, 5), pred(2 + s, 5);
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
      gt.values[i] = u(rng);
      pred.values[i] = gt.values[i] + e(rng);
      gt.valid[i] = (i + static_cast<std::size_t>(s)) % 3 != 0;
      if (gt.valid[i]) {
        const double err = std::abs(static_cast<double>(pred.values[i]) - gt.values[i]);
        abs_sum += err;
        over3 += err > 3.0;
        ++n;
      }
    }
    acc.add(pred, gt);
  }
  auto r = acc.report();
  CHECK(r.valid_count == n);
  CHECK(r.epe == doctest::Approx(abs_sum / static_cast<double>(n)).epsilon(1e-12));
  CHECK(r.pep.at(3.0) == doctest::Approx(100.0 * static_cast<double>(over3) / static_cast<double>(n)));
}
