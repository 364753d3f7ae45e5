#include <doctest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "vitas/grad_check.hpp"
#include "vitas/pafm.hpp"

using namespace vitas;
using vitas::testing::bit_equal;
using vitas::testing::max_abs_diff;
using vitas::testing::probe_loss;
using vitas::testing::random_tensor;

namespace {

template <typename T>
void set_identity(const Linear<T>& lin) {
  auto w = lin.weight().value().mutable_values();
  std::fill(w.begin(), w.end(), T(0));
  for (std::int64_t i = 0; i < lin.out_features(); ++i) w[static_cast<std::size_t>(i * lin.in_features() + i)] = T(1);
  auto b = lin.bias().value().mutable_values();
  std::fill(b.begin(), b.end(), T(0));
}

template <typename T>
void set_zero(const Linear<T>& lin) {
  for (auto* p : {&lin.weight(), &lin.bias()}) {
    auto v = p->value().mutable_values();
    std::fill(v.begin(), v.end(), T(0));
  }
}

template <typename T>
void set_bias(const Linear<T>& lin, T value) {
  set_zero(lin);
  auto b = lin.bias().value().mutable_values();
  std::fill(b.begin(), b.end(), value);
}

// Pixel-to-patch masked dense attention written from scratch: key p scores
// every fine pixel j of the full map, pixels outside patch p get -inf, and the
// softmax runs over all 4N pixels. Returns A [N, 4N] with pixels ordered by
// patch then slot.
std::vector<double> masked_dense_weights(const Tensor<double>& q, const Tensor<double>& k) {
  const auto n = q.dim(0), c = q.dim(2);
  std::vector<double> a(static_cast<std::size_t>(n * 4 * n));
  for (std::int64_t p = 0; p < n; ++p) {
    std::vector<double> s(static_cast<std::size_t>(4 * n));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < 4 * n; ++j) {
      if (j / 4 != p) {
        s[static_cast<std::size_t>(j)] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double dot = 0;
      for (std::int64_t ch = 0; ch < c; ++ch) dot += q.at({j / 4, j % 4, ch}) * k.at({p, 0, ch});
      s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(c));
      mx = std::max(mx, s[static_cast<std::size_t>(j)]);
    }
    double z = 0;
    for (auto& v : s) {
      v = std::exp(v - mx);
      z += v;
    }
    for (std::int64_t j = 0; j < 4 * n; ++j) a[static_cast<std::size_t>(p * 4 * n + j)] = s[static_cast<std::size_t>(j)] / z;
  }
  return a;
}

}  // namespace

TEST_CASE("group_patches orders slots TL, TR, BL, BR and ungroup inverts it") {
  std::vector<float> v(2 * 4 * 6);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  Tensor<float> fine({2, 4, 6}, v);
  auto g = group_patches(fine);
  CHECK(g.shape() == Shape{6, 4, 2});
  // Patch (py=1, px=2) covers rows 2..3, cols 4..5.
  const std::int64_t p = 1 * 3 + 2;
  for (std::int64_t ch = 0; ch < 2; ++ch) {
    CHECK(g.at({p, 0, ch}) == fine.at({ch, 2, 4}));
    CHECK(g.at({p, 1, ch}) == fine.at({ch, 2, 5}));
    CHECK(g.at({p, 2, ch}) == fine.at({ch, 3, 4}));
    CHECK(g.at({p, 3, ch}) == fine.at({ch, 3, 5}));
  }
  Rng rng(2);
  auto x = random_tensor<float>({3, 6, 8}, rng);
  CHECK(bit_equal(ungroup_patches(group_patches(x), 3, 4), x));
  CHECK_THROWS_AS(group_patches(random_tensor<float>({3, 5, 8}, rng)), ShapeError);
}

TEST_CASE("identity projections reproduce the fine map in grouped layout") {
  ParameterSet<float> ps;
  Rng rng(1);
  Pafm<float> pafm(ps, "pafm", 4, 4, rng);
  set_identity(pafm.q_proj());
  set_identity(pafm.vd_proj());
  set_identity(pafm.k_proj());
  Rng data(2);
  auto coarse = random_tensor<float>({4, 2, 3}, data);
  auto fine = random_tensor<float>({4, 4, 6}, data);
  auto s = pafm.project(coarse, fine);
  auto g = group_patches(fine);
  CHECK(bit_equal(s.q, g));
  CHECK(bit_equal(s.v_d, g));
  for (std::int64_t p = 0; p < 6; ++p)
    for (std::int64_t ch = 0; ch < 4; ++ch) CHECK(s.k.at({p, 0, ch}) == coarse.at({ch, p / 3, p % 3}));
}

TEST_CASE("slot-constant queries give uniform local weights") {
  ParameterSet<float> ps;
  Rng rng(1);
  Pafm<float> pafm(ps, "pafm", 6, 4, rng);
  Rng data(2);
  auto coarse = random_tensor<float>({6, 2, 2}, data);
  auto base = random_tensor<float>({4, 2, 2}, data);
  // Nearest-neighbour doubling makes every 2x2 block constant.
  std::vector<float> v(static_cast<std::size_t>(4 * 4 * 4));
  for (std::int64_t ch = 0; ch < 4; ++ch)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < 4; ++x) v[static_cast<std::size_t>((ch * 4 + y) * 4 + x)] = base.at({ch, y / 2, x / 2});
  auto s = pafm.project(coarse, Tensor<float>({4, 4, 4}, v));
  pafm.local_patch_attention(s);
  for (auto w : s.w_local.values()) CHECK(w == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("local weights sum to one at every position") {
  ParameterSet<float> ps;
  Rng rng(4);
  Pafm<float> pafm(ps, "pafm", 8, 8, rng);
  Rng data(5);
  auto s = pafm.project(random_tensor<float>({8, 3, 5}, data, -3, 3), random_tensor<float>({8, 6, 10}, data, -3, 3));
  pafm.local_patch_attention(s);
  for (std::int64_t p = 0; p < 15; ++p) {
    double sum = 0;
    for (std::int64_t t = 0; t < 4; ++t) sum += s.w_local.at({p, t, 0});
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("local patch attention equals masked dense attention") {
  Rng data(9);
  for (std::int64_t h = 1; h <= 4; ++h)
    for (std::int64_t w = 1; h * w <= 4; ++w)
      for (std::int64_t c : {1, 2, 8}) {
        const auto n = h * w;
        auto q = random_tensor<double>({n, 4, c}, data, -2, 2);
        auto k = random_tensor<double>({n, 1, c}, data, -2, 2);
        auto vd = random_tensor<double>({n, 4, c}, data);
        auto local = local_patch_attention_apply(q, k, vd);
        auto a = masked_dense_weights(q, k);
        double worst = 0;
        for (std::int64_t p = 0; p < n; ++p)
          for (std::int64_t j = 0; j < 4 * n; ++j) {
            const double weight = a[static_cast<std::size_t>(p * 4 * n + j)];
            if (j / 4 != p) {
              CHECK(weight == 0.0);
              continue;
            }
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const double expect = weight * vd.at({p, j % 4, ch});
              worst = std::max(worst, std::abs(local.at({p, j % 4, ch}) - expect));
            }
          }
        CHECK(worst < 1e-12);
      }
}

TEST_CASE("zero gate MLPs give w_G = 0.5; a large spatial bias saturates it") {
  ParameterSet<float> ps;
  Rng rng(3);
  Pafm<float> pafm(ps, "pafm", 4, 4, rng);
  Rng data(4);
  auto coarse = random_tensor<float>({4, 2, 2}, data);
  auto fine = random_tensor<float>({4, 4, 4}, data);
  set_zero(pafm.spatial_fc2());
  set_zero(pafm.context_fc2());
  auto s = pafm.project(coarse, fine);
  pafm.quasi_global_attention(s);
  CHECK(s.w_global.shape() == Shape{4, 1, 4});
  for (auto v : s.w_global.values()) CHECK(v == 0.5f);
  set_bias(pafm.spatial_fc2(), 50.0f);
  pafm.quasi_global_attention(s);
  for (auto v : s.w_global.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fusion limits: w_G = 1 keeps V_F, w_G = 0 keeps 4 w_L V_D") {
  Rng data(6);
  const std::int64_t n = 6, c = 3;
  PatchAttentionState<double> s;
  s.h = 2;
  s.w = 3;
  s.channels = c;
  s.v_d = random_tensor<double>({n, 4, c}, data);
  s.v_f = random_tensor<double>({n, 1, c}, data);
  auto logits = random_tensor<double>({n, 4, 1}, data);
  s.w_local = ops::softmax(logits, 1);
  ParameterSet<double> ps;
  Rng rng(1);
  Pafm<double> pafm(ps, "pafm", c, c, rng);

  s.w_global = Tensor<double>({n, 1, c}, 1.0);
  pafm.fuse(s);
  for (std::int64_t p = 0; p < n; ++p)
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t ch = 0; ch < c; ++ch) CHECK(s.fused.at({p, t, ch}) == s.v_f.at({p, 0, ch}));

  s.w_global = Tensor<double>({n, 1, c}, 0.0);
  pafm.fuse(s);
  for (std::int64_t p = 0; p < n; ++p)
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double expect = 4.0 * s.w_local.at({p, t, 0}) * s.v_d.at({p, t, ch});
        CHECK(std::abs(s.fused.at({p, t, ch}) - expect) < 1e-15);
      }
}

TEST_CASE("fusion coefficients sum to 4 over each patch") {
  ParameterSet<float> ps;
  Rng rng(8);
  Pafm<float> pafm(ps, "pafm", 8, 4, rng);
  Rng data(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = pafm.project(random_tensor<float>({8, 2, 3}, data, -2, 2), random_tensor<float>({4, 4, 6}, data, -2, 2));
    pafm.local_patch_attention(s);
    pafm.quasi_global_attention(s);
    for (std::int64_t p = 0; p < 6; ++p)
      for (std::int64_t ch = 0; ch < 4; ++ch) {
        const double g = s.w_global.at({p, 0, ch});
        double local = 0;
        for (std::int64_t t = 0; t < 4; ++t) local += s.w_local.at({p, t, 0}) * (1.0 - g);
        CHECK(std::abs(4.0 * g + 4.0 * local - 4.0) < 1e-5);
      }
  }
}

TEST_CASE("a zeroed output branch leaves the fine map untouched") {
  ParameterSet<float> ps;
  Rng rng(3);
  Pafm<float> pafm(ps, "pafm", 4, 4, rng);
  set_zero(pafm.out_proj());
  auto gamma = ps.find("pafm.norm.weight")->value().mutable_values();
  std::fill(gamma.begin(), gamma.end(), 0.0f);
  Rng data(4);
  auto fine = random_tensor<float>({4, 4, 6}, data);
  auto out = pafm.forward(random_tensor<float>({4, 2, 3}, data), fine);
  CHECK(bit_equal(out, fine));
}

TEST_CASE("pafm validates its operands") {
  ParameterSet<float> ps;
  Rng rng(3);
  Pafm<float> pafm(ps, "pafm", 4, 2, rng);
  Rng data(4);
  CHECK_THROWS_AS(pafm.forward(random_tensor<float>({4, 2, 3}, data), random_tensor<float>({2, 4, 5}, data)), ShapeError);
  CHECK_THROWS_AS(pafm.forward(random_tensor<float>({3, 2, 3}, data), random_tensor<float>({2, 4, 6}, data)), ShapeError);
  CHECK_THROWS_AS(pafm.forward(random_tensor<float>({4, 2, 3}, data), random_tensor<float>({3, 4, 6}, data)), ShapeError);
}

TEST_CASE("parameter count matches the closed form") {
  for (auto [ci, c] : {std::pair<std::int64_t, std::int64_t>{8, 8}, {16, 4}, {3, 2}, {64, 48}}) {
    ParameterSet<float> ps;
    Rng rng(1);
    Pafm<float> pafm(ps, "pafm", ci, c, rng);
    CHECK(ps.element_count() == Pafm<float>::parameter_count(ci, c));
  }
}

TEST_CASE("analytic flop counts match the instrumented op counters") {
  Rng data(5);
  for (auto [h, w, c] : {std::tuple<std::int64_t, std::int64_t, std::int64_t>{2, 2, 4}, {3, 5, 8}, {4, 4, 1}}) {
    const auto n = h * w;
    auto q = random_tensor<float>({n, 4, c}, data);
    auto k = random_tensor<float>({n, 1, c}, data);
    auto vd = random_tensor<float>({n, 4, c}, data);
    const auto expected = pafm_flop_count(h, w, c);
    {
      OpCounterScope scope;
      local_patch_attention_apply(q, k, vd);
      CHECK(scope.counted().total() == expected.local);
    }
    {
      OpCounterScope scope;
      dense_attention_apply(q, k, vd);
      CHECK(scope.counted().total() == expected.dense);
    }
  }
  const auto a = pafm_flop_count(4, 4, 8), b = pafm_flop_count(4, 8, 8);
  CHECK(static_cast<double>(b.local) / static_cast<double>(a.local) == 2.0);
  CHECK(static_cast<double>(b.dense) / static_cast<double>(a.dense) == 4.0);
}

TEST_CASE("pafm passes the 64-bit gradient check") {
  ParameterSet<double> ps;
  Rng rng(13);
  Pafm<double> pafm(ps, "pafm", 6, 4, rng);
  Rng data(14);
  auto coarse = random_tensor<double>({6, 2, 2}, data);
  auto fine = random_tensor<double>({4, 4, 4}, data);
  coarse.set_requires_grad(true);
  fine.set_requires_grad(true);
  auto loss = [&] { return probe_loss(pafm.forward(coarse, fine)); };
  CHECK(grad_check(ps, loss).max_rel_error < 1e-3);
  CHECK(grad_check({{"coarse", coarse}, {"fine", fine}}, loss).max_rel_error < 1e-3);
}
