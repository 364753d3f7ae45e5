#include "vitas/pafm.hpp"

#include <cmath>

namespace vitas {

namespace {

std::vector<std::int64_t> patch_index(std::int64_t c, std::int64_t h, std::int64_t w) {
  const std::int64_t fine_w = 2 * w, plane = 4 * h * w;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(h * w * 4 * c));
  std::size_t o = 0;
  for (std::int64_t py = 0; py < h; ++py)
    for (std::int64_t px = 0; px < w; ++px)
      for (std::int64_t slot = 0; slot < 4; ++slot) {
        const std::int64_t y = 2 * py + slot / 2, x = 2 * px + slot % 2;
        for (std::int64_t ch = 0; ch < c; ++ch) idx[o++] = ch * plane + y * fine_w + x;
      }
  return idx;
}

}  // namespace

template <typename T>
Tensor<T> group_patches(const Tensor<T>& fine) {
  if (fine.rank() != 3) throw ShapeError("group_patches: expected [c,2h,2w], got " + shape_string(fine.shape()));
  const auto c = fine.dim(0);
  if (fine.dim(1) % 2 != 0) throw ShapeError("group_patches: axis 1 extent is odd");
  if (fine.dim(2) % 2 != 0) throw ShapeError("group_patches: axis 2 extent is odd");
  const auto h = fine.dim(1) / 2, w = fine.dim(2) / 2;
  return ops::gather(fine, patch_index(c, h, w), {h * w, 4, c});
}

template <typename T>
Tensor<T> ungroup_patches(const Tensor<T>& grouped, std::int64_t h, std::int64_t w) {
  if (grouped.rank() != 3 || grouped.dim(0) != h * w || grouped.dim(1) != 4) {
    throw ShapeError("ungroup_patches: expected [" + std::to_string(h * w) + ",4,c], got " +
                     shape_string(grouped.shape()));
  }
  const auto c = grouped.dim(2);
  const auto fwd = patch_index(c, h, w);
  std::vector<std::int64_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[static_cast<std::size_t>(fwd[i])] = static_cast<std::int64_t>(i);
  return ops::gather(grouped, inv, {c, 2 * h, 2 * w});
}

template <typename T>
Pafm<T>::Pafm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t coarse_channels,
              std::int64_t fine_channels, Rng& rng)
    : coarse_c_(coarse_channels), fine_c_(fine_channels) {
  const auto c = fine_channels, b = bottleneck(fine_channels);
  q_ = Linear<T>(ps, prefix + ".q", c, c, rng);
  vd_ = Linear<T>(ps, prefix + ".v_d", c, c, rng);
  k_ = Linear<T>(ps, prefix + ".k", coarse_channels, c, rng);
  vf_ = Linear<T>(ps, prefix + ".v_f", coarse_channels, c, rng);
  s_fc1_ = Linear<T>(ps, prefix + ".spatial.0", c, b, rng);
  s_fc2_ = Linear<T>(ps, prefix + ".spatial.2", b, 1, rng);
  c_fc1_ = Linear<T>(ps, prefix + ".context.0", c, b, rng);
  c_fc2_ = Linear<T>(ps, prefix + ".context.2", b, c, rng);
  out_ = Linear<T>(ps, prefix + ".mlp.0", c, c, rng);
  norm_ = LayerNorm<T>(ps, prefix + ".norm", c);
}

template <typename T>
std::int64_t Pafm<T>::parameter_count(std::int64_t ci, std::int64_t c) {
  const auto b = bottleneck(c);
  const auto proj_fine = 2 * (c * c + c);
  const auto proj_coarse = 2 * (ci * c + c);
  const auto spatial = (c * b + b) + (b + 1);
  const auto context = (c * b + b) + (b * c + c);
  const auto out = (c * c + c) + 2 * c;
  return proj_fine + proj_coarse + spatial + context + out;
}

template <typename T>
PatchAttentionState<T> Pafm<T>::project(const Tensor<T>& coarse, const Tensor<T>& fine) const {
  if (coarse.rank() != 3 || fine.rank() != 3) throw ShapeError("pafm: inputs must be [c,h,w]");
  if (coarse.dim(0) != coarse_c_) throw ShapeError("pafm: coarse channel axis 0 must be " + std::to_string(coarse_c_));
  if (fine.dim(0) != fine_c_) throw ShapeError("pafm: fine channel axis 0 must be " + std::to_string(fine_c_));
  if (fine.dim(1) != 2 * coarse.dim(1)) throw ShapeError("pafm: fine axis 1 must be exactly 2x the coarse extent");
  if (fine.dim(2) != 2 * coarse.dim(2)) throw ShapeError("pafm: fine axis 2 must be exactly 2x the coarse extent");
  PatchAttentionState<T> s;
  s.h = coarse.dim(1);
  s.w = coarse.dim(2);
  s.channels = fine_c_;
  auto grouped = group_patches(fine);
  s.q = q_(grouped);
  s.v_d = vd_(grouped);
  auto flat = ops::reshape(ops::permute(ops::reshape(coarse, {coarse_c_, s.h * s.w}), {1, 0}), {s.h * s.w, 1, coarse_c_});
  s.k = k_(flat);
  s.v_f = vf_(flat);
  s.ones = Tensor<T>({fine_c_, 1}, T(1));
  return s;
}

template <typename T>
void Pafm<T>::local_patch_attention(PatchAttentionState<T>& s) const {
  const auto n = s.h * s.w, c = s.channels;
  auto prod = ops::mul(s.q, ops::broadcast_replicate(s.k, 1, 4));
  auto sim = ops::matmul(ops::reshape(prod, {n * 4, c}), s.ones);
  auto logits = ops::scale(ops::reshape(sim, {n, 4, 1}), T(1) / std::sqrt(static_cast<T>(c)));
  s.w_local = ops::softmax(logits, 1);
}

template <typename T>
void Pafm<T>::quasi_global_attention(PatchAttentionState<T>& s) const {
  const auto n = s.h * s.w, c = s.channels;
  // Spatial weights: squeeze Q over the patch axis, MLP over channels.
  s.w_spatial = s_fc2_(ops::gelu(s_fc1_(ops::mean(s.q, 1))));
  // Context weights: pool K over positions, squeeze-and-excitation MLPs.
  s.w_context = c_fc2_(ops::gelu(c_fc1_(ops::mean(s.k, 0))));
  auto logits = ops::add(ops::broadcast_replicate(s.w_context, 0, n), ops::broadcast_replicate(s.w_spatial, 2, c));
  s.w_global = ops::sigmoid(logits);
}

template <typename T>
void Pafm<T>::fuse(PatchAttentionState<T>& s) const {
  const auto c = s.channels;
  auto from_coarse = ops::broadcast_replicate(ops::mul(s.w_global, s.v_f), 1, 4);
  auto wl = ops::broadcast_replicate(s.w_local, 2, c);
  auto wg = ops::broadcast_replicate(s.w_global, 1, 4);
  auto coeff = ops::scale(ops::sub(wl, ops::mul(wl, wg)), T(4));
  s.fused = ops::add(from_coarse, ops::mul(coeff, s.v_d));
}

template <typename T>
Tensor<T> Pafm<T>::finalize(const PatchAttentionState<T>& s, const Tensor<T>& fine) const {
  auto mixed = norm_(out_(s.fused));
  return ops::add(fine, ungroup_patches(mixed, s.h, s.w));
}

template <typename T>
Tensor<T> Pafm<T>::forward(const Tensor<T>& coarse, const Tensor<T>& fine) const {
  auto s = project(coarse, fine);
  local_patch_attention(s);
  quasi_global_attention(s);
  fuse(s);
  return finalize(s, fine);
}

template <typename T>
Tensor<T> local_patch_attention_apply(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v_d) {
  const auto n = q.dim(0), c = q.dim(2);
  auto prod = ops::mul(q, ops::broadcast_replicate(k, 1, 4));
  auto sim = ops::matmul(ops::reshape(prod, {n * 4, c}), Tensor<T>({c, 1}, T(1)));
  auto wl = ops::softmax(ops::scale(ops::reshape(sim, {n, 4, 1}), T(1) / std::sqrt(static_cast<T>(c))), 1);
  return ops::mul(ops::broadcast_replicate(wl, 2, c), v_d);
}

template <typename T>
Tensor<T> dense_attention_apply(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v_d) {
  const auto n = q.dim(0), c = q.dim(2);
  auto scores = ops::matmul(ops::reshape(k, {n, c}), ops::reshape(q, {n * 4, c}), true);
  auto attn = ops::softmax(ops::scale(scores, T(1) / std::sqrt(static_cast<T>(c))), 1);
  return ops::matmul(attn, ops::reshape(v_d, {n * 4, c}));
}

AttentionFlops pafm_flop_count(std::int64_t h, std::int64_t w, std::int64_t c) {
  const auto n = static_cast<std::uint64_t>(h * w);
  const auto ch = static_cast<std::uint64_t>(c);
  return {12 * n * ch, 8 * n * n * ch};
}

template Tensor<float> group_patches(const Tensor<float>&);
template Tensor<double> group_patches(const Tensor<double>&);
template Tensor<float> ungroup_patches(const Tensor<float>&, std::int64_t, std::int64_t);
template Tensor<double> ungroup_patches(const Tensor<double>&, std::int64_t, std::int64_t);
template Tensor<float> local_patch_attention_apply(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> local_patch_attention_apply(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> dense_attention_apply(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense_attention_apply(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template class Pafm<float>;
template class Pafm<double>;

}  // namespace vitas
