#pragma once

#include <cstdint>

#include "vitas/nn.hpp"

namespace vitas {

/// Intermediate tensors of one PAFM application. Rows index coarse positions
/// p = y * w + x; axis 1 is the patch dimension, whose 4 slots cover the 2x2
/// fine block in row-major order TL, TR, BL, BR.
template <typename T>
struct PatchAttentionState {
  std::int64_t h = 0, w = 0, channels = 0;
  Tensor<T> q;          // [hw, 4, c]  from D_{i+1}
  Tensor<T> k;          // [hw, 1, c]  from F_i
  Tensor<T> v_d;        // [hw, 4, c]  from D_{i+1}
  Tensor<T> v_f;        // [hw, 1, c]  from F_i
  Tensor<T> ones;       // O, [c, 1]
  Tensor<T> w_local;    // [hw, 4, 1]
  Tensor<T> w_spatial;  // [hw, 1, 1]
  Tensor<T> w_context;  // [1, 1, c]
  Tensor<T> w_global;   // [hw, 1, c]
  Tensor<T> fused;      // W, [hw, 4, c]
};

/// Space-to-depth: [c, 2h, 2w] -> [h*w, 4, c].
template <typename T>
Tensor<T> group_patches(const Tensor<T>& fine);
/// Inverse of group_patches: [h*w, 4, c] -> [c, 2h, 2w].
template <typename T>
Tensor<T> ungroup_patches(const Tensor<T>& grouped, std::int64_t h, std::int64_t w);

/// Patch attention fusion of a coarse map F_i [c_i, h, w] into the next finer
/// map D_{i+1} [c, 2h, 2w]:
///   w_L = softmax_slots((Q . RepPad(K)) O / sqrt(c))
///   w_G = sigmoid(RepPad(w_C) + RepPad(w_S))
///   W   = RepPad(w_G . V_F) + 4 (RepPad(w_L) - RepPad(w_L) . RepPad(w_G)) . V_D
///   M   = D + Reshape(LayerNorm(MLP(W)))
/// Since the slot weights sum to 1, the per-channel coefficients of W sum to
/// 4 over each patch.
template <typename T>
class Pafm {
 public:
  Pafm() = default;
  Pafm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t coarse_channels, std::int64_t fine_channels,
       Rng& rng);

  PatchAttentionState<T> project(const Tensor<T>& coarse, const Tensor<T>& fine) const;
  void local_patch_attention(PatchAttentionState<T>& s) const;
  void quasi_global_attention(PatchAttentionState<T>& s) const;
  void fuse(PatchAttentionState<T>& s) const;
  Tensor<T> finalize(const PatchAttentionState<T>& s, const Tensor<T>& fine) const;

  /// project -> local -> quasi-global -> fuse -> finalize.
  Tensor<T> forward(const Tensor<T>& coarse, const Tensor<T>& fine) const;

  std::int64_t coarse_channels() const { return coarse_c_; }
  std::int64_t fine_channels() const { return fine_c_; }
  static std::int64_t bottleneck(std::int64_t channels) { return channels / 4 > 0 ? channels / 4 : 1; }
  /// Closed-form parameter count for the given widths.
  static std::int64_t parameter_count(std::int64_t coarse_channels, std::int64_t fine_channels);

  const Linear<T>& q_proj() const { return q_; }
  const Linear<T>& k_proj() const { return k_; }
  const Linear<T>& vd_proj() const { return vd_; }
  const Linear<T>& vf_proj() const { return vf_; }
  const Linear<T>& spatial_fc1() const { return s_fc1_; }
  const Linear<T>& spatial_fc2() const { return s_fc2_; }
  const Linear<T>& context_fc1() const { return c_fc1_; }
  const Linear<T>& context_fc2() const { return c_fc2_; }
  const Linear<T>& out_proj() const { return out_; }
  const LayerNorm<T>& out_norm() const { return norm_; }

 private:
  std::int64_t coarse_c_ = 0, fine_c_ = 0;
  Linear<T> q_, vd_, k_, vf_;
  Linear<T> s_fc1_, s_fc2_;  // channels -> scalar spatial weight
  Linear<T> c_fc1_, c_fc2_;  // squeeze-and-excitation context weights
  Linear<T> out_;
  LayerNorm<T> norm_;
};

/// Attention applied to the fine values only, used to compare costs:
/// local: w_L as above, output RepPad(w_L) . V_D, [hw, 4, c].
/// dense: every coarse key against every fine query, A = softmax(K Q^T / sqrt(c))
///        over all 4hw fine pixels, output A V_D, [hw, c].
/// Inputs q, v_d are [hw, 4, c], k is [hw, 1, c].
template <typename T>
Tensor<T> local_patch_attention_apply(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v_d);
template <typename T>
Tensor<T> dense_attention_apply(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v_d);

/// Analytic multiply-add counts of the two apply functions above, matching
/// what the instrumented op counters record for a forward pass:
///   local = 12 N c   (Q.RepPad(K), the O reduction, w_L.V_D)
///   dense = 8 N^2 c  (K Q^T over 4N queries, then A V_D)
/// with N = h * w coarse positions.
struct AttentionFlops {
  std::uint64_t local = 0;
  std::uint64_t dense = 0;
};
AttentionFlops pafm_flop_count(std::int64_t h, std::int64_t w, std::int64_t c);

}  // namespace vitas
