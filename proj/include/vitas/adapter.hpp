#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "vitas/cam.hpp"
#include "vitas/pafm.hpp"
#include "vitas/sdm.hpp"

namespace vitas {

struct AdapterConfig {
  SdmConfig sdm;
  int cam_blocks = 2;
  int cam_heads = 4;
  int mlp_ratio = 2;

  void validate() const;
  CamConfig cam_config(int level) const;
};

/// Levels at 1/32, 1/16, 1/8, 1/4 of the input image.
template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, 4> levels;
  ViewTag tag = ViewTag::left;
};

/// One SDM, four CAMs (independent per level) and three PAFMs, shared by the
/// left and right sub-networks:
///   D = SDM(T); F0 = CAM0(D0); M_i = PAFM_i(F_{i-1}, D_i); F_i = CAM_i(M_i).
template <typename T>
class Vitas {
 public:
  Vitas() = default;
  Vitas(ParameterSet<T>& ps, const AdapterConfig& config, Rng& rng, const std::string& prefix = "adapter");

  std::pair<FeaturePyramid<T>, FeaturePyramid<T>> forward(const TokenSet<T>& left, const TokenSet<T>& right) const;

  const AdapterConfig& config() const { return config_; }
  const Sdm<T>& sdm() const { return sdm_; }
  const Cam<T>& cam(int level) const { return cams_.at(static_cast<std::size_t>(level)); }
  /// PAFM feeding level i, for i in 1..3.
  const Pafm<T>& pafm(int level) const { return pafms_.at(static_cast<std::size_t>(level - 1)); }

 private:
  AdapterConfig config_;
  Sdm<T> sdm_;
  std::array<Cam<T>, 4> cams_;
  std::array<Pafm<T>, 3> pafms_;
};

struct CensusEntry {
  std::string module;
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::int64_t frozen = 0;
};

/// Per-submodule element counts. Parameters are bucketed by name: the first
/// two path components for "adapter.*" (adapter.sdm, adapter.cam.0, ...),
/// otherwise the first component. Buckets are returned sorted by name.
template <typename T>
std::vector<CensusEntry> parameter_census(const ParameterSet<T>& ps);

}  // namespace vitas
