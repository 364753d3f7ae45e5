#include "vitas/adapter.hpp"

#include <map>
#include <stdexcept>

namespace vitas {

void AdapterConfig::validate() const {
  sdm.validate();
  for (int level = 0; level < 4; ++level) cam_config(level).validate();
}

CamConfig AdapterConfig::cam_config(int level) const {
  CamConfig c;
  c.channels = sdm.channels.at(static_cast<std::size_t>(level));
  c.num_attention_blocks = cam_blocks;
  c.num_heads = cam_heads;
  c.mlp_ratio = mlp_ratio;
  return c;
}

template <typename T>
Vitas<T>::Vitas(ParameterSet<T>& ps, const AdapterConfig& config, Rng& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  sdm_ = Sdm<T>(ps, prefix + ".sdm", config_.sdm, rng);
  for (int level = 0; level < 4; ++level) {
    cams_[static_cast<std::size_t>(level)] =
        Cam<T>(ps, prefix + ".cam." + std::to_string(level), config_.cam_config(level), rng);
  }
  const auto& ch = config_.sdm.channels;
  for (int level = 1; level < 4; ++level) {
    pafms_[static_cast<std::size_t>(level - 1)] =
        Pafm<T>(ps, prefix + ".pafm." + std::to_string(level), ch[static_cast<std::size_t>(level - 1)],
                ch[static_cast<std::size_t>(level)], rng);
  }
}

template <typename T>
std::pair<FeaturePyramid<T>, FeaturePyramid<T>> Vitas<T>::forward(const TokenSet<T>& left,
                                                                  const TokenSet<T>& right) const {
  for (std::size_t j = 0; j < 4; ++j) {
    if (left.taps[j].shape() != right.taps[j].shape()) throw ShapeError("vitas: tap " + std::to_string(j) + " shapes differ between views");
  }
  const auto dl = sdm_.build_init_pyramid(left);
  const auto dr = sdm_.build_init_pyramid(right);
  FeaturePyramid<T> fl, fr;
  fl.tag = ViewTag::left;
  fr.tag = ViewTag::right;
  int level = 0;
  try {
    std::tie(fl.levels[0], fr.levels[0]) = cams_[0].forward(dl.levels[0], dr.levels[0]);
    for (level = 1; level < 4; ++level) {
      const auto i = static_cast<std::size_t>(level);
      const auto& pafm = pafms_[i - 1];
      auto ml = pafm.forward(fl.levels[i - 1], dl.levels[i]);
      auto mr = pafm.forward(fr.levels[i - 1], dr.levels[i]);
      std::tie(fl.levels[i], fr.levels[i]) = cams_[i].forward(ml, mr);
    }
  } catch (const ShapeError& e) {
    throw ShapeError("vitas level " + std::to_string(level) + ": " + e.what());
  }
  return {fl, fr};
}

template <typename T>
std::vector<CensusEntry> parameter_census(const ParameterSet<T>& ps) {
  std::map<std::string, CensusEntry> buckets;
  for (const auto& p : ps.all()) {
    const auto& name = p.name();
    auto cut = name.find('.');
    if (name.rfind("adapter.", 0) == 0) {
      cut = name.find('.', cut + 1);
      // adapter.cam.<level> and adapter.pafm.<level> keep their index.
      if (cut != std::string::npos && (name.rfind("adapter.cam.", 0) == 0 || name.rfind("adapter.pafm.", 0) == 0)) {
        cut = name.find('.', cut + 1);
      }
    }
    const auto module = name.substr(0, cut);
    auto& e = buckets[module];
    e.module = module;
    const auto n = p.value().numel();
    e.total += n;
    (p.frozen() ? e.frozen : e.trainable) += n;
  }
  std::vector<CensusEntry> out;
  for (auto& [_, e] : buckets) out.push_back(e);
  return out;
}

template class Vitas<float>;
template class Vitas<double>;
template std::vector<CensusEntry> parameter_census(const ParameterSet<float>&);
template std::vector<CensusEntry> parameter_census(const ParameterSet<double>&);

}  // namespace vitas
