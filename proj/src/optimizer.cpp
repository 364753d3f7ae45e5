#include "vitas/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace vitas {

double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr) {
  if (total_steps <= 0) return base_lr;
  const double warm = warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps)) : 1.0;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return base_lr * warm * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void AdamW<T>::step(ParameterSet<T>& ps, double lr) {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (auto& p : ps.all()) {
    if (p.frozen() || !p.value().has_grad()) continue;
    const auto g = p.value().grad();
    auto w = p.value().mutable_values();
    auto& st = state_[p.name()];
    if (st.m.empty()) {
      st.m.assign(w.size(), T(0));
      st.v.assign(w.size(), T(0));
    }
    const bool decay = p.value().rank() >= 2;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double m = b1 * st.m[i] + (1.0 - b1) * gi;
      const double v = b2 * st.v[i] + (1.0 - b2) * gi * gi;
      st.m[i] = static_cast<T>(m);
      st.v[i] = static_cast<T>(v);
      double wi = w[i];
      if (decay) wi -= lr * options_.weight_decay * wi;
      wi -= lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

template <typename T>
std::vector<CheckpointEntry> AdamW<T>::state_entries(const ParameterSet<T>& ps) const {
  std::vector<CheckpointEntry> out;
  for (const auto& p : ps.all()) {
    auto it = state_.find(p.name());
    if (it == state_.end()) continue;
    const auto& shape = p.value().shape();
    out.push_back({"optim.m." + p.name(), shape, std::vector<float>(it->second.m.begin(), it->second.m.end())});
    out.push_back({"optim.v." + p.name(), shape, std::vector<float>(it->second.v.begin(), it->second.v.end())});
  }
  out.push_back({"optim.step", {1}, {static_cast<float>(step_)}});
  return out;
}

template <typename T>
void AdamW<T>::load_state(const ParameterSet<T>& ps, const std::vector<CheckpointEntry>& entries) {
  state_.clear();
  step_ = 0;
  if (const auto* s = find_entry(entries, "optim.step")) step_ = static_cast<std::int64_t>(s->data.at(0));
  for (const auto& p : ps.all()) {
    const auto* m = find_entry(entries, "optim.m." + p.name());
    const auto* v = find_entry(entries, "optim.v." + p.name());
    if (!m || !v) continue;
    if (m->dims != p.value().shape() || v->dims != p.value().shape()) {
      throw CheckpointError("checkpoint: optimizer state for " + p.name() + " has wrong dims");
    }
    auto& st = state_[p.name()];
    st.m.assign(m->data.begin(), m->data.end());
    st.v.assign(v->data.begin(), v->data.end());
  }
}

template <typename T>
double gradient_norm(const ParameterSet<T>& ps) {
  double sq = 0.0;
  for (const auto& p : ps.all()) {
    if (p.frozen() || !p.value().has_grad()) continue;
    for (auto g : p.value().grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

template <typename T>
void clip_gradients(ParameterSet<T>& ps, double max_norm) {
  const double norm = gradient_norm(ps);
  if (max_norm <= 0 || norm <= max_norm) return;
  const T s = static_cast<T>(max_norm / norm);
  for (auto& p : ps.all()) {
    if (p.frozen() || !p.value().has_grad()) continue;
    auto& buf = p.value().node()->grad_buffer();
    for (auto& g : buf) g *= s;
  }
}

template class AdamW<float>;
template class AdamW<double>;
template double gradient_norm(const ParameterSet<float>&);
template double gradient_norm(const ParameterSet<double>&);
template void clip_gradients(ParameterSet<float>&, double);
template void clip_gradients(ParameterSet<double>&, double);

}  // namespace vitas
