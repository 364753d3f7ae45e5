#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitas/checkpoint.hpp"
#include "vitas/nn.hpp"

namespace vitas {

struct AdamWOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled; applied to rank >= 2 tensors
};

/// Linear warmup to base_lr, then cosine decay to zero at total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr);

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWOptions options) : options_(options) {}

  /// Updates every non-frozen parameter from its accumulated gradient.
  void step(ParameterSet<T>& ps, double lr);
  std::int64_t steps_taken() const { return step_; }

  /// Moment buffers as "optim.m.<name>", "optim.v.<name>" plus "optim.step".
  std::vector<CheckpointEntry> state_entries(const ParameterSet<T>& ps) const;
  void load_state(const ParameterSet<T>& ps, const std::vector<CheckpointEntry>& entries);

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  AdamWOptions options_;
  std::map<std::string, Moments> state_;
  std::int64_t step_ = 0;
};

/// Global L2 norm of all non-frozen gradients.
template <typename T>
double gradient_norm(const ParameterSet<T>& ps);

/// Scales gradients so that their global norm is at most max_norm.
template <typename T>
void clip_gradients(ParameterSet<T>& ps, double max_norm);

}  // namespace vitas
