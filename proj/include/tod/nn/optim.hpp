#pragma once

#include "tod/nn/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tod::nn {

struct AdamConfig {
  double lr = 0.00015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// One bias-corrected adaptive-moment update of `params` in place. Returns
// false (and leaves params and state untouched) when any gradient entry is
// non-finite.
template <typename T>
bool adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state,
               const AdamConfig& config);

struct StepReport {
  bool applied = true;
  double grad_norm = 0.0;
};

template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig config);

  // Clips by global norm, then updates every parameter. A non-finite gradient
  // anywhere skips the whole step.
  StepReport step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  ParamList<T> params_;
  AdamConfig config_;
  std::vector<AdamMoments> state_;
};

}  // namespace tod::nn
