#include "tod/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tod::nn {

template <typename T>
bool adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: shape mismatch");
  for (T g : grads)
    if (!std::isfinite(double(g))) return false;
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = double(grads[i]);
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = T(double(params[i]) - config.lr * mhat / (std::sqrt(vhat) + config.eps));
  }
  return true;
}

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig config)
    : params_(std::move(params)), config_(config), state_(params_.size()) {
  for (auto& p : params_) {
    if (!p.tensor->requires_grad()) {
      throw std::invalid_argument("Adam: parameter " + p.name + " has no gradient buffer");
    }
  }
}

template <typename T>
StepReport Adam<T>::step() {
  StepReport report;
  double sq = 0.0;
  for (auto& p : params_) {
    for (T g : p.tensor->grad()) sq += double(g) * double(g);
  }
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) {
    report.applied = false;
    return report;
  }
  const double factor =
      config_.clip_norm > 0 && report.grad_norm > config_.clip_norm ? config_.clip_norm / report.grad_norm
                                                                    : 1.0;
  std::vector<T> scaled;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = *params_[i].tensor;
    std::span<const T> g = t.grad();
    if (factor != 1.0) {
      scaled.assign(g.begin(), g.end());
      for (auto& v : scaled) v = T(double(v) * factor);
      g = scaled;
    }
    adam_step<T>(t.values(), g, state_[i], config_);
  }
  return report;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

template bool adam_step<float>(std::span<float>, std::span<const float>, AdamMoments&,
                               const AdamConfig&);
template bool adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&,
                                const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace tod::nn
