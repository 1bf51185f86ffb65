#include "padst/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace padst {

template <class Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient size does not match parameters");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), Real(0));
    state.v.assign(params.size(), Real(0));
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real g = grads[i];
    state.m[i] = b1 * state.m[i] + (Real(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Real(1) - b2) * g * g;
    const double mhat = static_cast<double>(state.m[i]) / c1;
    const double vhat = static_cast<double>(state.v[i]) / c2;
    params[i] -= static_cast<Real>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <class Real>
Adam<Real>::Adam(std::vector<Parameter<Real>*> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

template <class Real>
void Adam<Real>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i]->value.data(), std::span<const Real>(params_[i]->grad.data()),
              states_[i], cfg_);
  }
  ++steps_;
}

template <class Real>
void Adam<Real>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <class Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm) {
  double total = 0;
  for (const auto* p : params)
    for (Real g : p->grad.data()) total += static_cast<double>(g) * g;
  const double norm = std::sqrt(total);
  if (max_norm > 0 && norm > max_norm) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (auto* p : params)
      for (Real& g : p->grad.data()) g *= factor;
  }
  return norm;
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>,
                                AdamState<double>&, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(std::span<Parameter<float>* const>, double);
template double clip_grad_norm<double>(std::span<Parameter<double>* const>, double);

}  // namespace padst
