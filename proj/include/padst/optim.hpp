#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "padst/tensor.hpp"

namespace padst {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// First/second moment estimates for one parameter tensor.
template <class Real>
struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update of `params` in place. The state is
/// (re)initialised to zeros when empty; otherwise its size must match.
template <class Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
               const AdamConfig& cfg);

// Adam over a fixed list of parameters; step() consumes Parameter::grad.
template <class Real>
class Adam {
 public:
  Adam(std::vector<Parameter<Real>*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  std::int64_t steps() const { return steps_; }
  const std::vector<Parameter<Real>*>& params() const { return params_; }

 private:
  std::vector<Parameter<Real>*> params_;
  std::vector<AdamState<Real>> states_;
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
};

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <class Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm);

}  // namespace padst
