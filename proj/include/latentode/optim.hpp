#ifndef LATENTODE_OPTIM_HPP
#define LATENTODE_OPTIM_HPP

#include <cmath>

#include "latentode/tensor.hpp"

namespace latentode {

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;  // completed steps
  ParamSet m;       // first moment, mirrors the parameter shapes
  ParamSet v;       // second moment

  static AdamState for_params(const ParamSet& params, double lr = 0.001) {
    AdamState s;
    s.lr = lr;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }
};

// standard Adam with bias correction; one call = one step
inline void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
  if (grads.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    if (!grads.contains(name))
      throw ShapeError("adam_step: missing gradient for parameter '" + name + "'");
    Tensor& p = params.tensor(i);
    const Tensor& g = grads.at(name);
    if (g.shape() != p.shape())
      throw ShapeError("adam_step: gradient " + shape_str(g.shape()) + " does not match '" +
                       name + "' " + shape_str(p.shape()));
    Tensor& mt = state.m.at(name);
    Tensor& vt = state.v.at(name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gv = g[k];
      mt[k] = state.beta1 * mt[k] + (1.0 - state.beta1) * gv;
      vt[k] = state.beta2 * vt[k] + (1.0 - state.beta2) * gv * gv;
      const double mhat = mt[k] / bc1;
      const double vhat = vt[k] / bc2;
      p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace latentode

#endif  // LATENTODE_OPTIM_HPP
