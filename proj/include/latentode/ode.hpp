#ifndef LATENTODE_ODE_HPP
#define LATENTODE_ODE_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latentode/tensor.hpp"

namespace latentode {

// any |state value| above this aborts the solve instead of returning Inf
constexpr double kDivergenceLimit = 1e8;

struct IntegrationDivergedError : NumericError {
  IntegrationDivergedError(double time, long step, long row)
      : NumericError("integration diverged at t=" + std::to_string(time) + " (step " +
                     std::to_string(step) + ", batch row " + std::to_string(row) + ")"),
        t(time),
        step_index(step),
        batch_row(row) {}
  double t;
  long step_index;
  long batch_row;
};

// strictly increasing observation/evaluation times
using TimeGrid = std::vector<double>;

inline void check_time_grid(const TimeGrid& grid) {
  if (grid.size() < 2) throw ShapeError("time grid must have length >= 2");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i + 1] > grid[i]))
      throw ShapeError("time grid must be strictly increasing (violated at index " +
                       std::to_string(i + 1) + ")");
}

// f(z, t, theta) -> dz/dt, same shape as z, differentiable through the tape
using VectorField = std::function<Tensor(const Tensor&, double, const ParamSet&)>;

struct Trajectory {
  TimeGrid grid;
  std::vector<Tensor> states;  // one per grid point, uniform shape
};

namespace detail {

inline long offending_row(const Tensor& t, std::size_t flat) {
  return t.rank() == 2 ? static_cast<long>(flat / t.shape()[1]) : 0;
}

inline void check_state(const Tensor& v, double t, long step) {
  const auto& x = v.values();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || std::abs(x[i]) > kDivergenceLimit)
      throw IntegrationDivergedError(t, step, offending_row(v, i));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// forward integration
// ---------------------------------------------------------------------------

// one classical RK4 update; h may be negative (backward in time)
inline Tensor rk4_step(const VectorField& f, const Tensor& z, double t, double h,
                       const ParamSet& theta) {
  if (h == 0.0) throw std::invalid_argument("rk4_step: step size must be nonzero");
  auto eval = [&](const Tensor& zz, double tt) {
    Tensor k;
    try {
      k = f(zz, tt, theta);
    } catch (const IntegrationDivergedError&) {
      throw;
    } catch (const NumericError&) {
      throw IntegrationDivergedError(tt, -1, -1);
    }
    if (k.shape() != z.shape())
      throw ShapeError("vector field output " + shape_str(k.shape()) +
                       " does not match state " + shape_str(z.shape()));
    detail::check_state(k, tt, -1);
    return k;
  };
  Tensor k1 = eval(z, t);
  Tensor k2 = eval(add(z, scale(k1, h / 2)), t + h / 2);
  Tensor k3 = eval(add(z, scale(k2, h / 2)), t + h / 2);
  Tensor k4 = eval(add(z, scale(k3, h)), t + h);
  Tensor incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
  Tensor out = add(z, scale(incr, h / 6.0));
  detail::check_state(out, t + h, -1);
  return out;
}

// Integrate from (anchor_t, z0), visiting a strictly increasing grid that may
// extend to both sides of the anchor. Each grid interval is covered by
// `substeps` RK4 steps, so results on a common prefix are bit-identical
// regardless of later grid points.
inline std::vector<Tensor> solve_from_anchor(const VectorField& f, const Tensor& z0,
                                             double anchor_t, const TimeGrid& grid,
                                             const ParamSet& theta, int substeps) {
  if (grid.empty()) throw ShapeError("solve_from_anchor: empty grid");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i + 1] > grid[i]))
      throw ShapeError("time grid must be strictly increasing (violated at index " +
                       std::to_string(i + 1) + ")");
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");

  std::vector<Tensor> states(grid.size());
  long step_counter = 0;
  auto march = [&](Tensor z, double from, double to) {
    const double h = (to - from) / substeps;
    for (int s = 0; s < substeps; ++s) {
      try {
        z = rk4_step(f, z, from + s * h, h, theta);
      } catch (IntegrationDivergedError& e) {
        e.step_index = step_counter;
        throw;
      }
      ++step_counter;
    }
    return z;
  };

  // split the grid at the anchor; march outward in both directions
  std::size_t first_right = 0;
  while (first_right < grid.size() && grid[first_right] < anchor_t) ++first_right;

  Tensor z = z0;
  double t = anchor_t;
  for (std::size_t i = first_right; i < grid.size(); ++i) {
    if (grid[i] != t) z = march(z, t, grid[i]);
    t = grid[i];
    states[i] = z;
  }
  z = z0;
  t = anchor_t;
  for (std::size_t ri = first_right; ri > 0; --ri) {
    const std::size_t i = ri - 1;
    z = march(z, t, grid[i]);
    t = grid[i];
    states[i] = z;
  }
  return states;
}

inline Trajectory solve_forward(const VectorField& f, const Tensor& z0, const TimeGrid& grid,
                                const ParamSet& theta, int substeps) {
  check_time_grid(grid);
  return Trajectory{grid, solve_from_anchor(f, z0, grid.front(), grid, theta, substeps)};
}

// ---------------------------------------------------------------------------
// adjoint method
// ---------------------------------------------------------------------------

struct AdjointResult {
  ParamSet theta_grad;  // same names/shapes as theta
  Tensor z0_grad;       // dL/dz at the first grid point
  std::size_t peak_tape_nodes = 0;  // high-water mark of the internal tape
};

// Backward sweep of the augmented system (z, a, g):
//   dz/dt = f,   da/dt = -a^T df/dz,   dg/dt = -a^T df/dtheta
// from the last grid time to the first. The adjoint jumps by the observation
// loss gradient when crossing each grid point, and z is re-anchored to the
// stored trajectory state there. Vector-Jacobian products come from local
// re-evaluations of f on a tape that is reset after every use, so retained
// memory does not grow with the grid.
inline AdjointResult solve_adjoint(const VectorField& f, const Trajectory& traj,
                                   const std::vector<Tensor>& loss_grads, const ParamSet& theta,
                                   int substeps) {
  check_time_grid(traj.grid);
  if (traj.states.size() != traj.grid.size())
    throw ShapeError("solve_adjoint: trajectory has " + std::to_string(traj.states.size()) +
                     " states for " + std::to_string(traj.grid.size()) + " grid points");
  if (loss_grads.size() != traj.grid.size())
    throw ShapeError("solve_adjoint: " + std::to_string(loss_grads.size()) +
                     " loss gradients for " + std::to_string(traj.grid.size()) + " grid points");
  const Shape state_shape = traj.states.front().shape();
  for (const Tensor& g : loss_grads)
    if (g.shape() != state_shape)
      throw ShapeError("solve_adjoint: loss gradient " + shape_str(g.shape()) +
                       " does not match state " + shape_str(state_shape));
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");

  const std::size_t n = traj.grid.size();
  const std::size_t d = shape_numel(state_shape);
  const std::size_t p = theta.total_elements();

  Tape tape;
  ParamSet theta_leaf = theta.grad_copy();

  std::vector<double> z = traj.states[n - 1].values();
  std::vector<double> a = loss_grads[n - 1].values();
  std::vector<double> g(p, 0.0);

  // one evaluation of the augmented dynamics
  auto aug = [&](const std::vector<double>& zs, const std::vector<double>& as, double t,
                 std::vector<double>& dz, std::vector<double>& da, std::vector<double>& dg) {
    tape.reset();
    Tape::Scope scope(tape);
    Tensor zt(state_shape, zs);
    zt.set_requires_grad(true);
    tape.watch(zt);  // grads are queried on zt itself, not on a downstream copy
    Tensor out;
    try {
      out = f(zt, t, theta_leaf);
    } catch (const IntegrationDivergedError&) {
      throw;
    } catch (const NumericError&) {
      throw IntegrationDivergedError(t, -1, -1);
    }
    if (out.shape() != state_shape)
      throw ShapeError("vector field output " + shape_str(out.shape()) +
                       " does not match state " + shape_str(state_shape));
    detail::check_state(out, t, -1);
    dz = out.values();
    tape.backward_seeded(out, as);
    Tensor gz = tape.grad(zt);
    da.resize(d);
    for (std::size_t i = 0; i < d; ++i) da[i] = -gz[i];
    dg.resize(p);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < theta_leaf.size(); ++i) {
      Tensor gt = tape.grad(theta_leaf.tensor(i));
      for (std::size_t k = 0; k < gt.size(); ++k) dg[pos++] = -gt[k];
    }
  };

  std::vector<double> dz1, da1, dg1, dz2, da2, dg2, dz3, da3, dg3, dz4, da4, dg4;
  std::vector<double> zs(d), as(d);
  auto blend = [](std::vector<double>& dst, const std::vector<double>& base,
                  const std::vector<double>& dir, double c) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = base[i] + c * dir[i];
  };

  for (std::size_t iv = n - 1; iv > 0; --iv) {
    const double t_hi = traj.grid[iv], t_lo = traj.grid[iv - 1];
    const double h = (t_lo - t_hi) / substeps;  // negative
    for (int s = 0; s < substeps; ++s) {
      const double t = t_hi + s * h;
      aug(z, a, t, dz1, da1, dg1);
      blend(zs, z, dz1, h / 2);
      blend(as, a, da1, h / 2);
      aug(zs, as, t + h / 2, dz2, da2, dg2);
      blend(zs, z, dz2, h / 2);
      blend(as, a, da2, h / 2);
      aug(zs, as, t + h / 2, dz3, da3, dg3);
      blend(zs, z, dz3, h);
      blend(as, a, da3, h);
      aug(zs, as, t + h, dz4, da4, dg4);
      for (std::size_t i = 0; i < d; ++i) {
        z[i] += (h / 6) * (dz1[i] + 2 * dz2[i] + 2 * dz3[i] + dz4[i]);
        a[i] += (h / 6) * (da1[i] + 2 * da2[i] + 2 * da3[i] + da4[i]);
      }
      for (std::size_t i = 0; i < p; ++i)
        g[i] += (h / 6) * (dg1[i] + 2 * dg2[i] + 2 * dg3[i] + dg4[i]);
    }
    // re-anchor on the stored observation state and absorb its loss gradient
    z = traj.states[iv - 1].values();
    const auto& jump = loss_grads[iv - 1].values();
    for (std::size_t i = 0; i < d; ++i) a[i] += jump[i];
  }

  AdjointResult res;
  res.theta_grad = theta.unflatten_like(g);
  res.z0_grad = Tensor(state_shape, std::move(a));
  res.peak_tape_nodes = tape.peak_nodes();
  return res;
}

}  // namespace latentode

#endif  // LATENTODE_ODE_HPP
