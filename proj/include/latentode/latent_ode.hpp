#ifndef LATENTODE_LATENT_ODE_HPP
#define LATENTODE_LATENT_ODE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latentode/nn.hpp"
#include "latentode/ode.hpp"
#include "latentode/optim.hpp"
#include "latentode/rng.hpp"
#include "latentode/tensor.hpp"

namespace latentode {

// q(z0 | x); logvar is clamped to [-10, 10] before any exponentiation
struct PosteriorParams {
  Tensor mu;
  Tensor logvar;
};

struct ElboParts {
  double reconstruction_loglik = 0;
  double kl = 0;
  double elbo = 0;  // loglik - kl; training minimizes the negation
};

struct LatentOdeConfig {
  enum class EncoderKind { Rnn, Lstm };

  EncoderKind encoder_kind = EncoderKind::Lstm;
  std::size_t encoder_hidden = 60;
  std::size_t latent_dim = 4;
  std::size_t field_hidden_layers = 3;
  std::size_t field_hidden = 40;
  Activation field_activation = Activation::Elu;
  std::size_t readout_hidden = 40;
  Activation readout_activation = Activation::Relu;
  double observation_std = 0.1;
  int substeps = 4;  // RK4 steps per observation interval

  // RNN-45 encoder, ELU field of 3x30, ReLU readout of 30
  static LatentOdeConfig spiral() {
    LatentOdeConfig c;
    c.encoder_kind = EncoderKind::Rnn;
    c.encoder_hidden = 45;
    c.field_hidden = 30;
    c.readout_hidden = 30;
    return c;
  }

  // LSTM-60 encoder, decoder widths 40
  static LatentOdeConfig spring() { return LatentOdeConfig{}; }

  // same structure as the spring model
  static LatentOdeConfig solar() { return spring(); }

  void validate() const {
    if (encoder_hidden == 0 || latent_dim == 0 || field_hidden == 0 || readout_hidden == 0)
      throw std::invalid_argument("LatentOdeConfig: sizes must be positive");
    if (observation_std <= 0)
      throw std::invalid_argument("LatentOdeConfig: observation_std must be > 0");
    if (substeps < 1) throw std::invalid_argument("LatentOdeConfig: substeps must be >= 1");
  }
};

namespace detail {
inline std::size_t batch_rows(const Tensor& x) { return x.rank() == 2 ? x.shape()[0] : 1; }
}

// Reverse-encoder VAE whose decoder is an ODE solve from z0 followed by a
// per-time readout network.
class LatentOdeModel {
 public:
  LatentOdeModel(const LatentOdeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build_specs();
    Rng rng(seed);
    if (cfg_.encoder_kind == LatentOdeConfig::EncoderKind::Lstm)
      lstm_.init(params_, rng);
    else
      rnn_.init(params_, rng);
    head_.init(params_, rng);
    field_.init(params_, rng);
    readout_.init(params_, rng);
  }

  // restore: same architecture, values taken from a loaded set
  static LatentOdeModel with_params(const LatentOdeConfig& cfg, const ParamSet& loaded) {
    LatentOdeModel m(cfg, 0);
    m.load_values(loaded);
    return m;
  }

  const LatentOdeConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  void load_values(const ParamSet& loaded) {
    if (loaded.size() != params_.size())
      throw ShapeError("LatentOdeModel: checkpoint has " + std::to_string(loaded.size()) +
                       " tensors, model expects " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& name = params_.name(i);
      const Tensor& src = loaded.at(name);
      Tensor& dst = params_.tensor(i);
      if (src.shape() != dst.shape())
        throw ShapeError("LatentOdeModel: shape mismatch for '" + name + "'");
      dst.values() = src.values();
    }
  }

  // reversed sequence pass, then a linear head to (mu, logvar)
  PosteriorParams encode(const std::vector<Tensor>& xs) const {
    if (xs.empty()) throw ShapeError("encode: empty sequence");
    Tensor h = cfg_.encoder_kind == LatentOdeConfig::EncoderKind::Lstm
                   ? encode_sequence(lstm_, params_, xs, true)
                   : encode_sequence(rnn_, params_, xs, true);
    Tensor ms = head_.forward(params_, h);
    const std::size_t axis = ms.rank() == 2 ? 1 : 0;
    const std::size_t L = cfg_.latent_dim;
    PosteriorParams q;
    q.mu = slice(ms, axis, 0, L);
    q.logvar = clamp(slice(ms, axis, L, 2 * L), -10.0, 10.0);
    return q;
  }

  // z0 = mu + exp(logvar / 2) * eps; eps is injected by the caller
  static Tensor reparameterize(const PosteriorParams& q, const Tensor& eps) {
    return add(q.mu, mul(exp(scale(q.logvar, 0.5)), eps));
  }

  // latent vector field f(z, t, theta): the field MLP reads its parameters
  // from whichever set the solver hands it
  VectorField field() const {
    return [mlp = field_](const Tensor& z, double, const ParamSet& theta) {
      return mlp.forward(theta, z);
    };
  }

  Tensor readout_state(const ParamSet& ps, const Tensor& z) const {
    return readout_.forward(ps, z);
  }

  // latent states at every grid time, integrated out from (anchor_t, z0)
  std::vector<Tensor> latent_states(const Tensor& z0, const TimeGrid& grid,
                                    double anchor_t) const {
    return solve_from_anchor(field(), z0, anchor_t, grid, params_, cfg_.substeps);
  }

  // solve the latent ODE from z0 over the grid and map each state back to the
  // data domain; the grid may extend beyond the observed window on both sides
  std::vector<Tensor> decode(const Tensor& z0, const TimeGrid& grid, double anchor_t) const {
    std::vector<Tensor> states = latent_states(z0, grid, anchor_t);
    std::vector<Tensor> out;
    out.reserve(states.size());
    for (const Tensor& s : states) out.push_back(readout_.forward(params_, s));
    return out;
  }

  // (sum over batch of loglik, sum over batch of kl) as scalar tensors
  static std::pair<Tensor, Tensor> elbo_sums(const std::vector<Tensor>& x,
                                             const std::vector<Tensor>& recon,
                                             const PosteriorParams& q, double obs_std) {
    if (obs_std <= 0) throw std::invalid_argument("elbo: observation std must be > 0");
    if (x.empty() || x.size() != recon.size())
      throw ShapeError("elbo: sequence and reconstruction are not aligned");
    Tensor sq_sum = Tensor::scalar(0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
      if (x[t].shape() != recon[t].shape())
        throw ShapeError("elbo: step " + std::to_string(t) + ": " + shape_str(x[t].shape()) +
                         " vs " + shape_str(recon[t].shape()));
      Tensor diff = sub(x[t], recon[t]);
      sq_sum = add(sq_sum, sum(mul(diff, diff)));
    }
    const double b = static_cast<double>(detail::batch_rows(x[0]));
    const double per_sample_dims =
        static_cast<double>(x.size()) * static_cast<double>(x[0].size()) / b;
    const double log_norm = std::log(obs_std * std::sqrt(2.0 * 3.14159265358979323846));
    Tensor loglik =
        add_scalar(scale(sq_sum, -0.5 / (obs_std * obs_std)), -b * per_sample_dims * log_norm);
    // KL(q || N(0, I)) = 1/2 sum(mu^2 + exp(lv) - lv - 1)
    Tensor inner = add_scalar(sub(add(mul(q.mu, q.mu), exp(q.logvar)), q.logvar), -1.0);
    Tensor kl = scale(sum(inner), 0.5);
    return {loglik, kl};
  }

  // per-sample ELBO components (batch mean)
  static ElboParts elbo(const std::vector<Tensor>& x, const std::vector<Tensor>& recon,
                        const PosteriorParams& q, double obs_std) {
    auto [loglik, kl] = elbo_sums(x, recon, q, obs_std);
    const double b = static_cast<double>(detail::batch_rows(x[0]));
    ElboParts parts;
    parts.reconstruction_loglik = loglik.item() / b;
    parts.kl = kl.item() / b;
    parts.elbo = parts.reconstruction_loglik - parts.kl;
    return parts;
  }

  // Production gradient path: encoder/readout through the tape, the latent
  // trajectory gradient through the adjoint solve. The ODE forward pass runs
  // untaped; observation states are re-watched as fresh leaves, the adjoint
  // turns their gradients into dL/dz0 and field-parameter gradients, and a
  // second seeded sweep pushes dL/dz0 back through the encoder.
  double loss_adjoint_grads(const std::vector<Tensor>& xs, const TimeGrid& grid,
                            const Tensor& eps, ParamSet& grads,
                            std::size_t* peak_adjoint_nodes = nullptr) const {
    check_batch(xs, grid);
    Tape tape;
    PosteriorParams q;
    Tensor z0;
    {
      Tape::Scope scope(tape);
      q = encode(xs);
      z0 = reparameterize(q, eps);
    }

    Trajectory traj;
    if (grid.size() == 1) {
      traj.grid = grid;
      traj.states.push_back(z0.detach());
    } else {
      traj = solve_forward(field(), z0.detach(), grid, params_, cfg_.substeps);
    }

    std::vector<Tensor> state_leaves;
    state_leaves.reserve(traj.states.size());
    Tensor loss;
    {
      Tape::Scope scope(tape);
      std::vector<Tensor> recon;
      recon.reserve(traj.states.size());
      for (const Tensor& s : traj.states) {
        state_leaves.push_back(s.detach());
        tape.watch(state_leaves.back());  // dL/dstate is read off these leaves
        recon.push_back(readout_.forward(params_, state_leaves.back()));
      }
      auto [loglik, kl] = elbo_sums(xs, recon, q, cfg_.observation_std);
      loss = scale(sub(kl, loglik), 1.0 / static_cast<double>(detail::batch_rows(xs[0])));
    }

    tape.backward_seeded(loss, {1.0});
    grads = collect_grads(tape);
    std::vector<Tensor> state_grads;
    state_grads.reserve(state_leaves.size());
    for (const Tensor& s : state_leaves) state_grads.push_back(tape.grad(s));

    Tensor z0_grad;
    if (grid.size() == 1) {
      z0_grad = state_grads[0];
    } else {
      AdjointResult adj = solve_adjoint(field(), traj, state_grads, params_, cfg_.substeps);
      grads.accumulate(adj.theta_grad);
      z0_grad = adj.z0_grad;
      if (peak_adjoint_nodes) *peak_adjoint_nodes = adj.peak_tape_nodes;
    }

    tape.backward_seeded(z0, z0_grad.values());
    grads.accumulate(collect_grads(tape));
    return loss.item();
  }

  // Oracle gradient path: one tape through encoder, RK4 solver and readout.
  double loss_tape_grads(const std::vector<Tensor>& xs, const TimeGrid& grid, const Tensor& eps,
                         ParamSet& grads) const {
    check_batch(xs, grid);
    Tape tape;
    Tape::Scope scope(tape);
    PosteriorParams q = encode(xs);
    Tensor z0 = reparameterize(q, eps);
    std::vector<Tensor> states;
    if (grid.size() == 1)
      states.push_back(z0);
    else
      states = solve_forward(field(), z0, grid, params_, cfg_.substeps).states;
    std::vector<Tensor> recon;
    recon.reserve(states.size());
    for (const Tensor& s : states) recon.push_back(readout_.forward(params_, s));
    auto [loglik, kl] = elbo_sums(xs, recon, q, cfg_.observation_std);
    Tensor loss =
        scale(sub(kl, loglik), 1.0 / static_cast<double>(detail::batch_rows(xs[0])));
    grads = tape.backward(loss, params_);
    return loss.item();
  }

  // one optimizer update over the batch; returns the mean -ELBO
  double train_step(const std::vector<Tensor>& xs, const TimeGrid& grid, AdamState& adam,
                    const Tensor& eps) {
    ParamSet grads;
    const double loss = loss_adjoint_grads(xs, grid, eps, grads);
    adam_step(adam, params_, grads);
    return loss;
  }

  // plain -ELBO with eps = 0 (posterior mean decoding); no tape involved
  double eval_loss(const std::vector<Tensor>& xs, const TimeGrid& grid) const {
    check_batch(xs, grid);
    PosteriorParams q = encode(xs);
    std::vector<Tensor> recon = decode(q.mu, grid, grid.front());
    ElboParts parts = elbo(xs, recon, q, cfg_.observation_std);
    return -parts.elbo;
  }

 private:
  void build_specs() {
    if (cfg_.encoder_kind == LatentOdeConfig::EncoderKind::Lstm)
      lstm_ = LstmCell{"enc", Dataset_features_, cfg_.encoder_hidden};
    else
      rnn_ = RnnCell{"enc", Dataset_features_, cfg_.encoder_hidden};
    head_ = LinearLayer{"head", cfg_.encoder_hidden, 2 * cfg_.latent_dim};
    field_ = Mlp::make("field", cfg_.latent_dim, cfg_.field_hidden_layers, cfg_.field_hidden,
                       cfg_.latent_dim, cfg_.field_activation);
    readout_ = Mlp::make("readout", cfg_.latent_dim, 1, cfg_.readout_hidden, Dataset_features_,
                         cfg_.readout_activation);
  }

  static void check_batch(const std::vector<Tensor>& xs, const TimeGrid& grid) {
    if (xs.empty()) throw ShapeError("latent ode: empty batch");
    if (xs.size() != grid.size())
      throw ShapeError("latent ode: " + std::to_string(xs.size()) + " observations for " +
                       std::to_string(grid.size()) + " grid times");
  }

  ParamSet collect_grads(const Tape& tape) const {
    ParamSet g;
    for (std::size_t i = 0; i < params_.size(); ++i)
      g.add(params_.name(i), tape.grad(params_.tensor(i)));
    return g;
  }

  static constexpr std::size_t Dataset_features_ = 2;

  LatentOdeConfig cfg_;
  ParamSet params_;
  LstmCell lstm_;
  RnnCell rnn_;
  LinearLayer head_;
  Mlp field_;
  Mlp readout_;
};

}  // namespace latentode

#endif  // LATENTODE_LATENT_ODE_HPP
