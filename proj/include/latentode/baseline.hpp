#ifndef LATENTODE_BASELINE_HPP
#define LATENTODE_BASELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "latentode/nn.hpp"
#include "latentode/optim.hpp"
#include "latentode/rng.hpp"
#include "latentode/tensor.hpp"

namespace latentode {

// ---------------------------------------------------------------------------
// rmse: sqrt of the mean squared error over all timesteps and features
// ---------------------------------------------------------------------------

inline double rmse(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ShapeError("rmse: sequences are not aligned (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()) + ")");
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].shape() != target[t].shape())
      throw ShapeError("rmse: step " + std::to_string(t) + ": " + shape_str(pred[t].shape()) +
                       " vs " + shape_str(target[t].shape()));
    for (std::size_t k = 0; k < pred[t].size(); ++k) {
      const double d = pred[t][k] - target[t][k];
      acc += d * d;
      ++count;
    }
  }
  return std::sqrt(acc / static_cast<double>(count));
}

// tape-friendly rmse used as the baseline training loss
inline Tensor rmse_loss(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ShapeError("rmse_loss: sequences are not aligned");
  Tensor sq = Tensor::scalar(0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    Tensor d = sub(pred[t], target[t]);
    sq = add(sq, sum(mul(d, d)));
    count += pred[t].size();
  }
  return sqrt(scale(sq, 1.0 / static_cast<double>(count)));
}

// ---------------------------------------------------------------------------
// LSTM autoencoder baseline: stacked encoder -> 2-dim code -> mirrored
// stacked decoder fed the repeated code -> per-step linear readout
// ---------------------------------------------------------------------------

struct BaselineConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_size = 45;
  std::size_t encoded_dim = 2;

  void validate() const {
    if (num_layers == 0 || hidden_size == 0 || encoded_dim == 0)
      throw std::invalid_argument("BaselineConfig: sizes must be positive");
  }
};

class LstmAutoencoder {
 public:
  static constexpr std::size_t kFeatures = 2;

  LstmAutoencoder(const BaselineConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build_specs();
    Rng rng(seed);
    for (const auto& c : enc_) c.init(params_, rng);
    code_head_.init(params_, rng);
    for (const auto& c : dec_) c.init(params_, rng);
    readout_.init(params_, rng);
  }

  static LstmAutoencoder with_params(const BaselineConfig& cfg, const ParamSet& loaded) {
    LstmAutoencoder m(cfg, 0);
    m.load_values(loaded);
    return m;
  }

  const BaselineConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  void load_values(const ParamSet& loaded) {
    if (loaded.size() != params_.size())
      throw ShapeError("LstmAutoencoder: checkpoint has " + std::to_string(loaded.size()) +
                       " tensors, model expects " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& name = params_.name(i);
      const Tensor& src = loaded.at(name);
      Tensor& dst = params_.tensor(i);
      if (src.shape() != dst.shape())
        throw ShapeError("LstmAutoencoder: shape mismatch for '" + name + "'");
      dst.values() = src.values();
    }
  }

  // 2-dim code from the final top-layer hidden state
  Tensor encode(const std::vector<Tensor>& xs) const {
    if (xs.empty()) throw ShapeError("baseline: empty sequence");
    std::vector<Tensor> h(cfg_.num_layers), c(cfg_.num_layers);
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      h[l] = Tensor(hidden_shape(xs[0]));
      c[l] = Tensor(hidden_shape(xs[0]));
    }
    for (const Tensor& x : xs) {
      Tensor input = x;
      for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        auto [h2, c2] = enc_[l].step(params_, input, h[l], c[l]);
        h[l] = std::move(h2);
        c[l] = std::move(c2);
        input = h[l];
      }
    }
    return code_head_.forward(params_, h[cfg_.num_layers - 1]);
  }

  std::vector<Tensor> decode(const Tensor& code, std::size_t steps) const {
    std::vector<Tensor> h(cfg_.num_layers), c(cfg_.num_layers);
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      h[l] = Tensor(hidden_shape(code));
      c[l] = Tensor(hidden_shape(code));
    }
    std::vector<Tensor> out;
    out.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor input = code;  // the code is repeated as input at every step
      for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        auto [h2, c2] = dec_[l].step(params_, input, h[l], c[l]);
        h[l] = std::move(h2);
        c[l] = std::move(c2);
        input = h[l];
      }
      out.push_back(readout_.forward(params_, h[cfg_.num_layers - 1]));
    }
    return out;
  }

  std::vector<Tensor> forward(const std::vector<Tensor>& xs) const {
    return decode(encode(xs), xs.size());
  }

  // one optimizer update; returns the batch RMSE
  double train_step(const std::vector<Tensor>& xs, AdamState& adam) {
    Tape tape;
    Tape::Scope scope(tape);
    std::vector<Tensor> recon = forward(xs);
    Tensor loss = rmse_loss(recon, xs);
    ParamSet grads = tape.backward(loss, params_);
    adam_step(adam, params_, grads);
    return loss.item();
  }

  double eval_rmse(const std::vector<Tensor>& xs) const { return rmse(forward(xs), xs); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& c : enc_) n += c.param_count();
    for (const auto& c : dec_) n += c.param_count();
    return n + code_head_.param_count() + readout_.param_count();
  }

 private:
  void build_specs() {
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      enc_.push_back(LstmCell{"enc.l" + std::to_string(l),
                              l == 0 ? kFeatures : cfg_.hidden_size, cfg_.hidden_size});
      dec_.push_back(LstmCell{"dec.l" + std::to_string(l),
                              l == 0 ? cfg_.encoded_dim : cfg_.hidden_size, cfg_.hidden_size});
    }
    code_head_ = LinearLayer{"code", cfg_.hidden_size, cfg_.encoded_dim};
    readout_ = LinearLayer{"out", cfg_.hidden_size, kFeatures};
  }

  Shape hidden_shape(const Tensor& x) const {
    return x.rank() == 2 ? Shape{x.shape()[0], cfg_.hidden_size} : Shape{cfg_.hidden_size};
  }

  BaselineConfig cfg_;
  ParamSet params_;
  std::vector<LstmCell> enc_;
  std::vector<LstmCell> dec_;
  LinearLayer code_head_;
  LinearLayer readout_;
};

}  // namespace latentode

#endif  // LATENTODE_BASELINE_HPP
