#ifndef LATENTODE_NN_HPP
#define LATENTODE_NN_HPP

#include <string>
#include <utility>
#include <vector>

#include "latentode/rng.hpp"
#include "latentode/tensor.hpp"

namespace latentode {

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

enum class Activation { None, Tanh, Sigmoid, Relu, Elu };

inline Tensor apply_activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::None: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Relu: return relu(x);
    case Activation::Elu: return elu(x);
  }
  throw std::invalid_argument("unknown activation");
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// initialization: weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero
// ---------------------------------------------------------------------------

namespace detail {
inline Tensor uniform_weights(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw std::invalid_argument("init: zero fan-in");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}
inline void check_dim(std::size_t d, const char* what) {
  if (d == 0) throw std::invalid_argument(std::string("init: zero dimension for ") + what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// layers; parameters live in a ParamSet under the layer's name prefix
// ---------------------------------------------------------------------------

struct LinearLayer {
  std::string name;
  std::size_t in = 0, out = 0;

  void init(ParamSet& ps, Rng& rng) const {
    detail::check_dim(in, name.c_str());
    detail::check_dim(out, name.c_str());
    ps.add(name + ".W", detail::uniform_weights({out, in}, in, rng)).set_requires_grad(true);
    ps.add(name + ".b", Tensor(Shape{out})).set_requires_grad(true);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x) const {
    return linear(x, ps.at(name + ".W"), ps.at(name + ".b"));
  }

  std::size_t param_count() const { return out * (in + 1); }
};

struct Mlp {
  std::string name;
  std::vector<std::size_t> dims;  // input, hidden..., output
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::None;  // final layer linear by default
  std::vector<LinearLayer> layers;

  static Mlp make(std::string name, std::size_t input, std::size_t hidden_layers,
                  std::size_t hidden_size, std::size_t output, Activation act,
                  Activation out_act = Activation::None) {
    Mlp m;
    m.name = std::move(name);
    m.hidden_activation = act;
    m.output_activation = out_act;
    m.dims.push_back(input);
    for (std::size_t i = 0; i < hidden_layers; ++i) m.dims.push_back(hidden_size);
    m.dims.push_back(output);
    for (std::size_t i = 0; i + 1 < m.dims.size(); ++i)
      m.layers.push_back({m.name + ".l" + std::to_string(i), m.dims[i], m.dims[i + 1]});
    return m;
  }

  void init(ParamSet& ps, Rng& rng) const {
    for (const auto& l : layers) l.init(ps, rng);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(ps, h);
      h = apply_activation(i + 1 < layers.size() ? hidden_activation : output_activation, h);
    }
    return h;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }
};

inline Tensor mlp_forward(const Mlp& mlp, const ParamSet& ps, const Tensor& x) {
  return mlp.forward(ps, x);
}

// gate layout in the fused weights: input, forget, candidate, output
struct LstmCell {
  std::string name;
  std::size_t input = 0, hidden = 0;

  void init(ParamSet& ps, Rng& rng) const {
    detail::check_dim(input, name.c_str());
    detail::check_dim(hidden, name.c_str());
    ps.add(name + ".W", detail::uniform_weights({4 * hidden, input}, input, rng))
        .set_requires_grad(true);
    ps.add(name + ".U", detail::uniform_weights({4 * hidden, hidden}, hidden, rng))
        .set_requires_grad(true);
    ps.add(name + ".b", Tensor(Shape{4 * hidden})).set_requires_grad(true);
  }

  // returns (h', c')
  std::pair<Tensor, Tensor> step(const ParamSet& ps, const Tensor& x, const Tensor& h,
                                 const Tensor& c) const {
    const Tensor& w = ps.at(name + ".W");
    const Tensor& u = ps.at(name + ".U");
    const Tensor& b = ps.at(name + ".b");
    Tensor gx = linear(x, w, b);
    Tensor gh = linear_nobias(h, u);
    Tensor gates = add(gx, gh);
    const std::size_t axis = gates.rank() == 2 ? 1 : 0;
    Tensor gi = sigmoid(slice(gates, axis, 0, hidden));
    Tensor gf = sigmoid(slice(gates, axis, hidden, 2 * hidden));
    Tensor gg = tanh(slice(gates, axis, 2 * hidden, 3 * hidden));
    Tensor go = sigmoid(slice(gates, axis, 3 * hidden, 4 * hidden));
    Tensor c_new = add(mul(gf, c), mul(gi, gg));
    Tensor h_new = mul(go, tanh(c_new));
    return {h_new, c_new};
  }

  std::size_t param_count() const { return 4 * (hidden * (input + hidden) + hidden); }
};

struct RnnCell {
  std::string name;
  std::size_t input = 0, hidden = 0;

  void init(ParamSet& ps, Rng& rng) const {
    detail::check_dim(input, name.c_str());
    detail::check_dim(hidden, name.c_str());
    ps.add(name + ".Wx", detail::uniform_weights({hidden, input}, input, rng))
        .set_requires_grad(true);
    ps.add(name + ".Wh", detail::uniform_weights({hidden, hidden}, hidden, rng))
        .set_requires_grad(true);
    ps.add(name + ".b", Tensor(Shape{hidden})).set_requires_grad(true);
  }

  // h' = tanh(Wx x + Wh h + b)
  Tensor step(const ParamSet& ps, const Tensor& x, const Tensor& h) const {
    Tensor pre = add(linear(x, ps.at(name + ".Wx"), ps.at(name + ".b")),
                     linear_nobias(h, ps.at(name + ".Wh")));
    return tanh(pre);
  }

  std::size_t param_count() const { return hidden * (input + hidden) + hidden; }
};

// ---------------------------------------------------------------------------
// sequence encoding; initial recurrent state is zeros
// ---------------------------------------------------------------------------

namespace detail {
inline Shape hidden_shape(const Tensor& x, std::size_t hidden) {
  return x.rank() == 2 ? Shape{x.shape()[0], hidden} : Shape{hidden};
}
}  // namespace detail

inline Tensor encode_sequence(const LstmCell& cell, const ParamSet& ps,
                              const std::vector<Tensor>& xs, bool reverse) {
  if (xs.empty()) throw ShapeError("encode_sequence: empty sequence");
  Tensor h(detail::hidden_shape(xs[0], cell.hidden));
  Tensor c(detail::hidden_shape(xs[0], cell.hidden));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& x = xs[reverse ? xs.size() - 1 - k : k];
    auto [h2, c2] = cell.step(ps, x, h, c);
    h = std::move(h2);
    c = std::move(c2);
  }
  return h;
}

inline Tensor encode_sequence(const RnnCell& cell, const ParamSet& ps,
                              const std::vector<Tensor>& xs, bool reverse) {
  if (xs.empty()) throw ShapeError("encode_sequence: empty sequence");
  Tensor h(detail::hidden_shape(xs[0], cell.hidden));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& x = xs[reverse ? xs.size() - 1 - k : k];
    h = cell.step(ps, x, h);
  }
  return h;
}

}  // namespace latentode

#endif  // LATENTODE_NN_HPP
