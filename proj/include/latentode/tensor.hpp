#ifndef LATENTODE_TENSOR_HPP
#define LATENTODE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace latentode {

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct TapeError : std::runtime_error {
  explicit TapeError(const std::string& m) : std::runtime_error(m) {}
};

// ---------------------------------------------------------------------------
// shapes
// ---------------------------------------------------------------------------

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tape;

// ---------------------------------------------------------------------------
// Tensor: dense row-major double array, optionally participating in the
// gradient tape. Value semantics; copies share nothing but the tape node id.
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_numel(shape_) != values_.size())
      throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " +
                       std::to_string(values_.size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  double item() const {
    if (size() != 1)
      throw ShapeError("Tensor::item: expected scalar, got " + shape_str(shape_));
    return values_[0];
  }

  Tensor& set_requires_grad(bool b) {
    requires_grad_ = b;
    return *this;
  }
  bool requires_grad() const { return requires_grad_; }

  // plain copy detached from any tape
  Tensor detach() const { return Tensor(shape_, values_); }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  // tape linkage; mutable so const inputs can be lazily watched
  mutable std::uint64_t tape_id_ = 0;
  mutable int node_ = -1;
  friend class Tape;
};

// ---------------------------------------------------------------------------
// ParamSet: ordered, name-unique collection of tensors. Doubles as the
// gradient map returned by backward (same names and shapes).
// ---------------------------------------------------------------------------

class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name))
      throw std::invalid_argument("ParamSet: duplicate name '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter '" + name + "'");
    return tensors_[it->second];
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter '" + name + "'");
    return tensors_[it->second];
  }

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(total_elements());
    for (const auto& t : tensors_)
      out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  }

  ParamSet unflatten_like(const std::vector<double>& flat) const {
    if (flat.size() != total_elements())
      throw ShapeError("ParamSet::unflatten_like: got " + std::to_string(flat.size()) +
                       " values, expected " + std::to_string(total_elements()));
    ParamSet out;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      std::vector<double> v(flat.begin() + pos, flat.begin() + pos + tensors_[i].size());
      pos += tensors_[i].size();
      out.add(names_[i], Tensor(tensors_[i].shape(), std::move(v)));
    }
    return out;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      out.add(names_[i], Tensor(tensors_[i].shape()));
    return out;
  }

  // deep copy with requires_grad set on every tensor (fresh leaf set)
  ParamSet grad_copy() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      Tensor t = tensors_[i].detach();
      t.set_requires_grad(true);
      out.add(names_[i], std::move(t));
    }
    return out;
  }

  // elementwise += of a same-structured set
  void accumulate(const ParamSet& other) {
    for (std::size_t i = 0; i < other.size(); ++i) {
      Tensor& dst = at(other.name(i));
      const Tensor& src = other.tensor(i);
      if (dst.shape() != src.shape())
        throw ShapeError("ParamSet::accumulate: shape mismatch on '" + other.name(i) + "': " +
                         shape_str(dst.shape()) + " vs " + shape_str(src.shape()));
      for (std::size_t k = 0; k < dst.size(); ++k) dst.values()[k] += src.values()[k];
    }
  }

  // subset of entries whose names start with prefix; prefix is stripped
  ParamSet extract_prefix(const std::string& prefix) const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i].rfind(prefix, 0) == 0)
        out.add(names_[i].substr(prefix.size()), tensors_[i]);
    return out;
  }

  void add_prefixed(const std::string& prefix, const ParamSet& other) {
    for (std::size_t i = 0; i < other.size(); ++i)
      add(prefix + other.name(i), other.tensor(i));
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tape: dynamic record of primitive operations. One tape per thread of
// execution; activation is scoped. reset() gives the tape a fresh identity so
// tensors from earlier generations are treated as constants.
// ---------------------------------------------------------------------------

namespace detail {
inline Tape*& active_tape_slot() {
  thread_local Tape* slot = nullptr;
  return slot;
}
inline std::uint64_t next_tape_id() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

class Tape {
 public:
  Tape() : id_(detail::next_tape_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(detail::active_tape_slot()) {
      detail::active_tape_slot() = &t;
    }
    ~Scope() { detail::active_tape_slot() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active() { return detail::active_tape_slot(); }

  void reset() {
    nodes_.clear();
    ops_.clear();
    consumed_ = false;
    id_ = detail::next_tape_id();
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_ops() const { return ops_.size(); }
  // high-water mark of simultaneously held nodes; survives reset()
  std::size_t peak_nodes() const { return peak_nodes_; }
  void clear_peak() { peak_nodes_ = 0; }

  bool tracks(const Tensor& t) const { return t.tape_id_ == id_ && t.node_ >= 0; }

  // ensure t has a leaf node on this tape; returns the node id
  int watch(const Tensor& t) {
    if (tracks(t)) return t.node_;
    int id = add_node(t.shape(), t.values());
    t.tape_id_ = id_;
    t.node_ = id;
    return id;
  }

  // create the output node for an op; the backward closure is pushed after,
  // once the node id is known
  int make_output(Tensor& out) {
    if (consumed_)
      throw TapeError("tape already consumed by backward; reset before recording");
    int id = add_node(out.shape(), out.values());
    out.tape_id_ = id_;
    out.node_ = id;
    return id;
  }

  void push_backward(std::function<void(Tape&)> fn) { ops_.push_back(std::move(fn)); }

  // --- node access for backward closures ---
  const std::vector<double>& vals(int id) const { return nodes_[id].values; }
  const Shape& node_shape(int id) const { return nodes_[id].shape; }
  // nullptr means the node's gradient is identically zero so far
  const std::vector<double>* grad_if_set(int id) const {
    return nodes_[id].grad.empty() ? nullptr : &nodes_[id].grad;
  }
  std::vector<double>& grad_accum(int id) {
    auto& g = nodes_[id].grad;
    if (g.empty()) g.assign(shape_numel(nodes_[id].shape), 0.0);
    return g;
  }

  // Seeded reverse sweep; callable repeatedly, each call starts from clean
  // gradients. Used by the adjoint solver and the two-pass training step; the
  // public backward() below adds the scalar-loss contract on top.
  void backward_seeded(const Tensor& out, const std::vector<double>& seed) {
    if (!tracks(out)) throw TapeError("backward: tensor is not recorded on this tape");
    if (seed.size() != out.size())
      throw ShapeError("backward: seed has " + std::to_string(seed.size()) +
                       " values, output has " + std::to_string(out.size()));
    for (auto& n : nodes_) n.grad.clear();
    nodes_[out.node_].grad = seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
  }

  // Gradient of t from the last seeded sweep; zeros if unreached. Only
  // tensors that carry a node id are readable: op outputs, and leaves passed
  // through watch(). A leaf that was merely consumed by an op may have been
  // watched via an internal copy, so watch() anything you will query.
  Tensor grad(const Tensor& t) const {
    if (tracks(t) && !nodes_[t.node_].grad.empty())
      return Tensor(t.shape(), nodes_[t.node_].grad);
    return Tensor(t.shape());
  }

  // scalar-loss reverse pass; returns a gradient map aligned with params
  ParamSet backward(const Tensor& loss, const ParamSet& params) {
    if (loss.size() != 1)
      throw TapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (consumed_) throw TapeError("backward called twice without re-running the forward pass");
    consumed_ = true;
    backward_seeded(loss, {1.0});
    ParamSet grads;
    for (std::size_t i = 0; i < params.size(); ++i)
      grads.add(params.name(i), grad(params.tensor(i)));
    return grads;
  }

 private:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
  };

  int add_node(const Shape& shape, const std::vector<double>& values) {
    nodes_.push_back(Node{shape, values, {}});
    if (nodes_.size() > peak_nodes_) peak_nodes_ = nodes_.size();
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> ops_;
  std::uint64_t id_;
  std::size_t peak_nodes_ = 0;
  bool consumed_ = false;
};

// spec-shaped free function over the active tape
inline ParamSet backward(const Tensor& loss, const ParamSet& params) {
  Tape* t = Tape::active();
  if (!t) throw TapeError("backward: no active tape");
  return t->backward(loss, params);
}

// ---------------------------------------------------------------------------
// primitive ops
// ---------------------------------------------------------------------------

namespace detail {

inline void ensure_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": produced a non-finite value");
}

inline bool recording(std::initializer_list<const Tensor*> inputs) {
  Tape* t = Tape::active();
  if (!t) return false;
  for (const Tensor* in : inputs)
    if (in->requires_grad() || t->tracks(*in)) return true;
  return false;
}

// dpartial(x, y, g): contribution to d/dx given input value x, output y, grad g
enum class BinKind { Add, Sub, Mul };

inline Tensor binary_elementwise(const char* name, BinKind kind, const Tensor& a,
                                 const Tensor& b) {
  const bool as = a.size() == 1 && b.size() != 1;  // scalar broadcast sides
  const bool bs = b.size() == 1 && a.size() != 1;
  if (!as && !bs && a.shape() != b.shape())
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not conform");
  const Tensor& big = as ? b : a;
  Tensor out(big.shape());
  const std::size_t n = out.size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  switch (kind) {
    case BinKind::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[as ? 0 : i] + pb[bs ? 0 : i];
      break;
    case BinKind::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[as ? 0 : i] - pb[bs ? 0 : i];
      break;
    case BinKind::Mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[as ? 0 : i] * pb[bs ? 0 : i];
      break;
  }
  ensure_finite(name, out.values());

  if (recording({&a, &b})) {
    Tape& t = *Tape::active();
    const int ia = t.watch(a);
    const int ib = t.watch(b);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      const std::size_t m = g->size();
      auto& ga = tp.grad_accum(ia);
      auto& gb = tp.grad_accum(ib);
      const auto& va = tp.vals(ia);
      const auto& vb = tp.vals(ib);
      switch (kind) {
        case BinKind::Add:
          for (std::size_t i = 0; i < m; ++i) {
            ga[as ? 0 : i] += (*g)[i];
            gb[bs ? 0 : i] += (*g)[i];
          }
          break;
        case BinKind::Sub:
          for (std::size_t i = 0; i < m; ++i) {
            ga[as ? 0 : i] += (*g)[i];
            gb[bs ? 0 : i] -= (*g)[i];
          }
          break;
        case BinKind::Mul:
          for (std::size_t i = 0; i < m; ++i) {
            ga[as ? 0 : i] += (*g)[i] * vb[bs ? 0 : i];
            gb[bs ? 0 : i] += (*g)[i] * va[as ? 0 : i];
          }
          break;
      }
    });
  }
  return out;
}

// unary op: dydx(x, y) is the local derivative
template <class F, class D>
Tensor unary_elementwise(const char* name, const Tensor& x, F f, D dydx) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
  ensure_finite(name, out.values());
  if (recording({&x})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      auto& gx = tp.grad_accum(ix);
      const auto& vx = tp.vals(ix);
      const auto& vy = tp.vals(io);
      for (std::size_t i = 0; i < g->size(); ++i) gx[i] += (*g)[i] * dydx(vx[i], vy[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise("add", detail::BinKind::Add, a, b);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise("sub", detail::BinKind::Sub, a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise("mul", detail::BinKind::Mul, a, b);
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary_elementwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_elementwise(
      "sigmoid", x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

// ELU with alpha = 1
inline Tensor elu(const Tensor& x) {
  return detail::unary_elementwise(
      "elu", x, [](double v) { return v > 0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_elementwise(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_elementwise(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor sqrt(const Tensor& x) {
  return detail::unary_elementwise(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary_elementwise(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary_elementwise(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// gradient passes through inside [lo, hi], zero outside
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
  return detail::unary_elementwise(
      "clamp", x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

inline Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  detail::ensure_finite("sum", out.values());
  if (detail::recording({&x})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      auto& gx = tp.grad_accum(ix);
      for (double& v : gx) v += (*g)[0];
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  detail::ensure_finite("mean", out.values());
  if (detail::recording({&x})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      auto& gx = tp.grad_accum(ix);
      for (double& v : gx) v += (*g)[0] * inv;
    });
  }
  return out;
}

// matmul: [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1))
    throw ShapeError("matmul: expected [m,k] x [k,n] or [m,k] x [k], got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const bool vec = b.rank() == 1;
  const std::size_t n = vec ? 1 : b.shape()[1];
  if ((vec ? b.shape()[0] : b.shape()[0]) != k)
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Tensor out(vec ? Shape{m} : Shape{m, n});
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t l = 0; l < k; ++l) {
        const double av = pa[i * k + l];
        const double* brow = pb + l * n;
        double* orow = po + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
  }
  detail::ensure_finite("matmul", out.values());
  if (detail::recording({&a, &b})) {
    Tape& t = *Tape::active();
    const int ia = t.watch(a);
    const int ib = t.watch(b);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      const auto& va = tp.vals(ia);
      const auto& vb = tp.vals(ib);
      auto& ga = tp.grad_accum(ia);
      auto& gb = tp.grad_accum(ib);
      // dA = G B^T ; dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = (*g)[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t l = 0; l < k; ++l) {
            ga[i * k + l] += gv * vb[l * n + j];
            gb[l * n + j] += gv * va[i * k + l];
          }
        }
    });
  }
  return out;
}

// affine map: x [B,in] or [in]; W [out,in]; b [out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + shape_str(w.shape()));
  const std::size_t out_dim = w.shape()[0], in_dim = w.shape()[1];
  if (bias.shape() != Shape{out_dim})
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  const bool batched = x.rank() == 2;
  const std::size_t bsz = batched ? x.shape()[0] : 1;
  const std::size_t xin = batched ? x.shape()[1] : (x.rank() == 1 ? x.shape()[0] : 0);
  if (xin != in_dim)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  Tensor out(batched ? Shape{bsz, out_dim} : Shape{out_dim});
  {
    const double* px = x.values().data();
    const double* pw = w.values().data();
    const double* pb = bias.values().data();
    double* po = out.values().data();
    for (std::size_t r = 0; r < bsz; ++r) {
      const double* xrow = px + r * in_dim;
      double* orow = po + r * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* wrow = pw + o * in_dim;
        double acc = pb[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += xrow[i] * wrow[i];
        orow[o] = acc;
      }
    }
  }
  detail::ensure_finite("linear", out.values());
  if (detail::recording({&x, &w, &bias})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int iw = t.watch(w);
    const int ib = t.watch(bias);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      const auto& vx = tp.vals(ix);
      const auto& vw = tp.vals(iw);
      auto& gx = tp.grad_accum(ix);
      auto& gw = tp.grad_accum(iw);
      auto& gb = tp.grad_accum(ib);
      for (std::size_t r = 0; r < bsz; ++r) {
        const double* grow = g->data() + r * out_dim;
        const double* xrow = vx.data() + r * in_dim;
        double* gxrow = gx.data() + r * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double gv = grow[o];
          if (gv == 0.0) continue;
          gb[o] += gv;
          const double* wrow = vw.data() + o * in_dim;
          double* gwrow = gw.data() + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) {
            gxrow[i] += gv * wrow[i];
            gwrow[i] += gv * xrow[i];
          }
        }
      }
    });
  }
  return out;
}

// affine map without bias: x [B,in] or [in]; W [out,in]
inline Tensor linear_nobias(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2)
    throw ShapeError("linear_nobias: weight must be 2-D, got " + shape_str(w.shape()));
  const std::size_t out_dim = w.shape()[0], in_dim = w.shape()[1];
  const bool batched = x.rank() == 2;
  const std::size_t bsz = batched ? x.shape()[0] : 1;
  const std::size_t xin = batched ? x.shape()[1] : (x.rank() == 1 ? x.shape()[0] : 0);
  if (xin != in_dim)
    throw ShapeError("linear_nobias: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  Tensor out(batched ? Shape{bsz, out_dim} : Shape{out_dim});
  {
    const double* px = x.values().data();
    const double* pw = w.values().data();
    double* po = out.values().data();
    for (std::size_t r = 0; r < bsz; ++r) {
      const double* xrow = px + r * in_dim;
      double* orow = po + r * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* wrow = pw + o * in_dim;
        double acc = 0.0;
        for (std::size_t i = 0; i < in_dim; ++i) acc += xrow[i] * wrow[i];
        orow[o] = acc;
      }
    }
  }
  detail::ensure_finite("linear_nobias", out.values());
  if (detail::recording({&x, &w})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int iw = t.watch(w);
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      const auto& vx = tp.vals(ix);
      const auto& vw = tp.vals(iw);
      auto& gx = tp.grad_accum(ix);
      auto& gw = tp.grad_accum(iw);
      for (std::size_t r = 0; r < bsz; ++r) {
        const double* grow = g->data() + r * out_dim;
        const double* xrow = vx.data() + r * in_dim;
        double* gxrow = gx.data() + r * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double gv = grow[o];
          if (gv == 0.0) continue;
          const double* wrow = vw.data() + o * in_dim;
          double* gwrow = gw.data() + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) {
            gxrow[i] += gv * wrow[i];
            gwrow[i] += gv * xrow[i];
          }
        }
      }
    });
  }
  return out;
}

// concat along axis 0; rank-1 pieces, or rank-2 pieces with equal column count
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rank = parts[0].rank();
  const std::size_t ncols = parts[0].cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.cols() != ncols))
      throw ShapeError("concat: mismatched piece shapes " + shape_str(parts[0].shape()) +
                       " and " + shape_str(p.shape()));
    total_rows += p.rows();
  }
  Tensor out(rank == 2 ? Shape{total_rows, ncols} : Shape{total_rows});
  std::size_t pos = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + pos);
    pos += p.size();
  }
  detail::ensure_finite("concat", out.values());
  bool rec = false;
  for (const auto& p : parts)
    if (detail::recording({&p})) rec = true;
  if (rec) {
    Tape& t = *Tape::active();
    std::vector<int> ids;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
      ids.push_back(t.watch(p));
      sizes.push_back(p.size());
    }
    const int io = t.make_output(out);
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      std::size_t off = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        auto& gp = tp.grad_accum(ids[p]);
        for (std::size_t i = 0; i < sizes[p]; ++i) gp[i] += (*g)[off + i];
        off += sizes[p];
      }
    });
  }
  return out;
}

inline Tensor concat(const Tensor& a, const Tensor& b) { return concat(std::vector<Tensor>{a, b}); }

// slice [begin, end) along the given axis; rank-1 (axis 0) or rank-2 (axis 0 or 1)
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || x.rank() > 2 || axis >= x.rank())
    throw ShapeError("slice: unsupported axis " + std::to_string(axis) + " for shape " +
                     shape_str(x.shape()));
  if (begin >= end || end > x.shape()[axis])
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for shape " + shape_str(x.shape()));
  const std::size_t len = end - begin;
  Tensor out;
  if (x.rank() == 1) {
    out = Tensor(Shape{len});
    std::copy(x.values().begin() + begin, x.values().begin() + end, out.values().begin());
  } else if (axis == 0) {
    const std::size_t c = x.shape()[1];
    out = Tensor(Shape{len, c});
    std::copy(x.values().begin() + begin * c, x.values().begin() + end * c, out.values().begin());
  } else {
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    out = Tensor(Shape{r, len});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) out[i * len + j] = x[i * c + begin + j];
  }
  if (detail::recording({&x})) {
    Tape& t = *Tape::active();
    const int ix = t.watch(x);
    const int io = t.make_output(out);
    const Shape xs = x.shape();
    t.push_backward([=](Tape& tp) {
      const auto* g = tp.grad_if_set(io);
      if (!g) return;
      auto& gx = tp.grad_accum(ix);
      if (xs.size() == 1) {
        for (std::size_t i = 0; i < len; ++i) gx[begin + i] += (*g)[i];
      } else if (axis == 0) {
        const std::size_t c = xs[1];
        for (std::size_t i = 0; i < len * c; ++i) gx[begin * c + i] += (*g)[i];
      } else {
        const std::size_t c = xs[1];
        for (std::size_t i = 0; i < xs[0]; ++i)
          for (std::size_t j = 0; j < len; ++j) gx[i * c + begin + j] += (*g)[i * len + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// finite differences: the independent gradient oracle
// ---------------------------------------------------------------------------

// f: callable double(const ParamSet&), deterministic
template <class F>
ParamSet finite_diff(F&& f, const ParamSet& params, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff: eps must be > 0");
  ParamSet grads = params.zeros_like();
  ParamSet work;
  for (std::size_t i = 0; i < params.size(); ++i)
    work.add(params.name(i), params.tensor(i).detach());
  for (std::size_t i = 0; i < work.size(); ++i) {
    Tensor& t = work.tensor(i);
    Tensor& g = grads.tensor(i);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double orig = t.values()[k];
      t.values()[k] = orig + eps;
      const double fp = f(static_cast<const ParamSet&>(work));
      t.values()[k] = orig - eps;
      const double fm = f(static_cast<const ParamSet&>(work));
      t.values()[k] = orig;
      g.values()[k] = (fp - fm) / (2.0 * eps);
    }
  }
  return grads;
}

}  // namespace latentode

#endif  // LATENTODE_TENSOR_HPP
