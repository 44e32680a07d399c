#include "diffqg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace diffqg::ad {

Value Value::zeros_like(const Value& v) {
  Value z;
  z.complex = v.complex;
  if (v.complex) {
    z.spec.assign(v.spec.size(), cplx(0.0, 0.0));
  } else {
    z.real.assign(v.real.size(), 0.0);
  }
  return z;
}

bool Value::all_finite() const {
  if (complex) {
    return std::all_of(spec.begin(), spec.end(),
                       [](const cplx& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
  }
  return std::all_of(real.begin(), real.end(), [](double x) { return std::isfinite(x); });
}

void Value::accumulate(const Value& other) {
  if (other.complex != complex || other.size() != size()) {
    throw std::logic_error("gradient accumulation: shape mismatch");
  }
  if (complex) {
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] += other.spec[i];
  } else {
    for (std::size_t i = 0; i < real.size(); ++i) real[i] += other.real[i];
  }
}

// --- tape ------------------------------------------------------------------------

Var Tape::leaf(Value v, LeafRole role) {
  Node n;
  n.value = std::move(v);
  n.role = role;
  n.needs_grad = role != LeafRole::constant;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("tape variable " + std::to_string(v.id) + " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::apply(std::shared_ptr<const Primitive> op, std::span<const Var> inputs) {
  if (!op) throw std::invalid_argument("tape: null primitive");
  if (!op->has_vjp()) {
    throw std::logic_error("operation '" + std::string(op->name()) + "' has no vector-Jacobian product");
  }
  Node n;
  n.inputs.reserve(inputs.size());
  std::vector<const Value*> args;
  args.reserve(inputs.size());
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    args.push_back(&in.value);
    n.needs_grad = n.needs_grad || in.needs_grad;
  }
  n.value = op->forward(args);
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

const Value& Tape::value(Var v) const { return node(v).value; }

std::size_t Tape::count(std::string_view op_name) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.op && n.op->name() == op_name; }));
}

void Tape::set_leaf(Var v, Value value) {
  const Node& n = node(v);
  if (n.op) throw std::invalid_argument("set_leaf: variable is not a leaf");
  if (value.complex != n.value.complex || value.size() != n.value.size()) {
    throw std::invalid_argument("set_leaf: shape mismatch");
  }
  nodes_[static_cast<std::size_t>(v.id)].value = std::move(value);
}

void Tape::replay() {
  std::vector<const Value*> args;
  for (Node& n : nodes_) {
    if (!n.op) continue;
    args.clear();
    for (int i : n.inputs) args.push_back(&nodes_[static_cast<std::size_t>(i)].value);
    n.value = n.op->forward(args);
  }
}

Gradients Tape::backward(Var loss) const {
  const Node& out = node(loss);
  if (out.value.complex || out.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a real scalar");
  }
  std::vector<Value> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  grads[static_cast<std::size_t>(loss.id)] = Value::scalar(1.0);
  has[static_cast<std::size_t>(loss.id)] = true;

  std::vector<const Value*> args;
  std::vector<Value*> targets;
  for (int id = loss.id; id >= 0; --id) {
    const auto i = static_cast<std::size_t>(id);
    const Node& n = nodes_[i];
    if (!n.op || !has[i] || !n.needs_grad) continue;
    args.clear();
    targets.clear();
    for (int in : n.inputs) {
      const auto j = static_cast<std::size_t>(in);
      args.push_back(&nodes_[j].value);
      if (nodes_[j].needs_grad) {
        if (!has[j]) {
          grads[j] = Value::zeros_like(nodes_[j].value);
          has[j] = true;
        }
        targets.push_back(&grads[j]);
      } else {
        targets.push_back(nullptr);
      }
    }
    n.op->vjp(args, n.value, grads[i], targets);
    // Interior cotangents are not needed once propagated.
    grads[i] = Value{};
  }

  Gradients g;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op || n.role == LeafRole::constant) continue;
    g.ids_.push_back(static_cast<int>(i));
    g.grads_.push_back(has[i] ? std::move(grads[i]) : Value::zeros_like(n.value));
  }
  return g;
}

const Value* Gradients::of(Var v) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), v.id);
  if (it == ids_.end() || *it != v.id) return nullptr;
  return &grads_[static_cast<std::size_t>(it - ids_.begin())];
}

const std::vector<double>& Gradients::real(Var v) const {
  const Value* g = of(v);
  if (!g) throw std::out_of_range("no gradient recorded for variable " + std::to_string(v.id));
  if (g->complex) throw std::invalid_argument("gradient of variable " + std::to_string(v.id) + " is complex");
  return g->real;
}

// --- primitives ------------------------------------------------------------------

namespace {

const Value& expect(const Value* v, bool complex, std::string_view op) {
  if (v->complex != complex) {
    throw std::invalid_argument(std::string(op) + ": expected a " + (complex ? "complex" : "real") + " input");
  }
  return *v;
}

void check_arity(std::span<const Value* const> in, std::size_t n, std::string_view op) {
  if (in.size() != n) throw std::invalid_argument(std::string(op) + ": wrong number of inputs");
}

void check_same_size(const Value& a, const Value& b, std::string_view op) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": size mismatch");
}

class ToSpectral final : public Primitive {
 public:
  explicit ToSpectral(int n) : n_(n), inv_n2_(1.0 / (static_cast<double>(n) * n)) {}
  std::string_view name() const override { return "to_spectral"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& x = expect(in[0], false, name());
    std::vector<cplx> out(x.real.size());
    kernels::forward_dft(n_, x.real, out, inv_n2_);
    return Value::of_complex(std::move(out));
  }

  // Adjoint of the scaled forward DFT: (1/n²)·Re(unscaled inverse).
  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    std::vector<double> tmp(ct.spec.size());
    kernels::inverse_dft_real(n_, ct.spec, tmp, inv_n2_);
    for (std::size_t i = 0; i < tmp.size(); ++i) g[0]->real[i] += tmp[i];
  }

 private:
  int n_;
  double inv_n2_;
};

class ToReal final : public Primitive {
 public:
  explicit ToReal(int n) : n_(n) {}
  std::string_view name() const override { return "to_real"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& x = expect(in[0], true, name());
    std::vector<double> out(x.spec.size());
    kernels::inverse_dft_real(n_, x.spec, out, 1.0);
    return Value::of_real(std::move(out));
  }

  // Adjoint of Re(inverse DFT): the unscaled forward DFT.
  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    std::vector<cplx> tmp(ct.real.size());
    kernels::forward_dft(n_, std::span<const double>(ct.real), tmp, 1.0);
    for (std::size_t i = 0; i < tmp.size(); ++i) g[0]->spec[i] += tmp[i];
  }

 private:
  int n_;
};

class SpectralDiag final : public Primitive {
 public:
  SpectralDiag(const Grid& grid, SpectralOp op) : op_(op) {
    const auto n = grid.size();
    switch (op) {
      case SpectralOp::ddx: complex_.assign(grid.ddx().begin(), grid.ddx().end()); break;
      case SpectralOp::ddy: complex_.assign(grid.ddy().begin(), grid.ddy().end()); break;
      case SpectralOp::laplacian: real_.assign(grid.laplacian().begin(), grid.laplacian().end()); break;
      case SpectralOp::inverse_laplacian:
        real_.assign(grid.inverse_laplacian().begin(), grid.inverse_laplacian().end());
        break;
      case SpectralOp::dealias: real_.assign(grid.dealias_mask().begin(), grid.dealias_mask().end()); break;
    }
    (void)n;
  }

  std::string_view name() const override {
    switch (op_) {
      case SpectralOp::ddx: return "ddx";
      case SpectralOp::ddy: return "ddy";
      case SpectralOp::laplacian: return "laplacian";
      case SpectralOp::inverse_laplacian: return "inverse_laplacian";
      case SpectralOp::dealias: return "dealias";
    }
    return "spectral";
  }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& x = expect(in[0], true, name());
    std::vector<cplx> out(x.spec.size());
    if (!complex_.empty()) {
      kernels::diag_mul(std::span<const cplx>(complex_), x.spec, out);
    } else {
      kernels::diag_mul(std::span<const double>(real_), x.spec, out);
    }
    return Value::of_complex(std::move(out));
  }

  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    std::vector<cplx> tmp(ct.spec.size());
    if (!complex_.empty()) {
      kernels::diag_mul_conj(complex_, ct.spec, tmp);
    } else {
      kernels::diag_mul(std::span<const double>(real_), ct.spec, tmp);
    }
    for (std::size_t i = 0; i < tmp.size(); ++i) g[0]->spec[i] += tmp[i];
  }

 private:
  SpectralOp op_;
  std::vector<cplx> complex_;
  std::vector<double> real_;
};

class LinComb final : public Primitive {
 public:
  explicit LinComb(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}
  std::string_view name() const override { return "lincomb"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, coeffs_.size(), name());
    const bool complex = in[0]->complex;
    for (const Value* v : in) {
      expect(v, complex, name());
      check_same_size(*v, *in[0], name());
    }
    if (complex) {
      std::vector<const cplx*> ptrs;
      for (const Value* v : in) ptrs.push_back(v->spec.data());
      std::vector<cplx> out(in[0]->spec.size());
      kernels::lincomb(coeffs_, ptrs, out);
      return Value::of_complex(std::move(out));
    }
    std::vector<const double*> ptrs;
    for (const Value* v : in) ptrs.push_back(v->real.data());
    std::vector<double> out(in[0]->real.size());
    kernels::lincomb(coeffs_, ptrs, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!g[j]) continue;
      const double c = coeffs_[j];
      if (ct.complex) {
        for (std::size_t i = 0; i < ct.spec.size(); ++i) g[j]->spec[i] += c * ct.spec[i];
      } else {
        for (std::size_t i = 0; i < ct.real.size(); ++i) g[j]->real[i] += c * ct.real[i];
      }
    }
  }

 private:
  std::vector<double> coeffs_;
};

class Mul final : public Primitive {
 public:
  std::string_view name() const override { return "mul"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 2, name());
    const Value& a = expect(in[0], false, name());
    const Value& b = expect(in[1], false, name());
    check_same_size(a, b, name());
    std::vector<double> out(a.real.size());
    kernels::mul(a.real, b.real, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const> in, const Value&, const Value& ct, std::span<Value* const> g) const override {
    const auto& a = in[0]->real;
    const auto& b = in[1]->real;
    if (g[0]) {
      for (std::size_t i = 0; i < a.size(); ++i) g[0]->real[i] += ct.real[i] * b[i];
    }
    if (g[1]) {
      for (std::size_t i = 0; i < a.size(); ++i) g[1]->real[i] += ct.real[i] * a[i];
    }
  }
};

class Sub final : public Primitive {
 public:
  std::string_view name() const override { return "sub"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 2, name());
    const Value& a = expect(in[0], false, name());
    const Value& b = expect(in[1], false, name());
    check_same_size(a, b, name());
    std::vector<double> out(a.real.size());
    kernels::sub(a.real, b.real, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (g[0]) {
      for (std::size_t i = 0; i < ct.real.size(); ++i) g[0]->real[i] += ct.real[i];
    }
    if (g[1]) {
      for (std::size_t i = 0; i < ct.real.size(); ++i) g[1]->real[i] -= ct.real[i];
    }
  }
};

class Scale final : public Primitive {
 public:
  explicit Scale(double s) : s_(s) {}
  std::string_view name() const override { return "scale"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& a = expect(in[0], false, name());
    std::vector<double> out(a.real.size());
    kernels::scale(a.real, s_, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    for (std::size_t i = 0; i < ct.real.size(); ++i) g[0]->real[i] += s_ * ct.real[i];
  }

 private:
  double s_;
};

class Relu final : public Primitive {
 public:
  std::string_view name() const override { return "relu"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& a = expect(in[0], false, name());
    std::vector<double> out(a.real.size());
    kernels::relu(a.real, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const> in, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    const auto& a = in[0]->real;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] > 0.0) g[0]->real[i] += ct.real[i];
    }
  }
};

class Conv2d final : public Primitive {
 public:
  explicit Conv2d(kernels::ConvShape s) : s_(s) {}
  std::string_view name() const override { return "conv2d"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 3, name());
    const Value& x = expect(in[0], false, name());
    const Value& w = expect(in[1], false, name());
    const Value& b = expect(in[2], false, name());
    const auto pixels = static_cast<std::size_t>(s_.n) * s_.n;
    if (x.real.size() != pixels * s_.in_channels || w.real.size() != s_.weight_count() ||
        b.real.size() != static_cast<std::size_t>(s_.out_channels)) {
      throw std::invalid_argument("conv2d: tensor sizes do not match the layer shape");
    }
    std::vector<double> out(pixels * s_.out_channels);
    kernels::conv2d_forward(s_, x.real, w.real, b.real, out);
    return Value::of_real(std::move(out));
  }

  void vjp(std::span<const Value* const> in, const Value&, const Value& ct, std::span<Value* const> g) const override {
    const auto pick = [](Value* v) { return v ? std::span<double>(v->real) : std::span<double>(); };
    kernels::conv2d_backward(s_, in[0]->real, in[1]->real, ct.real, pick(g[0]), pick(g[1]), pick(g[2]));
  }

 private:
  kernels::ConvShape s_;
};

class Sum final : public Primitive {
 public:
  std::string_view name() const override { return "sum"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& a = expect(in[0], false, name());
    return Value::scalar(std::accumulate(a.real.begin(), a.real.end(), 0.0));
  }

  void vjp(std::span<const Value* const>, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    for (double& x : g[0]->real) x += ct.real[0];
  }
};

class MeanSquare final : public Primitive {
 public:
  std::string_view name() const override { return "mean_square"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 1, name());
    const Value& a = expect(in[0], false, name());
    if (a.real.empty()) throw std::invalid_argument("mean_square: empty input");
    double s = 0.0;
    for (double x : a.real) s += x * x;
    return Value::scalar(s / static_cast<double>(a.real.size()));
  }

  void vjp(std::span<const Value* const> in, const Value&, const Value& ct, std::span<Value* const> g) const override {
    if (!g[0]) return;
    const auto& a = in[0]->real;
    const double c = 2.0 * ct.real[0] / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) g[0]->real[i] += c * a[i];
  }
};

class Inner final : public Primitive {
 public:
  std::string_view name() const override { return "inner"; }

  Value forward(std::span<const Value* const> in) const override {
    check_arity(in, 2, name());
    const Value& a = *in[0];
    const Value& b = expect(in[1], a.complex, name());
    check_same_size(a, b, name());
    double s = 0.0;
    if (a.complex) {
      for (std::size_t i = 0; i < a.spec.size(); ++i) {
        s += a.spec[i].real() * b.spec[i].real() + a.spec[i].imag() * b.spec[i].imag();
      }
    } else {
      for (std::size_t i = 0; i < a.real.size(); ++i) s += a.real[i] * b.real[i];
    }
    return Value::scalar(s);
  }

  void vjp(std::span<const Value* const> in, const Value&, const Value& ct, std::span<Value* const> g) const override {
    const double c = ct.real[0];
    for (int k = 0; k < 2; ++k) {
      Value* t = g[static_cast<std::size_t>(k)];
      if (!t) continue;
      const Value& other = *in[static_cast<std::size_t>(1 - k)];
      if (other.complex) {
        for (std::size_t i = 0; i < other.spec.size(); ++i) t->spec[i] += c * other.spec[i];
      } else {
        for (std::size_t i = 0; i < other.real.size(); ++i) t->real[i] += c * other.real[i];
      }
    }
  }
};

}  // namespace

std::shared_ptr<const Primitive> op_to_spectral(int n) { return std::make_shared<ToSpectral>(n); }
std::shared_ptr<const Primitive> op_to_real(int n) { return std::make_shared<ToReal>(n); }
std::shared_ptr<const Primitive> op_spectral(const Grid& grid, SpectralOp op) {
  return std::make_shared<SpectralDiag>(grid, op);
}
std::shared_ptr<const Primitive> op_lincomb(std::vector<double> coeffs) {
  return std::make_shared<LinComb>(std::move(coeffs));
}
std::shared_ptr<const Primitive> op_mul() { return std::make_shared<Mul>(); }
std::shared_ptr<const Primitive> op_sub() { return std::make_shared<Sub>(); }
std::shared_ptr<const Primitive> op_scale(double s) { return std::make_shared<Scale>(s); }
std::shared_ptr<const Primitive> op_relu() { return std::make_shared<Relu>(); }
std::shared_ptr<const Primitive> op_conv2d(kernels::ConvShape shape) { return std::make_shared<Conv2d>(shape); }
std::shared_ptr<const Primitive> op_sum() { return std::make_shared<Sum>(); }
std::shared_ptr<const Primitive> op_mean_square() { return std::make_shared<MeanSquare>(); }
std::shared_ptr<const Primitive> op_inner() { return std::make_shared<Inner>(); }

// --- recording algebra -----------------------------------------------------------

namespace {

// Stateless primitives are shared across all tapes.
const std::shared_ptr<const Primitive>& shared_mul() {
  static const auto op = op_mul();
  return op;
}
const std::shared_ptr<const Primitive>& shared_sub() {
  static const auto op = op_sub();
  return op;
}
const std::shared_ptr<const Primitive>& shared_relu() {
  static const auto op = op_relu();
  return op;
}
const std::shared_ptr<const Primitive>& shared_mean_square() {
  static const auto op = op_mean_square();
  return op;
}

}  // namespace

Var TapeAlgebra::diag(Var x, SpectralOp op) {
  const auto i = static_cast<std::size_t>(op);
  if (!diag_ops_[i]) diag_ops_[i] = op_spectral(grid_, op);
  return tape_->apply(diag_ops_[i], {x});
}

Var TapeAlgebra::to_real(Var x) {
  if (!to_real_) to_real_ = op_to_real(grid_.n());
  return tape_->apply(to_real_, {x});
}

Var TapeAlgebra::to_spectral(Var x) {
  if (!to_spectral_) to_spectral_ = op_to_spectral(grid_.n());
  return tape_->apply(to_spectral_, {x});
}

Var TapeAlgebra::mul(Var a, Var b) { return tape_->apply(shared_mul(), {a, b}); }
Var TapeAlgebra::sub(Var a, Var b) { return tape_->apply(shared_sub(), {a, b}); }
Var TapeAlgebra::scale(Var a, double s) { return tape_->apply(op_scale(s), {a}); }
Var TapeAlgebra::relu(Var a) { return tape_->apply(shared_relu(), {a}); }
Var TapeAlgebra::mean_square(Var x) { return tape_->apply(shared_mean_square(), {x}); }

Var TapeAlgebra::lincomb(std::initializer_list<Term> terms) {
  std::vector<double> coeffs;
  std::vector<Var> inputs;
  for (const Term& t : terms) {
    coeffs.push_back(t.coeff);
    inputs.push_back(t.value);
  }
  return tape_->apply(op_lincomb(std::move(coeffs)), inputs);
}

Var TapeAlgebra::conv(Var x, const Layer& layer) {
  const kernels::ConvShape s{layer.in_channels, layer.out_channels, layer.kernel, grid_.n()};
  return tape_->apply(op_conv2d(s), {x, layer.weights, layer.bias});
}

// --- verification ----------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> theta0,
                           std::span<const double> gradient, const GradCheckOptions& opts) {
  if (gradient.size() != theta0.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  if (!(opts.epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be > 0");

  std::vector<std::size_t> coords(theta0.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coordinates > 0 && opts.max_coordinates < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport r;
  std::vector<double> theta(theta0.begin(), theta0.end());
  for (std::size_t i : coords) {
    const double saved = theta[i];
    // Divide by the step actually taken after rounding.
    const double up = saved + opts.epsilon;
    const double down = saved - opts.epsilon;
    theta[i] = up;
    const double fp = f(theta);
    theta[i] = down;
    const double fm = f(theta);
    theta[i] = saved;
    const double fd = (fp - fm) / (up - down);
    const double ad = gradient[i];
    const double denom = std::max({std::abs(fd), std::abs(ad), opts.abs_floor});
    const double rel = std::abs(fd - ad) / denom;
    if (rel > r.max_rel_err || r.checked == 0) {
      r.max_rel_err = rel;
      r.worst_index = i;
      r.worst_fd = fd;
      r.worst_ad = ad;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace diffqg::ad
