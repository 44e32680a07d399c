#pragma once

// Reverse-mode differentiation on a recorded tape.
//
// Computations are recorded as a list of nodes in execution order; each node
// holds its primitive, input references and forward value. backward() walks
// the list in reverse and accumulates vector-Jacobian products. Complex
// values are differentiated through the real inner product
// ⟨a, b⟩ = Re Σ conj(a)·b, so every cotangent lives in the same space as its
// primal value.

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "diffqg/spectral.hpp"

namespace diffqg::ad {

/// A real or complex flat buffer.
struct Value {
  bool complex = false;
  std::vector<double> real;
  std::vector<cplx> spec;

  static Value of_real(std::vector<double> v) { return {false, std::move(v), {}}; }
  static Value of_complex(std::vector<cplx> v) { return {true, {}, std::move(v)}; }
  static Value zeros_like(const Value& v);
  static Value scalar(double x) { return of_real({x}); }

  std::size_t size() const { return complex ? spec.size() : real.size(); }
  bool all_finite() const;
  void accumulate(const Value& other);
};

/// An operation with a forward rule and its vector-Jacobian product.
class Primitive {
 public:
  virtual ~Primitive() = default;

  virtual std::string_view name() const = 0;
  virtual bool has_vjp() const { return true; }
  virtual Value forward(std::span<const Value* const> inputs) const = 0;
  /// Adds the cotangent of each input into grads[i]; grads[i] is null for
  /// inputs that need no gradient.
  virtual void vjp(std::span<const Value* const> inputs, const Value& output, const Value& cotangent,
                   std::span<Value* const> grads) const = 0;
};

/// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class LeafRole {
  constant,   // no gradient
  parameter,  // θ: gradient always reported
  input,      // gradient reported on request (initial state, targets)
};

class Gradients;

class Tape {
 public:
  Var leaf(Value v, LeafRole role = LeafRole::constant);
  /// Records op applied to inputs. Throws std::logic_error naming the op when
  /// it has no registered vjp.
  Var apply(std::shared_ptr<const Primitive> op, std::span<const Var> inputs);
  Var apply(std::shared_ptr<const Primitive> op, std::initializer_list<Var> inputs) {
    return apply(std::move(op), std::span<const Var>(inputs.begin(), inputs.size()));
  }

  const Value& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  /// Number of recorded nodes whose primitive has the given name.
  std::size_t count(std::string_view op_name) const;

  /// Replaces a leaf value; call replay() to propagate.
  void set_leaf(Var v, Value value);
  /// Recomputes every non-leaf node from its inputs in recording order.
  void replay();

  /// Accumulates d(loss)/d(node) for every parameter and input leaf. The loss
  /// must be a real scalar.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    std::shared_ptr<const Primitive> op;  // null for leaves
    std::vector<int> inputs;
    Value value;
    LeafRole role = LeafRole::constant;
    bool needs_grad = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

class Gradients {
 public:
  /// Null when the variable is not a tracked leaf.
  const Value* of(Var v) const;
  /// Real gradient of a tracked real leaf; throws if absent.
  const std::vector<double>& real(Var v) const;

 private:
  friend class Tape;
  std::vector<int> ids_;
  std::vector<Value> grads_;
};

// --- primitives -------------------------------------------------------------------

std::shared_ptr<const Primitive> op_to_spectral(int n);
std::shared_ptr<const Primitive> op_to_real(int n);
std::shared_ptr<const Primitive> op_spectral(const Grid& grid, SpectralOp op);
std::shared_ptr<const Primitive> op_lincomb(std::vector<double> coeffs);
std::shared_ptr<const Primitive> op_mul();
std::shared_ptr<const Primitive> op_sub();
std::shared_ptr<const Primitive> op_scale(double s);
std::shared_ptr<const Primitive> op_relu();
/// Inputs: activations, weights, bias.
std::shared_ptr<const Primitive> op_conv2d(kernels::ConvShape shape);
/// Σ x.
std::shared_ptr<const Primitive> op_sum();
/// mean(x²).
std::shared_ptr<const Primitive> op_mean_square();
/// Re Σ conj(a)·b.
std::shared_ptr<const Primitive> op_inner();

// --- recording algebra ---------------------------------------------------------------

/// Field algebra that records onto a tape; mirrors ValueAlgebra.
class TapeAlgebra {
 public:
  using Spec = Var;
  using Real = Var;

  struct Term {
    double coeff;
    Var value;
  };

  struct Layer {
    Var weights;
    Var bias;
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 5;
  };

  TapeAlgebra(Tape& tape, Grid grid) : tape_(&tape), grid_(std::move(grid)) {}

  Tape& tape() { return *tape_; }
  const Grid& grid() const { return grid_; }

  Var constant(std::vector<cplx> s) { return tape_->leaf(Value::of_complex(std::move(s))); }
  Var constant_real(std::vector<double> r) { return tape_->leaf(Value::of_real(std::move(r))); }

  Var diag(Var x, SpectralOp op);
  Var to_real(Var x);
  Var to_spectral(Var x);
  Var mul(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var lincomb(std::initializer_list<Term> terms);
  Var conv(Var x, const Layer& layer);
  Var mean_square(Var x);

 private:
  Tape* tape_;
  Grid grid_;
  std::array<std::shared_ptr<const Primitive>, 5> diag_ops_;
  std::shared_ptr<const Primitive> to_real_;
  std::shared_ptr<const Primitive> to_spectral_;
};

// --- verification -----------------------------------------------------------------

struct GradCheckOptions {
  double epsilon = 1e-6;
  /// Check at most this many coordinates (random subsample); 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error.
  double abs_floor = 1e-12;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double worst_fd = 0.0;
  double worst_ad = 0.0;
};

/// Compares `gradient` against central differences of f at theta0:
/// rel = |fd − ad| / max(|fd|, |ad|, abs_floor).
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> theta0, std::span<const double> gradient,
                           const GradCheckOptions& opts = {});

}  // namespace diffqg::ad
