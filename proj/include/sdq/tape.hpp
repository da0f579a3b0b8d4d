#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "sdq/array.hpp"

namespace sdq {

class Tape;

// How round() behaves under differentiation. The true derivative is zero
// almost everywhere; straight-through passes the upstream gradient unchanged.
enum class RoundBackward { kStraightThrough, kZero };

// Handle into a Tape node. Cheap to copy; a default-constructed Var is
// invalid and rejected by every op.
class Var {
public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Array& value() const;
  const Array& grad() const;
  const Shape& shape() const;
  std::size_t size() const;
  double item() const;
  std::size_t id() const { return idx_; }

private:
  friend class Tape;
  Var(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}
  Tape* tape_ = nullptr;
  std::size_t idx_ = 0;
};

// Reverse-mode tape. One tape per forward pass: ops append nodes in program
// order, backward() replays them once in reverse, then the tape is spent.
// Everything is single threaded and every reduction uses a fixed summation
// order, so a given op sequence produces bit-identical values and gradients
// on every run.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When set, straight-through ops (round_ste, clamp_ste, hard_ge_ste)
  // evaluate their smooth surrogate in the forward pass as well. Finite
  // difference checks run against the surrogate this way.
  void set_surrogate_mode(bool on) { surrogate_mode_ = on; }
  bool surrogate_mode() const { return surrogate_mode_; }

  Var leaf(const Array& value);
  // Same storage as leaf; named for graph inputs whose gradient is ignored.
  Var constant(const Array& value) { return leaf(value); }
  Var scalar(double v) { return leaf(Array::scalar(v)); }

  // Elementwise arithmetic. If one operand is a scalar it broadcasts against
  // the other; otherwise shapes must match exactly.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);

  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);

  // clamp: gradient passes only where lo <= x <= hi.
  Var clamp(Var a, double lo, double hi);
  // clamp_ste: gradient passes everywhere (straight through).
  Var clamp_ste(Var a, double lo, double hi);
  // round: half away from zero, backward rule pluggable.
  Var round(Var a, RoundBackward rule = RoundBackward::kStraightThrough);
  Var round_ste(Var a) { return round(a, RoundBackward::kStraightThrough); }
  // 1 where x >= threshold else 0; backward straight through.
  Var hard_ge_ste(Var a, double threshold);
  // Elementwise fwd(x) with straight-through backward: the upstream gradient
  // is added to the input unchanged, bit for bit. Fused quantizer kernels
  // are built on this so their gradient contract is exact identity.
  Var map_ste(Var a, std::function<double(double)> fwd);

  Var reshape(Var a, Shape shape);             // same element count, new dims
  Var matmul(Var a, Var b);                    // [m,k] x [k,n] -> [m,n]
  Var add_rowvec(Var a, Var b);                // [m,n] + [n]
  Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad);  // NCHW
  Var global_avg_pool(Var x);                  // [n,c,h,w] -> [n,c]

  Var softmax_rows(Var a);      // [m,n], softmax per row
  Var log_softmax_rows(Var a);  // [m,n], log softmax per row

  // Full reductions to scalar.
  Var sum(Var a);
  Var mean(Var a);
  Var variance(Var a);  // population variance
  Var sum_abs(Var a);
  Var sum_sq(Var a);
  Var max_abs(Var a);   // gradient routes to the first attaining element

  Var gather(Var a, std::vector<std::size_t> indices);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. loss must be
  // scalar. A tape can run backward exactly once and is frozen afterwards.
  void backward(Var loss);

  const Array& value(Var v) const;
  const Array& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool spent() const { return spent_; }

private:
  // back(tape, self) accumulates into the inputs' grads; self is this node's
  // index, passed at replay time. Null for leaves.
  using BackFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Array value;
    Array grad;
    BackFn back;
  };

  Var record(Array value, BackFn back);
  void check_var(Var v, const char* op) const;
  Var binary(Var a, Var b, const char* name,
             double (*fwd)(double, double),
             double (*dfa)(double, double, double),
             double (*dfb)(double, double, double));
  Var unary(Var a, const char* name,
            double (*fwd)(double),
            double (*dfa)(double, double));

  std::vector<Node> nodes_;
  bool spent_ = false;
  bool surrogate_mode_ = false;
};

inline const Array& Var::value() const { return tape_->value(*this); }
inline const Array& Var::grad() const { return tape_->grad(*this); }
inline const Shape& Var::shape() const { return value().shape; }
inline std::size_t Var::size() const { return value().size(); }
inline double Var::item() const { return value().item(); }

}  // namespace sdq
