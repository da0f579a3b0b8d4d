#include "sdq/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace sdq {

namespace {

// Index map for scalar broadcast: a scalar operand always reads slot 0.
inline std::size_t pick(bool is_scalar, std::size_t i) { return is_scalar ? 0 : i; }

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Var Tape::record(Array value, BackFn back) {
  check_contract(!spent_, "tape already ran backward; build a fresh tape per forward pass");
  Node node;
  node.grad = Array::zeros_like(value);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_var(Var v, const char* op) const {
  check_contract(v.valid() && v.tape_ == this && v.idx_ < nodes_.size(),
                 std::string(op) + ": invalid Var handle");
}

Var Tape::leaf(const Array& value) {
  check_contract(value.size() > 0, "leaf: empty array");
  return record(value, nullptr);
}

const Array& Tape::value(Var v) const {
  check_var(v, "value");
  return nodes_[v.idx_].value;
}

const Array& Tape::grad(Var v) const {
  check_var(v, "grad");
  return nodes_[v.idx_].grad;
}

void Tape::backward(Var loss) {
  check_var(loss, "backward");
  check_contract(!spent_, "backward: tape already consumed");
  check_contract(nodes_[loss.idx_].value.is_scalar(), "backward: loss must be scalar");
  spent_ = true;
  nodes_[loss.idx_].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i > 0; --i) {
    Node& node = nodes_[i - 1];
    if (node.back) node.back(*this, i - 1);
  }
}

Var Tape::binary(Var a, Var b, const char* name,
                 double (*fwd)(double, double),
                 double (*dfa)(double, double, double),
                 double (*dfb)(double, double, double)) {
  check_var(a, name);
  check_var(b, name);
  const Array& av = nodes_[a.idx_].value;
  const Array& bv = nodes_[b.idx_].value;
  const bool sa = av.is_scalar();
  const bool sb = bv.is_scalar();
  check_contract(same_shape(av, bv) || sa || sb,
                 std::string(name) + ": shape mismatch " + shape_str(av.shape) + " vs " +
                     shape_str(bv.shape));
  const Array& ref = sa ? bv : av;
  Array out(ref.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(av[pick(sa, i)], bv[pick(sb, i)]);
  }
  const std::size_t ia = a.idx_, ib = b.idx_;
  return record(std::move(out), [ia, ib, sa, sb, dfa, dfb](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    Node& nb = t.nodes_[ib];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double g = o.grad[i];
      const double x = na.value[pick(sa, i)];
      const double y = nb.value[pick(sb, i)];
      na.grad[pick(sa, i)] += dfa(x, y, g);
      nb.grad[pick(sb, i)] += dfb(x, y, g);
    }
  });
}

Var Tape::unary(Var a, const char* name,
                double (*fwd)(double),
                double (*dfa)(double, double)) {
  check_var(a, name);
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, dfa](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      na.grad[i] += dfa(na.value[i], o.grad[i]);
    }
  });
}

Var Tape::add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Var Tape::sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Var Tape::mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Var Tape::div(Var a, Var b) {
  check_var(b, "div");
  const Array& bv = nodes_[b.idx_].value;
  for (std::size_t i = 0; i < bv.size(); ++i) {
    if (bv[i] == 0.0) throw NumericError("div: zero denominator at index " + std::to_string(i));
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double g) { return g / y; },
      [](double x, double y, double g) { return -g * x / (y * y); });
}

Var Tape::neg(Var a) {
  return unary(
      a, "neg", [](double x) { return -x; }, [](double, double g) { return -g; });
}

Var Tape::scale(Var a, double c) {
  check_var(a, "scale");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, c](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += c * o.grad[i];
  });
}

Var Tape::add_const(Var a, double c) {
  check_var(a, "add_const");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double x, double g) { return g * std::exp(x); });
}

Var Tape::log(Var a) {
  check_var(a, "log");
  const Array& av = nodes_[a.idx_].value;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(av[i]) + " at index " +
                         std::to_string(i));
    }
  }
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double g) { return g / x; });
}

Var Tape::tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x, double g) {
        const double th = std::tanh(x);
        return g * (1.0 - th * th);
      });
}

Var Tape::sigmoid(Var a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x, double g) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return g * s * (1.0 - s);
      });
}

Var Tape::clamp(Var a, double lo, double hi) {
  check_var(a, "clamp");
  check_contract(lo <= hi, "clamp: lo > hi");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] < lo ? lo : (av[i] > hi ? hi : av[i]);
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, lo, hi](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double x = na.value[i];
      if (x >= lo && x <= hi) na.grad[i] += o.grad[i];
    }
  });
}

Var Tape::clamp_ste(Var a, double lo, double hi) {
  check_var(a, "clamp_ste");
  check_contract(lo <= hi, "clamp_ste: lo > hi");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = surrogate_mode_ ? av[i] : (av[i] < lo ? lo : (av[i] > hi ? hi : av[i]));
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::round(Var a, RoundBackward rule) {
  check_var(a, "round");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    // std::round: halfway cases away from zero.
    out[i] = surrogate_mode_ && rule == RoundBackward::kStraightThrough ? av[i] : std::round(av[i]);
  }
  const std::size_t ia = a.idx_;
  if (rule == RoundBackward::kZero) {
    return record(std::move(out), [](Tape&, std::size_t) {});
  }
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::hard_ge_ste(Var a, double threshold) {
  check_var(a, "hard_ge_ste");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = surrogate_mode_ ? av[i] : (av[i] >= threshold ? 1.0 : 0.0);
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::map_ste(Var a, std::function<double(double)> fwd) {
  check_var(a, "map_ste");
  const Array& av = nodes_[a.idx_].value;
  Array out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = surrogate_mode_ ? av[i] : fwd(av[i]);
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::reshape(Var a, Shape shape) {
  check_var(a, "reshape");
  const Array& av = nodes_[a.idx_].value;
  check_contract(numel(shape) == av.size(),
                 "reshape: element count mismatch " + shape_str(av.shape) + " -> " +
                     shape_str(shape));
  Array out(std::move(shape), av.data);
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  const Array& av = nodes_[a.idx_].value;
  const Array& bv = nodes_[b.idx_].value;
  check_contract(av.shape.size() == 2 && bv.shape.size() == 2 && av.shape[1] == bv.shape[0],
                 "matmul: incompatible shapes " + shape_str(av.shape) + " x " +
                     shape_str(bv.shape));
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Array out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += av[i * k + l] * bv[l * n + j];
      out[i * n + j] = acc;
    }
  }
  const std::size_t ia = a.idx_, ib = b.idx_;
  return record(std::move(out), [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    Node& nb = t.nodes_[ib];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += o.grad[i * n + j] * nb.value[l * n + j];
        na.grad[i * k + l] += acc;
      }
    }
    for (std::size_t l = 0; l < k; ++l) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += na.value[i * k + l] * o.grad[i * n + j];
        nb.grad[l * n + j] += acc;
      }
    }
  });
}

Var Tape::add_rowvec(Var a, Var b) {
  check_var(a, "add_rowvec");
  check_var(b, "add_rowvec");
  const Array& av = nodes_[a.idx_].value;
  const Array& bv = nodes_[b.idx_].value;
  check_contract(av.shape.size() == 2 && bv.shape.size() == 1 && av.shape[1] == bv.shape[0],
                 "add_rowvec: incompatible shapes " + shape_str(av.shape) + " + " +
                     shape_str(bv.shape));
  const std::size_t m = av.shape[0], n = av.shape[1];
  Array out(av.shape);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  }
  const std::size_t ia = a.idx_, ib = b.idx_;
  return record(std::move(out), [ia, ib, m, n](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    Node& nb = t.nodes_[ib];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += o.grad[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += o.grad[i * n + j];
      nb.grad[j] += acc;
    }
  });
}

Var Tape::conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  check_var(x, "conv2d");
  check_var(w, "conv2d");
  check_contract(stride >= 1, "conv2d: stride must be >= 1");
  const Array& xv = nodes_[x.idx_].value;
  const Array& wv = nodes_[w.idx_].value;
  check_contract(xv.shape.size() == 4 && wv.shape.size() == 4,
                 "conv2d: expects x [n,c,h,w] and w [f,c,kh,kw]");
  check_contract(xv.shape[1] == wv.shape[1],
                 "conv2d: channel mismatch " + shape_str(xv.shape) + " vs " + shape_str(wv.shape));
  const std::size_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const std::size_t F = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3];
  check_contract(H + 2 * pad >= KH && W + 2 * pad >= KW, "conv2d: kernel larger than padded input");
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  Array out({N, F, OH, OW});
  const auto xat = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t ww) {
    return xv[((n * C + c) * H + h) * W + ww];
  };
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t kh = 0; kh < KH; ++kh) {
              const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                       static_cast<std::ptrdiff_t>(pad);
              if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kw = 0; kw < KW; ++kw) {
                const std::ptrdiff_t cw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (cw < 0 || cw >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += xat(n, c, static_cast<std::size_t>(h), static_cast<std::size_t>(cw)) *
                       wv[((f * C + c) * KH + kh) * KW + kw];
              }
            }
          }
          out[((n * F + f) * OH + oh) * OW + ow] = acc;
        }
      }
    }
  }
  const std::size_t ix = x.idx_, iw = w.idx_;
  return record(std::move(out), [ix, iw, N, C, H, W, F, KH, KW, OH, OW, stride,
                                 pad](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& nx = t.nodes_[ix];
    Node& nw = t.nodes_[iw];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t oh = 0; oh < OH; ++oh) {
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const double g = o.grad[((n * F + f) * OH + oh) * OW + ow];
            if (g == 0.0) continue;
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                         static_cast<std::ptrdiff_t>(pad);
                if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const std::ptrdiff_t cw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (cw < 0 || cw >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t xi = ((n * C + c) * H + static_cast<std::size_t>(h)) * W +
                                         static_cast<std::size_t>(cw);
                  const std::size_t wi = ((f * C + c) * KH + kh) * KW + kw;
                  nx.grad[xi] += g * nw.value[wi];
                  nw.grad[wi] += g * nx.value[xi];
                }
              }
            }
          }
        }
      }
    }
  });
}

Var Tape::global_avg_pool(Var x) {
  check_var(x, "global_avg_pool");
  const Array& xv = nodes_[x.idx_].value;
  check_contract(xv.shape.size() == 4, "global_avg_pool: expects [n,c,h,w]");
  const std::size_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const double inv = 1.0 / static_cast<double>(H * W);
  Array out({N, C});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < H * W; ++i) acc += xv[(n * C + c) * H * W + i];
      out[n * C + c] = acc * inv;
    }
  }
  const std::size_t ix = x.idx_;
  return record(std::move(out), [ix, N, C, H, W, inv](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& nx = t.nodes_[ix];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const double g = o.grad[n * C + c] * inv;
        for (std::size_t i = 0; i < H * W; ++i) nx.grad[(n * C + c) * H * W + i] += g;
      }
    }
  });
}

Var Tape::softmax_rows(Var a) {
  check_var(a, "softmax_rows");
  const Array& av = nodes_[a.idx_].value;
  check_contract(av.shape.size() == 2, "softmax_rows: expects [m,n]");
  const std::size_t m = av.shape[0], n = av.shape[1];
  Array out(av.shape);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(av[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, m, n](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        na.grad[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
      }
    }
  });
}

Var Tape::log_softmax_rows(Var a) {
  check_var(a, "log_softmax_rows");
  const Array& av = nodes_[a.idx_].value;
  check_contract(av.shape.size() == 2, "log_softmax_rows: expects [m,n]");
  const std::size_t m = av.shape[0], n = av.shape[1];
  Array out(av.shape);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(av[i * n + j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] - lz;
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, m, n](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += o.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        na.grad[i * n + j] += o.grad[i * n + j] - std::exp(o.value[i * n + j]) * gsum;
      }
    }
  });
}

Var Tape::sum(Var a) {
  check_var(a, "sum");
  const Array& av = nodes_[a.idx_].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  const std::size_t ia = a.idx_;
  return record(Array::scalar(acc), [ia](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
  });
}

Var Tape::mean(Var a) {
  check_var(a, "mean");
  const Array& av = nodes_[a.idx_].value;
  const double inv = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  const std::size_t ia = a.idx_;
  return record(Array::scalar(acc * inv), [ia, inv](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0] * inv;
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
  });
}

Var Tape::variance(Var a) {
  check_var(a, "variance");
  const Array& av = nodes_[a.idx_].value;
  const std::size_t n = av.size();
  const double inv = 1.0 / static_cast<double>(n);
  double mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) mu += av[i];
  mu *= inv;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (av[i] - mu) * (av[i] - mu);
  const std::size_t ia = a.idx_;
  return record(Array::scalar(acc * inv), [ia, mu, inv](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < na.grad.size(); ++i) {
      na.grad[i] += g * 2.0 * inv * (na.value[i] - mu);
    }
  });
}

Var Tape::sum_abs(Var a) {
  check_var(a, "sum_abs");
  const Array& av = nodes_[a.idx_].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i]);
  const std::size_t ia = a.idx_;
  return record(Array::scalar(acc), [ia](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g * sign_of(na.value[i]);
  });
}

Var Tape::sum_sq(Var a) {
  check_var(a, "sum_sq");
  const Array& av = nodes_[a.idx_].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * av[i];
  const std::size_t ia = a.idx_;
  return record(Array::scalar(acc), [ia](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Node& na = t.nodes_[ia];
    for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g * 2.0 * na.value[i];
  });
}

Var Tape::max_abs(Var a) {
  check_var(a, "max_abs");
  const Array& av = nodes_[a.idx_].value;
  std::size_t arg = 0;
  double best = std::abs(av[0]);
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (std::abs(av[i]) > best) {
      best = std::abs(av[i]);
      arg = i;
    }
  }
  const std::size_t ia = a.idx_;
  return record(Array::scalar(best), [ia, arg](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Node& na = t.nodes_[ia];
    na.grad[arg] += g * sign_of(na.value[arg]);
  });
}

Var Tape::gather(Var a, std::vector<std::size_t> indices) {
  check_var(a, "gather");
  const Array& av = nodes_[a.idx_].value;
  check_contract(!indices.empty(), "gather: empty index list");
  Array out({indices.size()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    check_contract(indices[k] < av.size(), "gather: index " + std::to_string(indices[k]) +
                                               " out of range for size " +
                                               std::to_string(av.size()));
    out[k] = av[indices[k]];
  }
  const std::size_t ia = a.idx_;
  return record(std::move(out), [ia, idx = std::move(indices)](Tape& t, std::size_t self) {
    const Node& o = t.nodes_[self];
    Node& na = t.nodes_[ia];
    for (std::size_t k = 0; k < idx.size(); ++k) na.grad[idx[k]] += o.grad[k];
  });
}

}  // namespace sdq
