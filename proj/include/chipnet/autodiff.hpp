#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet::autodiff {

/// Dense double array with explicit dimensions; rank as needed (images are
/// {rows, cols, channels}, kernels {out, in, kh, kw}, scalars {1}).
struct NdArray {
  std::vector<int> dims;
  std::vector<double> v;

  NdArray() = default;
  explicit NdArray(std::vector<int> d, double fill = 0.0) : dims(std::move(d)) {
    v.assign(element_count(dims), fill);
  }

  static std::size_t element_count(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t size() const { return v.size(); }
};

/// A tape node value. Parameters set requires_grad; activations receive it
/// transitively.
struct Var {
  NdArray value;
  NdArray grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.v.size() != value.v.size()) grad = NdArray(value.dims);
  }
  void zero_grad() {
    if (!grad.v.empty()) std::fill(grad.v.begin(), grad.v.end(), 0.0);
  }
};

using VarPtr = std::shared_ptr<Var>;

inline VarPtr make_param(NdArray value) {
  auto var = std::make_shared<Var>();
  var->value = std::move(value);
  var->requires_grad = true;
  var->ensure_grad();
  return var;
}

inline VarPtr make_const(NdArray value) {
  auto var = std::make_shared<Var>();
  var->value = std::move(value);
  return var;
}

/// Records forward operations and replays their adjoints in exact reverse
/// order.
class Tape {
 public:
  void record(std::function<void()> backward_op) { ops_.push_back(std::move(backward_op)); }

  /// Seeds the scalar loss gradient with 1 and propagates backwards.
  void backward(const VarPtr& loss) {
    if (ops_.empty()) throw StateError("Tape::backward called before any forward op");
    if (loss->value.size() != 1) throw ShapeError("Tape::backward expects a scalar loss");
    loss->ensure_grad();
    loss->grad.v[0] = 1.0;
    run_reverse();
  }

  /// Propagates an explicit output gradient instead of a scalar seed.
  void backward_with(const VarPtr& output, const NdArray& output_grad) {
    if (ops_.empty()) throw StateError("Tape::backward called before any forward op");
    if (output_grad.v.size() != output->value.size())
      throw ShapeError("Tape::backward_with: gradient shape mismatch");
    output->ensure_grad();
    output->grad = output_grad;
    run_reverse();
  }

  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }

 private:
  void run_reverse() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  std::vector<std::function<void()>> ops_;
};

namespace detail {

inline VarPtr make_output(NdArray value, bool requires_grad) {
  auto var = std::make_shared<Var>();
  var->value = std::move(value);
  var->requires_grad = requires_grad;
  if (requires_grad) var->ensure_grad();
  return var;
}

struct ConvDims {
  int H, W, Ci, Co, kh, kw, d;
};

inline ConvDims conv_dims(const VarPtr& x, const VarPtr& kernel, int dilation) {
  if (x->value.dims.size() != 3) throw ShapeError("conv2d: input must be rank 3");
  if (kernel->value.dims.size() != 4) throw ShapeError("conv2d: kernel must be rank 4");
  ConvDims dd{};
  dd.H = x->value.dims[0];
  dd.W = x->value.dims[1];
  dd.Ci = x->value.dims[2];
  dd.Co = kernel->value.dims[0];
  dd.kh = kernel->value.dims[2];
  dd.kw = kernel->value.dims[3];
  dd.d = dilation;
  if (kernel->value.dims[1] != dd.Ci) throw ShapeError("conv2d: channel mismatch");
  if (dd.kh % 2 == 0 || dd.kw % 2 == 0) throw ShapeError("conv2d: kernels must be odd-sized");
  return dd;
}

}  // namespace detail

/// Zero-padded same-size convolution with bias, recorded on the tape.
inline VarPtr conv2d(Tape& tape, const VarPtr& x, const VarPtr& kernel, const VarPtr& bias,
                     int dilation = 1) {
  const auto dd = detail::conv_dims(x, kernel, dilation);
  if (bias->value.dims != std::vector<int>{dd.Co}) throw ShapeError("conv2d: bias shape");
  const int rh = (dd.kh - 1) / 2, rw = (dd.kw - 1) / 2;

  NdArray out({dd.H, dd.W, dd.Co});
  const double* xv = x->value.v.data();
  const double* kv = kernel->value.v.data();
  const auto xi = [&](int r, int c, int i) {
    return (static_cast<std::size_t>(r) * dd.W + c) * dd.Ci + i;
  };
  const auto ki = [&](int o, int i, int kr, int kc) {
    return ((static_cast<std::size_t>(o) * dd.Ci + i) * dd.kh + kr) * dd.kw + kc;
  };
  for (int r = 0; r < dd.H; ++r)
    for (int c = 0; c < dd.W; ++c) {
      const std::size_t obase = (static_cast<std::size_t>(r) * dd.W + c) * dd.Co;
      for (int o = 0; o < dd.Co; ++o) {
        double acc = bias->value.v[o];
        for (int kr = 0; kr < dd.kh; ++kr) {
          const int rr = r + dd.d * (kr - rh);
          if (rr < 0 || rr >= dd.H) continue;
          for (int kc = 0; kc < dd.kw; ++kc) {
            const int cc = c + dd.d * (kc - rw);
            if (cc < 0 || cc >= dd.W) continue;
            const double* xp = &xv[xi(rr, cc, 0)];
            const double* kp = &kv[ki(o, 0, kr, kc)];
            // kernel stride over i is kh*kw
            for (int i = 0; i < dd.Ci; ++i)
              acc += xp[i] * kp[static_cast<std::size_t>(i) * dd.kh * dd.kw];
          }
        }
        out.v[obase + o] = acc;
      }
    }

  const bool needs = x->requires_grad || kernel->requires_grad || bias->requires_grad;
  VarPtr result = detail::make_output(std::move(out), needs);
  if (needs) {
    tape.record([x, kernel, bias, result, dd, rh, rw]() {
      x->ensure_grad();
      kernel->ensure_grad();
      bias->ensure_grad();
      const double* g = result->grad.v.data();
      const double* xv = x->value.v.data();
      const double* kv = kernel->value.v.data();
      double* dx = x->grad.v.data();
      double* dk = kernel->grad.v.data();
      double* db = bias->grad.v.data();
      const auto xi = [&](int r, int c) {
        return (static_cast<std::size_t>(r) * dd.W + c) * dd.Ci;
      };
      const auto ki = [&](int o, int i, int kr, int kc) {
        return ((static_cast<std::size_t>(o) * dd.Ci + i) * dd.kh + kr) * dd.kw + kc;
      };
      for (int r = 0; r < dd.H; ++r)
        for (int c = 0; c < dd.W; ++c) {
          const std::size_t gbase = (static_cast<std::size_t>(r) * dd.W + c) * dd.Co;
          for (int o = 0; o < dd.Co; ++o) {
            const double go = g[gbase + o];
            if (go == 0.0) continue;
            db[o] += go;
            for (int kr = 0; kr < dd.kh; ++kr) {
              const int rr = r + dd.d * (kr - rh);
              if (rr < 0 || rr >= dd.H) continue;
              for (int kc = 0; kc < dd.kw; ++kc) {
                const int cc = c + dd.d * (kc - rw);
                if (cc < 0 || cc >= dd.W) continue;
                const std::size_t xb = xi(rr, cc);
                for (int i = 0; i < dd.Ci; ++i) {
                  dx[xb + i] += go * kv[ki(o, i, kr, kc)];
                  dk[ki(o, i, kr, kc)] += go * xv[xb + i];
                }
              }
            }
          }
        }
    });
  }
  return result;
}

inline VarPtr relu(Tape& tape, const VarPtr& x) {
  NdArray out = x->value;
  for (double& v : out.v)
    if (v < 0.0) v = 0.0;
  VarPtr result = detail::make_output(std::move(out), x->requires_grad);
  if (x->requires_grad) {
    tape.record([x, result]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->value.v.size(); ++i)
        if (x->value.v[i] > 0.0) x->grad.v[i] += result->grad.v[i];
    });
  }
  return result;
}

inline VarPtr add(Tape& tape, const VarPtr& a, const VarPtr& b) {
  if (a->value.dims != b->value.dims) throw ShapeError("add: shape mismatch");
  NdArray out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
  const bool needs = a->requires_grad || b->requires_grad;
  VarPtr result = detail::make_output(std::move(out), needs);
  if (needs) {
    tape.record([a, b, result]() {
      a->ensure_grad();
      b->ensure_grad();
      for (std::size_t i = 0; i < result->grad.v.size(); ++i) {
        a->grad.v[i] += result->grad.v[i];
        b->grad.v[i] += result->grad.v[i];
      }
    });
  }
  return result;
}

inline VarPtr add3(Tape& tape, const VarPtr& a, const VarPtr& b, const VarPtr& c) {
  return add(tape, add(tape, a, b), c);
}

inline VarPtr logistic(Tape& tape, const VarPtr& x) {
  NdArray out = x->value;
  for (double& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
  VarPtr result = detail::make_output(std::move(out), x->requires_grad);
  if (x->requires_grad) {
    tape.record([x, result]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->value.v.size(); ++i) {
        const double p = result->value.v[i];
        x->grad.v[i] += result->grad.v[i] * p * (1.0 - p);
      }
    });
  }
  return result;
}

/// Straight-through quantizer: the forward value is snapped onto the q grid,
/// the backward gradient passes through unchanged. Master weights stay
/// continuous.
inline VarPtr ste_quantize(Tape& tape, const VarPtr& x, const QFormat& q,
                           RoundMode mode = RoundMode::kHalfAwayFromZero) {
  q.validate();
  NdArray out = x->value;
  for (double& v : out.v) v = quantize_value(v, q, mode);
  VarPtr result = detail::make_output(std::move(out), x->requires_grad);
  if (x->requires_grad) {
    tape.record([x, result]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.v.size(); ++i) x->grad.v[i] += result->grad.v[i];
    });
  }
  return result;
}

inline constexpr double kCrossEntropyEps = 1e-7;

/// Mean binary cross entropy with the prediction clamped to
/// [eps, 1 - eps]. Returns loss and d(loss)/d(pred).
inline std::pair<double, NdArray> cross_entropy_with_grad(const NdArray& pred,
                                                          const NdArray& target) {
  if (pred.dims != target.dims) throw ShapeError("cross_entropy: shape mismatch");
  if (pred.v.empty()) throw ShapeError("cross_entropy: empty prediction");
  const double n = static_cast<double>(pred.v.size());
  double loss = 0.0;
  NdArray grad(pred.dims);
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double p_raw = pred.v[i];
    double p = p_raw;
    if (p < kCrossEntropyEps) p = kCrossEntropyEps;
    if (p > 1.0 - kCrossEntropyEps) p = 1.0 - kCrossEntropyEps;
    const double t = target.v[i];
    loss += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    if (p == p_raw) grad.v[i] = (-t / p + (1.0 - t) / (1.0 - p)) / n;
  }
  return {loss / n, std::move(grad)};
}

inline VarPtr cross_entropy(Tape& tape, const VarPtr& pred, const NdArray& target) {
  auto [loss, grad] = cross_entropy_with_grad(pred->value, target);
  NdArray out({1});
  out.v[0] = loss;
  VarPtr result = detail::make_output(std::move(out), pred->requires_grad);
  if (pred->requires_grad) {
    auto grad_holder = std::make_shared<NdArray>(std::move(grad));
    tape.record([pred, result, grad_holder]() {
      pred->ensure_grad();
      const double upstream = result->grad.v[0];
      for (std::size_t i = 0; i < pred->grad.v.size(); ++i)
        pred->grad.v[i] += upstream * grad_holder->v[i];
    });
  }
  return result;
}

}  // namespace chipnet::autodiff
