#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/spherical.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// Zero-padded, shape-preserving convolution parameters. Kernel layout is
/// [out][in][kr][kc]; dilation spaces the taps without adding parameters.
struct ConvParams {
  int out_ch = 0;
  int in_ch = 0;
  int kh = 0;
  int kw = 0;
  int dilation = 1;
  std::vector<double> kernel;  // out_ch * in_ch * kh * kw
  std::vector<double> bias;    // out_ch

  ConvParams() = default;
  ConvParams(int out, int in, int h, int w, int dil = 1)
      : out_ch(out),
        in_ch(in),
        kh(h),
        kw(w),
        dilation(dil),
        kernel(static_cast<std::size_t>(out) * in * h * w, 0.0),
        bias(static_cast<std::size_t>(out), 0.0) {
    validate();
  }

  void validate() const {
    if (out_ch <= 0 || in_ch <= 0) throw ShapeError("ConvParams: channel counts must be positive");
    if (kh <= 0 || kw <= 0 || kh % 2 == 0 || kw % 2 == 0)
      throw ShapeError("ConvParams: kernels must be odd-sized");
    if (dilation <= 0) throw ShapeError("ConvParams: dilation must be positive");
    if (kernel.size() != static_cast<std::size_t>(out_ch) * in_ch * kh * kw)
      throw ShapeError("ConvParams: kernel size mismatch");
    if (bias.size() != static_cast<std::size_t>(out_ch))
      throw ShapeError("ConvParams: bias size mismatch");
  }

  double& at(int o, int i, int r, int c) {
    return kernel[((static_cast<std::size_t>(o) * in_ch + i) * kh + r) * kw + c];
  }
  double at(int o, int i, int r, int c) const {
    return kernel[((static_cast<std::size_t>(o) * in_ch + i) * kh + r) * kw + c];
  }

  std::size_t param_count() const { return kernel.size() + bias.size(); }
};

/// The two parameterized branches of one block; the identity branch carries
/// no parameters.
struct ChipNetBlockParams {
  ConvParams dense3;    // 3x3, dilation 1
  ConvParams dilated3;  // 3x3, dilation 2

  ChipNetBlockParams() = default;
  explicit ChipNetBlockParams(int channels)
      : dense3(channels, channels, 3, 3, 1), dilated3(channels, channels, 3, 3, 2) {}

  void validate() const {
    dense3.validate();
    dilated3.validate();
    if (dense3.kh != 3 || dense3.kw != 3 || dense3.dilation != 1)
      throw ShapeError("ChipNetBlockParams: dense branch must be 3x3 dilation 1");
    if (dilated3.kh != 3 || dilated3.kw != 3 || dilated3.dilation != 2)
      throw ShapeError("ChipNetBlockParams: dilated branch must be 3x3 dilation 2");
    if (dense3.in_ch != dense3.out_ch || dilated3.in_ch != dilated3.out_ch ||
        dense3.in_ch != dilated3.in_ch)
      throw ShapeError("ChipNetBlockParams: branches must share a square channel count");
  }

  int channels() const { return dense3.in_ch; }
  std::size_t param_count() const { return dense3.param_count() + dilated3.param_count(); }
};

/// 5x5 encoder, a stack of blocks, and a 1x1 single-channel output head.
struct Network {
  ConvParams encoder;  // 5x5, input channels -> channels
  std::vector<ChipNetBlockParams> blocks;
  ConvParams output;  // 1x1, channels -> 1

  void validate() const {
    encoder.validate();
    output.validate();
    if (encoder.kh != 5 || encoder.kw != 5 || encoder.dilation != 1)
      throw ShapeError("Network: encoder must be a dense 5x5 convolution");
    if (output.kh != 1 || output.kw != 1 || output.out_ch != 1)
      throw ShapeError("Network: output head must be 1x1 with one channel");
    const int ch = encoder.out_ch;
    if (output.in_ch != ch) throw ShapeError("Network: output head channel mismatch");
    for (const auto& b : blocks) {
      b.validate();
      if (b.channels() != ch) throw ShapeError("Network: block channel mismatch");
    }
  }

  int in_channels() const { return encoder.in_ch; }
  int channels() const { return encoder.out_ch; }
};

/// Zero-initialized network with the given topology. Defaults reproduce the
/// published architecture: 14 -> 64 channels, 10 blocks.
inline Network make_network(int in_channels = 14, int channels = 64, int num_blocks = 10) {
  Network net;
  net.encoder = ConvParams(channels, in_channels, 5, 5, 1);
  net.blocks.assign(static_cast<std::size_t>(num_blocks), ChipNetBlockParams(channels));
  net.output = ConvParams(1, channels, 1, 1, 1);
  return net;
}

namespace detail {

inline void init_conv(ConvParams& p, std::mt19937& rng) {
  const double fan_in = static_cast<double>(p.in_ch) * p.kh * p.kw;
  const double fan_out = static_cast<double>(p.out_ch) * p.kh * p.kw;
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : p.kernel) w = dist(rng);
  for (double& b : p.bias) b = 0.0;
}

}  // namespace detail

/// Glorot-uniform initialization, biases zero.
inline Network make_initialized_network(int in_channels, int channels, int num_blocks,
                                        std::uint32_t seed) {
  Network net = make_network(in_channels, channels, num_blocks);
  std::mt19937 rng(seed);
  detail::init_conv(net.encoder, rng);
  for (auto& b : net.blocks) {
    detail::init_conv(b.dense3, rng);
    detail::init_conv(b.dilated3, rng);
  }
  detail::init_conv(net.output, rng);
  return net;
}

/// Same-size zero-padded convolution. Accumulation is carried in double
/// regardless of the tensor scalar type.
template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& x, const ConvParams& p) {
  p.validate();
  if (x.channels != p.in_ch) throw ShapeError("conv2d: input has " + std::to_string(x.channels) +
                                              " channels, kernel expects " +
                                              std::to_string(p.in_ch));
  if (x.rows < 1 || x.cols < 1) throw ShapeError("conv2d: empty spatial dimensions");
  const int H = x.rows, W = x.cols, Ci = p.in_ch, Co = p.out_ch;
  const int kh = p.kh, kw = p.kw, d = p.dilation;
  const int rh = (kh - 1) / 2, rw = (kw - 1) / 2;

  // Tap-major repack so the inner loop runs over contiguous input channels.
  std::vector<double> packed(static_cast<std::size_t>(Co) * kh * kw * Ci);
  for (int o = 0; o < Co; ++o)
    for (int i = 0; i < Ci; ++i)
      for (int r = 0; r < kh; ++r)
        for (int c = 0; c < kw; ++c)
          packed[((static_cast<std::size_t>(o) * kh + r) * kw + c) * Ci + i] = p.at(o, i, r, c);

  Tensor3<T> out(H, W, Co);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      T* out_cell = out.cell(r, c);
      for (int o = 0; o < Co; ++o) {
        double acc = p.bias[o];
        const double* ko = &packed[static_cast<std::size_t>(o) * kh * kw * Ci];
        for (int kr = 0; kr < kh; ++kr) {
          const int rr = r + d * (kr - rh);
          if (rr < 0 || rr >= H) continue;
          for (int kc = 0; kc < kw; ++kc) {
            const int cc = c + d * (kc - rw);
            if (cc < 0 || cc >= W) continue;
            const T* xp = x.cell(rr, cc);
            const double* kp = &ko[(static_cast<std::size_t>(kr) * kw + kc) * Ci];
            for (int i = 0; i < Ci; ++i) acc += static_cast<double>(xp[i]) * kp[i];
          }
        }
        out_cell[o] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> relu(Tensor3<T> t) {
  for (T& x : t.v)
    if (x < T{}) x = T{};
  return t;
}

/// identity + dense 3x3 + dilated 3x3, summed element-wise, then ReLU.
/// `apply_relu = false` exposes the pre-activation sum for fusion checks.
template <typename T>
Tensor3<T> block_forward(const Tensor3<T>& x, const ChipNetBlockParams& p,
                         bool apply_relu = true) {
  p.validate();
  if (x.channels != p.channels()) throw ShapeError("block_forward: channel mismatch");
  Tensor3<T> dense = conv2d(x, p.dense3);
  const Tensor3<T> dilated = conv2d(x, p.dilated3);
  for (std::size_t i = 0; i < dense.v.size(); ++i) dense.v[i] += dilated.v[i] + x.v[i];
  return apply_relu ? relu(std::move(dense)) : dense;
}

/// Packs the three branches into the equivalent dense 5x5 kernel: dilated
/// taps land on {0,2,4}x{0,2,4}, dense taps on the centered 3x3 window, and
/// the center position carries the coefficient sum plus the identity.
inline ConvParams fuse_block_to_5x5(const ChipNetBlockParams& p) {
  p.validate();
  const int ch = p.channels();
  ConvParams fused(ch, ch, 5, 5, 1);
  for (int o = 0; o < ch; ++o) {
    for (int i = 0; i < ch; ++i) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          fused.at(o, i, r + 1, c + 1) += p.dense3.at(o, i, r, c);
          fused.at(o, i, 2 * r, 2 * c) += p.dilated3.at(o, i, r, c);
        }
      }
    }
    fused.at(o, o, 2, 2) += 1.0;  // identity branch
    fused.bias[o] = p.dense3.bias[o] + p.dilated3.bias[o];
  }
  return fused;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- Parameter and multiplication counting -------------------------------

inline std::uint64_t count_params(const ConvParams& p) { return p.param_count(); }
inline std::uint64_t count_params(const ChipNetBlockParams& p) { return p.param_count(); }
inline std::uint64_t count_params(const Network& net) {
  std::uint64_t total = count_params(net.encoder) + count_params(net.output);
  for (const auto& b : net.blocks) total += count_params(b);
  return total;
}

/// Multiplications of one zero-padded, same-size convolution layer.
inline std::uint64_t count_mults(int out_ch, int in_ch, int kh, int kw, int height, int width) {
  return static_cast<std::uint64_t>(out_ch) * in_ch * kh * kw * height * width;
}
inline std::uint64_t count_mults(const ConvParams& p, int height, int width) {
  return count_mults(p.out_ch, p.in_ch, p.kh, p.kw, height, width);
}
inline std::uint64_t count_mults(const ChipNetBlockParams& p, int height, int width) {
  return count_mults(p.dense3, height, width) + count_mults(p.dilated3, height, width);
}

// --- Floating-point forward ----------------------------------------------

struct FloatForwardResult {
  ProbMap prob;
  Tensor2<float> logits;
};

/// encoder -> ReLU -> blocks -> 1x1 head -> logistic.
inline FloatForwardResult float_network_forward(const Tensor3<float>& input, const Network& net) {
  net.validate();
  if (input.channels != net.in_channels())
    throw ShapeError("network_forward: input channel mismatch");
  Tensor3<float> x = relu(conv2d(input, net.encoder));
  for (const auto& b : net.blocks) x = block_forward(x, b);
  const Tensor3<float> logit = conv2d(x, net.output);
  FloatForwardResult result;
  result.logits = Tensor2<float>(logit.rows, logit.cols);
  result.prob = ProbMap(logit.rows, logit.cols);
  for (int r = 0; r < logit.rows; ++r)
    for (int c = 0; c < logit.cols; ++c) {
      result.logits(r, c) = logit(r, c, 0);
      result.prob(r, c) = static_cast<float>(logistic(logit(r, c, 0)));
    }
  return result;
}

// --- Fixed-point forward ---------------------------------------------------

/// One convolution with raw integer weights, packed tap-major:
/// kernel_raw[((o*kh + kr)*kw + kc)*in_ch + i].
struct QuantizedConv {
  int out_ch = 0;
  int in_ch = 0;
  int kh = 0;
  int kw = 0;
  int dilation = 1;
  std::vector<std::int32_t> kernel_raw;
  std::vector<std::int32_t> bias_raw;

  std::int32_t at(int o, int i, int r, int c) const {
    return kernel_raw[((static_cast<std::size_t>(o) * kh + r) * kw + c) * in_ch + i];
  }
};

/// Whole network quantized to one weight/activation format pair. The
/// accumulator budget is validated at construction.
struct QuantizedNetwork {
  QuantizedConv encoder;
  std::vector<std::pair<QuantizedConv, QuantizedConv>> blocks;  // dense, dilated
  QuantizedConv output;
  QFormat weight_format;
  QFormat act_format;
  RoundMode round_mode = RoundMode::kHalfAwayFromZero;
  int accumulator_bits = 0;

  int in_channels() const { return encoder.in_ch; }
  int channels() const { return encoder.out_ch; }
};

namespace detail {

inline QuantizedConv quantize_conv(const ConvParams& p, const QFormat& q, RoundMode mode) {
  QuantizedConv out;
  out.out_ch = p.out_ch;
  out.in_ch = p.in_ch;
  out.kh = p.kh;
  out.kw = p.kw;
  out.dilation = p.dilation;
  out.kernel_raw.resize(p.kernel.size());
  for (int o = 0; o < p.out_ch; ++o)
    for (int i = 0; i < p.in_ch; ++i)
      for (int r = 0; r < p.kh; ++r)
        for (int c = 0; c < p.kw; ++c)
          out.kernel_raw[((static_cast<std::size_t>(o) * p.kh + r) * p.kw + c) * p.in_ch + i] =
              quantize_raw(p.at(o, i, r, c), q, mode);
  out.bias_raw.resize(p.bias.size());
  for (std::size_t i = 0; i < p.bias.size(); ++i)
    out.bias_raw[i] = quantize_raw(p.bias[i], q, mode);
  return out;
}

/// Widest sum any layer can produce: every kernel tap plus the identity tap
/// and the shifted bias. The fused center coefficient can exceed the weight
/// format by two taps plus the identity, hence the +2 guard bits.
inline int network_accumulator_bits(int encoder_in_ch, int channels, const QFormat& wq,
                                    const QFormat& aq) {
  std::size_t max_terms = static_cast<std::size_t>(encoder_in_ch) * 25 + 1;
  const std::size_t block_terms = static_cast<std::size_t>(channels) * 25 + 2;
  if (block_terms > max_terms) max_terms = block_terms;
  return (wq.total_bits + 2) + aq.total_bits + detail::ceil_log2(max_terms) + 1;
}

inline int network_accumulator_bits(const Network& net, const QFormat& wq, const QFormat& aq) {
  return network_accumulator_bits(net.encoder.in_ch, net.channels(), wq, aq);
}

}  // namespace detail

inline QuantizedNetwork quantize_network(const Network& net, const QFormat& weight_format,
                                         const QFormat& act_format,
                                         RoundMode mode = RoundMode::kHalfAwayFromZero) {
  net.validate();
  weight_format.validate();
  act_format.validate();
  QuantizedNetwork q;
  q.weight_format = weight_format;
  q.act_format = act_format;
  q.round_mode = mode;
  q.accumulator_bits = detail::network_accumulator_bits(net, weight_format, act_format);
  if (q.accumulator_bits > 127)
    throw ConfigError("quantize_network: accumulator would need " +
                      std::to_string(q.accumulator_bits) + " bits");
  q.encoder = detail::quantize_conv(net.encoder, weight_format, mode);
  for (const auto& b : net.blocks)
    q.blocks.emplace_back(detail::quantize_conv(b.dense3, weight_format, mode),
                          detail::quantize_conv(b.dilated3, weight_format, mode));
  q.output = detail::quantize_conv(net.output, weight_format, mode);
  return q;
}

namespace detail {

template <typename AccT>
inline AccT conv_taps(const Tensor3<std::int32_t>& x, const QuantizedConv& conv, int r, int c,
                      int o) {
  const int H = x.rows, W = x.cols, Ci = conv.in_ch;
  const int rh = (conv.kh - 1) / 2, rw = (conv.kw - 1) / 2, d = conv.dilation;
  AccT acc = 0;
  for (int kr = 0; kr < conv.kh; ++kr) {
    const int rr = r + d * (kr - rh);
    if (rr < 0 || rr >= H) continue;
    for (int kc = 0; kc < conv.kw; ++kc) {
      const int cc = c + d * (kc - rw);
      if (cc < 0 || cc >= W) continue;
      const std::int32_t* xp = x.cell(rr, cc);
      const std::int32_t* kp =
          &conv.kernel_raw[((static_cast<std::size_t>(o) * conv.kh + kr) * conv.kw + kc) * Ci];
      for (int i = 0; i < Ci; ++i)
        acc += static_cast<AccT>(static_cast<std::int64_t>(xp[i]) * kp[i]);
    }
  }
  return acc;
}

/// Plain quantized convolution layer: one full-width accumulation per output
/// value, a single requantize at the root, optional ReLU.
template <typename AccT>
Tensor3<std::int32_t> fixed_conv_forward(const Tensor3<std::int32_t>& x, const QuantizedConv& conv,
                                         const QFormat& wq, const QFormat& aq, RoundMode mode,
                                         bool apply_relu) {
  if (x.channels != conv.in_ch) throw ShapeError("fixed_conv_forward: channel mismatch");
  Tensor3<std::int32_t> out(x.rows, x.cols, conv.out_ch);
  const int frac = wq.fraction_bits + aq.fraction_bits;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) {
      std::int32_t* out_cell = out.cell(r, c);
      for (int o = 0; o < conv.out_ch; ++o) {
        AccT acc = conv_taps<AccT>(x, conv, r, c, o);
        acc += static_cast<AccT>(conv.bias_raw[o]) << aq.fraction_bits;
        Accumulator full{static_cast<__int128>(acc), frac};
        std::int32_t v = requantize_raw(full, aq, mode);
        if (apply_relu && v < 0) v = 0;
        out_cell[o] = v;
      }
    }
  return out;
}

/// Block layer: dense taps + dilated taps + identity + both biases gathered
/// into one accumulator, then a single requantize and ReLU. Matches the
/// adder-tree-root normalization of the datapath bit for bit.
template <typename AccT>
Tensor3<std::int32_t> fixed_block_forward(const Tensor3<std::int32_t>& x,
                                          const QuantizedConv& dense, const QuantizedConv& dilated,
                                          const QFormat& wq, const QFormat& aq, RoundMode mode) {
  if (x.channels != dense.in_ch) throw ShapeError("fixed_block_forward: channel mismatch");
  Tensor3<std::int32_t> out(x.rows, x.cols, dense.out_ch);
  const int frac = wq.fraction_bits + aq.fraction_bits;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) {
      std::int32_t* out_cell = out.cell(r, c);
      const std::int32_t* x_cell = x.cell(r, c);
      for (int o = 0; o < dense.out_ch; ++o) {
        AccT acc = conv_taps<AccT>(x, dense, r, c, o);
        acc += conv_taps<AccT>(x, dilated, r, c, o);
        acc += static_cast<AccT>(x_cell[o]) << wq.fraction_bits;  // identity branch
        acc += static_cast<AccT>(static_cast<std::int64_t>(dense.bias_raw[o]) +
                                 dilated.bias_raw[o])
               << aq.fraction_bits;
        Accumulator full{static_cast<__int128>(acc), frac};
        std::int32_t v = requantize_raw(full, aq, mode);
        out_cell[o] = v < 0 ? 0 : v;
      }
    }
  return out;
}

}  // namespace detail

struct FixedForwardResult {
  ProbMap prob;
  Tensor2<std::int32_t> logit_raw;  // activation-format raw logits
};

inline Tensor3<std::int32_t> quantize_input(const Tensor3<float>& input, const QFormat& aq,
                                            RoundMode mode) {
  Tensor3<std::int32_t> out(input.rows, input.cols, input.channels);
  for (std::size_t i = 0; i < input.v.size(); ++i)
    out.v[i] = quantize_raw(static_cast<double>(input.v[i]), aq, mode);
  return out;
}

inline ProbMap logits_to_prob(const Tensor2<std::int32_t>& logit_raw, const QFormat& aq) {
  ProbMap prob(logit_raw.rows, logit_raw.cols);
  for (std::size_t i = 0; i < prob.v.size(); ++i)
    prob.v[i] = static_cast<float>(logistic(std::ldexp(
        static_cast<double>(logit_raw.v[i]), -aq.fraction_bits)));
  return prob;
}

/// Bit-exact integer forward pass. All layer arithmetic happens on raw
/// integers; the logistic squashing runs on the dequantized logit.
inline FixedForwardResult fixed_network_forward(const Tensor3<float>& input,
                                                const QuantizedNetwork& net) {
  if (input.channels != net.in_channels())
    throw ShapeError("fixed_network_forward: input channel mismatch");
  const QFormat wq = net.weight_format, aq = net.act_format;
  const RoundMode mode = net.round_mode;
  const bool wide = net.accumulator_bits > 63;

  Tensor3<std::int32_t> x = quantize_input(input, aq, mode);
  const auto run_conv = [&](const Tensor3<std::int32_t>& in, const QuantizedConv& conv,
                            bool relu_after) {
    return wide ? detail::fixed_conv_forward<__int128>(in, conv, wq, aq, mode, relu_after)
                : detail::fixed_conv_forward<std::int64_t>(in, conv, wq, aq, mode, relu_after);
  };
  x = run_conv(x, net.encoder, true);
  for (const auto& [dense, dilated] : net.blocks)
    x = wide ? detail::fixed_block_forward<__int128>(x, dense, dilated, wq, aq, mode)
             : detail::fixed_block_forward<std::int64_t>(x, dense, dilated, wq, aq, mode);
  const Tensor3<std::int32_t> logit = run_conv(x, net.output, false);

  FixedForwardResult result;
  result.logit_raw = Tensor2<std::int32_t>(logit.rows, logit.cols);
  for (int r = 0; r < logit.rows; ++r)
    for (int c = 0; c < logit.cols; ++c) result.logit_raw(r, c) = logit(r, c, 0);
  result.prob = logits_to_prob(result.logit_raw, aq);
  return result;
}

// --- Mode-dispatching entry point ------------------------------------------

struct ForwardMode {
  enum class Kind { kFloat, kFixed } kind = Kind::kFloat;
  QFormat weight_format = default_weight_format();
  QFormat act_format = default_activation_format();
  RoundMode round_mode = RoundMode::kHalfAwayFromZero;

  static ForwardMode float_mode() { return ForwardMode{}; }
  static ForwardMode fixed_mode(const QFormat& wq, const QFormat& aq,
                                RoundMode mode = RoundMode::kHalfAwayFromZero) {
    return ForwardMode{Kind::kFixed, wq, aq, mode};
  }
};

inline ProbMap network_forward(const Tensor3<float>& input, const Network& net,
                               const ForwardMode& mode = ForwardMode::float_mode()) {
  if (mode.kind == ForwardMode::Kind::kFloat) return float_network_forward(input, net).prob;
  const QuantizedNetwork q =
      quantize_network(net, mode.weight_format, mode.act_format, mode.round_mode);
  return fixed_network_forward(input, q).prob;
}

}  // namespace chipnet
