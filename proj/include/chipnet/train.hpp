#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chipnet/autodiff.hpp"
#include "chipnet/common.hpp"
#include "chipnet/metrics.hpp"
#include "chipnet/network.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// Adam with bias correction. Defaults follow the optimizer's canonical
/// settings: lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8.
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<autodiff::NdArray> first_moment;
  std::vector<autodiff::NdArray> second_moment;

  explicit AdamState(std::span<const autodiff::VarPtr> params, AdamConfig cfg = {})
      : config(cfg) {
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const auto& p : params) {
      first_moment.emplace_back(p->value.dims);
      second_moment.emplace_back(p->value.dims);
    }
  }
};

/// One optimizer step using the gradients accumulated in the parameters.
inline void adam_step(AdamState& state, std::span<const autodiff::VarPtr> params) {
  if (params.size() != state.first_moment.size())
    throw ShapeError("adam_step: parameter count changed");
  ++state.step_count;
  const double b1 = state.config.beta1, b2 = state.config.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    p.ensure_grad();
    if (p.value.v.size() != state.first_moment[pi].v.size())
      throw ShapeError("adam_step: moment/parameter shape mismatch");
    auto& m = state.first_moment[pi].v;
    auto& v = state.second_moment[pi].v;
    for (std::size_t i = 0; i < p.value.v.size(); ++i) {
      const double g = p.grad.v[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value.v[i] -= state.config.learning_rate * mhat / (std::sqrt(vhat) + state.config.epsilon);
    }
  }
}

/// Simulated-quantization settings for training: weights snapped to the
/// weight grid, activations to the activation grid, gradients untouched.
struct QuantSpec {
  QFormat weight_format = default_weight_format();
  QFormat act_format = default_activation_format();
  RoundMode round_mode = RoundMode::kHalfAwayFromZero;
};

struct TrainableConv {
  autodiff::VarPtr kernel;  // {out, in, kh, kw}
  autodiff::VarPtr bias;    // {out}
  int dilation = 1;
};

/// Master weights live as continuous doubles; the forward pass optionally
/// routes every parameter and post-ReLU activation through the
/// straight-through quantizer.
struct TrainableNetwork {
  TrainableConv encoder;
  std::vector<std::pair<TrainableConv, TrainableConv>> blocks;
  TrainableConv output;
  int in_channels = 0;
  int channels = 0;

  static TrainableNetwork from_network(const Network& net) {
    net.validate();
    TrainableNetwork t;
    t.in_channels = net.in_channels();
    t.channels = net.channels();
    t.encoder = wrap(net.encoder);
    for (const auto& b : net.blocks) t.blocks.emplace_back(wrap(b.dense3), wrap(b.dilated3));
    t.output = wrap(net.output);
    return t;
  }

  Network to_network() const {
    Network net;
    net.encoder = unwrap(encoder, channels, in_channels, 5);
    for (const auto& [dense, dilated] : blocks) {
      ChipNetBlockParams b;
      b.dense3 = unwrap(dense, channels, channels, 3);
      b.dilated3 = unwrap(dilated, channels, channels, 3);
      b.dilated3.dilation = 2;
      net.blocks.push_back(std::move(b));
    }
    net.output = unwrap(output, 1, channels, 1);
    net.validate();
    return net;
  }

  std::vector<autodiff::VarPtr> parameters() const {
    std::vector<autodiff::VarPtr> params{encoder.kernel, encoder.bias};
    for (const auto& [dense, dilated] : blocks) {
      params.push_back(dense.kernel);
      params.push_back(dense.bias);
      params.push_back(dilated.kernel);
      params.push_back(dilated.bias);
    }
    params.push_back(output.kernel);
    params.push_back(output.bias);
    return params;
  }

  /// Forward pass producing the probability map variable.
  autodiff::VarPtr forward(autodiff::Tape& tape, const autodiff::NdArray& input,
                           const QuantSpec* quant = nullptr) const {
    using namespace autodiff;
    VarPtr x = make_const(input);
    if (quant) x = ste_quantize(tape, x, quant->act_format, quant->round_mode);
    x = relu(tape, conv2d(tape, x, weights(tape, encoder, quant), biases(tape, encoder, quant),
                          encoder.dilation));
    if (quant) x = ste_quantize(tape, x, quant->act_format, quant->round_mode);
    for (const auto& [dense, dilated] : blocks) {
      VarPtr d1 = conv2d(tape, x, weights(tape, dense, quant), biases(tape, dense, quant),
                         dense.dilation);
      VarPtr d2 = conv2d(tape, x, weights(tape, dilated, quant), biases(tape, dilated, quant),
                         dilated.dilation);
      x = relu(tape, add3(tape, x, d1, d2));
      if (quant) x = ste_quantize(tape, x, quant->act_format, quant->round_mode);
    }
    VarPtr logit = conv2d(tape, x, weights(tape, output, quant), biases(tape, output, quant),
                          output.dilation);
    return logistic(tape, logit);
  }

 private:
  static TrainableConv wrap(const ConvParams& p) {
    using namespace autodiff;
    TrainableConv t;
    NdArray kernel({p.out_ch, p.in_ch, p.kh, p.kw});
    kernel.v = p.kernel;
    NdArray bias({p.out_ch});
    bias.v = p.bias;
    t.kernel = make_param(std::move(kernel));
    t.bias = make_param(std::move(bias));
    t.dilation = p.dilation;
    return t;
  }

  static ConvParams unwrap(const TrainableConv& t, int out, int in, int k) {
    ConvParams p(out, in, k, k, t.dilation);
    p.kernel = t.kernel->value.v;
    p.bias = t.bias->value.v;
    return p;
  }

  static autodiff::VarPtr weights(autodiff::Tape& tape, const TrainableConv& conv,
                                  const QuantSpec* quant) {
    if (!quant) return conv.kernel;
    return autodiff::ste_quantize(tape, conv.kernel, quant->weight_format, quant->round_mode);
  }
  static autodiff::VarPtr biases(autodiff::Tape& tape, const TrainableConv& conv,
                                 const QuantSpec* quant) {
    if (!quant) return conv.bias;
    return autodiff::ste_quantize(tape, conv.bias, quant->weight_format, quant->round_mode);
  }
};

/// One training sample: the spherical-view tensor and its per-cell labels.
struct LabeledFrame {
  Tensor3<float> tensor;
  Tensor2<std::uint8_t> labels;
};

struct TrainOptions {
  int epochs = 30;
  bool quantized = false;
  QuantSpec quant;
  std::uint32_t seed = 42;
  AdamConfig adam;
  const Network* initial = nullptr;  // defaults to a fresh Glorot init
  int channels = 8;
  int num_blocks = 2;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double f1 = 0.0;
};

struct TrainResult {
  Network network;
  std::vector<EpochStats> history;
};

namespace detail {

inline autodiff::NdArray frame_to_ndarray(const Tensor3<float>& t) {
  autodiff::NdArray a({t.rows, t.cols, t.channels});
  for (std::size_t i = 0; i < t.v.size(); ++i) a.v[i] = static_cast<double>(t.v[i]);
  return a;
}

inline autodiff::NdArray labels_to_ndarray(const Tensor2<std::uint8_t>& labels) {
  autodiff::NdArray a({labels.rows, labels.cols, 1});
  for (std::size_t i = 0; i < labels.v.size(); ++i) a.v[i] = labels.v[i] ? 1.0 : 0.0;
  return a;
}

inline ConfusionCounts prediction_confusion(const autodiff::NdArray& prob,
                                            const Tensor2<std::uint8_t>& labels) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.v.size(); ++i) {
    const bool p = prob.v[i] >= 0.5;
    const bool t = labels.v[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

}  // namespace detail

/// Per-frame (batch size 1) Adam training, seeded and single-threaded.
/// With `quantized` set, forward weights and activations pass through the
/// straight-through quantizer while the stored master weights stay float.
inline TrainResult train_toy(const std::vector<LabeledFrame>& dataset, const TrainOptions& opt) {
  if (dataset.empty()) throw DomainError("train_toy: empty dataset");
  for (const auto& frame : dataset) {
    if (frame.tensor.rows != frame.labels.rows || frame.tensor.cols != frame.labels.cols)
      throw ShapeError("train_toy: frame/label shape mismatch");
  }

  Network start = opt.initial
                      ? *opt.initial
                      : make_initialized_network(dataset.front().tensor.channels, opt.channels,
                                                 opt.num_blocks, opt.seed);
  TrainableNetwork model = TrainableNetwork::from_network(start);
  const std::vector<autodiff::VarPtr> params = model.parameters();
  AdamState adam(params, opt.adam);
  std::mt19937 rng(opt.seed ^ 0x9e3779b9u);

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    ConfusionCounts epoch_counts;
    for (std::size_t idx : order) {
      const LabeledFrame& frame = dataset[idx];
      autodiff::Tape tape;
      const autodiff::NdArray input = detail::frame_to_ndarray(frame.tensor);
      const autodiff::NdArray target = detail::labels_to_ndarray(frame.labels);
      autodiff::VarPtr prob = model.forward(tape, input, opt.quantized ? &opt.quant : nullptr);
      autodiff::VarPtr loss = autodiff::cross_entropy(tape, prob, target);
      loss_sum += loss->value.v[0];
      epoch_counts += detail::prediction_confusion(prob->value, frame.labels);
      for (const auto& p : params) p->zero_grad();
      tape.backward(loss);
      adam_step(adam, params);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_loss = loss_sum / static_cast<double>(dataset.size());
    stats.f1 = metrics(epoch_counts).f1.value_or(0.0);
    result.history.push_back(stats);
  }

  result.network = model.to_network();
  return result;
}

/// Aggregate F1 of a network over a labeled dataset in the given mode.
inline std::optional<double> evaluate_f1(const Network& net, const std::vector<LabeledFrame>& data,
                                         const ForwardMode& mode = ForwardMode::float_mode()) {
  ConfusionCounts total;
  for (const auto& frame : data) {
    const ProbMap prob = network_forward(frame.tensor, net, mode);
    BinaryMask pred(prob.rows, prob.cols);
    for (std::size_t i = 0; i < prob.v.size(); ++i) pred.v[i] = prob.v[i] >= 0.5f ? 1 : 0;
    BinaryMask gt(frame.labels.rows, frame.labels.cols);
    gt.v = frame.labels.v;
    total += confusion(pred, gt);
  }
  return metrics(total).f1;
}

}  // namespace chipnet
