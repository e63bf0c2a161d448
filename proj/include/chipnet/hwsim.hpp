#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/network.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// Half-width of the 5x5 datapath window; every buffer pads by this much.
inline constexpr int kPadMargin = 2;

/// Dual-port RAM model for one feature-map channel. The whole storage is
/// pre-loaded with zeroes, so addresses outside the written interior read
/// back as the padded border for free.
struct PaddingRam {
  int rows = 0;  // interior
  int cols = 0;
  Tensor2<std::int32_t> storage;  // (rows + 4) x (cols + 4)

  PaddingRam() = default;
  PaddingRam(int r, int c) : rows(r), cols(c), storage(r + 2 * kPadMargin, c + 2 * kPadMargin) {}

  void clear_interior() {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) storage(r + kPadMargin, c + kPadMargin) = 0;
  }

  void write(int r, int c, std::int32_t v) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw DomainError("PaddingRam: write outside the interior");
    storage(r + kPadMargin, c + kPadMargin) = v;
  }

  std::int32_t read_padded(int pr, int pc) const { return storage(pr, pc); }

  int padded_rows() const { return rows + 2 * kPadMargin; }
  int padded_cols() const { return cols + 2 * kPadMargin; }
};

/// Writes an image through a fresh PaddingRam and reads the padded result
/// back: interior identical, 2-pixel border exactly zero.
inline Tensor2<std::int32_t> padded_write_read(const Tensor2<std::int32_t>& image) {
  PaddingRam ram(image.rows, image.cols);
  for (int r = 0; r < image.rows; ++r)
    for (int c = 0; c < image.cols; ++c) ram.write(r, c, image(r, c));
  return ram.storage;
}

/// Shift-register line buffer: four full padded rows plus a 5x5 register
/// window. One push per clock; once primed, every push slides the window one
/// pixel along the raster.
class LineBuffer {
 public:
  explicit LineBuffer(int padded_cols) { reset(padded_cols); }

  void reset(int padded_cols) {
    if (padded_cols < 5) throw DomainError("LineBuffer: padded width must be at least 5");
    padded_cols_ = padded_cols;
    for (auto& row : history_) row.assign(static_cast<std::size_t>(padded_cols), 0);
    window_.fill(0);
    col_ = 0;
    row_ = 0;
    pushes_ = 0;
  }

  void push(std::int32_t px) {
    // Column of values 4, 3, 2, 1 rows above the incoming pixel.
    const std::int32_t above3 = history_[3][static_cast<std::size_t>(col_)];
    const std::int32_t above2 = history_[2][static_cast<std::size_t>(col_)];
    const std::int32_t above1 = history_[1][static_cast<std::size_t>(col_)];
    const std::int32_t above0 = history_[0][static_cast<std::size_t>(col_)];
    history_[3][static_cast<std::size_t>(col_)] = above2;
    history_[2][static_cast<std::size_t>(col_)] = above1;
    history_[1][static_cast<std::size_t>(col_)] = above0;
    history_[0][static_cast<std::size_t>(col_)] = px;

    for (int wr = 0; wr < 5; ++wr) {
      std::int32_t* row = &window_[static_cast<std::size_t>(wr) * 5];
      row[0] = row[1];
      row[1] = row[2];
      row[2] = row[3];
      row[3] = row[4];
    }
    window_[0 * 5 + 4] = above3;
    window_[1 * 5 + 4] = above2;
    window_[2 * 5 + 4] = above1;
    window_[3 * 5 + 4] = above0;
    window_[4 * 5 + 4] = px;

    ++pushes_;
    if (++col_ == padded_cols_) {
      col_ = 0;
      ++row_;
    }
  }

  /// True when the window registers hold a full in-image 5x5 patch, i.e. the
  /// last pushed pixel had padded coordinates (>= 4, >= 4).
  bool window_valid() const {
    if (pushes_ == 0) return false;
    const std::int64_t last = pushes_ - 1;
    return last / padded_cols_ >= 4 && last % padded_cols_ >= 4;
  }

  /// window()[wr * 5 + wc]: wr = 0 is the oldest row, wc = 4 the newest
  /// column.
  const std::array<std::int32_t, 25>& window() const { return window_; }

  std::int64_t pushes() const { return pushes_; }

 private:
  int padded_cols_ = 5;
  int col_ = 0;
  std::int64_t row_ = 0;
  std::int64_t pushes_ = 0;
  std::array<std::vector<std::int32_t>, 4> history_;
  std::array<std::int32_t, 25> window_{};
};

/// Streams a padded image through a line buffer and collects every valid
/// 5x5 window in raster order.
inline std::vector<std::array<std::int32_t, 25>> line_buffer_stream(
    const Tensor2<std::int32_t>& padded) {
  if (padded.rows < 5 || padded.cols < 5)
    throw DomainError("line_buffer_stream: padded image smaller than the window");
  LineBuffer lb(padded.cols);
  std::vector<std::array<std::int32_t, 25>> windows;
  windows.reserve(static_cast<std::size_t>(padded.rows - 4) * (padded.cols - 4));
  for (int r = 0; r < padded.rows; ++r)
    for (int c = 0; c < padded.cols; ++c) {
      lb.push(padded(r, c));
      if (lb.window_valid()) windows.push_back(lb.window());
    }
  return windows;
}

// --- Multiplier-array register layouts (one 5x5 array per kernel) ----------

using MultiplierArray = std::array<std::int64_t, 25>;

/// Regular 3x3 taps occupy the centered 3x3 positions of the array.
inline MultiplierArray embed_dense_3x3(const std::array<std::int64_t, 9>& taps) {
  MultiplierArray arr{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) arr[static_cast<std::size_t>(r + 1) * 5 + (c + 1)] = taps[r * 3 + c];
  return arr;
}

/// Dilated 3x3 taps occupy positions {0,2,4} x {0,2,4}.
inline MultiplierArray embed_dilated_3x3(const std::array<std::int64_t, 9>& taps) {
  MultiplierArray arr{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) arr[static_cast<std::size_t>(2 * r) * 5 + 2 * c] = taps[r * 3 + c];
  return arr;
}

/// Full block array: dense + dilated layouts superimposed, the center
/// register carrying the coefficient sum plus the identity contribution.
inline MultiplierArray fused_multiplier_array(const std::array<std::int64_t, 9>& dense,
                                              const std::array<std::int64_t, 9>& dilated,
                                              std::int64_t identity_raw) {
  MultiplierArray arr = embed_dense_3x3(dense);
  const MultiplierArray dil = embed_dilated_3x3(dilated);
  for (int i = 0; i < 25; ++i) arr[static_cast<std::size_t>(i)] += dil[static_cast<std::size_t>(i)];
  arr[12] += identity_raw;
  return arr;
}

/// Streams one padded channel through a 2D convolution slice: a line buffer
/// feeding two multiplier arrays. Returns the two per-pixel partial-sum maps
/// (no bias, no requantization), bit-exact building blocks of the adder tree.
inline std::pair<Tensor2<std::int64_t>, Tensor2<std::int64_t>> conv_slice(
    const Tensor2<std::int32_t>& padded, const MultiplierArray& array_a,
    const MultiplierArray& array_b) {
  if (padded.rows < 5 || padded.cols < 5)
    throw DomainError("conv_slice: padded image smaller than the window");
  const int H = padded.rows - 4, W = padded.cols - 4;
  Tensor2<std::int64_t> out_a(H, W), out_b(H, W);
  LineBuffer lb(padded.cols);
  std::size_t idx = 0;
  for (int r = 0; r < padded.rows; ++r)
    for (int c = 0; c < padded.cols; ++c) {
      lb.push(padded(r, c));
      if (!lb.window_valid()) continue;
      const auto& w = lb.window();
      std::int64_t sum_a = 0, sum_b = 0;
      for (int i = 0; i < 25; ++i) {
        sum_a += static_cast<std::int64_t>(w[static_cast<std::size_t>(i)]) *
                 array_a[static_cast<std::size_t>(i)];
        sum_b += static_cast<std::int64_t>(w[static_cast<std::size_t>(i)]) *
                 array_b[static_cast<std::size_t>(i)];
      }
      out_a.v[idx] = sum_a;
      out_b.v[idx] = sum_b;
      ++idx;
    }
  return {std::move(out_a), std::move(out_b)};
}

// --- FSM, cycle model and the full-network simulator ------------------------

/// Controller state: the outer machine sequences layers and buffer swaps,
/// the inner machine sequences passes (2 output maps each) and the pixel
/// stream within a pass.
struct FsmState {
  enum class Phase : std::uint8_t { kLoad, kConvolve, kSwap, kDone };
  int layer_index = 0;
  Phase phase = Phase::kLoad;
  int pass_index = 0;
  std::int64_t pixel_counter = 0;
};

struct CycleReport {
  std::int64_t cycles_per_pass = 0;
  std::vector<std::pair<std::string, int>> passes_per_layer;
  std::int64_t swap_cycles = 0;
  std::int64_t total_cycles = 0;
  double clock_hz = 350e6;

  int total_passes() const {
    int n = 0;
    for (const auto& [name, passes] : passes_per_layer) n += passes;
    return n;
  }
  double seconds() const { return static_cast<double>(total_cycles) / clock_hz; }
  double milliseconds() const { return seconds() * 1e3; }

  std::string render_text() const {
    std::ostringstream os;
    os << "cycles/pass: " << cycles_per_pass << "\n";
    for (const auto& [name, passes] : passes_per_layer)
      os << "  " << name << ": " << passes << " passes, "
         << passes * cycles_per_pass << " cycles\n";
    if (swap_cycles > 0) os << "  buffer swaps: " << swap_cycles << " cycles\n";
    os << "total: " << total_cycles << " cycles at " << clock_hz / 1e6 << " MHz = "
       << milliseconds() << " ms\n";
    return os.str();
  }

  std::string render_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"cycles_per_pass\":" << cycles_per_pass << ",\"layers\":[";
    for (std::size_t i = 0; i < passes_per_layer.size(); ++i) {
      if (i) os << ",";
      os << "{\"name\":\"" << passes_per_layer[i].first
         << "\",\"passes\":" << passes_per_layer[i].second << "}";
    }
    os << "],\"swap_cycles\":" << swap_cycles << ",\"total_cycles\":" << total_cycles
       << ",\"clock_hz\":" << clock_hz << ",\"milliseconds\":" << milliseconds() << "}";
    return os.str();
  }
};

struct SimConfig {
  double clock_hz = 350e6;
  std::int64_t swap_overhead_cycles = 0;  // per layer transition; the model default is zero-cost
  std::function<void(const FsmState&, std::int64_t total_cycle)> trace;
  std::int64_t trace_stride = 4096;  // pixel checkpoints within a pass
};

struct SimResult {
  ProbMap prob;
  Tensor2<std::int32_t> logit_raw;
  CycleReport report;
};

namespace detail {

struct SimLayer {
  std::string name;
  const QuantizedConv* primary = nullptr;   // encoder / dense branch / output head
  const QuantizedConv* dilated = nullptr;   // block dilated branch
  bool identity = false;
  bool relu = true;
};

inline std::vector<SimLayer> sim_layers(const QuantizedNetwork& net) {
  std::vector<SimLayer> layers;
  layers.push_back({"encoder", &net.encoder, nullptr, false, true});
  for (std::size_t i = 0; i < net.blocks.size(); ++i)
    layers.push_back({"block" + std::to_string(i), &net.blocks[i].first, &net.blocks[i].second,
                      true, true});
  layers.push_back({"output", &net.output, nullptr, false, false});
  return layers;
}

inline std::array<std::int64_t, 9> taps_3x3(const QuantizedConv& conv, int o, int i) {
  std::array<std::int64_t, 9> taps{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) taps[static_cast<std::size_t>(r) * 3 + c] = conv.at(o, i, r, c);
  return taps;
}

/// Multiplier-array contents for output channel `o`, input slice `s`.
inline MultiplierArray layer_array(const SimLayer& layer, int o, int s, const QFormat& wq) {
  if (s >= layer.primary->in_ch || o >= layer.primary->out_ch) return MultiplierArray{};
  if (layer.dilated) {
    const std::int64_t identity_raw =
        layer.identity && o == s ? std::int64_t{1} << wq.fraction_bits : 0;
    return fused_multiplier_array(taps_3x3(*layer.primary, o, s), taps_3x3(*layer.dilated, o, s),
                                  identity_raw);
  }
  MultiplierArray arr{};
  if (layer.primary->kh == 5) {
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c)
        arr[static_cast<std::size_t>(r) * 5 + c] = layer.primary->at(o, s, r, c);
  } else if (layer.primary->kh == 1) {
    arr[12] = layer.primary->at(o, s, 0, 0);
  } else {
    arr = embed_dense_3x3(taps_3x3(*layer.primary, o, s));
  }
  return arr;
}

template <typename AccT>
void stream_slice(const PaddingRam& fmap, const MultiplierArray& arr_a,
                  const MultiplierArray& arr_b, std::vector<AccT>& acc_a,
                  std::vector<AccT>& acc_b, LineBuffer& lb) {
  const int prows = fmap.padded_rows(), pcols = fmap.padded_cols();
  lb.reset(pcols);
  std::size_t idx = 0;
  for (int pr = 0; pr < prows; ++pr) {
    const std::int32_t* row = &fmap.storage.v[static_cast<std::size_t>(pr) * pcols];
    for (int pc = 0; pc < pcols; ++pc) {
      lb.push(row[pc]);
      if (!lb.window_valid()) continue;
      const auto& w = lb.window();
      AccT sum_a = 0, sum_b = 0;
      for (int i = 0; i < 25; ++i) {
        sum_a += static_cast<AccT>(w[static_cast<std::size_t>(i)]) *
                 static_cast<AccT>(arr_a[static_cast<std::size_t>(i)]);
        sum_b += static_cast<AccT>(w[static_cast<std::size_t>(i)]) *
                 static_cast<AccT>(arr_b[static_cast<std::size_t>(i)]);
      }
      acc_a[idx] += sum_a;
      acc_b[idx] += sum_b;
      ++idx;
    }
  }
}

template <typename AccT>
SimResult run_sim(const Tensor3<float>& input, const QuantizedNetwork& net,
                  const SimConfig& cfg) {
  const QFormat wq = net.weight_format, aq = net.act_format;
  const int H = input.rows, W = input.cols;
  const int slices = std::max(net.in_channels(), net.channels());
  const std::int64_t cycles_per_pass =
      static_cast<std::int64_t>(H + 2 * kPadMargin) * (W + 2 * kPadMargin);

  // Feature map buffers, one RAM per slice, all pre-loaded with zeroes.
  std::vector<PaddingRam> fmaps;
  fmaps.reserve(static_cast<std::size_t>(slices));
  for (int s = 0; s < slices; ++s) fmaps.emplace_back(H, W);
  const Tensor3<std::int32_t> qin = quantize_input(input, aq, net.round_mode);
  for (int ch = 0; ch < qin.channels; ++ch)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) fmaps[static_cast<std::size_t>(ch)].write(r, c, qin(r, c, ch));

  const std::vector<SimLayer> layers = sim_layers(net);
  CycleReport report;
  report.cycles_per_pass = cycles_per_pass;
  report.clock_hz = cfg.clock_hz;

  FsmState fsm;
  std::int64_t total_cycles = 0;
  const auto trace = [&](FsmState::Phase phase) {
    fsm.phase = phase;
    if (cfg.trace) cfg.trace(fsm, total_cycles);
  };

  std::vector<Tensor2<std::int32_t>> intermediate;
  std::vector<AccT> acc_a(static_cast<std::size_t>(H) * W);
  std::vector<AccT> acc_b(static_cast<std::size_t>(H) * W);
  LineBuffer lb(W + 2 * kPadMargin);
  Tensor2<std::int32_t> logits(H, W);

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const SimLayer& layer = layers[li];
    const int out_ch = layer.primary->out_ch;
    const int passes = (out_ch + 1) / 2;
    fsm.layer_index = static_cast<int>(li);
    fsm.pass_index = 0;
    fsm.pixel_counter = 0;
    trace(FsmState::Phase::kLoad);

    intermediate.assign(static_cast<std::size_t>(out_ch), Tensor2<std::int32_t>(H, W));
    for (int p = 0; p < passes; ++p) {
      fsm.pass_index = p;
      fsm.pixel_counter = 0;
      trace(FsmState::Phase::kConvolve);
      const int oc0 = 2 * p;
      const int oc1 = 2 * p + 1;
      std::fill(acc_a.begin(), acc_a.end(), AccT{0});
      std::fill(acc_b.begin(), acc_b.end(), AccT{0});
      for (int s = 0; s < slices; ++s) {
        const MultiplierArray arr_a = layer_array(layer, oc0, s, wq);
        const MultiplierArray arr_b =
            oc1 < out_ch ? layer_array(layer, oc1, s, wq) : MultiplierArray{};
        stream_slice(fmaps[static_cast<std::size_t>(s)], arr_a, arr_b, acc_a, acc_b, lb);
      }
      // Adder-tree root: bias, one requantization, ReLU.
      const auto finalize = [&](int oc, const std::vector<AccT>& acc) {
        std::int64_t bias = layer.primary->bias_raw[oc];
        if (layer.dilated) bias += layer.dilated->bias_raw[oc];
        const AccT bias_term = static_cast<AccT>(bias) << aq.fraction_bits;
        Tensor2<std::int32_t>& dst = intermediate[static_cast<std::size_t>(oc)];
        for (std::size_t i = 0; i < acc.size(); ++i) {
          const Accumulator full{static_cast<__int128>(acc[i] + bias_term),
                                 wq.fraction_bits + aq.fraction_bits};
          std::int32_t v = requantize_raw(full, aq, net.round_mode);
          if (layer.relu && v < 0) v = 0;
          dst.v[i] = v;
        }
      };
      finalize(oc0, acc_a);
      if (oc1 < out_ch) finalize(oc1, acc_b);
      total_cycles += cycles_per_pass;
      if (cfg.trace && cfg.trace_stride > 0) {
        for (std::int64_t px = cfg.trace_stride; px < cycles_per_pass;
             px += cfg.trace_stride) {
          fsm.pixel_counter = px;
          cfg.trace(fsm, total_cycles - cycles_per_pass + px);
        }
      }
    }
    report.passes_per_layer.emplace_back(layer.name, passes);

    if (li + 1 < layers.size()) {
      trace(FsmState::Phase::kSwap);
      for (int s = 0; s < slices; ++s) {
        if (s < out_ch) {
          const Tensor2<std::int32_t>& src = intermediate[static_cast<std::size_t>(s)];
          for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) fmaps[static_cast<std::size_t>(s)].write(r, c, src(r, c));
        } else {
          fmaps[static_cast<std::size_t>(s)].clear_interior();
        }
      }
      total_cycles += cfg.swap_overhead_cycles;
      report.swap_cycles += cfg.swap_overhead_cycles;
    } else {
      logits = intermediate[0];
    }
  }
  fsm.phase = FsmState::Phase::kDone;

  report.total_cycles = total_cycles;
  SimResult result;
  result.logit_raw = std::move(logits);
  result.prob = logits_to_prob(result.logit_raw, aq);
  result.report = std::move(report);
  return result;
}

}  // namespace detail

/// Cycle-approximate, bit-exact model of the convolution datapath: per pass,
/// every padded pixel of every slice streams through a line buffer into two
/// multiplier arrays, and the adder tree emits 2 output feature maps.
inline SimResult run_network_sim(const Tensor3<float>& input, const QuantizedNetwork& net,
                                 const SimConfig& cfg = {}) {
  if (input.channels != net.in_channels())
    throw ConfigError("run_network_sim: input has " + std::to_string(input.channels) +
                      " channels, network expects " + std::to_string(net.in_channels()));
  if (input.rows < 1 || input.cols < 1) throw ShapeError("run_network_sim: empty input");
  if (net.accumulator_bits > 63) return detail::run_sim<__int128>(input, net, cfg);
  return detail::run_sim<std::int64_t>(input, net, cfg);
}

/// Pure timing model: one cycle per streamed padded pixel gives
/// (H+4)(W+4) cycles per pass; each 2-kernel pass emits 2 output maps, so a
/// layer with n output channels needs ceil(n/2) passes.
inline CycleReport cycle_model(int width, int height, const Network& net,
                               double clock_hz = 350e6) {
  net.validate();
  CycleReport report;
  report.cycles_per_pass =
      static_cast<std::int64_t>(width + 2 * kPadMargin) * (height + 2 * kPadMargin);
  report.clock_hz = clock_hz;
  report.passes_per_layer.emplace_back("encoder", (net.encoder.out_ch + 1) / 2);
  for (std::size_t i = 0; i < net.blocks.size(); ++i)
    report.passes_per_layer.emplace_back("block" + std::to_string(i),
                                         (net.blocks[i].channels() + 1) / 2);
  report.passes_per_layer.emplace_back("output", (net.output.out_ch + 1) / 2);
  report.total_cycles = report.cycles_per_pass * report.total_passes();
  return report;
}

}  // namespace chipnet
