// Acceptance suite: one line per criterion, nonzero exit if any fail.
//
// The desk-scale training run (criteria 4 and 10) executes once and its
// artifacts feed the simulator equivalence check (criterion 5).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "chipnet/chipnet.hpp"
#include "helpers.hpp"

using namespace chipnet;

namespace {

int g_failures = 0;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("[%s] C%-2d %-28s %s (%.1f s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

Tensor3<float> random_frame(int rows, int cols, int ch, std::mt19937& gen, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor3<float> t(rows, cols, ch);
  for (auto& v : t.v) v = dist(gen);
  return t;
}

// --- C1: block/5x5 fusion equivalence ---------------------------------------

void criterion_fusion() {
  Stopwatch watch;
  std::mt19937 gen(42);
  std::uniform_real_distribution<double> wdist(-0.5, 0.5);
  std::uniform_real_distribution<float> xdist(-1.0f, 1.0f);
  float max_err = 0.0f;
  for (int trial = 0; trial < 100; ++trial) {
    ChipNetBlockParams p(64);
    for (auto& w : p.dense3.kernel) w = wdist(gen);
    for (auto& w : p.dilated3.kernel) w = wdist(gen);
    for (auto& b : p.dense3.bias) b = wdist(gen);
    for (auto& b : p.dilated3.bias) b = wdist(gen);
    Tensor3<float> x(16, 16, 64);
    for (auto& v : x.v) v = xdist(gen);
    const Tensor3<float> direct = block_forward(x, p, false);
    const Tensor3<float> fused = conv2d(x, fuse_block_to_5x5(p));
    for (std::size_t i = 0; i < direct.v.size(); ++i)
      max_err = std::max(max_err, std::abs(direct.v[i] - fused.v[i]));
  }
  const double elapsed = watch.seconds();
  report(1, "fusion equivalence", max_err <= 1e-5f && elapsed < 10.0,
         "100 random blocks, max |err| = " + std::to_string(max_err), elapsed);
}

// --- C2: parameter and multiplication counts --------------------------------

void criterion_counts() {
  Stopwatch watch;
  const std::uint64_t block_params = count_params(ChipNetBlockParams(64));
  const std::uint64_t conv5_params = count_params(ConvParams(64, 64, 5, 5, 1));
  const double reduction = 100.0 * (1.0 - static_cast<double>(block_params) / conv5_params);
  const std::uint64_t conv5_mults = count_mults(64, 64, 5, 5, 64, 180);
  const std::uint64_t block_mults = count_mults(ChipNetBlockParams(64), 64, 180);
  const bool pass = block_params == 73'856 && conv5_params == 102'464 &&
                    std::lround(reduction) == 28 && conv5_mults == 1'179'648'000ULL &&
                    block_mults == 849'346'560ULL;
  report(2, "parameter/mult counts", pass,
         "block " + std::to_string(block_params) + ", conv5x5 " + std::to_string(conv5_params) +
             ", reduction " + std::to_string(reduction).substr(0, 5) +
             "%, mults 1,179,648,000 vs block direct 849,346,560 (fused array shares the center "
             "tap: 17 taps = 802,160,640)",
         watch.seconds());
}

// --- C3: quantization property sweep -----------------------------------------

void criterion_quantization() {
  Stopwatch watch;
  std::mt19937 gen(7);
  bool pass = true;
  std::string fail_detail;
  for (int bits : {8, 12, 16, 18, 24, 32}) {
    for (const QFormat q : {weight_format_for_bits(bits), activation_format_for_bits(bits)}) {
      std::uniform_real_distribution<double> dist(2.0 * q.min_value(), 2.0 * q.max_value());
      double prev_x = 0.0, prev_q = 0.0;
      bool have_prev = false;
      for (int i = 0; i < 100'000; ++i) {
        const double x = dist(gen);
        const double qx = quantize_value(x, q);
        const double scaled = std::ldexp(qx, q.fraction_bits);
        bool ok = quantize_value(qx, q) == qx;                             // idempotence
        ok = ok && scaled == std::round(scaled);                          // grid membership
        if (x >= q.min_value() && x <= q.max_value())
          ok = ok && std::abs(qx - x) <= std::ldexp(1.0, -(q.fraction_bits + 1));
        if (x > q.max_value()) ok = ok && qx == q.max_value();            // saturation
        if (x < q.min_value()) ok = ok && qx == q.min_value();
        if (have_prev) {
          if (x >= prev_x)
            ok = ok && qx >= prev_q;                                      // monotonicity
          else
            ok = ok && qx <= prev_q;
        }
        if (!ok) {
          pass = false;
          fail_detail = "violation at N=" + std::to_string(q.total_bits) +
                        " F=" + std::to_string(q.fraction_bits) + " x=" + std::to_string(x);
          break;
        }
        prev_x = x;
        prev_q = qx;
        have_prev = true;
      }
    }
  }
  const double elapsed = watch.seconds();
  pass = pass && elapsed < 5.0;
  report(3, "quantization properties", pass,
         pass ? "idempotence/monotonicity/grid/half-step/saturation over 1.2e6 samples"
              : fail_detail,
         watch.seconds());
}

// --- C4 + C10: desk-scale training and bit-length fidelity -------------------

struct TrainingArtifacts {
  Network float_net;
  Network qat_net;
  std::vector<LabeledFrame> dataset;
  bool trained = false;
};

TrainingArtifacts run_training() {
  TrainingArtifacts art;
  art.dataset = make_wedge_dataset(200, toy_grid_config(), 20'24);

  TrainOptions stage1;
  stage1.epochs = 30;
  stage1.channels = 8;
  stage1.num_blocks = 2;
  stage1.seed = 1337;
  const TrainResult r1 = train_toy(art.dataset, stage1);

  TrainOptions stage2 = stage1;
  stage2.epochs = 10;
  stage2.quantized = true;
  stage2.quant.weight_format = default_weight_format();
  stage2.quant.act_format = default_activation_format();
  stage2.initial = &r1.network;
  const TrainResult r2 = train_toy(art.dataset, stage2);

  art.float_net = r1.network;
  art.qat_net = r2.network;
  art.trained = true;

  // loss-decrease invariant of the float stage
  const double first = r1.history.front().mean_loss;
  const double last = r1.history.back().mean_loss;
  if (!(last < 0.25 * first))
    std::printf("  note: float-stage loss %.4f -> %.4f misses the 25%% decrease bound\n", first,
                last);
  return art;
}

void criterion_bit_fidelity(const TrainingArtifacts& art, double* out_f1_float,
                            double* out_f1_qat18) {
  Stopwatch watch;
  const double f1_float = evaluate_f1(art.float_net, art.dataset).value_or(0.0);
  const double f1_fix18 =
      evaluate_f1(art.float_net, art.dataset,
                  ForwardMode::fixed_mode(default_weight_format(), default_activation_format()))
          .value_or(0.0);
  const double f1_fix12 =
      evaluate_f1(art.float_net, art.dataset,
                  ForwardMode::fixed_mode(weight_format_for_bits(12),
                                          activation_format_for_bits(12)))
          .value_or(0.0);
  const double delta18 = std::abs(f1_float - f1_fix18);
  const double delta12 = std::abs(f1_float - f1_fix12);
  *out_f1_float = f1_float;
  *out_f1_qat18 =
      evaluate_f1(art.qat_net, art.dataset,
                  ForwardMode::fixed_mode(default_weight_format(), default_activation_format()))
          .value_or(0.0);

  // probability maps themselves stay close at 18 bits
  double abs_sum = 0.0;
  std::size_t cells = 0;
  const QuantizedNetwork q18 =
      quantize_network(art.float_net, default_weight_format(), default_activation_format());
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& frame = art.dataset[i * art.dataset.size() / 10];
    const ProbMap fixed = fixed_network_forward(frame.tensor, q18).prob;
    const ProbMap fl = float_network_forward(frame.tensor, art.float_net).prob;
    for (std::size_t j = 0; j < fl.v.size(); ++j)
      abs_sum += std::abs(static_cast<double>(fl.v[j]) - fixed.v[j]);
    cells += fl.v.size();
  }
  const double mean_abs = abs_sum / static_cast<double>(cells);

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "F1 float %.4f, 18-bit %.4f (d=%.4f), 12-bit %.4f (d=%.4f); prob mean|d| %.5f",
                f1_float, f1_fix18, delta18, f1_fix12, delta12, mean_abs);
  report(4, "18-bit fidelity ordering",
         delta18 < 0.01 && delta12 > delta18 && mean_abs < 0.01, buf, watch.seconds());
}

// --- C5: hardware simulator bit-exactness ------------------------------------

void criterion_sim_bitexact(const TrainingArtifacts& art) {
  Stopwatch watch;
  std::mt19937 gen(99);
  const QuantizedNetwork trained =
      quantize_network(art.qat_net, default_weight_format(), default_activation_format());
  std::size_t mismatches = 0;
  std::size_t cells = 0;
  for (int frame_idx = 0; frame_idx < 20; ++frame_idx) {
    const Tensor3<float> frame = random_frame(64, 180, 14, gen, -30.0f, 30.0f);
    const FixedForwardResult ref = fixed_network_forward(frame, trained);
    const SimResult sim = run_network_sim(frame, trained);
    cells += ref.logit_raw.v.size();
    for (std::size_t i = 0; i < ref.logit_raw.v.size(); ++i)
      if (ref.logit_raw.v[i] != sim.logit_raw.v[i]) ++mismatches;
  }

  // the full 64-slice, 32-pass architecture with random weights
  const Network full = make_initialized_network(14, 64, 10, 5150);
  const QuantizedNetwork qfull =
      quantize_network(full, default_weight_format(), default_activation_format());
  std::size_t full_mismatches = 0;
  for (int frame_idx = 0; frame_idx < 2; ++frame_idx) {
    const Tensor3<float> frame = random_frame(64, 180, 14, gen, -30.0f, 30.0f);
    const FixedForwardResult ref = fixed_network_forward(frame, qfull);
    const SimResult sim = run_network_sim(frame, qfull);
    for (std::size_t i = 0; i < ref.logit_raw.v.size(); ++i)
      if (ref.logit_raw.v[i] != sim.logit_raw.v[i]) ++full_mismatches;
    if (sim.report.cycles_per_pass != 12'512) ++full_mismatches;
  }
  const double elapsed = watch.seconds();
  report(5, "simulator bit-exactness",
         mismatches == 0 && full_mismatches == 0 && cells == 20u * 11'520u && elapsed < 300.0,
         "20 trained-net frames x 11,520 cells + 2 full-width frames, " +
             std::to_string(mismatches + full_mismatches) + " mismatches",
         elapsed);
}

// --- C6: cycle/time model ------------------------------------------------------

void criterion_cycle_model() {
  Stopwatch watch;
  const Network net = make_network(14, 64, 10);
  const CycleReport r = cycle_model(180, 64, net, 350e6);
  const double ms = r.milliseconds();
  const double with_post = ms + 5.0;
  const bool pass = r.cycles_per_pass == 12'512 && r.total_passes() == 353 &&
                    std::abs(ms - 12.59) / 12.59 < 0.005 && std::abs(with_post - 17.59) < 0.1;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "12,512 cycles/pass, 353 passes, %.4f ms at 350 MHz, %.4f ms with 5 ms "
                "post-processing",
                ms, with_post);
  report(6, "cycle/time model", pass, buf, watch.seconds());
}

// --- C7: rasterizer vs point-in-polygon oracle ---------------------------------

void criterion_rasterize() {
  Stopwatch watch;
  std::mt19937 gen(77);
  const GridMapConfig cfg;
  bool pass = cfg.x_cells() == 800 && cfg.y_cells() == 400;
  std::size_t disagreements = 0;

  for (int trial = 0; trial < 1000 && pass; ++trial) {
    const Polygon poly = testutil::random_polygon(gen);
    const GridMap map = rasterize(poly, cfg);
    double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
    for (const auto& [x, y] : poly.vertices) {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
    for (int gx = 0; gx < cfg.x_cells(); ++gx) {
      const double px = cfg.cell_x(gx);
      const bool x_in_bbox = px >= min_x && px <= max_x;
      for (int gy = 0; gy < cfg.y_cells(); ++gy) {
        const double py = cfg.cell_y(gy);
        const bool drivable = map.at(gx, gy) == CellState::kDrivable;
        if (!x_in_bbox || py < min_y || py > max_y) {
          // outside the bounding box the polygon cannot contain the center
          if (drivable) ++disagreements;
          continue;
        }
        if (drivable != point_in_polygon(px, py, poly)) ++disagreements;
      }
    }
    if (disagreements != 0) pass = false;
  }

  // closed-form rectangle count
  Polygon rect;
  rect.vertices = {{10, -5}, {20, -5}, {20, 5}, {10, 5}};
  const GridMap rect_map = rasterize(rect, cfg);
  std::size_t drivable = 0;
  for (const auto cell : rect_map.cells) drivable += cell == CellState::kDrivable;
  pass = pass && drivable == 40'000 && disagreements == 0;
  report(7, "rasterizer correctness", pass,
         "1000 random polygons, " + std::to_string(disagreements) +
             " disagreements; grid 800x400; [10,20]x[-5,5] m covers " + std::to_string(drivable) +
             " cells",
         watch.seconds());
}

// --- C8: metric formulas ---------------------------------------------------------

void criterion_metrics() {
  Stopwatch watch;
  std::mt19937 gen(88);
  std::bernoulli_distribution bit(0.5);
  bool pass = true;
  for (int trial = 0; trial < 1000 && pass; ++trial) {
    BinaryMask pred(32, 32), gt(32, 32);
    for (auto& v : pred.v) v = bit(gen) ? 1 : 0;
    for (auto& v : gt.v) v = bit(gen) ? 1 : 0;
    const ConfusionCounts c = confusion(pred, gt);
    ConfusionCounts oracle;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
      const bool p = pred.v[i] != 0, t = gt.v[i] != 0;
      if (p && t)
        ++oracle.tp;
      else if (p)
        ++oracle.fp;
      else if (t)
        ++oracle.fn;
      else
        ++oracle.tn;
    }
    pass = c.tp == oracle.tp && c.fp == oracle.fp && c.tn == oracle.tn && c.fn == oracle.fn;
    if (!pass) break;
    const MetricsReport m = metrics(c);
    const double p = static_cast<double>(c.tp) / (c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / (c.tp + c.fn);
    pass = std::abs(*m.precision - p) < 1e-12 && std::abs(*m.recall - r) < 1e-12 &&
           std::abs(*m.f1 - 2.0 * p * r / (p + r)) < 1e-12 &&
           std::abs(*m.ap - static_cast<double>(c.tp + c.tn) / c.total()) < 1e-12;
  }

  const MetricsReport worked = metrics(ConfusionCounts{3, 1, 5, 2});
  pass = pass && std::abs(*worked.precision - 0.75) < 1e-10 &&
         std::abs(*worked.recall - 0.6) < 1e-10 &&
         std::abs(*worked.f1 - 0.6666666667) < 1e-10 &&
         std::abs(*worked.ap - 0.7272727273) < 1e-10 &&
         std::abs(*worked.fpr - 0.1666666667) < 1e-10 && std::abs(*worked.fnr - 0.4) < 1e-10;
  report(8, "metric formulas", pass,
         "1000 random 32x32 pairs exact; worked example to 10 decimals", watch.seconds());
}

// --- C9: gradient correctness -----------------------------------------------------

// A perturbation interval crossing a ReLU kink poisons the central estimate
// at that step size, so the check may halve the step twice; a wrong analytic
// gradient fails at every step because the estimates converge to the true
// derivative, not to the bug.
bool finite_difference_ok(const autodiff::VarPtr& param,
                          const std::function<double()>& loss_value, double h, double rel_tol) {
  for (std::size_t i = 0; i < param->value.v.size(); ++i) {
    const double saved = param->value.v[i];
    const auto fd = [&](double step) {
      param->value.v[i] = saved + step;
      const double up = loss_value();
      param->value.v[i] = saved - step;
      const double down = loss_value();
      param->value.v[i] = saved;
      return (up - down) / (2.0 * step);
    };
    const double analytic = param->grad.v[i];
    double numeric = fd(h);
    if (std::abs(numeric) < 1e-5 && std::abs(analytic) < 1e-5) {
      if (std::abs(numeric - analytic) >= 1e-6) return false;
      continue;
    }
    double best =
        std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic));
    for (double step = h / 2.0; best >= rel_tol && step >= h / 4.0; step /= 2.0) {
      numeric = fd(step);
      best = std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic));
    }
    if (best >= rel_tol) return false;
  }
  return true;
}

void criterion_gradients() {
  Stopwatch watch;
  using namespace autodiff;
  std::mt19937 gen(4242);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  bool pass = true;

  // every differentiable op inside a small network against central differences
  const Network start = make_initialized_network(14, 4, 2, 31);
  TrainableNetwork model = TrainableNetwork::from_network(start);
  NdArray input({8, 12, 14});
  for (auto& v : input.v) v = 2.0 * dist(gen);
  NdArray target({8, 12, 1});
  std::bernoulli_distribution bit(0.4);
  for (auto& t : target.v) t = bit(gen) ? 1.0 : 0.0;

  const auto loss_value = [&]() {
    Tape tape;
    return cross_entropy_with_grad(model.forward(tape, input)->value, target).first;
  };
  {
    Tape tape;
    VarPtr loss = cross_entropy(tape, model.forward(tape, input), target);
    for (const auto& p : model.parameters()) p->zero_grad();
    tape.backward(loss);
  }
  for (const auto& param : model.parameters())
    if (!finite_difference_ok(param, loss_value, 1e-3, 1e-3)) {
      pass = false;
      break;
    }

  // straight-through backward equals the upstream gradient bit for bit
  auto w = make_param(NdArray({64}));
  for (auto& v : w->value.v) v = 3.0 * dist(gen);
  Tape tape;
  VarPtr snapped = ste_quantize(tape, w, default_weight_format());
  NdArray upstream({64});
  for (auto& g : upstream.v) g = dist(gen);
  tape.backward_with(snapped, upstream);
  for (std::size_t i = 0; i < upstream.v.size(); ++i)
    if (w->grad.v[i] != upstream.v[i]) pass = false;

  report(9, "gradient correctness", pass,
         "finite differences (h=1e-3, rel 1e-3) over every parameter; STE backward bit-exact",
         watch.seconds());
}

// --- C11: ingestion round-trip ------------------------------------------------------

void criterion_ingestion() {
  Stopwatch watch;
  std::mt19937 gen(55);
  bool pass = true;
  for (int trial = 0; trial < 50; ++trial) {
    const PointCloud cloud = testutil::random_cloud(1000, gen);
    const auto bytes = serialize_kitti_bin(cloud);
    if (serialize_kitti_bin(parse_kitti_bin(bytes)) != bytes) pass = false;
  }
  bool threw_malformed = false, threw_empty = false;
  try {
    parse_kitti_bin(std::vector<std::byte>(17));
  } catch (const MalformedDataError&) {
    threw_malformed = true;
  }
  try {
    parse_kitti_bin({});
  } catch (const EmptyFrameError&) {
    threw_empty = true;
  }
  pass = pass && threw_malformed && threw_empty;
  report(11, "ingestion round-trip", pass,
         "50 random frames byte-exact; malformed and empty frames rejected", watch.seconds());
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_fusion();
  criterion_counts();
  criterion_quantization();

  Stopwatch training_watch;
  std::printf("  (training: 30 float epochs + 10 quantized epochs on 200 frames)\n");
  std::fflush(stdout);
  const TrainingArtifacts art = run_training();
  const double training_seconds = training_watch.seconds();

  double f1_float = 0.0, f1_qat18 = 0.0;
  criterion_bit_fidelity(art, &f1_float, &f1_qat18);
  criterion_sim_bitexact(art);
  criterion_cycle_model();
  criterion_rasterize();
  criterion_metrics();
  criterion_gradients();

  {
    char buf[160];
    const bool pass =
        f1_float > 0.95 && (f1_float - f1_qat18) < 0.01 && training_seconds < 15.0 * 60.0;
    std::snprintf(buf, sizeof buf,
                  "float F1 %.4f, 18-bit fine-tuned F1 %.4f, training %.0f s", f1_float,
                  f1_qat18, training_seconds);
    report(10, "desk-scale training", pass, buf, training_seconds);
  }

  criterion_ingestion();

  if (g_failures == 0)
    std::printf("all criteria passed\n");
  else
    std::printf("%d criteria FAILED\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
