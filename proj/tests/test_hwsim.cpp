#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chipnet/hwsim.hpp"
#include "chipnet/network.hpp"
#include "helpers.hpp"

using namespace chipnet;

namespace {

Tensor2<std::int32_t> random_image(int rows, int cols, std::mt19937& gen) {
  std::uniform_int_distribution<std::int32_t> dist(-1000, 1000);
  Tensor2<std::int32_t> img(rows, cols);
  for (auto& v : img.v) v = dist(gen);
  return img;
}

Tensor3<float> random_frame(int rows, int cols, int ch, std::mt19937& gen) {
  std::uniform_real_distribution<float> dist(-20.0f, 20.0f);
  Tensor3<float> t(rows, cols, ch);
  for (auto& v : t.v) v = dist(gen);
  return t;
}

}  // namespace

TEST_CASE("padding ram surrounds the interior with exact zeroes", "[hwsim]") {
  Tensor2<std::int32_t> one(1, 1);
  one(0, 0) = 42;
  const auto padded_one = padded_write_read(one);
  REQUIRE(padded_one.rows == 5);
  REQUIRE(padded_one.cols == 5);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) CHECK(padded_one(r, c) == ((r == 2 && c == 2) ? 42 : 0));

  const auto padded_zero = padded_write_read(Tensor2<std::int32_t>(3, 4));
  for (auto v : padded_zero.v) CHECK(v == 0);

  auto& gen = testutil::rng(601);
  const auto img = random_image(64, 180, gen);
  const auto padded = padded_write_read(img);
  for (int r = 0; r < padded.rows; ++r)
    for (int c = 0; c < padded.cols; ++c) {
      const bool border = r < 2 || c < 2 || r >= padded.rows - 2 || c >= padded.cols - 2;
      REQUIRE(padded(r, c) == (border ? 0 : img(r - 2, c - 2)));
    }
}

TEST_CASE("padding ram rejects writes outside the interior", "[hwsim]") {
  PaddingRam ram(4, 4);
  CHECK_THROWS_AS(ram.write(-1, 0, 1), DomainError);
  CHECK_THROWS_AS(ram.write(0, 4, 1), DomainError);
}

TEST_CASE("line buffer emits exactly the sliding 5x5 patches", "[hwsim]") {
  auto& gen = testutil::rng(602);

  // a 5x5 padded image yields a single window equal to the whole image
  const auto tiny = random_image(5, 5, gen);
  const auto tiny_windows = line_buffer_stream(tiny);
  REQUIRE(tiny_windows.size() == 1);
  for (int i = 0; i < 25; ++i)
    CHECK(tiny_windows[0][static_cast<std::size_t>(i)] == tiny.v[static_cast<std::size_t>(i)]);

  // 6 columns: two windows offset by one column
  const auto six = random_image(5, 6, gen);
  const auto six_windows = line_buffer_stream(six);
  REQUIRE(six_windows.size() == 2);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      CHECK(six_windows[0][static_cast<std::size_t>(r) * 5 + c] == six(r, c));
      CHECK(six_windows[1][static_cast<std::size_t>(r) * 5 + c] == six(r, c + 1));
    }

  // an impulse shows up at 25 successive window positions
  Tensor2<std::int32_t> impulse(9, 9);
  impulse(4, 4) = 7;
  const auto windows = line_buffer_stream(impulse);
  REQUIRE(windows.size() == 25);
  int hits = 0;
  for (const auto& w : windows)
    for (int i = 0; i < 25; ++i)
      if (w[static_cast<std::size_t>(i)] == 7) ++hits;
  CHECK(hits == 25);

  // sliding-window oracle on a random image
  const auto img = random_image(12, 17, gen);
  const auto padded = padded_write_read(img);
  const auto all = line_buffer_stream(padded);
  REQUIRE(all.size() == static_cast<std::size_t>(12 * 17));
  std::size_t idx = 0;
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 17; ++c, ++idx)
      for (int wr = 0; wr < 5; ++wr)
        for (int wc = 0; wc < 5; ++wc)
          REQUIRE(all[idx][static_cast<std::size_t>(wr) * 5 + wc] == padded(r + wr, c + wc));
}

TEST_CASE("line buffer priming invariant", "[hwsim]") {
  const int padded_cols = 9;
  LineBuffer lb(padded_cols);
  for (int i = 0; i < 4 * padded_cols + 4; ++i) {
    lb.push(i);
    CHECK_FALSE(lb.window_valid());
  }
  lb.push(999);
  CHECK(lb.pushes() == 4 * padded_cols + 5);
  CHECK(lb.window_valid());
}

TEST_CASE("conv slice computes both partial-sum streams", "[hwsim]") {
  auto& gen = testutil::rng(603);
  const auto img = random_image(8, 11, gen);
  const auto padded = padded_write_read(img);

  // zero kernels produce zero streams
  const auto [za, zb] = conv_slice(padded, MultiplierArray{}, MultiplierArray{});
  for (auto v : za.v) CHECK(v == 0);
  for (auto v : zb.v) CHECK(v == 0);

  // an identity center array streams the center pixel
  MultiplierArray center{};
  center[12] = 1;
  const auto [ca, cb] = conv_slice(padded, center, MultiplierArray{});
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 11; ++c) REQUIRE(ca(r, c) == img(r, c));
  for (auto v : cb.v) CHECK(v == 0);
}

TEST_CASE("conv slice is bit-identical to the reference fixed convolution", "[hwsim]") {
  auto& gen = testutil::rng(604);
  const QFormat wq = default_weight_format(), aq = default_activation_format();
  std::uniform_real_distribution<double> wdist(-0.5, 0.5);
  std::uniform_real_distribution<float> xdist(-8.0f, 8.0f);

  for (int trial = 0; trial < 5; ++trial) {
    ConvParams dense(1, 1, 3, 3, 1), dilated(1, 1, 3, 3, 2);
    for (auto& w : dense.kernel) w = wdist(gen);
    for (auto& w : dilated.kernel) w = wdist(gen);

    Tensor3<float> frame(10, 13, 1);
    for (auto& v : frame.v) v = xdist(gen);
    const Tensor3<std::int32_t> qframe = quantize_input(frame, aq, RoundMode::kHalfAwayFromZero);
    Tensor2<std::int32_t> channel(10, 13);
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 13; ++c) channel(r, c) = qframe(r, c, 0);

    const QuantizedConv qdense = detail::quantize_conv(dense, wq, RoundMode::kHalfAwayFromZero);
    const QuantizedConv qdilated =
        detail::quantize_conv(dilated, wq, RoundMode::kHalfAwayFromZero);

    std::array<std::int64_t, 9> dense_taps{}, dilated_taps{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        dense_taps[static_cast<std::size_t>(r) * 3 + c] = qdense.at(0, 0, r, c);
        dilated_taps[static_cast<std::size_t>(r) * 3 + c] = qdilated.at(0, 0, r, c);
      }
    const auto [sum_dense, sum_dilated] = conv_slice(
        padded_write_read(channel), embed_dense_3x3(dense_taps), embed_dilated_3x3(dilated_taps));

    // oracle: the reference integer tap accumulation from the network module
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 13; ++c) {
        const auto ref_dense = detail::conv_taps<std::int64_t>(qframe, qdense, r, c, 0);
        const auto ref_dilated = detail::conv_taps<std::int64_t>(qframe, qdilated, r, c, 0);
        REQUIRE(sum_dense(r, c) == ref_dense);
        REQUIRE(sum_dilated(r, c) == ref_dilated);
      }
  }
}

TEST_CASE("simulator output is bit-exact against fixed-mode inference", "[hwsim]") {
  auto& gen = testutil::rng(605);
  const Network net = make_initialized_network(14, 8, 2, 303);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor3<float> frame = random_frame(16, 36, 14, gen);
    const FixedForwardResult ref = fixed_network_forward(frame, qnet);
    const SimResult sim = run_network_sim(frame, qnet);
    REQUIRE(sim.logit_raw == ref.logit_raw);
    REQUIRE(sim.prob.v == ref.prob.v);
  }
}

TEST_CASE("simulator stays bit-exact on the wide accumulator path", "[hwsim]") {
  auto& gen = testutil::rng(610);
  const Network net = make_initialized_network(14, 6, 2, 404);
  const QuantizedNetwork qnet = quantize_network(net, QFormat{32, 24}, QFormat{32, 20});
  REQUIRE(qnet.accumulator_bits > 63);
  const Tensor3<float> frame = random_frame(12, 25, 14, gen);
  const FixedForwardResult ref = fixed_network_forward(frame, qnet);
  const SimResult sim = run_network_sim(frame, qnet);
  REQUIRE(sim.logit_raw == ref.logit_raw);
}

TEST_CASE("simulator handles odd channel counts and tiny grids", "[hwsim]") {
  auto& gen = testutil::rng(611);
  const Network net = make_initialized_network(5, 7, 1, 15);  // 4 passes, last half-filled
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  const Tensor3<float> frame = random_frame(3, 4, 5, gen);
  const FixedForwardResult ref = fixed_network_forward(frame, qnet);
  const SimResult sim = run_network_sim(frame, qnet);
  REQUIRE(sim.logit_raw == ref.logit_raw);
  CHECK(sim.report.cycles_per_pass == 7 * 8);
  CHECK(sim.report.total_passes() == 4 + 4 + 1);
}

TEST_CASE("zero weights give a uniform half map and a full cycle count", "[hwsim]") {
  auto& gen = testutil::rng(606);
  const Network net = make_network(14, 8, 2);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  const Tensor3<float> frame = random_frame(16, 36, 14, gen);
  const SimResult sim = run_network_sim(frame, qnet);
  for (float v : sim.prob.v) REQUIRE(v == 0.5f);
  CHECK(sim.report.cycles_per_pass == 20 * 40);
  CHECK(sim.report.total_passes() == 4 + 2 * 4 + 1);
  CHECK(sim.report.total_cycles == sim.report.cycles_per_pass * sim.report.total_passes());
}

TEST_CASE("cycle counts are data-independent and deterministic", "[hwsim]") {
  auto& gen = testutil::rng(607);
  const Network net = make_initialized_network(14, 6, 1, 9);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  const SimResult a = run_network_sim(random_frame(10, 20, 14, gen), qnet);
  const SimResult b = run_network_sim(random_frame(10, 20, 14, gen), qnet);
  CHECK(a.report.total_cycles == b.report.total_cycles);
  CHECK(a.report.cycles_per_pass == b.report.cycles_per_pass);
  const SimResult c = run_network_sim(random_frame(10, 20, 14, gen), qnet);
  CHECK(c.report.render_json() == b.report.render_json());
}

TEST_CASE("cycle model reproduces the published timing", "[hwsim]") {
  const Network net = make_network(14, 64, 10);
  const CycleReport report = cycle_model(180, 64, net, 350e6);
  CHECK(report.cycles_per_pass == 12'512);
  CHECK(report.total_passes() == 32 + 10 * 32 + 1);
  CHECK(report.total_cycles == 4'416'736);
  CHECK(report.milliseconds() == Catch::Approx(12.62).margin(0.01));
  // doubling the clock halves the reported time
  const CycleReport fast = cycle_model(180, 64, net, 700e6);
  CHECK(fast.milliseconds() == Catch::Approx(report.milliseconds() / 2.0));
}

TEST_CASE("buffer-swap overhead is a separate configurable cost", "[hwsim]") {
  auto& gen = testutil::rng(609);
  const Network net = make_initialized_network(14, 4, 1, 12);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  const Tensor3<float> frame = random_frame(6, 9, 14, gen);
  const SimResult base = run_network_sim(frame, qnet);
  SimConfig cfg;
  cfg.swap_overhead_cycles = 100;
  const SimResult with_swap = run_network_sim(frame, qnet, cfg);
  // two swaps: encoder -> block and block -> output
  CHECK(with_swap.report.swap_cycles == 200);
  CHECK(with_swap.report.total_cycles == base.report.total_cycles + 200);
  REQUIRE(with_swap.logit_raw == base.logit_raw);
}

TEST_CASE("simulator rejects mismatched input channels", "[hwsim]") {
  const Network net = make_network(14, 8, 1);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  CHECK_THROWS_AS(run_network_sim(Tensor3<float>(8, 8, 3), qnet), ConfigError);
}

TEST_CASE("fsm trace covers every layer and pass", "[hwsim]") {
  auto& gen = testutil::rng(608);
  const Network net = make_initialized_network(14, 4, 1, 4);
  const QuantizedNetwork qnet =
      quantize_network(net, default_weight_format(), default_activation_format());
  SimConfig cfg;
  int convolve_events = 0;
  int max_pass = -1;
  cfg.trace = [&](const FsmState& fsm, std::int64_t) {
    if (fsm.phase == FsmState::Phase::kConvolve && fsm.pixel_counter == 0) {
      ++convolve_events;
      max_pass = std::max(max_pass, fsm.pass_index);
    }
  };
  const SimResult sim = run_network_sim(random_frame(6, 9, 14, gen), qnet, cfg);
  (void)sim;
  CHECK(convolve_events == 2 + 2 + 1);  // encoder 2 passes, block 2, output 1
  CHECK(max_pass == 1);
}
