#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "chipnet/fixedpoint.hpp"
#include "helpers.hpp"

using namespace chipnet;

TEST_CASE("quantize_value matches the worked examples", "[fixedpoint]") {
  CHECK(quantize_value(0.0, QFormat{18, 12}) == 0.0);
  CHECK(quantize_raw(1.37, QFormat{18, 12}) == 5612);
  CHECK(quantize_value(1.37, QFormat{18, 12}) == Catch::Approx(5612.0 / 4096.0).epsilon(0));
  CHECK(quantize_value(10.0, QFormat{8, 4}) == 127.0 / 16.0);
  CHECK(quantize_value(-10.0, QFormat{8, 4}) == -8.0);
}

TEST_CASE("quantize rejects invalid formats and inputs", "[fixedpoint]") {
  CHECK_THROWS_AS(quantize_value(1.0, QFormat{1, 0}), DomainError);
  CHECK_THROWS_AS(quantize_value(1.0, QFormat{33, 4}), DomainError);
  CHECK_THROWS_AS(quantize_value(1.0, QFormat{8, 8}), DomainError);
  CHECK_THROWS_AS(quantize_value(std::nan(""), QFormat{8, 4}), DomainError);
}

TEST_CASE("round modes differ exactly on ties", "[fixedpoint]") {
  const QFormat q{8, 1};
  CHECK(quantize_value(1.25, q, RoundMode::kHalfAwayFromZero) == 1.5);
  CHECK(quantize_value(1.25, q, RoundMode::kNearestEven) == 1.0);
  CHECK(quantize_value(-1.25, q, RoundMode::kHalfAwayFromZero) == -1.5);
  CHECK(quantize_value(-1.25, q, RoundMode::kNearestEven) == -1.0);
  CHECK(quantize_value(1.75, q, RoundMode::kNearestEven) == 2.0);
}

TEST_CASE("quantization properties over random values", "[fixedpoint]") {
  auto& gen = testutil::rng(301);
  const QFormat formats[] = {{8, 4}, {12, 8}, {16, 12}, {18, 14}, {18, 10}, {24, 16}, {32, 24}};
  for (const QFormat& q : formats) {
    std::uniform_real_distribution<double> dist(2.0 * q.min_value(), 2.0 * q.max_value());
    double prev_x = dist(gen);
    double prev_q = quantize_value(prev_x, q);
    for (int i = 0; i < 5000; ++i) {
      const double x = dist(gen);
      const double qx = quantize_value(x, q);
      // idempotence
      REQUIRE(quantize_value(qx, q) == qx);
      // grid membership
      REQUIRE(std::ldexp(qx, q.fraction_bits) == std::round(std::ldexp(qx, q.fraction_bits)));
      // monotonicity
      if (x >= prev_x)
        REQUIRE(qx >= prev_q);
      else
        REQUIRE(qx <= prev_q);
      // half-step error bound inside the representable range
      if (x >= q.min_value() && x <= q.max_value())
        REQUIRE(std::abs(qx - x) <= std::ldexp(1.0, -(q.fraction_bits + 1)));
      // saturation
      if (x > q.max_value()) REQUIRE(qx == q.max_value());
      if (x < q.min_value()) REQUIRE(qx == q.min_value());
      prev_x = x;
      prev_q = qx;
    }
  }
}

TEST_CASE("tensor quantization round-trips values already on the grid", "[fixedpoint]") {
  const QFormat q{18, 12};
  std::vector<double> values{0.0, 1.0, -0.5, 5612.0 / 4096.0, -2.25};
  const FixedTensor t = quantize_tensor(values, {5}, q);
  const std::vector<double> back = dequantize(t);
  for (std::size_t i = 0; i < values.size(); ++i) CHECK(back[i] == values[i]);
  // double quantization leaves raws untouched
  const FixedTensor t2 = quantize_tensor(back, {5}, q);
  CHECK(t2.raw == t.raw);
}

TEST_CASE("tensor quantization error stays under half a step", "[fixedpoint]") {
  auto& gen = testutil::rng(302);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const QFormat q{18, 12};
  std::vector<double> values(4096);
  for (auto& v : values) v = dist(gen);
  const std::vector<double> back = dequantize(quantize_tensor(values, {64, 64}, q));
  double max_err = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    max_err = std::max(max_err, std::abs(back[i] - values[i]));
  CHECK(max_err <= std::ldexp(1.0, -13));
}

TEST_CASE("all-zero tensors quantize to all-zero raws", "[fixedpoint]") {
  const FixedTensor t = quantize_tensor(std::vector<double>(16, 0.0), {4, 4}, QFormat{18, 14});
  for (auto raw : t.raw) CHECK(raw == 0);
}

TEST_CASE("fixed_mul_acc accumulates exact 2F-fraction products", "[fixedpoint]") {
  const QFormat q{18, 12};
  const auto window1 = quantize_tensor(std::vector<double>{1.0}, {1}, q);
  const auto kernel1 = quantize_tensor(std::vector<double>{1.0}, {1}, q);
  const Accumulator zero = fixed_mul_acc(window1, quantize_tensor({0.0}, {1}, q));
  CHECK(static_cast<long long>(zero.value) == 0);

  const Accumulator one = fixed_mul_acc(window1, kernel1);
  CHECK(static_cast<long long>(one.value) == 16'777'216);
  CHECK(one.fraction_bits == 24);

  const auto window25 = quantize_tensor(std::vector<double>(25, 1.0), {25}, q);
  const auto kernel25 = quantize_tensor(std::vector<double>(25, 1.0), {25}, q);
  const Accumulator acc25 = fixed_mul_acc(window25, kernel25);
  CHECK(static_cast<long long>(acc25.value) == 25LL << 24);
}

TEST_CASE("accumulator width is validated at construction", "[fixedpoint]") {
  CHECK(AccumulatorSpec(QFormat{18, 14}, QFormat{18, 10}, 1600).bits_required == 47);
  CHECK_THROWS_AS(AccumulatorSpec(QFormat{32, 24}, QFormat{32, 24},
                                  std::numeric_limits<std::size_t>::max()),
                  ConfigError);
  CHECK_THROWS_AS(AccumulatorSpec(QFormat{18, 14}, QFormat{18, 10}, 0), ConfigError);
}

TEST_CASE("fixed_mul_acc demands matching shapes", "[fixedpoint]") {
  const QFormat q{18, 12};
  CHECK_THROWS_AS(fixed_mul_acc(quantize_tensor({1.0}, {1}, q),
                                quantize_tensor({1.0, 2.0}, {2}, q)),
                  ShapeError);
}

TEST_CASE("requantize shifts, rounds and saturates", "[fixedpoint]") {
  const QFormat q{18, 12};
  CHECK(requantize(Accumulator{0, 24}, q) == 0.0);
  CHECK(requantize(Accumulator{__int128{1} << 24, 24}, q) == 1.0);
  CHECK(requantize(Accumulator{__int128{1} << 60, 24}, q) == q.max_value());
  CHECK(requantize(Accumulator{-(__int128{1} << 60), 24}, q) == q.min_value());
  // rounding of the dropped bits is half away from zero
  const __int128 one_and_half_ulp = (__int128{1} << 12) + (__int128{1} << 11);
  CHECK(requantize_raw(Accumulator{one_and_half_ulp, 24}, q) == 2);
  CHECK(requantize_raw(Accumulator{-one_and_half_ulp, 24}, q) == -2);
  CHECK(requantize_raw(Accumulator{one_and_half_ulp, 24}, q, RoundMode::kNearestEven) == 2);
  const __int128 half_ulp = (__int128{1} << 23) + (__int128{1} << 11);
  CHECK(requantize_raw(Accumulator{half_ulp, 24}, q, RoundMode::kNearestEven) == 2048);
}

TEST_CASE("dequantize divides raws by the fraction scalar", "[fixedpoint]") {
  const QFormat q{18, 12};
  FixedTensor t;
  t.qformat = q;
  t.shape = {2};
  t.raw = {4096, -2048};
  const auto values = dequantize(t);
  CHECK(values[0] == 1.0);
  CHECK(values[1] == -0.5);
}

TEST_CASE("quantize-dequantize-quantize is idempotent on random tensors", "[fixedpoint]") {
  auto& gen = testutil::rng(303);
  std::uniform_real_distribution<double> dist(-40.0, 40.0);
  for (const QFormat q : {QFormat{8, 4}, QFormat{18, 14}, QFormat{24, 12}}) {
    std::vector<double> values(512);
    for (auto& v : values) v = dist(gen);
    const FixedTensor once = quantize_tensor(values, {512}, q);
    const FixedTensor twice = quantize_tensor(dequantize(once), {512}, q);
    REQUIRE(once.raw == twice.raw);
  }
}
