#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "chipnet/pointcloud.hpp"
#include "helpers.hpp"

using namespace chipnet;

namespace {

std::vector<std::byte> bytes_of(std::initializer_list<float> values) {
  std::vector<std::byte> out(values.size() * 4);
  std::size_t i = 0;
  for (float v : values) {
    std::memcpy(out.data() + 4 * i, &v, 4);
    ++i;
  }
  return out;
}

}  // namespace

TEST_CASE("kitti parser decodes one point per 16 bytes", "[pointcloud]") {
  const auto bytes = bytes_of({1.0f, 2.0f, 3.0f, 0.5f});
  const PointCloud cloud = parse_kitti_bin(bytes);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points[0].x == 1.0f);
  CHECK(cloud.points[0].y == 2.0f);
  CHECK(cloud.points[0].z == 3.0f);
  CHECK(cloud.points[0].intensity == 0.5f);
}

TEST_CASE("kitti parser handles zero points", "[pointcloud]") {
  const auto bytes = bytes_of({0, 0, 0, 0, 0, 0, 0, 0});
  const PointCloud cloud = parse_kitti_bin(bytes);
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[1].x == 0.0f);
}

TEST_CASE("kitti parser rejects bad lengths", "[pointcloud]") {
  std::vector<std::byte> bytes(17);
  CHECK_THROWS_AS(parse_kitti_bin(bytes), MalformedDataError);
  CHECK_THROWS_AS(parse_kitti_bin(std::vector<std::byte>{}), EmptyFrameError);
}

TEST_CASE("kitti parser drops non-finite points and clamps intensity", "[pointcloud]") {
  const float nan = std::nanf("");
  const auto bytes = bytes_of({nan, 0, 0, 0.5f, 1, 1, 1, 1.5f, 2, 2, 2, -0.25f});
  ParseStats stats;
  const PointCloud cloud = parse_kitti_bin(bytes, "", &stats);
  REQUIRE(cloud.size() == 2);
  CHECK(stats.dropped_nonfinite == 1);
  CHECK(stats.clamped_intensity == 2);
  CHECK(cloud.points[0].intensity == 1.0f);
  CHECK(cloud.points[1].intensity == 0.0f);
}

TEST_CASE("kitti round-trip is byte-exact on clean clouds", "[pointcloud]") {
  auto& gen = testutil::rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud cloud = testutil::random_cloud(257, gen);
    const auto bytes = serialize_kitti_bin(cloud);
    const PointCloud reparsed = parse_kitti_bin(bytes);
    REQUIRE(serialize_kitti_bin(reparsed) == bytes);
  }
}

TEST_CASE("csv parser reads points and skips comments", "[pointcloud]") {
  const PointCloud cloud = parse_csv_points("# header\n0,0,0,0\n\n1.5,-2.0,0.3,0.9\n");
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[0].x == 0.0f);
  CHECK(cloud.points[1].x == 1.5f);
  CHECK(cloud.points[1].y == -2.0f);
  CHECK(cloud.points[1].z == Catch::Approx(0.3));
  CHECK(cloud.points[1].intensity == 0.9f);
}

TEST_CASE("csv parser reports the failing line", "[pointcloud]") {
  try {
    parse_csv_points("1,2,three,4\n");
    FAIL("expected CsvParseError");
  } catch (const CsvParseError& e) {
    CHECK(e.line() == 1);
  }
  try {
    parse_csv_points("0,0,0,0\n1,2\n");
    FAIL("expected CsvParseError");
  } catch (const CsvParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("scan rates reproduce the HDL-64E numbers", "[pointcloud]") {
  const ScanRates rates = scan_rates(LidarSpec{64, 1'330'000.0, 600.0, 26.90});
  CHECK(rates.frames_per_second == Catch::Approx(10.0));
  CHECK(rates.points_per_frame == Catch::Approx(133'000.0));
  CHECK(rates.azimuthal_resolution_deg == Catch::Approx(0.1732).margin(5e-4));
  CHECK(rates.polar_resolution_deg == Catch::Approx(0.4203).margin(5e-4));
}

TEST_CASE("scan rates evaluate the formulas directly", "[pointcloud]") {
  const ScanRates rates = scan_rates(LidarSpec{1, 3600.0, 60.0, 1.0});
  CHECK(rates.frames_per_second == 1.0);
  CHECK(rates.points_per_frame == 3600.0);
  CHECK(rates.azimuthal_resolution_deg == Catch::Approx(0.1));
  CHECK(rates.polar_resolution_deg == 1.0);
}

TEST_CASE("scan rates reject non-positive fields", "[pointcloud]") {
  CHECK_THROWS_AS(scan_rates(LidarSpec{64, 1'330'000.0, 0.0, 26.9}), DomainError);
  CHECK_THROWS_AS(scan_rates(LidarSpec{0, 1'330'000.0, 600.0, 26.9}), DomainError);
}

TEST_CASE("scan rate product and homogeneity invariants", "[pointcloud]") {
  auto& gen = testutil::rng(102);
  std::uniform_real_distribution<double> m_dist(1e4, 1e7);
  std::uniform_real_distribution<double> r_dist(60.0, 1200.0);
  for (int trial = 0; trial < 50; ++trial) {
    LidarSpec spec{32, m_dist(gen), r_dist(gen), 30.0};
    const ScanRates rates = scan_rates(spec);
    CHECK(rates.frames_per_second * rates.points_per_frame ==
          Catch::Approx(spec.points_per_second).epsilon(1e-9));
    LidarSpec doubled = spec;
    doubled.points_per_second *= 2.0;
    CHECK(scan_rates(doubled).azimuthal_resolution_deg ==
          rates.azimuthal_resolution_deg / 2.0);
  }
}
