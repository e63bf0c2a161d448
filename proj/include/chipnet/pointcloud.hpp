#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chipnet/common.hpp"

namespace chipnet {

/// One LiDAR return: vehicle-frame coordinates in meters plus reflectance.
struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;
};

/// A frame of returns in file order. Order is load-bearing: downstream
/// nearest/furthest ties break toward the lowest index.
struct PointCloud {
  std::vector<Point> points;
  std::string source_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Counters for returns discarded or adjusted during parsing.
struct ParseStats {
  std::uint32_t dropped_nonfinite = 0;
  std::uint32_t clamped_intensity = 0;
};

/// Scanner-head description: N scanners spinning at R rpm measuring M
/// points per second over a vertical field of view of phi degrees.
struct LidarSpec {
  int scanners = 0;
  double points_per_second = 0.0;
  double rpm = 0.0;
  double vertical_fov_deg = 0.0;
};

struct ScanRates {
  double frames_per_second = 0.0;
  double points_per_frame = 0.0;
  double azimuthal_resolution_deg = 0.0;
  double polar_resolution_deg = 0.0;
};

namespace detail {

inline float read_f32_le(const std::byte* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[0])) |
                       static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[1])) << 8 |
                       static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[2])) << 16 |
                       static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[3])) << 24;
  return std::bit_cast<float>(bits);
}

inline void write_f32_le(float v, std::vector<std::byte>& out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  out.push_back(static_cast<std::byte>(bits & 0xff));
  out.push_back(static_cast<std::byte>((bits >> 8) & 0xff));
  out.push_back(static_cast<std::byte>((bits >> 16) & 0xff));
  out.push_back(static_cast<std::byte>((bits >> 24) & 0xff));
}

// Keeps a point only if its coordinates are finite; clamps stray intensities
// into [0,1] since real KITTI files contain occasional outliers.
inline void ingest_point(float x, float y, float z, float r, PointCloud& cloud,
                         ParseStats& stats) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(r)) {
    ++stats.dropped_nonfinite;
    return;
  }
  if (r < 0.0f || r > 1.0f) {
    r = r < 0.0f ? 0.0f : 1.0f;
    ++stats.clamped_intensity;
  }
  cloud.points.push_back(Point{x, y, z, r});
}

}  // namespace detail

/// Parses a KITTI Velodyne frame: consecutive little-endian f32 quadruples
/// (x, y, z, intensity), 16 bytes per point.
inline PointCloud parse_kitti_bin(std::span<const std::byte> bytes, std::string source_id = {},
                                  ParseStats* stats_out = nullptr) {
  if (bytes.empty()) throw EmptyFrameError("KITTI frame: empty input");
  if (bytes.size() % 16 != 0)
    throw MalformedDataError("KITTI frame: " + std::to_string(bytes.size()) +
                             " bytes is not a multiple of 16");
  PointCloud cloud;
  cloud.source_id = std::move(source_id);
  cloud.points.reserve(bytes.size() / 16);
  ParseStats stats;
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    const std::byte* p = bytes.data() + off;
    detail::ingest_point(detail::read_f32_le(p), detail::read_f32_le(p + 4),
                         detail::read_f32_le(p + 8), detail::read_f32_le(p + 12), cloud, stats);
  }
  if (stats_out) *stats_out = stats;
  return cloud;
}

/// Writes the 16-byte-per-point layout back out. Round-trips exactly for
/// clouds whose points were accepted unmodified.
inline std::vector<std::byte> serialize_kitti_bin(const PointCloud& cloud) {
  std::vector<std::byte> out;
  out.reserve(cloud.points.size() * 16);
  for (const Point& p : cloud.points) {
    detail::write_f32_le(p.x, out);
    detail::write_f32_le(p.y, out);
    detail::write_f32_le(p.z, out);
    detail::write_f32_le(p.intensity, out);
  }
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline float parse_float_field(std::string_view field, std::size_t line_no) {
  field = trim(field);
  float value = 0.0f;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw CsvParseError(line_no, "non-numeric field '" + std::string(field) + "'");
  return value;
}

}  // namespace detail

/// Parses `x,y,z,intensity` lines. Blank lines and lines starting with `#`
/// are skipped.
inline PointCloud parse_csv_points(std::string_view text, std::string source_id = {},
                                   ParseStats* stats_out = nullptr) {
  PointCloud cloud;
  cloud.source_id = std::move(source_id);
  ParseStats stats;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const std::string_view stripped = detail::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;

    float fields[4];
    std::size_t field_idx = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= stripped.size(); ++i) {
      if (i == stripped.size() || stripped[i] == ',') {
        if (field_idx >= 4) throw CsvParseError(line_no, "more than 4 fields");
        fields[field_idx++] = detail::parse_float_field(stripped.substr(start, i - start), line_no);
        start = i + 1;
      }
    }
    if (field_idx != 4) throw CsvParseError(line_no, "expected 4 comma-separated fields");
    detail::ingest_point(fields[0], fields[1], fields[2], fields[3], cloud, stats);
  }
  if (stats_out) *stats_out = stats;
  return cloud;
}

/// Frame/point/resolution arithmetic for a spinning scanner:
/// R/60 frames per second, 60M/R points per frame, 360NR/60M degrees of
/// azimuth between consecutive returns, phi/N degrees between scan lines.
inline ScanRates scan_rates(const LidarSpec& spec) {
  if (spec.scanners <= 0 || spec.points_per_second <= 0.0 || spec.rpm <= 0.0 ||
      spec.vertical_fov_deg <= 0.0)
    throw DomainError("scan_rates: all LidarSpec fields must be strictly positive");
  ScanRates rates;
  rates.frames_per_second = spec.rpm / 60.0;
  rates.points_per_frame = 60.0 * spec.points_per_second / spec.rpm;
  rates.azimuthal_resolution_deg =
      360.0 * spec.scanners * spec.rpm / (60.0 * spec.points_per_second);
  rates.polar_resolution_deg = spec.vertical_fov_deg / spec.scanners;
  return rates;
}

}  // namespace chipnet
