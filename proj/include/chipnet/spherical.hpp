#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/pointcloud.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// Spherical-view binning window. Azimuth is half-open [min, max); elevation
/// is split into `rows` equal bins over the closed [min, max] span.
struct GridConfig {
  double azimuth_min_deg = -45.0;
  double azimuth_max_deg = 45.0;  // exclusive
  double azimuth_bin_deg = 0.5;
  int rows = 64;
  double elevation_min_deg = -24.9;  // HDL-64E span; KITTI .bin carries no ring ids
  double elevation_max_deg = 2.0;

  void validate() const {
    if (azimuth_bin_deg <= 0.0) throw DomainError("GridConfig: azimuth_bin_deg must be positive");
    if (azimuth_max_deg <= azimuth_min_deg)
      throw DomainError("GridConfig: azimuth window is empty");
    const double cols = (azimuth_max_deg - azimuth_min_deg) / azimuth_bin_deg;
    if (std::abs(cols - std::round(cols)) > 1e-9)
      throw DomainError("GridConfig: azimuth span is not a whole number of bins");
    if (rows <= 0) throw DomainError("GridConfig: rows must be positive");
    if (elevation_min_deg >= elevation_max_deg)
      throw DomainError("GridConfig: elevation window is empty");
  }

  int columns() const {
    validate();
    return static_cast<int>(std::round((azimuth_max_deg - azimuth_min_deg) / azimuth_bin_deg));
  }
};

/// Azimuth/elevation/range of one return. theta is measured from the forward
/// +x axis, positive toward +y, in (-180, 180]; phi is elevation above the
/// horizontal plane; rho is the Euclidean range.
struct Spherical {
  double theta_deg = 0.0;
  double phi_deg = 0.0;
  double rho_m = 0.0;
};

inline Spherical to_spherical(const Point& p) {
  const double x = p.x, y = p.y, z = p.z;
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
    throw DomainError("to_spherical: non-finite point");
  const double rho = std::sqrt(x * x + y * y + z * z);
  if (rho == 0.0) throw UndefinedAngleError("to_spherical: angles undefined at the origin");
  double theta = rad_to_deg(std::atan2(y, x));
  if (theta <= -180.0) theta = 180.0;
  const double phi = rad_to_deg(std::atan2(z, std::sqrt(x * x + y * y)));
  return Spherical{theta, phi, rho};
}

/// Point indices grouped per spherical cell, cloud order preserved within a
/// cell. Also tallies the RoI partition of the source cloud.
struct CellGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<std::uint32_t>> cells;  // [row * cols + col]
  std::uint32_t binned_count = 0;
  std::uint32_t outside_roi_count = 0;
  std::uint32_t dropped_invalid_count = 0;

  const std::vector<std::uint32_t>& cell(int r, int c) const {
    return cells[static_cast<std::size_t>(r) * cols + c];
  }
};

/// Number of feature channels in the network input tensor: 7 from the
/// nearest return per cell, 7 from the furthest.
inline constexpr int kInputChannels = 14;

namespace channel {
inline constexpr int kNearX = 0;
inline constexpr int kNearY = 1;
inline constexpr int kNearZ = 2;
inline constexpr int kNearTheta = 3;
inline constexpr int kNearPhi = 4;
inline constexpr int kNearRho = 5;
inline constexpr int kNearIntensity = 6;
inline constexpr int kFarX = 7;
inline constexpr int kFarY = 8;
inline constexpr int kFarZ = 9;
inline constexpr int kFarTheta = 10;
inline constexpr int kFarPhi = 11;
inline constexpr int kFarRho = 12;
inline constexpr int kFarIntensity = 13;
}  // namespace channel

/// rows x cols x 14 feature grid; empty cells are all-zero.
using InputTensor = Tensor3<float>;

/// A cell is occupied iff it stores a return; the nearest-range channel is
/// strictly positive exactly in that case.
inline bool cell_occupied(const InputTensor& t, int r, int c) {
  return t(r, c, channel::kNearRho) > 0.0f;
}

inline CellGrid bin_points(const PointCloud& cloud, const GridConfig& cfg) {
  cfg.validate();
  CellGrid grid;
  grid.rows = cfg.rows;
  grid.cols = cfg.columns();
  grid.cells.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
  const double elev_span = cfg.elevation_max_deg - cfg.elevation_min_deg;
  for (std::uint32_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      ++grid.dropped_invalid_count;
      continue;
    }
    Spherical s;
    try {
      s = to_spherical(p);
    } catch (const UndefinedAngleError&) {
      ++grid.dropped_invalid_count;
      continue;
    }
    if (s.theta_deg < cfg.azimuth_min_deg || s.theta_deg >= cfg.azimuth_max_deg ||
        s.phi_deg < cfg.elevation_min_deg || s.phi_deg > cfg.elevation_max_deg) {
      ++grid.outside_roi_count;
      continue;
    }
    int col = static_cast<int>(std::floor((s.theta_deg - cfg.azimuth_min_deg) /
                                          cfg.azimuth_bin_deg));
    if (col < 0) col = 0;
    if (col >= grid.cols) col = grid.cols - 1;
    int row = static_cast<int>(
        std::floor((s.phi_deg - cfg.elevation_min_deg) / elev_span * cfg.rows));
    if (row < 0) row = 0;
    if (row >= grid.rows) row = grid.rows - 1;  // phi == elevation_max lands here
    grid.cells[static_cast<std::size_t>(row) * grid.cols + col].push_back(i);
    ++grid.binned_count;
  }
  return grid;
}

/// Fills the 14-channel tensor: channels 0-6 from the minimum-range return of
/// each cell, channels 7-13 from the maximum-range one. Ties break toward the
/// lowest point index; a single return fills both halves; empty cells stay
/// zero.
inline InputTensor build_input_tensor(const CellGrid& grid, const PointCloud& cloud) {
  InputTensor t(grid.rows, grid.cols, kInputChannels);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto& members = grid.cell(r, c);
      if (members.empty()) continue;
      std::uint32_t near_idx = 0, far_idx = 0;
      double near_rho = 0.0, far_rho = 0.0;
      bool first = true;
      for (std::uint32_t idx : members) {
        if (idx >= cloud.points.size())
          throw ShapeError("build_input_tensor: cell index outside the source cloud");
        const Spherical s = to_spherical(cloud.points[idx]);
        if (first) {
          near_idx = far_idx = idx;
          near_rho = far_rho = s.rho_m;
          first = false;
          continue;
        }
        // Members hold ascending cloud indices, so strict comparisons keep
        // the earliest point on ties.
        if (s.rho_m < near_rho) {
          near_rho = s.rho_m;
          near_idx = idx;
        }
        if (s.rho_m > far_rho) {
          far_rho = s.rho_m;
          far_idx = idx;
        }
      }
      const auto fill = [&](int base, std::uint32_t idx) {
        const Point& p = cloud.points[idx];
        const Spherical s = to_spherical(p);
        float* cell = t.cell(r, c);
        cell[base + 0] = p.x;
        cell[base + 1] = p.y;
        cell[base + 2] = p.z;
        cell[base + 3] = static_cast<float>(s.theta_deg);
        cell[base + 4] = static_cast<float>(s.phi_deg);
        cell[base + 5] = static_cast<float>(s.rho_m);
        cell[base + 6] = p.intensity;
      };
      fill(0, near_idx);
      fill(7, far_idx);
    }
  }
  return t;
}

/// Fraction of RoI returns represented in the tensor (at most 2 per occupied
/// cell) and fraction of cells holding at least one return.
struct UsageStats {
  double point_usage_fraction = 0.0;
  double cell_occupancy_fraction = 0.0;
};

inline UsageStats usage_stats(const CellGrid& grid, const InputTensor& tensor,
                              std::uint64_t roi_point_count) {
  if (tensor.rows != grid.rows || tensor.cols != grid.cols)
    throw ShapeError("usage_stats: grid and tensor dimensions differ");
  if (roi_point_count == 0) throw DomainError("usage_stats: roi_point_count is zero");
  std::uint64_t stored = 0, represented = 0, occupied = 0;
  for (const auto& members : grid.cells) {
    stored += members.size();
    if (!members.empty()) {
      ++occupied;
      represented += members.size() >= 2 ? 2 : 1;
    }
  }
  if (roi_point_count < stored)
    throw DomainError("usage_stats: roi_point_count smaller than stored point count");
  UsageStats stats;
  stats.point_usage_fraction = static_cast<double>(represented) / roi_point_count;
  stats.cell_occupancy_fraction = static_cast<double>(occupied) / grid.cells.size();
  return stats;
}

/// Field-of-view rotation used for training augmentation: bins with the
/// azimuth window shifted by `degrees` and relabels columns back to the
/// canonical window. Point features keep their original coordinates.
inline InputTensor rotate_roi(const PointCloud& cloud, const GridConfig& cfg, double degrees) {
  cfg.validate();
  GridConfig shifted = cfg;
  shifted.azimuth_min_deg += degrees;
  shifted.azimuth_max_deg += degrees;
  if (shifted.azimuth_min_deg <= -180.0 || shifted.azimuth_max_deg > 180.0)
    throw DomainError("rotate_roi: shifted azimuth window leaves (-180, 180]");
  return build_input_tensor(bin_points(cloud, shifted), cloud);
}

}  // namespace chipnet
