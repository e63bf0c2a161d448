#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/pointcloud.hpp"
#include "chipnet/spherical.hpp"
#include "chipnet/train.hpp"

namespace chipnet {

/// Geometry of the synthetic road-wedge scene: a flat road of random width
/// and lateral offset, curb walls at its edges, flat ground beyond them, and
/// a range-limiting far wall. Drivable cells form a centered trapezoid in the
/// spherical grid.
struct WedgeSceneParams {
  double sensor_height_m = 1.7;
  double max_range_m = 24.0;
  double wall_height_m = 0.6;
  double road_half_width_min_m = 3.0;
  double road_half_width_max_m = 6.0;
  double center_offset_max_m = 1.5;
  double coordinate_noise_m = 0.10;
  double intensity_noise = 0.05;
  int rays_per_cell = 3;
};

/// 36 x 16 spherical window used by the desk-scale experiments.
inline GridConfig toy_grid_config() {
  GridConfig cfg;
  cfg.azimuth_bin_deg = 2.5;
  cfg.rows = 16;
  return cfg;
}

namespace detail {

struct WedgeRayHit {
  double x, y, z;
  double intensity;
  bool on_road;
};

/// Noise-free scene intersection for a ray at (theta, phi).
inline WedgeRayHit trace_wedge_ray(double theta_deg, double phi_deg, double half_width,
                                   double center, const WedgeSceneParams& p) {
  const double theta = deg_to_rad(theta_deg);
  const double phi = deg_to_rad(phi_deg);
  const double dx = std::cos(phi) * std::cos(theta);
  const double dy = std::cos(phi) * std::sin(theta);
  const double dz = std::sin(phi);

  if (dz < -1e-3) {
    const double rho_ground = p.sensor_height_m / -dz;
    if (rho_ground <= p.max_range_m) {
      const double gy = rho_ground * dy;
      if (std::abs(gy - center) <= half_width)
        return {rho_ground * dx, gy, -p.sensor_height_m, 0.25, true};
      // The ray crossed a curb wall on its way to the off-road ground.
      const double boundary_y = gy > center ? center + half_width : center - half_width;
      if (dy != 0.0) {
        const double rho_wall = boundary_y / dy;
        if (rho_wall > 0.0 && rho_wall < rho_ground) {
          const double wz = rho_wall * dz;
          if (wz <= -p.sensor_height_m + p.wall_height_m)
            return {rho_wall * dx, boundary_y, wz, 0.6, false};
        }
      }
      return {rho_ground * dx, gy, -p.sensor_height_m, 0.5, false};
    }
  }
  // Upward or out-of-range rays terminate on the far wall.
  return {p.max_range_m * dx, p.max_range_m * dy, p.max_range_m * dz, 0.1, false};
}

}  // namespace detail

/// Builds one frame of the wedge scene through the real binning pipeline:
/// rays become noisy points, points are binned, and labels come from the
/// noise-free cell-center geometry.
inline LabeledFrame make_wedge_frame(const GridConfig& cfg, std::uint32_t seed,
                                     const WedgeSceneParams& params = {}) {
  cfg.validate();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> width_dist(params.road_half_width_min_m,
                                                    params.road_half_width_max_m);
  std::uniform_real_distribution<double> center_dist(-params.center_offset_max_m,
                                                     params.center_offset_max_m);
  std::normal_distribution<double> coord_noise(0.0, params.coordinate_noise_m);
  std::normal_distribution<double> intensity_noise(0.0, params.intensity_noise);

  const double half_width = width_dist(rng);
  const double center = center_dist(rng);
  const int cols = cfg.columns();
  const double elev_step = (cfg.elevation_max_deg - cfg.elevation_min_deg) / cfg.rows;

  PointCloud cloud;
  cloud.source_id = "wedge-" + std::to_string(seed);
  for (int r = 0; r < cfg.rows; ++r) {
    const double phi = cfg.elevation_min_deg + (r + 0.5) * elev_step;
    for (int c = 0; c < cols; ++c) {
      for (int s = 0; s < params.rays_per_cell; ++s) {
        const double theta = cfg.azimuth_min_deg +
                             (c + (s + 0.5) / params.rays_per_cell) * cfg.azimuth_bin_deg;
        const auto hit = detail::trace_wedge_ray(theta, phi, half_width, center, params);
        Point p;
        p.x = static_cast<float>(hit.x + coord_noise(rng));
        p.y = static_cast<float>(hit.y + coord_noise(rng));
        p.z = static_cast<float>(hit.z + coord_noise(rng));
        double intensity = hit.intensity + intensity_noise(rng);
        if (intensity < 0.0) intensity = 0.0;
        if (intensity > 1.0) intensity = 1.0;
        p.intensity = static_cast<float>(intensity);
        cloud.points.push_back(p);
      }
    }
  }

  LabeledFrame frame;
  frame.tensor = build_input_tensor(bin_points(cloud, cfg), cloud);
  frame.labels = Tensor2<std::uint8_t>(cfg.rows, cols);
  for (int r = 0; r < cfg.rows; ++r) {
    const double phi = cfg.elevation_min_deg + (r + 0.5) * elev_step;
    for (int c = 0; c < cols; ++c) {
      const double theta = cfg.azimuth_min_deg + (c + 0.5) * cfg.azimuth_bin_deg;
      frame.labels(r, c) =
          detail::trace_wedge_ray(theta, phi, half_width, center, params).on_road ? 1 : 0;
    }
  }
  return frame;
}

inline std::vector<LabeledFrame> make_wedge_dataset(int frames, const GridConfig& cfg,
                                                    std::uint32_t seed,
                                                    const WedgeSceneParams& params = {}) {
  if (frames <= 0) throw DomainError("make_wedge_dataset: frame count must be positive");
  std::vector<LabeledFrame> dataset;
  dataset.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i)
    dataset.push_back(make_wedge_frame(cfg, seed + static_cast<std::uint32_t>(i) * 7919u, params));
  return dataset;
}

}  // namespace chipnet
