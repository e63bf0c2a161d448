#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/spherical.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// cell true iff probability >= thr.
inline BinaryMask threshold_map(const ProbMap& p, double thr) {
  if (!(thr > 0.0 && thr < 1.0)) throw DomainError("threshold_map: thr must be in (0, 1)");
  BinaryMask mask(p.rows, p.cols);
  for (std::size_t i = 0; i < p.v.size(); ++i)
    mask.v[i] = static_cast<double>(p.v[i]) >= thr ? 1 : 0;
  return mask;
}

/// Keeps only the largest connected true component (4-connected by default).
/// Equal sizes break toward the component containing the smallest cell in
/// raster order; an all-false mask stays all-false.
inline BinaryMask largest_connected_component(const BinaryMask& m, int connectivity = 4) {
  if (connectivity != 4 && connectivity != 8)
    throw DomainError("largest_connected_component: connectivity must be 4 or 8");
  const int rows = m.rows, cols = m.cols;
  BinaryMask out(rows, cols);
  std::vector<std::int32_t> label(m.v.size(), -1);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> component_sizes;
  std::int32_t best_label = -1;
  std::size_t best_size = 0;

  for (std::size_t start = 0; start < m.v.size(); ++start) {
    if (!m.v[start] || label[start] != -1) continue;
    const std::int32_t id = static_cast<std::int32_t>(component_sizes.size());
    std::size_t size = 0;
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(cur / cols), c = static_cast<int>(cur % cols);
      const auto visit = [&](int rr, int cc) {
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return;
        const std::size_t idx = static_cast<std::size_t>(rr) * cols + cc;
        if (!m.v[idx] || label[idx] != -1) return;
        label[idx] = id;
        stack.push_back(idx);
      };
      visit(r - 1, c);
      visit(r + 1, c);
      visit(r, c - 1);
      visit(r, c + 1);
      if (connectivity == 8) {
        visit(r - 1, c - 1);
        visit(r - 1, c + 1);
        visit(r + 1, c - 1);
        visit(r + 1, c + 1);
      }
    }
    component_sizes.push_back(size);
    // Components are discovered in raster order of their smallest cell, so a
    // strict comparison implements the tie-break.
    if (size > best_size) {
      best_size = size;
      best_label = id;
    }
  }

  if (best_label >= 0)
    for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = label[i] == best_label ? 1 : 0;
  return out;
}

/// Morphological dilation with the radius-1 disk (3x3 cross), border clipped.
inline BinaryMask dilate(const BinaryMask& m) {
  BinaryMask out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      if (!m(r, c)) continue;
      out(r, c) = 1;
      if (r > 0) out(r - 1, c) = 1;
      if (r + 1 < m.rows) out(r + 1, c) = 1;
      if (c > 0) out(r, c - 1) = 1;
      if (c + 1 < m.cols) out(r, c + 1) = 1;
    }
  return out;
}

/// Vehicle-frame reference point of one azimuth column.
struct ReferencePoint {
  int column = 0;
  double x = 0.0;
  double y = 0.0;
};

/// Per column: the nearest-range occupied cell classified not-drivable is the
/// first obstacle and contributes its nearest return's (x, y). A column whose
/// occupied cells are all drivable is range-limited and contributes the
/// furthest cell's furthest return instead. Columns with no drivable cell
/// contribute nothing.
inline std::vector<ReferencePoint> column_reference_points(const BinaryMask& mask,
                                                           const InputTensor& tensor) {
  if (mask.rows != tensor.rows || mask.cols != tensor.cols)
    throw ShapeError("column_reference_points: mask/tensor dimensions differ");
  std::vector<ReferencePoint> points;
  for (int c = 0; c < mask.cols; ++c) {
    bool any_true = false;
    bool have_obstacle = false;
    float obstacle_rho = 0.0f;
    int obstacle_row = -1;
    bool have_far = false;
    float far_rho = 0.0f;
    int far_row = -1;
    for (int r = 0; r < mask.rows; ++r) {
      if (mask(r, c)) any_true = true;
      if (!cell_occupied(tensor, r, c)) continue;
      if (!mask(r, c)) {
        const float rho = tensor(r, c, channel::kNearRho);
        if (!have_obstacle || rho < obstacle_rho) {
          have_obstacle = true;
          obstacle_rho = rho;
          obstacle_row = r;
        }
      }
      const float rho_far = tensor(r, c, channel::kFarRho);
      if (!have_far || rho_far > far_rho) {
        have_far = true;
        far_rho = rho_far;
        far_row = r;
      }
    }
    if (!any_true) continue;
    if (have_obstacle) {
      points.push_back({c, static_cast<double>(tensor(obstacle_row, c, channel::kNearX)),
                        static_cast<double>(tensor(obstacle_row, c, channel::kNearY))});
    } else if (have_far) {
      points.push_back({c, static_cast<double>(tensor(far_row, c, channel::kFarX)),
                        static_cast<double>(tensor(far_row, c, channel::kFarY))});
    }
  }
  return points;
}

/// Closed vertex loop in vehicle-frame meters (x forward, y left).
struct Polygon {
  std::vector<std::pair<double, double>> vertices;
};

/// Builds the drivable-region polygon: reference points in azimuth order,
/// closed by two anchors at the near corners of the RoI so the region between
/// the vehicle-near edge and the obstacle boundary is enclosed. No reference
/// points means an empty region.
inline std::optional<Polygon> build_polygon(const std::vector<ReferencePoint>& points,
                                            double near_x = 6.0, double azimuth_min_deg = -45.0,
                                            double azimuth_max_deg = 45.0) {
  if (points.empty()) return std::nullopt;
  Polygon poly;
  poly.vertices.reserve(points.size() + 2);
  poly.vertices.emplace_back(near_x, near_x * std::tan(deg_to_rad(azimuth_min_deg)));
  for (const auto& p : points) poly.vertices.emplace_back(p.x, p.y);
  poly.vertices.emplace_back(near_x, near_x * std::tan(deg_to_rad(azimuth_max_deg)));
  return poly;
}

/// Signed area via the shoelace formula.
inline double polygon_area(const Polygon& poly) {
  double twice = 0.0;
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& [x0, y0] = v[i];
    const auto& [x1, y1] = v[(i + 1) % v.size()];
    twice += x0 * y1 - x1 * y0;
  }
  return std::abs(twice) / 2.0;
}

/// Metric top-view window: x in [6, 46] m, y in [-10, 10] m at 0.05 m/cell,
/// giving 800 x 400 cells.
struct GridMapConfig {
  double x_min = 6.0;
  double x_max = 46.0;
  double y_min = -10.0;
  double y_max = 10.0;
  double resolution = 0.05;

  void validate() const {
    if (resolution <= 0.0) throw DomainError("GridMapConfig: resolution must be positive");
    if (x_max <= x_min || y_max <= y_min) throw DomainError("GridMapConfig: empty range");
    const double nx = (x_max - x_min) / resolution;
    const double ny = (y_max - y_min) / resolution;
    if (std::abs(nx - std::round(nx)) > 1e-6 || std::abs(ny - std::round(ny)) > 1e-6)
      throw DomainError("GridMapConfig: ranges must be whole numbers of cells");
  }
  int x_cells() const { return static_cast<int>(std::round((x_max - x_min) / resolution)); }
  int y_cells() const { return static_cast<int>(std::round((y_max - y_min) / resolution)); }
  double cell_x(int gx) const { return x_min + (gx + 0.5) * resolution; }
  double cell_y(int gy) const { return y_min + (gy + 0.5) * resolution; }
};

enum class CellState : std::uint8_t { kNotDrivable = 0, kDrivable = 1, kDontCare = 2 };

/// x-major top-view drivable map: cell (gx, gy) covers
/// x in [x_min + gx*res, +res), y in [y_min + gy*res, +res).
struct GridMap {
  GridMapConfig config;
  std::vector<CellState> cells;  // gx * y_cells + gy

  explicit GridMap(const GridMapConfig& cfg = {}) : config(cfg) {
    cfg.validate();
    cells.assign(static_cast<std::size_t>(cfg.x_cells()) * cfg.y_cells(),
                 CellState::kNotDrivable);
  }

  CellState& at(int gx, int gy) {
    return cells[static_cast<std::size_t>(gx) * config.y_cells() + gy];
  }
  CellState at(int gx, int gy) const {
    return cells[static_cast<std::size_t>(gx) * config.y_cells() + gy];
  }
};

namespace detail {

/// Exact point-on-segment test used to make boundary cells count as inside.
inline bool on_segment(double px, double py, double x0, double y0, double x1, double y1) {
  const double cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
  if (cross != 0.0) return false;
  const double dot = (px - x0) * (x1 - x0) + (py - y0) * (y1 - y0);
  if (dot < 0.0) return false;
  const double len2 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
  return dot <= len2;
}

}  // namespace detail

/// Even-odd point-in-polygon for a single point; centers exactly on an edge
/// count as inside. This is the brute-force predicate the rasterizer is
/// checked against.
inline bool point_in_polygon(double px, double py, const Polygon& poly) {
  const auto& v = poly.vertices;
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const auto& [xi, yi] = v[i];
    const auto& [xj, yj] = v[j];
    if (detail::on_segment(px, py, xj, yj, xi, yi)) return true;
    if ((xi > px) != (xj > px)) {
      const double ycross = yj + (px - xj) * (yi - yj) / (xi - xj);
      if (ycross < py) inside = !inside;
    }
  }
  return inside;
}

/// Scanline rasterization under the even-odd rule: for every x-row of cell
/// centers, polygon edge crossings are sorted and the enclosed y-intervals
/// filled inclusively. Boundary centers count as drivable.
inline GridMap rasterize(const std::optional<Polygon>& poly, const GridMapConfig& cfg = {}) {
  cfg.validate();
  GridMap map(cfg);
  if (!poly || poly->vertices.size() < 3) return map;
  const auto& v = poly->vertices;
  std::vector<double> crossings;
  for (int gx = 0; gx < cfg.x_cells(); ++gx) {
    const double px = cfg.cell_x(gx);
    crossings.clear();
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
      const auto& [xi, yi] = v[i];
      const auto& [xj, yj] = v[j];
      if ((xi > px) != (xj > px)) crossings.push_back(yj + (px - xj) * (yi - yj) / (xi - xj));
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const double y0 = crossings[k], y1 = crossings[k + 1];
      // First center at or after y0, fill through the last at or before y1.
      int gy = static_cast<int>(std::ceil((y0 - cfg.y_min) / cfg.resolution - 0.5));
      if (gy < 0) gy = 0;
      for (; gy < cfg.y_cells(); ++gy) {
        const double py = cfg.cell_y(gy);
        if (py > y1) break;
        if (py >= y0) map.at(gx, gy) = CellState::kDrivable;
      }
    }
    // Vertical edges aligned exactly with this center column.
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
      const auto& [xi, yi] = v[i];
      const auto& [xj, yj] = v[j];
      if (xi != px || xj != px) continue;
      const double lo = std::min(yi, yj), hi = std::max(yi, yj);
      int gy = static_cast<int>(std::ceil((lo - cfg.y_min) / cfg.resolution - 0.5));
      if (gy < 0) gy = 0;
      for (; gy < cfg.y_cells(); ++gy) {
        const double py = cfg.cell_y(gy);
        if (py > hi) break;
        map.at(gx, gy) = CellState::kDrivable;
      }
    }
  }
  return map;
}

/// Binary PGM (P5), width = y cells, height = x cells; row 0 is the far
/// range edge. Drivable = 255, not drivable = 0, don't care = 127.
inline std::vector<std::uint8_t> render_pgm(const GridMap& map) {
  const int width = map.config.y_cells();
  const int height = map.config.x_cells();
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(width) * height);
  for (int row = 0; row < height; ++row) {
    const int gx = height - 1 - row;  // top of the image is far range
    for (int col = 0; col < width; ++col) {
      const int gy = width - 1 - col;  // +y (vehicle left) on the image left
      switch (map.at(gx, gy)) {
        case CellState::kDrivable: out.push_back(255); break;
        case CellState::kDontCare: out.push_back(127); break;
        case CellState::kNotDrivable: out.push_back(0); break;
      }
    }
  }
  return out;
}

/// Vertex list as `x_m,y_m` lines.
inline std::string polygon_to_csv(const std::optional<Polygon>& poly) {
  if (!poly) return std::string();
  std::string out;
  for (const auto& [x, y] : poly->vertices) {
    out += std::to_string(x);
    out += ',';
    out += std::to_string(y);
    out += '\n';
  }
  return out;
}

}  // namespace chipnet
