#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

#include "chipnet/common.hpp"
#include "chipnet/spherical.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

/// Pinhole projection from the LiDAR frame into ground-truth image pixels.
struct CameraProjection {
  std::array<double, 12> k{};  // 3x4, row-major

  double at(int r, int c) const { return k[static_cast<std::size_t>(r) * 4 + c]; }
  double& at(int r, int c) { return k[static_cast<std::size_t>(r) * 4 + c]; }

  static CameraProjection identity() {
    CameraProjection cam;
    cam.at(0, 0) = cam.at(1, 1) = cam.at(2, 2) = 1.0;
    return cam;
  }
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/// [x^ y^ z^]^T = K [x y z 1]^T, then (u, v) = (x^/z^, y^/z^).
inline PixelCoord project_to_camera(double x, double y, double z, const CameraProjection& cam) {
  const double xh = cam.at(0, 0) * x + cam.at(0, 1) * y + cam.at(0, 2) * z + cam.at(0, 3);
  const double yh = cam.at(1, 0) * x + cam.at(1, 1) * y + cam.at(1, 2) * z + cam.at(1, 3);
  const double zh = cam.at(2, 0) * x + cam.at(2, 1) * y + cam.at(2, 2) * z + cam.at(2, 3);
  if (zh == 0.0) throw UndefinedProjectionError("project_to_camera: homogeneous depth is zero");
  if (zh < 0.0) throw BehindCameraError("project_to_camera: point behind the camera");
  return PixelCoord{xh / zh, yh / zh};
}

/// Grayscale ground-truth image; strictly positive pixels mark drivable.
using GtImage = Tensor2<std::uint16_t>;

/// Per-cell binary labels aligned with the input tensor grid.
using CellLabels = Tensor2<std::uint8_t>;

namespace detail {

inline std::optional<PixelCoord> try_project(double x, double y, double z,
                                             const CameraProjection& cam) {
  const double zh = cam.at(2, 0) * x + cam.at(2, 1) * y + cam.at(2, 2) * z + cam.at(2, 3);
  if (zh <= 0.0) return std::nullopt;
  const double xh = cam.at(0, 0) * x + cam.at(0, 1) * y + cam.at(0, 2) * z + cam.at(0, 3);
  const double yh = cam.at(1, 0) * x + cam.at(1, 1) * y + cam.at(1, 2) * z + cam.at(1, 3);
  return PixelCoord{xh / zh, yh / zh};
}

/// Nearest-pixel lookup; anything outside the image reads as not drivable.
inline bool gt_positive_at(const GtImage& gt, const PixelCoord& px) {
  const long u = std::lround(px.u);
  const long v = std::lround(px.v);
  if (u < 0 || u >= gt.cols || v < 0 || v >= gt.rows) return false;
  return gt(static_cast<int>(v), static_cast<int>(u)) > 0;
}

}  // namespace detail

/// Labels each occupied cell 1 iff both its nearest and furthest returns
/// project onto strictly positive ground-truth pixels. Failed projections and
/// empty cells degrade to 0.
inline CellLabels label_cells(const InputTensor& tensor, const GtImage& gt,
                              const CameraProjection& cam) {
  if (tensor.channels != kInputChannels) throw ShapeError("label_cells: not a 14-channel tensor");
  CellLabels labels(tensor.rows, tensor.cols);
  for (int r = 0; r < tensor.rows; ++r)
    for (int c = 0; c < tensor.cols; ++c) {
      if (!cell_occupied(tensor, r, c)) continue;
      const float* cell = tensor.cell(r, c);
      const auto near_px = detail::try_project(cell[channel::kNearX], cell[channel::kNearY],
                                               cell[channel::kNearZ], cam);
      if (!near_px || !detail::gt_positive_at(gt, *near_px)) continue;
      const auto far_px = detail::try_project(cell[channel::kFarX], cell[channel::kFarY],
                                              cell[channel::kFarZ], cam);
      if (!far_px || !detail::gt_positive_at(gt, *far_px)) continue;
      labels(r, c) = 1;
    }
  return labels;
}

}  // namespace chipnet
