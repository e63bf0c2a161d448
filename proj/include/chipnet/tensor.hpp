#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "chipnet/common.hpp"

namespace chipnet {

/// Dense row-major 2D grid.
template <typename T>
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Tensor2() = default;
  Tensor2(int r, int c, T fill = T{})
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw ShapeError("Tensor2: negative dimension");
  }

  T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Tensor2& a, const Tensor2& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
  }
};

/// Dense row-major 3D grid, channels contiguous per (row, col) cell.
template <typename T>
struct Tensor3 {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<T> v;

  Tensor3() = default;
  Tensor3(int r, int c, int ch, T fill = T{})
      : rows(r),
        cols(c),
        channels(ch),
        v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c) * static_cast<std::size_t>(ch),
          fill) {
    if (r < 0 || c < 0 || ch < 0) throw ShapeError("Tensor3: negative dimension");
  }

  T& operator()(int r, int c, int ch) {
    return v[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  const T& operator()(int r, int c, int ch) const {
    return v[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }

  /// Pointer to the channel vector of one cell.
  T* cell(int r, int c) { return &v[(static_cast<std::size_t>(r) * cols + c) * channels]; }
  const T* cell(int r, int c) const {
    return &v[(static_cast<std::size_t>(r) * cols + c) * channels];
  }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor3& o) const {
    return rows == o.rows && cols == o.cols && channels == o.channels;
  }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.rows == b.rows && a.cols == b.cols && a.channels == b.channels && a.v == b.v;
  }
};

using ProbMap = Tensor2<float>;
using BinaryMask = Tensor2<std::uint8_t>;

}  // namespace chipnet
