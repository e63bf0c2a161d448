#pragma once

// Shared test utilities: generators and independent oracles. Everything here
// stays independent of the implementation paths it checks.

#include <cstdint>
#include <random>
#include <vector>

#include "chipnet/pointcloud.hpp"
#include "chipnet/postprocess.hpp"
#include "chipnet/tensor.hpp"

namespace testutil {

inline std::mt19937& rng(std::uint32_t seed = 0) {
  static std::mt19937 gen(12345);
  if (seed != 0) gen.seed(seed);
  return gen;
}

inline chipnet::PointCloud random_cloud(std::size_t n, std::mt19937& gen) {
  std::uniform_real_distribution<float> coord(-40.0f, 40.0f);
  std::uniform_real_distribution<float> intensity(0.0f, 1.0f);
  chipnet::PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.push_back({coord(gen), coord(gen), coord(gen) * 0.1f, intensity(gen)});
  return cloud;
}

inline chipnet::BinaryMask random_mask(int rows, int cols, double p, std::mt19937& gen) {
  std::bernoulli_distribution bit(p);
  chipnet::BinaryMask m(rows, cols);
  for (auto& v : m.v) v = bit(gen) ? 1 : 0;
  return m;
}

/// Union-find connected-component labeling, the oracle for the BFS-based
/// implementation.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

/// Largest 4-connected component via union-find; ties by smallest root cell
/// in raster order.
inline chipnet::BinaryMask lcc_oracle(const chipnet::BinaryMask& m) {
  const int rows = m.rows, cols = m.cols;
  UnionFind uf(rows * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!m(r, c)) continue;
      if (r + 1 < rows && m(r + 1, c)) uf.unite(r * cols + c, (r + 1) * cols + c);
      if (c + 1 < cols && m(r, c + 1)) uf.unite(r * cols + c, r * cols + c + 1);
    }
  std::vector<std::size_t> size(static_cast<std::size_t>(rows) * cols, 0);
  std::vector<int> first(static_cast<std::size_t>(rows) * cols, -1);
  for (int i = 0; i < rows * cols; ++i) {
    if (!m.v[static_cast<std::size_t>(i)]) continue;
    const int root = uf.find(i);
    ++size[static_cast<std::size_t>(root)];
    if (first[static_cast<std::size_t>(root)] < 0) first[static_cast<std::size_t>(root)] = i;
  }
  int best_root = -1;
  for (int i = 0; i < rows * cols; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (size[idx] == 0) continue;
    if (best_root < 0 || size[idx] > size[static_cast<std::size_t>(best_root)] ||
        (size[idx] == size[static_cast<std::size_t>(best_root)] &&
         first[idx] < first[static_cast<std::size_t>(best_root)]))
      best_root = i;
  }
  chipnet::BinaryMask out(rows, cols);
  if (best_root >= 0)
    for (int i = 0; i < rows * cols; ++i)
      out.v[static_cast<std::size_t>(i)] =
          m.v[static_cast<std::size_t>(i)] && uf.find(i) == best_root ? 1 : 0;
  return out;
}

/// Random simple-ish polygon: vertices on a jittered circle, optionally
/// self-intersecting (even-odd handles both).
inline chipnet::Polygon random_polygon(std::mt19937& gen, double cx = 26.0, double cy = 0.0,
                                       double max_radius = 15.0) {
  std::uniform_int_distribution<int> nverts(3, 12);
  std::uniform_real_distribution<double> radius(1.0, max_radius);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  const int n = nverts(gen);
  chipnet::Polygon poly;
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * chipnet::kPi * (i + jitter(gen)) / n;
    const double r = radius(gen);
    poly.vertices.emplace_back(cx + r * std::cos(angle), cy + r * std::sin(angle));
  }
  return poly;
}

}  // namespace testutil
