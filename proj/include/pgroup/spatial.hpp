// Uniform-grid index for exact fixed-radius neighbor queries.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgroup/core.hpp"
#include "pgroup/parallel.hpp"

namespace pgroup {

/// The neighbor predicate, shared by the grid and the brute-force scan so
/// both evaluate the identical 32-bit arithmetic.
inline bool within_radius(const Vec3f& a, const Vec3f& b, float radius_sq) {
  const float dx = a.x - b.x;
  const float dy = a.y - b.y;
  const float dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz < radius_sq;
}

class GridIndex {
 public:
  static constexpr int kKeyBits = 21;
  static constexpr std::int64_t kMaxCell = (std::int64_t{1} << kKeyBits) - 1;
  static constexpr std::int32_t kNoCell = -1;

  struct CellRange {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  GridIndex() = default;

  /// Builds the index; cost is one sort over the points.
  GridIndex(std::span<const Vec3f> coords, float radius) : cell_size_(radius), coords_(coords.begin(), coords.end()) {
    if (!(radius > 0.F) || !std::isfinite(radius)) throw ValidationError("radius must be positive and finite");
    const std::size_t n = coords_.size();
    if (n > 0xFFFFFFFFULL) throw ValidationError("too many points for the grid index");
    if (n == 0) return;
    origin_ = coords_[0];
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = coords_[i];
      if (!is_finite(p)) throw ValidationError("point " + std::to_string(i) + ": non-finite coordinate");
      origin_.x = std::min(origin_.x, p.x);
      origin_.y = std::min(origin_.y, p.y);
      origin_.z = std::min(origin_.z, p.z);
    }

    std::vector<std::uint64_t> keys(n);
    parallel_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) keys[i] = key_of(cell_coord(coords_[i]));
    });

    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<PointIndex>(i);
    std::sort(order_.begin(), order_.end(), [&](PointIndex a, PointIndex b) {
      return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
    });

    cell_of_point_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto key = keys[order_[k]];
      if (cell_keys_.empty() || cell_keys_.back() != key) {
        cell_keys_.push_back(key);
        cells_.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)});
      }
      cells_.back().end = static_cast<std::uint32_t>(k + 1);
      cell_of_point_[order_[k]] = static_cast<std::uint32_t>(cells_.size() - 1);
    }

    std::unordered_map<std::uint64_t, std::int32_t> lookup;
    lookup.reserve(cells_.size() * 2);
    for (std::size_t c = 0; c < cell_keys_.size(); ++c) lookup.emplace(cell_keys_[c], static_cast<std::int32_t>(c));

    adjacent_.assign(cells_.size() * 27, kNoCell);
    parallel_chunks(cells_.size(), [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t c = b; c < e; ++c) {
        const auto center = unpack(cell_keys_[c]);
        std::size_t slot = 0;
        for (int dx = -1; dx <= 1; ++dx) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dz = -1; dz <= 1; ++dz, ++slot) {
              const std::array<std::int64_t, 3> nb{center[0] + dx, center[1] + dy, center[2] + dz};
              if (std::any_of(nb.begin(), nb.end(), [](std::int64_t v) { return v < 0 || v > kMaxCell; })) {
                continue;
              }
              if (auto it = lookup.find(key_of(nb)); it != lookup.end()) adjacent_[c * 27 + slot] = it->second;
            }
          }
        }
      }
    });
  }

  float cell_size() const { return cell_size_; }
  const Vec3f& origin() const { return origin_; }
  std::size_t size() const { return coords_.size(); }
  std::size_t cell_count() const { return cells_.size(); }
  std::span<const Vec3f> coords() const { return coords_; }

  /// Integer cell coordinate: floor((p - origin) / cell_size) per axis.
  std::array<std::int64_t, 3> cell_coord(const Vec3f& p) const {
    const double inv = 1.0 / static_cast<double>(cell_size_);
    std::array<std::int64_t, 3> c{
        static_cast<std::int64_t>(std::floor((static_cast<double>(p.x) - origin_.x) * inv)),
        static_cast<std::int64_t>(std::floor((static_cast<double>(p.y) - origin_.y) * inv)),
        static_cast<std::int64_t>(std::floor((static_cast<double>(p.z) - origin_.z) * inv))};
    for (auto v : c) {
      if (v < 0 || v > kMaxCell) throw ValidationError("scene extent too large for the grid at this radius");
    }
    return c;
  }

  std::uint32_t cell_of(PointIndex i) const { return cell_of_point_[i]; }
  CellRange cell_range(std::uint32_t cell) const { return cells_[cell]; }
  std::span<const PointIndex> cell_points(std::uint32_t cell) const {
    const auto r = cells_[cell];
    return {order_.data() + r.begin, r.end - r.begin};
  }
  /// Points sorted by (cell, index); cell_range() indexes into this array.
  std::span<const PointIndex> ordered_points() const { return order_; }
  /// The 27 cells around `cell` (kNoCell where empty), including itself.
  std::span<const std::int32_t, 27> adjacent_cells(std::uint32_t cell) const {
    return std::span<const std::int32_t, 27>(adjacent_.data() + static_cast<std::size_t>(cell) * 27, 27);
  }

 private:
  static std::uint64_t key_of(const std::array<std::int64_t, 3>& c) {
    return (static_cast<std::uint64_t>(c[0]) << (2 * kKeyBits)) | (static_cast<std::uint64_t>(c[1]) << kKeyBits) |
           static_cast<std::uint64_t>(c[2]);
  }
  static std::array<std::int64_t, 3> unpack(std::uint64_t key) {
    const std::uint64_t mask = (std::uint64_t{1} << kKeyBits) - 1;
    return {static_cast<std::int64_t>((key >> (2 * kKeyBits)) & mask),
            static_cast<std::int64_t>((key >> kKeyBits) & mask), static_cast<std::int64_t>(key & mask)};
  }

  float cell_size_ = 0.F;
  Vec3f origin_{};
  std::vector<Vec3f> coords_;
  std::vector<PointIndex> order_;
  std::vector<std::uint32_t> cell_of_point_;
  std::vector<std::uint64_t> cell_keys_;
  std::vector<CellRange> cells_;
  std::vector<std::int32_t> adjacent_;
};

inline GridIndex build_index(std::span<const Vec3f> coords, float radius) { return GridIndex(coords, radius); }

/// All j with |x_j - x_center| < radius (center included), ascending.
inline std::vector<PointIndex> ball_query(const GridIndex& index, PointIndex center_idx, float radius) {
  if (radius != index.cell_size()) throw ValidationError("query radius differs from the index cell size");
  if (center_idx >= index.size()) throw ValidationError("center index out of range");
  const auto coords = index.coords();
  const Vec3f& c = coords[center_idx];
  const float r2 = radius * radius;
  std::vector<PointIndex> out;
  for (auto cell : index.adjacent_cells(index.cell_of(center_idx))) {
    if (cell == GridIndex::kNoCell) continue;
    for (auto j : index.cell_points(static_cast<std::uint32_t>(cell))) {
      if (within_radius(coords[j], c, r2)) out.push_back(j);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// O(N) reference scan for the same predicate.
inline std::vector<PointIndex> brute_force_query(std::span<const Vec3f> coords, PointIndex center_idx, float radius) {
  const float r2 = radius * radius;
  std::vector<PointIndex> out;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    if (within_radius(coords[j], coords[center_idx], r2)) out.push_back(static_cast<PointIndex>(j));
  }
  return out;
}

}  // namespace pgroup
