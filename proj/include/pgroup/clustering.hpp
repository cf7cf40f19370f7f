// Breadth-first grouping of same-label points within a fixed radius, run on
// the original coordinates P and on the offset-shifted coordinates Q.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pgroup/core.hpp"
#include "pgroup/parallel.hpp"
#include "pgroup/spatial.hpp"

namespace pgroup {

struct ClusterParams {
  float radius = 0.03F;
  std::size_t min_points = 50;  // clusters need strictly more points than this

  void validate() const {
    if (!(radius > 0.F) || !std::isfinite(radius)) throw ValidationError("cluster radius must be > 0");
    if (min_points < 1) throw ValidationError("min_points must be >= 1");
  }
};

namespace detail {

/// clusterable[i] is false for stuff-class and unlabeled points.
inline std::vector<std::uint8_t> clusterable_mask(std::span<const ClassId> labels,
                                                  std::span<const ClassId> stuff_classes) {
  std::vector<std::uint8_t> ok(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId c = labels[i];
    ok[i] = c != kUnlabeled && std::find(stuff_classes.begin(), stuff_classes.end(), c) == stuff_classes.end();
  }
  return ok;
}

}  // namespace detail

/// Clustering over a prebuilt index whose cell size is the clustering radius.
///
/// Seeds are taken in ascending index order and each dequeued point enqueues
/// its unvisited same-label neighbors in ascending index order. Each cell
/// keeps a compacted list of still-unvisited points; visit order and result
/// match the plain neighbor-list formulation.
inline std::vector<Cluster> cluster_indexed(const GridIndex& index, std::span<const ClassId> labels,
                                            std::span<const ClassId> stuff_classes, const ClusterParams& params,
                                            ClusterSource source) {
  params.validate();
  if (labels.size() != index.size()) throw ValidationError("coordinate and label counts differ");
  if (index.cell_size() != params.radius) throw ValidationError("index cell size differs from cluster radius");
  const std::size_t n = labels.size();
  std::vector<Cluster> clusters;
  if (n == 0) return clusters;

  std::vector<std::uint8_t> visited = detail::clusterable_mask(labels, stuff_classes);
  for (auto& v : visited) v = v ? 0 : 1;

  // Per-cell unvisited lists, stored in place inside one copy of the ordering.
  const auto ordered = index.ordered_points();
  std::vector<PointIndex> pending(ordered.begin(), ordered.end());
  std::vector<std::uint32_t> pending_end(index.cell_count());
  for (std::uint32_t c = 0; c < index.cell_count(); ++c) {
    const auto r = index.cell_range(c);
    std::uint32_t w = r.begin;
    for (std::uint32_t k = r.begin; k < r.end; ++k) {
      if (!visited[pending[k]]) pending[w++] = pending[k];
    }
    pending_end[c] = w;
  }

  const auto coords = index.coords();
  const float r2 = params.radius * params.radius;
  std::vector<PointIndex> queue;
  std::vector<PointIndex> found;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (visited[seed]) continue;
    queue.clear();
    visited[seed] = 1;
    queue.push_back(static_cast<PointIndex>(seed));
    const ClassId label = labels[seed];
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const PointIndex k = queue[head];
      const Vec3f& xk = coords[k];
      found.clear();
      for (auto cell : index.adjacent_cells(index.cell_of(k))) {
        if (cell == GridIndex::kNoCell) continue;
        const auto c = static_cast<std::uint32_t>(cell);
        const std::uint32_t begin = index.cell_range(c).begin;
        std::uint32_t w = begin;
        for (std::uint32_t s = begin; s < pending_end[c]; ++s) {
          const PointIndex j = pending[s];
          if (visited[j]) continue;
          if (labels[j] == label && within_radius(coords[j], xk, r2)) {
            visited[j] = 1;
            found.push_back(j);
            continue;
          }
          pending[w++] = j;
        }
        pending_end[c] = w;
      }
      std::sort(found.begin(), found.end());
      queue.insert(queue.end(), found.begin(), found.end());
    }
    if (queue.size() > params.min_points) {
      Cluster cl;
      cl.point_idx = queue;
      std::sort(cl.point_idx.begin(), cl.point_idx.end());
      cl.class_id = label;
      cl.source = source;
      clusters.push_back(std::move(cl));
    }
  }
  return clusters;
}

inline std::vector<Cluster> cluster_single_set(std::span<const Vec3f> coords, std::span<const ClassId> labels,
                                               std::span<const ClassId> stuff_classes, const ClusterParams& params,
                                               ClusterSource source) {
  params.validate();
  if (coords.size() != labels.size()) throw ValidationError("coordinate and label counts differ");
  return cluster_indexed(build_index(coords, params.radius), labels, stuff_classes, params, source);
}

/// Union-find over every point pair; the reference for cluster_single_set.
inline std::vector<Cluster> connected_components_oracle(std::span<const Vec3f> coords,
                                                        std::span<const ClassId> labels,
                                                        std::span<const ClassId> stuff_classes,
                                                        const ClusterParams& params,
                                                        ClusterSource source = ClusterSource::kOriginal) {
  const std::size_t n = coords.size();
  const auto ok = detail::clusterable_mask(labels, stuff_classes);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  const float r2 = params.radius * params.radius;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (ok[j] && labels[i] == labels[j] && within_radius(coords[i], coords[j], r2)) {
        const auto a = find(i);
        const auto b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::vector<std::vector<PointIndex>> groups(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) groups[find(i)].push_back(static_cast<PointIndex>(i));
  }
  std::vector<Cluster> out;
  for (auto& g : groups) {
    if (g.size() > params.min_points) {
      const ClassId label = labels[g.front()];
      out.push_back({std::move(g), label, source});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Cluster& a, const Cluster& b) { return a.point_idx.front() < b.point_idx.front(); });
  return out;
}

/// Clusters on P and on Q = P + offsets, concatenated (P first). No
/// deduplication across the two sets.
inline std::vector<Cluster> cluster_dual_set(const Scene& scene, const OffsetField& offsets,
                                             const ClusterParams& params) {
  params.validate();
  const auto q = shifted_coords(scene, offsets);
  std::vector<Cluster> from_p;
  std::vector<Cluster> from_q;
  parallel_invoke(
      [&] {
        from_p = cluster_single_set(scene.coords, scene.sem_labels, scene.stuff_classes, params,
                                    ClusterSource::kOriginal);
      },
      [&] { from_q = cluster_single_set(q, scene.sem_labels, scene.stuff_classes, params, ClusterSource::kShifted); });
  from_p.insert(from_p.end(), std::make_move_iterator(from_q.begin()), std::make_move_iterator(from_q.end()));
  return from_p;
}

}  // namespace pgroup
