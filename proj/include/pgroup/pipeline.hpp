// Score-ranked non-maximum suppression and the inference driver from a
// scene plus offsets to instance predictions.
#pragma once

#include <chrono>
#include <numeric>
#include <optional>
#include <vector>

#include "pgroup/clustering.hpp"
#include "pgroup/core.hpp"
#include "pgroup/scoring.hpp"
#include "pgroup/spatial.hpp"

namespace pgroup {

inline constexpr double kDefaultNmsIou = 0.3;

/// Greedy NMS. Candidates are ranked by descending score, then ORIGINAL
/// before SHIFTED, then lower minimum point index; a candidate is kept when
/// its IoU with every kept cluster is below `iou_thresh`. Returns kept
/// indices in keep order.
inline std::vector<std::size_t> nms(const std::vector<Cluster>& clusters, std::span<const double> scores,
                                    double iou_thresh = kDefaultNmsIou) {
  if (clusters.size() != scores.size()) throw ValidationError("cluster and score counts differ");
  for (const auto& c : clusters) {
    if (c.point_idx.empty()) throw ValidationError("empty cluster");
  }
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto min_index = [&](std::size_t c) { return clusters[c].point_idx.front(); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (clusters[a].source != clusters[b].source) return clusters[a].source < clusters[b].source;
    if (min_index(a) != min_index(b)) return min_index(a) < min_index(b);
    return a < b;
  });
  std::vector<std::size_t> kept;
  for (auto c : order) {
    const auto& cand = clusters[c].point_idx;
    bool keep = true;
    for (auto k : kept) {
      const auto& other = clusters[k].point_idx;
      if (cand.back() < other.front() || other.back() < cand.front()) continue;  // disjoint index ranges
      if (iou(cand, other) >= iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(c);
  }
  return kept;
}

enum class CoordinateSets { kOriginal, kShifted, kBoth };

struct PipelineConfig {
  ClusterParams cluster;
  CoordinateSets sets = CoordinateSets::kBoth;
  ScorerKind scorer = ScorerKind::kModel;
  double nms_iou = kDefaultNmsIou;
  std::optional<double> min_score;

  void validate() const {
    cluster.validate();
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ValidationError("nms_iou must lie in (0,1]");
    if (min_score && !(*min_score >= 0.0 && *min_score <= 1.0)) throw ValidationError("min_score must lie in [0,1]");
  }
};

/// Wall time per stage in milliseconds.
struct StageTimes {
  double ball_query_p = 0.0;
  double cluster_p = 0.0;
  double ball_query_q = 0.0;
  double cluster_q = 0.0;
  double scoring = 0.0;
  double nms = 0.0;
  double total = 0.0;
};

namespace detail {
using Clock = std::chrono::steady_clock;
inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace detail

/// cluster -> score -> NMS -> optional score filter. `times`, when given,
/// receives per-stage wall times, and the P and Q passes then run one after
/// the other.
inline std::vector<InstancePrediction> run_pipeline(const Scene& scene, const OffsetField& offsets,
                                                    const PipelineConfig& config, const ScorerModel* model = nullptr,
                                                    const GroundTruth* gt = nullptr, StageTimes* times = nullptr) {
  config.validate();
  const auto start = detail::Clock::now();
  const bool use_p = config.sets != CoordinateSets::kShifted;
  const bool use_q = config.sets != CoordinateSets::kOriginal;
  const float radius = config.cluster.radius;

  std::vector<Cluster> from_p;
  std::vector<Cluster> from_q;
  auto pass = [&](std::span<const Vec3f> coords, ClusterSource source, std::vector<Cluster>& out, double* t_index,
                  double* t_cluster) {
    auto t0 = detail::Clock::now();
    const GridIndex index(coords, radius);
    if (t_index) *t_index = detail::ms_since(t0);
    t0 = detail::Clock::now();
    out = cluster_indexed(index, scene.sem_labels, scene.stuff_classes, config.cluster, source);
    if (t_cluster) *t_cluster = detail::ms_since(t0);
  };
  std::vector<Vec3f> q = shifted_coords(scene, offsets);
  if (times != nullptr) {
    if (use_p) pass(scene.coords, ClusterSource::kOriginal, from_p, &times->ball_query_p, &times->cluster_p);
    if (use_q) pass(q, ClusterSource::kShifted, from_q, &times->ball_query_q, &times->cluster_q);
  } else {
    parallel_invoke(
        [&] {
          if (use_p) pass(scene.coords, ClusterSource::kOriginal, from_p, nullptr, nullptr);
        },
        [&] {
          if (use_q) pass(q, ClusterSource::kShifted, from_q, nullptr, nullptr);
        });
  }
  std::vector<Cluster> clusters = std::move(from_p);
  clusters.insert(clusters.end(), std::make_move_iterator(from_q.begin()), std::make_move_iterator(from_q.end()));

  auto t0 = detail::Clock::now();
  const auto scores = score_clusters(clusters, scene, offsets, config.scorer, model, gt);
  if (times) times->scoring = detail::ms_since(t0);

  t0 = detail::Clock::now();
  const auto kept = nms(clusters, scores, config.nms_iou);
  if (times) times->nms = detail::ms_since(t0);

  std::vector<InstancePrediction> preds;
  preds.reserve(kept.size());
  for (auto c : kept) {
    if (config.min_score && scores[c] < *config.min_score) continue;
    preds.push_back({std::move(clusters[c].point_idx), clusters[c].class_id, scores[c]});
  }
  if (times) times->total = detail::ms_since(start);
  return preds;
}

}  // namespace pgroup
