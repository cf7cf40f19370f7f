// Instance-segmentation metrics: greedy same-class matching, all-point
// interpolated AP, AP over IoU 0.50:0.05:0.95, AP50, AP25, and class-mean
// precision / recall at IoU 0.5 after a confidence filter.
//
// Matching: predictions of a class are visited by descending score (ties:
// larger mask first, then input order); each takes the unmatched
// ground-truth instance of the same class with the highest IoU, and counts
// as a true positive if that IoU reaches the threshold. This is VOC-style
// matching, not the full ScanNet benchmark protocol.
#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "pgroup/core.hpp"
#include "pgroup/scoring.hpp"

namespace pgroup {

inline constexpr double kDefaultScoreFilter = 0.2;

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;

  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// One ranked prediction after matching.
struct MatchRecord {
  double score = 0.0;
  std::size_t mask_size = 0;
  std::size_t rank_key = 0;       // input order, used as the final tie-break
  std::size_t prediction = 0;     // index into the scene's prediction list
  std::int32_t matched_gt = -1;   // index into GroundTruth::instances, -1 if FP
};

namespace detail {

inline bool ranks_before(const MatchRecord& a, const MatchRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.mask_size != b.mask_size) return a.mask_size > b.mask_size;
  return a.rank_key < b.rank_key;
}

}  // namespace detail

/// Greedy matching of one scene's predictions of `class_id`. Records come
/// back in rank order.
inline std::vector<MatchRecord> match_class(std::span<const InstancePrediction> preds, const GroundTruth& gt,
                                            ClassId class_id, double iou_thresh) {
  std::vector<MatchRecord> recs;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].class_id != class_id) continue;
    recs.push_back({preds[k].score, preds[k].point_idx.size(), k, k, -1});
  }
  std::sort(recs.begin(), recs.end(), detail::ranks_before);

  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < gt.instances.size(); ++j) {
    if (gt.instances[j].class_id == class_id) candidates.push_back(j);
  }
  std::vector<bool> taken(gt.instances.size(), false);
  for (auto& r : recs) {
    const auto& mask = preds[r.prediction].point_idx;
    double best = -1.0;
    std::int32_t best_j = -1;
    for (auto j : candidates) {
      if (taken[j]) continue;
      const double v = iou(mask, gt.instances[j].point_idx);
      if (v > best) {
        best = v;
        best_j = static_cast<std::int32_t>(j);
      }
    }
    if (best_j >= 0 && best >= iou_thresh) {
      taken[static_cast<std::size_t>(best_j)] = true;
      r.matched_gt = best_j;
    }
  }
  return recs;
}

/// Cumulative precision/recall over rank-ordered records. Empty when there
/// are no records or no ground truth.
inline std::vector<PrPoint> pr_curve(std::span<const MatchRecord> ranked, std::size_t n_gt) {
  std::vector<PrPoint> curve;
  if (n_gt == 0) return curve;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].matched_gt >= 0) ++tp;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(k + 1),
                     static_cast<double>(tp) / static_cast<double>(n_gt)});
  }
  return curve;
}

inline std::size_t count_gt(const GroundTruth& gt, ClassId class_id) {
  return static_cast<std::size_t>(std::count_if(gt.instances.begin(), gt.instances.end(),
                                                [&](const auto& g) { return g.class_id == class_id; }));
}

inline std::vector<PrPoint> match_and_pr(std::span<const InstancePrediction> preds, const GroundTruth& gt,
                                         ClassId class_id, double iou_thresh) {
  return pr_curve(match_class(preds, gt, class_id, iou_thresh), count_gt(gt, class_id));
}

/// All-point interpolation: sum over k of (R_k - R_{k-1}) times the best
/// precision at any recall >= R_k.
inline double average_precision(std::span<const PrPoint> curve) {
  if (curve.empty()) return 0.0;
  std::vector<double> best_after(curve.size());
  double running = 0.0;
  for (std::size_t k = curve.size(); k-- > 0;) {
    running = std::max(running, curve[k].precision);
    best_after[k] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    ap += (curve[k].recall - prev_recall) * best_after[k];
    prev_recall = curve[k].recall;
  }
  return ap;
}

struct EvalConfig {
  /// AP thresholds averaged into mAP; defaults to 0.50, 0.55, ..., 0.95.
  std::vector<double> thresholds = [] {
    std::vector<double> t;
    for (int k = 10; k <= 19; ++k) t.push_back(k / 20.0);
    return t;
  }();
  double score_filter = kDefaultScoreFilter;
};

struct ClassMetrics {
  ClassId class_id = kUnlabeled;
  std::size_t n_gt = 0;
  std::vector<double> ap;  // one per EvalConfig::thresholds entry
  double ap_mean = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
  double precision50 = 0.0;
  double recall50 = 0.0;
};

struct EvalResult {
  std::vector<double> thresholds;
  std::vector<ClassMetrics> classes;  // classes with ground truth, ascending id
  double mean_ap = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
  double mprec50 = 0.0;
  double mrec50 = 0.0;
  /// Per scene, per prediction: matched GT instance at IoU 0.5 (unfiltered), or -1.
  std::vector<std::vector<std::int32_t>> matches;
};

/// Predictions for one scene paired with that scene's ground truth.
struct EvalScene {
  std::span<const InstancePrediction> preds;
  const GroundTruth* gt = nullptr;
};

/// Metrics pooled over scenes: per class, ranked predictions of all scenes
/// form one PR curve.
inline EvalResult evaluate_corpus(std::span<const EvalScene> scenes, const EvalConfig& config = {}) {
  std::map<ClassId, std::size_t> n_gt;
  for (const auto& s : scenes) {
    if (s.gt == nullptr) throw ValidationError("missing ground truth");
    for (const auto& g : s.gt->instances) ++n_gt[g.class_id];
    for (const auto& p : s.preds) {
      for (auto idx : p.point_idx) {
        if (idx >= s.gt->instance_of_point.size()) throw ValidationError("prediction references a point beyond the scene");
      }
    }
  }
  if (n_gt.empty()) throw ValidationError("ground truth has no instances");

  auto pooled_ap = [&](ClassId c, double thresh, std::vector<std::vector<std::int32_t>>* matches) {
    std::vector<MatchRecord> all;
    std::size_t offset = 0;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      auto recs = match_class(scenes[si].preds, *scenes[si].gt, c, thresh);
      for (auto& r : recs) {
        if (matches) (*matches)[si][r.prediction] = r.matched_gt;
        r.rank_key += offset;
        all.push_back(r);
      }
      offset += scenes[si].preds.size();
    }
    std::sort(all.begin(), all.end(), detail::ranks_before);
    return average_precision(pr_curve(all, n_gt[c]));
  };

  EvalResult res;
  res.thresholds = config.thresholds;
  res.matches.resize(scenes.size());
  for (std::size_t si = 0; si < scenes.size(); ++si) res.matches[si].assign(scenes[si].preds.size(), -1);

  for (const auto& [c, count] : n_gt) {
    ClassMetrics m;
    m.class_id = c;
    m.n_gt = count;
    for (double t : config.thresholds) m.ap.push_back(pooled_ap(c, t, nullptr));
    m.ap_mean = m.ap.empty() ? 0.0 : std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / static_cast<double>(m.ap.size());
    m.ap50 = pooled_ap(c, 0.5, &res.matches);
    m.ap25 = pooled_ap(c, 0.25, nullptr);

    std::size_t tp = 0;
    std::size_t kept = 0;
    for (const auto& s : scenes) {
      std::vector<InstancePrediction> filtered;
      for (const auto& p : s.preds) {
        if (p.class_id == c && p.score >= config.score_filter) filtered.push_back(p);
      }
      kept += filtered.size();
      for (const auto& r : match_class(filtered, *s.gt, c, 0.5)) tp += r.matched_gt >= 0 ? 1 : 0;
    }
    m.precision50 = kept == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(kept);
    m.recall50 = static_cast<double>(tp) / static_cast<double>(count);
    res.classes.push_back(std::move(m));
  }

  const double nc = static_cast<double>(res.classes.size());
  for (const auto& m : res.classes) {
    res.mean_ap += m.ap_mean / nc;
    res.ap50 += m.ap50 / nc;
    res.ap25 += m.ap25 / nc;
    res.mprec50 += m.precision50 / nc;
    res.mrec50 += m.recall50 / nc;
  }
  return res;
}

inline EvalResult evaluate(std::span<const InstancePrediction> preds, const Scene& gt_scene,
                           const EvalConfig& config = {}) {
  const auto gt = ground_truth(gt_scene);
  const EvalScene one{preds, &gt};
  return evaluate_corpus(std::span<const EvalScene>(&one, 1), config);
}

}  // namespace pgroup
