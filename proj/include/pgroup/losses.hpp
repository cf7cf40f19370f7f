// Training-loss kernels: semantic cross entropy, offset L1 regression,
// offset direction (minus cosine), the unweighted total, and the
// central-difference gradient checker used to verify analytic gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pgroup/core.hpp"

namespace pgroup {

/// Mean of member coordinates per ground-truth instance, 64-bit accumulation.
inline std::vector<Vec3d> instance_centroids(const Scene& scene) {
  const auto m = static_cast<std::size_t>(scene.n_instances());
  if (m == 0) throw ValidationError("scene has no instances");
  std::vector<Vec3d> sum(m);
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < scene.n_points(); ++i) {
    const auto id = scene.inst_ids[i];
    if (id < 0) continue;
    sum[static_cast<std::size_t>(id)] += to_double(scene.coords[i]);
    ++count[static_cast<std::size_t>(id)];
  }
  for (std::size_t j = 0; j < m; ++j) sum[j] = sum[j] * (1.0 / static_cast<double>(count[j]));
  return sum;
}

/// Per-point regression targets (centroid - p) in 64-bit with the instance mask.
struct OffsetSupervision {
  std::vector<Vec3d> target;
  std::vector<std::uint8_t> mask;
  std::size_t n_masked = 0;
};

inline OffsetSupervision offset_supervision(const Scene& scene) {
  OffsetSupervision sup;
  sup.target.resize(scene.n_points());
  sup.mask.resize(scene.n_points(), 0);
  if (scene.n_instances() == 0) return sup;
  const auto centroids = instance_centroids(scene);
  for (std::size_t i = 0; i < scene.n_points(); ++i) {
    const auto id = scene.inst_ids[i];
    if (id < 0) continue;
    sup.target[i] = centroids[static_cast<std::size_t>(id)] - to_double(scene.coords[i]);
    sup.mask[i] = 1;
    ++sup.n_masked;
  }
  return sup;
}

/// Oracle offsets: centroid - p on instance points, zero elsewhere.
inline OffsetField offset_targets(const Scene& scene) {
  const auto sup = offset_supervision(scene);
  OffsetField f;
  f.offsets.resize(scene.n_points());
  for (std::size_t i = 0; i < scene.n_points(); ++i) f.offsets[i] = to_float(sup.target[i]);
  return f;
}

/// Flattens an offset field into 3N doubles (x0 y0 z0 x1 ...).
inline std::vector<double> flatten(const OffsetField& f) {
  std::vector<double> out;
  out.reserve(f.size() * 3);
  for (const auto& o : f.offsets) {
    out.push_back(o.x);
    out.push_back(o.y);
    out.push_back(o.z);
  }
  return out;
}

/// Mean negative log-probability of the ground-truth class over labelled
/// points. `scores` is row-major n x n_classes.
inline double semantic_loss(std::span<const float> scores, int n_classes, std::span<const ClassId> gt_labels) {
  constexpr double kEps = 1e-12;
  if (n_classes < 1 || scores.size() != gt_labels.size() * static_cast<std::size_t>(n_classes)) {
    throw ValidationError("score table does not match label count");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt_labels.size(); ++i) {
    const ClassId c = gt_labels[i];
    if (c < 0) continue;
    if (c >= n_classes) throw ValidationError("label out of range");
    const double p = scores[i * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(c)];
    sum -= std::log(std::max(p, kEps));
    ++count;
  }
  if (count == 0) throw ValidationError("no labelled points");
  return sum / static_cast<double>(count);
}

/// L1 offset regression averaged over instance points. `pred` holds 3N
/// doubles; when `grad` is non-empty it receives d loss / d pred (the
/// subgradient 0 is used exactly at a kink).
inline double offset_reg_loss(std::span<const double> pred, const OffsetSupervision& sup,
                              std::span<double> grad = {}) {
  const std::size_t n = sup.target.size();
  if (pred.size() != 3 * n) throw ValidationError("offset count does not match scene");
  if (sup.n_masked == 0) throw ValidationError("no instance points");
  if (!grad.empty() && grad.size() != pred.size()) throw ValidationError("gradient buffer size mismatch");
  const double inv_m = 1.0 / static_cast<double>(sup.n_masked);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> t{sup.target[i].x, sup.target[i].y, sup.target[i].z};
    for (std::size_t a = 0; a < 3; ++a) {
      const double r = pred[3 * i + a] - t[a];
      if (sup.mask[i]) sum += std::abs(r);
      if (!grad.empty()) grad[3 * i + a] = sup.mask[i] ? inv_m * ((r > 0.0) - (r < 0.0)) : 0.0;
    }
  }
  return sum * inv_m;
}

inline constexpr double kDirectionEps = 1e-8;

/// Minus mean cosine between predicted offsets and centroid directions over
/// instance points. Points whose predicted offset or target has norm below
/// kDirectionEps contribute zero (and zero gradient).
inline double offset_dir_loss(std::span<const double> pred, const OffsetSupervision& sup,
                              std::span<double> grad = {}) {
  const std::size_t n = sup.target.size();
  if (pred.size() != 3 * n) throw ValidationError("offset count does not match scene");
  if (sup.n_masked == 0) throw ValidationError("no instance points");
  if (!grad.empty() && grad.size() != pred.size()) throw ValidationError("gradient buffer size mismatch");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(sup.n_masked);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!sup.mask[i]) continue;
    const Vec3d o{pred[3 * i], pred[3 * i + 1], pred[3 * i + 2]};
    const double no = norm(o);
    const double nt = norm(sup.target[i]);
    if (no < kDirectionEps || nt < kDirectionEps) continue;
    const Vec3d u = o * (1.0 / no);
    const Vec3d v = sup.target[i] * (1.0 / nt);
    const double cosine = dot(u, v);
    sum += cosine;
    if (!grad.empty()) {
      // d(u.v)/do = (v - (u.v) u) / |o|
      const Vec3d g = (v - u * cosine) * (-inv_m / no);
      grad[3 * i] = g.x;
      grad[3 * i + 1] = g.y;
      grad[3 * i + 2] = g.z;
    }
  }
  return -sum * inv_m;
}

inline double offset_reg_loss(const OffsetField& pred, const Scene& scene) {
  return offset_reg_loss(flatten(pred), offset_supervision(scene));
}

inline double offset_dir_loss(const OffsetField& pred, const Scene& scene) {
  return offset_dir_loss(flatten(pred), offset_supervision(scene));
}

struct LossParts {
  double l_sem = 0.0;
  double l_o_reg = 0.0;
  double l_o_dir = 0.0;
  double l_c_score = 0.0;
};

struct LossReport {
  double l_sem = 0.0;
  double l_o_reg = 0.0;
  double l_o_dir = 0.0;
  double l_c_score = 0.0;
  double total = 0.0;
  // Terms with an analytic gradient in this library.
  bool grad_l_sem = false;
  bool grad_l_o_reg = true;
  bool grad_l_o_dir = true;
  bool grad_l_c_score = true;
};

/// Unweighted sum of the four terms.
inline LossReport total_loss(const LossParts& p) {
  for (double v : {p.l_sem, p.l_o_reg, p.l_o_dir, p.l_c_score}) {
    if (!std::isfinite(v)) throw ValidationError("non-finite loss term");
  }
  LossReport r;
  r.l_sem = p.l_sem;
  r.l_o_reg = p.l_o_reg;
  r.l_o_dir = p.l_o_dir;
  r.l_c_score = p.l_c_score;
  r.total = p.l_sem + p.l_o_dir + p.l_o_reg + p.l_c_score;
  return r;
}

/// A scalar function that optionally writes its gradient into the second
/// argument (left untouched when that span is empty).
using DifferentiableFn = std::function<double(std::span<const double>, std::span<double>)>;

inline constexpr double kGradCheckStep = 1e-4;

/// Largest per-coordinate |g_analytic - g_numeric| / max(1, |g_analytic|, |g_numeric|)
/// using central differences.
inline double grad_check(const DifferentiableFn& fn, std::span<const double> point, double step = kGradCheckStep) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> analytic(x.size(), 0.0);
  if (!std::isfinite(fn(x, analytic))) throw ValidationError("non-finite loss at check point");
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + step;
    const double up = fn(x, {});
    x[k] = saved - step;
    const double down = fn(x, {});
    x[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw ValidationError("non-finite loss during grad check");
    const double numeric = (up - down) / (2.0 * step);
    const double rel =
        std::abs(analytic[k] - numeric) / std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Normalized histogram of point-to-centroid distances over instance points.
/// Bins are [k*w, (k+1)*w) up to max_dist; the final bin collects d >= max_dist.
inline std::vector<double> distance_histogram(const Scene& scene, double bin_width = 0.1, double max_dist = 2.0) {
  if (!(bin_width > 0.0) || !(max_dist > 0.0)) throw ValidationError("histogram bin width and range must be > 0");
  const auto sup = offset_supervision(scene);
  if (sup.n_masked == 0) throw ValidationError("no instance points");
  const auto regular = static_cast<std::size_t>(std::ceil(max_dist / bin_width - 1e-12));
  std::vector<double> bins(regular + 1, 0.0);
  for (std::size_t i = 0; i < scene.n_points(); ++i) {
    if (!sup.mask[i]) continue;
    const double d = norm(sup.target[i]);
    const std::size_t b = d >= max_dist ? regular : std::min(regular - 1, static_cast<std::size_t>(d / bin_width));
    bins[b] += 1.0;
  }
  for (auto& b : bins) b /= static_cast<double>(sup.n_masked);
  return bins;
}

}  // namespace pgroup
