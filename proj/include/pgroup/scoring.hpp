// Cluster quality: mask IoU, soft score labels, the binary cross-entropy
// score loss, and three interchangeable scorers (ground-truth IoU, mean
// semantic probability, and a small trainable feedforward model over
// handcrafted cluster descriptors).
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgroup/clustering.hpp"
#include "pgroup/core.hpp"
#include "pgroup/io.hpp"
#include "pgroup/losses.hpp"
#include "pgroup/parallel.hpp"
#include "pgroup/random.hpp"

namespace pgroup {

inline constexpr double kSoftLabelLow = 0.25;
inline constexpr double kSoftLabelHigh = 0.75;
inline constexpr double kScoreEps = 1e-7;

/// |a ∩ b| / |a ∪ b| for sorted, duplicate-free index sets.
inline double iou(std::span<const PointIndex> a, std::span<const PointIndex> b) {
  if (a.empty() && b.empty()) throw ValidationError("IoU of two empty sets is undefined");
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

/// Largest IoU between a cluster and any ground-truth instance (all classes).
inline double best_iou(std::span<const PointIndex> cluster, const GroundTruth& gt) {
  if (gt.instances.empty()) throw ValidationError("no ground-truth instances");
  if (cluster.empty()) return 0.0;
  std::vector<std::int32_t> hits;
  hits.reserve(cluster.size());
  for (auto p : cluster) {
    if (p >= gt.instance_of_point.size()) throw ValidationError("cluster point outside ground truth");
    if (gt.instance_of_point[p] >= 0) hits.push_back(gt.instance_of_point[p]);
  }
  std::sort(hits.begin(), hits.end());
  double best = 0.0;
  for (std::size_t k = 0; k < hits.size();) {
    std::size_t e = k;
    while (e < hits.size() && hits[e] == hits[k]) ++e;
    const double inter = static_cast<double>(e - k);
    const double inst = static_cast<double>(gt.instances[static_cast<std::size_t>(hits[k])].point_idx.size());
    best = std::max(best, inter / (static_cast<double>(cluster.size()) + inst - inter));
    k = e;
  }
  return best;
}

/// Clamped linear ramp from IoU to a score target in [0, 1].
inline double soft_label(double iou_val, double low = kSoftLabelLow, double high = kSoftLabelHigh) {
  if (!(iou_val >= 0.0 && iou_val <= 1.0)) throw ValidationError("IoU must lie in [0,1]");
  if (!(low < high)) throw ValidationError("soft-label thresholds must satisfy low < high");
  if (iou_val < low) return 0.0;
  if (iou_val > high) return 1.0;
  return (iou_val - low) / (high - low);
}

struct ScoreTargets {
  std::vector<double> iou;
  std::vector<double> soft;
  double low = kSoftLabelLow;
  double high = kSoftLabelHigh;
};

inline ScoreTargets make_score_targets(std::vector<double> ious, double low = kSoftLabelLow,
                                       double high = kSoftLabelHigh) {
  ScoreTargets t;
  t.low = low;
  t.high = high;
  t.soft.reserve(ious.size());
  for (double v : ious) t.soft.push_back(soft_label(v, low, high));
  t.iou = std::move(ious);
  return t;
}

/// Mean binary cross entropy; scores are clamped to [eps, 1 - eps].
inline double score_loss(std::span<const double> scores, std::span<const double> soft) {
  if (scores.empty()) throw ValidationError("score loss needs at least one cluster");
  if (scores.size() != soft.size()) throw ValidationError("score and target counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], kScoreEps, 1.0 - kScoreEps);
    sum += soft[i] * std::log(s) + (1.0 - soft[i]) * std::log(1.0 - s);
  }
  return -sum / static_cast<double>(scores.size());
}

inline double score_loss(std::span<const double> scores, const ScoreTargets& targets) {
  return score_loss(scores, targets.soft);
}

// ------------------------------------------------------------ descriptors

inline constexpr std::size_t kDescriptorDim = 8;
using Descriptor = std::array<double, kDescriptorDim>;

/// [log point count, bbox extent x/y/z in P, mean and stdev of the distance
/// from shifted points to their shifted centroid, mean probability of the
/// cluster class (1 without scores), source flag].
inline Descriptor cluster_descriptor(const Cluster& cluster, const Scene& scene, const OffsetField& offsets) {
  if (cluster.point_idx.empty()) throw ValidationError("empty cluster");
  if (offsets.size() != scene.n_points()) throw ValidationError("offset field does not match scene");
  Vec3d lo{INFINITY, INFINITY, INFINITY};
  Vec3d hi{-INFINITY, -INFINITY, -INFINITY};
  Vec3d q_sum;
  double prob = 0.0;
  auto shifted = [&](PointIndex i) {
    const auto& p = scene.coords[i];
    const auto& o = offsets.offsets[i];
    return Vec3d{static_cast<double>(p.x) + o.x, static_cast<double>(p.y) + o.y, static_cast<double>(p.z) + o.z};
  };
  for (auto i : cluster.point_idx) {
    if (i >= scene.n_points()) throw ValidationError("cluster point outside scene");
    const auto p = to_double(scene.coords[i]);
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    q_sum += shifted(i);
    prob += scene.has_scores() ? scene.score(i, cluster.class_id) : 1.0;
  }
  const double n = static_cast<double>(cluster.size());
  const Vec3d q_mean = q_sum * (1.0 / n);
  double d_sum = 0.0;
  double d_sq = 0.0;
  for (auto i : cluster.point_idx) {
    const double d = norm(shifted(i) - q_mean);
    d_sum += d;
    d_sq += d * d;
  }
  const double d_mean = d_sum / n;
  const double d_var = std::max(0.0, d_sq / n - d_mean * d_mean);
  return {std::log(n), hi.x - lo.x,        hi.y - lo.y, hi.z - lo.z,
          d_mean,      std::sqrt(d_var),   prob / n,    cluster.source == ClusterSource::kShifted ? 1.0 : 0.0};
}

// ------------------------------------------------------------ the model

/// Normalize -> tanh hidden layer -> sigmoid output.
struct ScorerModel {
  std::size_t dim = kDescriptorDim;
  std::size_t hidden = 16;
  std::vector<double> mean;    // dim
  std::vector<double> stdev;   // dim, each >= 1e-8
  std::vector<double> w1;      // hidden x dim, row-major
  std::vector<double> b1;      // hidden
  std::vector<double> w2;      // hidden
  double b2 = 0.0;

  static ScorerModel zeros(std::size_t hidden = 16, std::size_t dim = kDescriptorDim) {
    ScorerModel m;
    m.dim = dim;
    m.hidden = hidden;
    m.mean.assign(dim, 0.0);
    m.stdev.assign(dim, 1.0);
    m.w1.assign(hidden * dim, 0.0);
    m.b1.assign(hidden, 0.0);
    m.w2.assign(hidden, 0.0);
    return m;
  }

  void validate() const {
    if (mean.size() != dim || stdev.size() != dim || w1.size() != hidden * dim || b1.size() != hidden ||
        w2.size() != hidden) {
      throw ValidationError("scorer model has inconsistent shapes");
    }
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(mean) || !finite(stdev) || !finite(w1) || !finite(b1) || !finite(w2) || !std::isfinite(b2)) {
      throw ValidationError("scorer model has non-finite weights");
    }
    for (double s : stdev) {
      if (s < 1e-8) throw ValidationError("scorer normalization stdev below 1e-8");
    }
  }

  std::size_t parameter_count() const { return hidden * dim + 2 * hidden + 1; }

  /// Trainable weights as [w1, b1, w2, b2].
  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    p.insert(p.end(), w1.begin(), w1.end());
    p.insert(p.end(), b1.begin(), b1.end());
    p.insert(p.end(), w2.begin(), w2.end());
    p.push_back(b2);
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw ValidationError("parameter vector size mismatch");
    auto it = p.begin();
    std::copy_n(it, w1.size(), w1.begin());
    it += static_cast<std::ptrdiff_t>(w1.size());
    std::copy_n(it, b1.size(), b1.begin());
    it += static_cast<std::ptrdiff_t>(b1.size());
    std::copy_n(it, w2.size(), w2.begin());
    it += static_cast<std::ptrdiff_t>(w2.size());
    b2 = *it;
  }

  std::vector<double> normalize(std::span<const double> x) const {
    std::vector<double> z(dim);
    for (std::size_t k = 0; k < dim; ++k) z[k] = (x[k] - mean[k]) / stdev[k];
    return z;
  }

  double logit_normalized(std::span<const double> z) const {
    double out = b2;
    for (std::size_t h = 0; h < hidden; ++h) {
      double a = b1[h];
      for (std::size_t k = 0; k < dim; ++k) a += w1[h * dim + k] * z[k];
      out += w2[h] * std::tanh(a);
    }
    return out;
  }

  double score(std::span<const double> descriptor) const {
    if (descriptor.size() != dim) throw ValidationError("descriptor dimension mismatch");
    return 1.0 / (1.0 + std::exp(-logit_normalized(normalize(descriptor))));
  }

  friend bool operator==(const ScorerModel&, const ScorerModel&) = default;
};

/// Mean BCE of the model over already-normalized descriptors `z` (row-major,
/// n x dim) against `soft`. Writes d loss / d parameters into `grad` when it
/// is non-empty. `params` follows ScorerModel::parameters() layout.
inline double scorer_objective(const ScorerModel& shape, std::span<const double> params, std::span<const double> z,
                               std::span<const double> soft, std::span<double> grad = {}) {
  const std::size_t dim = shape.dim;
  const std::size_t hidden = shape.hidden;
  const std::size_t n = soft.size();
  if (n == 0) throw ValidationError("score loss needs at least one cluster");
  if (z.size() != n * dim) throw ValidationError("descriptor table size mismatch");
  if (params.size() != shape.parameter_count()) throw ValidationError("parameter vector size mismatch");
  const double* w1 = params.data();
  const double* b1 = w1 + hidden * dim;
  const double* w2 = b1 + hidden;
  const double b2 = w2[hidden];
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != params.size()) throw ValidationError("gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  double* g_w1 = want_grad ? grad.data() : nullptr;
  double* g_b1 = want_grad ? g_w1 + hidden * dim : nullptr;
  double* g_w2 = want_grad ? g_b1 + hidden : nullptr;

  std::vector<double> act(hidden);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = z.data() + i * dim;
    double logit = b2;
    for (std::size_t h = 0; h < hidden; ++h) {
      double a = b1[h];
      for (std::size_t k = 0; k < dim; ++k) a += w1[h * dim + k] * zi[k];
      act[h] = std::tanh(a);
      logit += w2[h] * act[h];
    }
    const double s_raw = 1.0 / (1.0 + std::exp(-logit));
    const double s = std::clamp(s_raw, kScoreEps, 1.0 - kScoreEps);
    loss -= soft[i] * std::log(s) + (1.0 - soft[i]) * std::log(1.0 - s);
    if (!want_grad) continue;
    // d BCE / d logit = s - target; zero where the clamp is active.
    const bool clamped = s_raw != s;
    const double d_logit = clamped ? 0.0 : (s - soft[i]) * inv_n;
    if (d_logit == 0.0) continue;
    grad[params.size() - 1] += d_logit;
    for (std::size_t h = 0; h < hidden; ++h) {
      g_w2[h] += d_logit * act[h];
      const double d_a = d_logit * w2[h] * (1.0 - act[h] * act[h]);
      g_b1[h] += d_a;
      for (std::size_t k = 0; k < dim; ++k) g_w1[h * dim + k] += d_a * zi[k];
    }
  }
  return loss * inv_n;
}

// -------------------------------------------------------- serialization

inline std::string format_scorer(const ScorerModel& m) {
  m.validate();
  auto num = [](std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    out.append(buf, res.ptr);
  };
  auto row = [&](std::string& out, std::span<const double> values) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (k > 0) out += ' ';
      num(out, values[k]);
    }
    out += '\n';
  };
  std::string out = "SCORER1 " + std::to_string(m.dim) + " " + std::to_string(m.hidden) + "\n";
  row(out, m.mean);
  row(out, m.stdev);
  for (std::size_t h = 0; h < m.hidden; ++h) row(out, std::span<const double>(m.w1).subspan(h * m.dim, m.dim));
  row(out, m.b1);
  row(out, m.w2);
  num(out, m.b2);
  out += '\n';
  return out;
}

inline ScorerModel parse_scorer(std::string_view text, const std::string& path = "<scorer>") {
  detail::LineReader r(text, path);
  r.require_line("SCORER1 header");
  r.expect_keyword("SCORER1");
  ScorerModel m;
  m.dim = r.number<std::size_t>("descriptor_dim");
  m.hidden = r.number<std::size_t>("hidden size");
  r.expect_end_of_line();
  if (m.dim == 0 || m.hidden == 0 || m.dim > 4096 || m.hidden > 4096) r.fail("unsupported model dimensions");
  auto read_row = [&](std::vector<double>& dst, std::size_t count, const char* what) {
    r.require_line(what);
    for (std::size_t k = 0; k < count; ++k) dst.push_back(r.number<double>(what));
    r.expect_end_of_line();
  };
  read_row(m.mean, m.dim, "normalization mean");
  read_row(m.stdev, m.dim, "normalization stdev");
  for (std::size_t h = 0; h < m.hidden; ++h) read_row(m.w1, m.dim, "hidden weights");
  read_row(m.b1, m.hidden, "hidden bias");
  read_row(m.w2, m.hidden, "output weights");
  std::vector<double> b2;
  read_row(b2, 1, "output bias");
  m.b2 = b2[0];
  r.expect_end_of_file();
  m.validate();
  return m;
}

inline void save_scorer(const ScorerModel& m, const std::string& path) { detail::write_file(path, format_scorer(m)); }
inline ScorerModel load_scorer(const std::string& path) { return parse_scorer(detail::read_file(path), path); }

// ---------------------------------------------------------------- scoring

enum class ScorerKind { kOracle, kSemProb, kModel };

inline const char* to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::kOracle: return "oracle";
    case ScorerKind::kSemProb: return "semprob";
    case ScorerKind::kModel: return "model";
  }
  return "?";
}

/// Scores every cluster in [0, 1]. kOracle needs `gt`, kModel needs `model`,
/// kSemProb needs semantic scores on the scene.
inline std::vector<double> score_clusters(const std::vector<Cluster>& clusters, const Scene& scene,
                                          const OffsetField& offsets, ScorerKind kind,
                                          const ScorerModel* model = nullptr, const GroundTruth* gt = nullptr) {
  switch (kind) {
    case ScorerKind::kOracle:
      if (gt == nullptr) throw ValidationError("oracle scorer requires ground truth");
      break;
    case ScorerKind::kSemProb:
      if (!scene.has_scores()) throw ValidationError("semprob scorer requires semantic scores");
      break;
    case ScorerKind::kModel:
      if (model == nullptr) throw ValidationError("model scorer requires a trained model");
      model->validate();
      if (model->dim != kDescriptorDim) throw ValidationError("model descriptor dimension mismatch");
      break;
  }
  std::vector<double> scores(clusters.size());
  parallel_for(
      clusters.size(),
      [&](std::size_t c) {
        const auto& cl = clusters[c];
        switch (kind) {
          case ScorerKind::kOracle:
            scores[c] = best_iou(cl.point_idx, *gt);
            break;
          case ScorerKind::kSemProb: {
            double sum = 0.0;
            for (auto i : cl.point_idx) sum += scene.score(i, cl.class_id);
            scores[c] = std::clamp(sum / static_cast<double>(cl.size()), 0.0, 1.0);
            break;
          }
          case ScorerKind::kModel: {
            const auto d = cluster_descriptor(cl, scene, offsets);
            scores[c] = model->score(d);
            break;
          }
        }
      },
      8);
  return scores;
}

// --------------------------------------------------------------- training

struct TrainParams {
  std::size_t hidden = 16;
  double learning_rate = 0.5;
  std::size_t epochs = 3000;
  std::uint64_t seed = 0;
  ClusterParams cluster;
  double low = kSoftLabelLow;
  double high = kSoftLabelHigh;
};

/// One training scene: the prediction-side scene (labels the clustering
/// sees), the offsets, and the clean scene supplying ground truth.
struct TrainingScene {
  Scene scene;
  OffsetField offsets;
  Scene ground_truth;
};

struct ScoreSamples {
  std::vector<Descriptor> descriptors;
  std::vector<double> soft;
};

/// Dual-set clusters of every scene turned into (descriptor, soft label) pairs.
inline ScoreSamples harvest_score_samples(std::span<const TrainingScene> corpus, const ClusterParams& cluster,
                                          double low = kSoftLabelLow, double high = kSoftLabelHigh) {
  ScoreSamples out;
  for (const auto& ts : corpus) {
    const auto gt = ground_truth(ts.ground_truth);
    if (gt.instances.empty()) continue;
    for (const auto& cl : cluster_dual_set(ts.scene, ts.offsets, cluster)) {
      out.descriptors.push_back(cluster_descriptor(cl, ts.scene, ts.offsets));
      out.soft.push_back(soft_label(best_iou(cl.point_idx, gt), low, high));
    }
  }
  return out;
}

struct TrainResult {
  ScorerModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_check_error = 0.0;
};

inline constexpr double kScorerGradTolerance = 1e-5;

/// Full-batch gradient descent on the BCE score loss. Deterministic in
/// params.seed. The analytic gradient is checked against central differences
/// at the initial weights before any update.
inline TrainResult train_scorer(const ScoreSamples& samples, const TrainParams& params) {
  const std::size_t n = samples.soft.size();
  if (n == 0 || samples.descriptors.size() != n) throw ValidationError("empty cluster corpus");
  if (params.hidden == 0) throw ValidationError("hidden size must be >= 1");
  if (!(params.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");

  ScorerModel model = ScorerModel::zeros(params.hidden);
  for (std::size_t k = 0; k < kDescriptorDim; ++k) {
    double sum = 0.0;
    for (const auto& d : samples.descriptors) sum += d[k];
    const double mu = sum / static_cast<double>(n);
    double var = 0.0;
    for (const auto& d : samples.descriptors) var += (d[k] - mu) * (d[k] - mu);
    model.mean[k] = mu;
    model.stdev[k] = std::max(1e-8, std::sqrt(var / static_cast<double>(n)));
  }
  std::vector<double> z;
  z.reserve(n * kDescriptorDim);
  for (const auto& d : samples.descriptors) {
    const auto zi = model.normalize(d);
    z.insert(z.end(), zi.begin(), zi.end());
  }

  CounterRng rng(params.seed, 0x5C0E);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kDescriptorDim));
  for (auto& w : model.w1) w = rng.normal() * scale;
  for (auto& w : model.w2) w = rng.normal() / std::sqrt(static_cast<double>(params.hidden));

  std::vector<double> theta = model.parameters();
  TrainResult result;
  {
    const std::size_t probe = std::min<std::size_t>(n, 64);
    std::span<const double> zp(z.data(), probe * kDescriptorDim);
    std::span<const double> sp(samples.soft.data(), probe);
    result.grad_check_error = grad_check(
        [&](std::span<const double> p, std::span<double> g) { return scorer_objective(model, p, zp, sp, g); }, theta);
    if (result.grad_check_error > kScorerGradTolerance) {
      throw Error("scorer gradient check failed: relative error " + std::to_string(result.grad_check_error));
    }
  }

  std::vector<double> grad(theta.size());
  double loss = scorer_objective(model, theta, z, samples.soft, grad);
  result.initial_loss = loss;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= params.learning_rate * grad[k];
    loss = scorer_objective(model, theta, z, samples.soft, grad);
    if (!std::isfinite(loss)) throw Error("scorer training diverged");
  }
  model.set_parameters(theta);
  result.final_loss = loss;
  result.model = std::move(model);
  return result;
}

inline TrainResult train_scorer(std::span<const TrainingScene> corpus, const TrainParams& params) {
  return train_scorer(harvest_score_samples(corpus, params.cluster, params.low, params.high), params);
}

}  // namespace pgroup
