// Domain types shared by every pgroup module: scenes, offset fields,
// clusters and instance masks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgroup {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A violated precondition or a malformed input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

using PointIndex = std::uint32_t;
using ClassId = std::int32_t;

inline constexpr ClassId kUnlabeled = -1;
inline constexpr std::int32_t kNoInstance = -1;

struct Vec3f {
  float x = 0.F, y = 0.F, z = 0.F;

  friend bool operator==(const Vec3f&, const Vec3f&) = default;
};

struct Vec3d {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3d& operator+=(const Vec3d& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  friend Vec3d operator+(Vec3d a, const Vec3d& b) { return a += b; }
  friend Vec3d operator-(const Vec3d& a, const Vec3d& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend Vec3d operator*(const Vec3d& a, double s) {
    return {a.x * s, a.y * s, a.z * s};
  }
  friend bool operator==(const Vec3d&, const Vec3d&) = default;
};

inline Vec3d to_double(const Vec3f& v) { return {v.x, v.y, v.z}; }
inline Vec3f to_float(const Vec3d& v) {
  return {static_cast<float>(v.x), static_cast<float>(v.y),
          static_cast<float>(v.z)};
}
inline double dot(const Vec3d& a, const Vec3d& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline double norm(const Vec3d& v) { return std::sqrt(dot(v, v)); }
inline bool is_finite(const Vec3f& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

using Color = std::array<std::uint8_t, 3>;

/// A labelled point cloud. Semantic scores are stored row-major
/// (n_points x n_classes) and are either empty or complete.
struct Scene {
  int n_classes = 0;
  std::vector<Vec3f> coords;
  std::vector<Color> colors;
  std::vector<float> sem_scores;
  std::vector<ClassId> sem_labels;
  std::vector<std::int32_t> inst_ids;
  std::vector<ClassId> stuff_classes;  // sorted, unique

  std::size_t n_points() const { return coords.size(); }
  bool has_scores() const { return !sem_scores.empty(); }
  float score(std::size_t point, ClassId c) const {
    return sem_scores[point * static_cast<std::size_t>(n_classes) +
                      static_cast<std::size_t>(c)];
  }
  std::span<const float> scores_of(std::size_t point) const {
    return {sem_scores.data() + point * static_cast<std::size_t>(n_classes),
            static_cast<std::size_t>(n_classes)};
  }
  bool is_stuff(ClassId c) const {
    return std::binary_search(stuff_classes.begin(), stuff_classes.end(), c);
  }
  /// True when the label can take part in clustering.
  bool is_thing(ClassId c) const { return c != kUnlabeled && !is_stuff(c); }
  std::int32_t n_instances() const {
    std::int32_t m = 0;
    for (auto id : inst_ids) m = std::max(m, id + 1);
    return m;
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct OffsetField {
  std::vector<Vec3f> offsets;

  std::size_t size() const { return offsets.size(); }
  friend bool operator==(const OffsetField&, const OffsetField&) = default;
};

enum class ClusterSource : std::uint8_t { kOriginal = 0, kShifted = 1 };

inline const char* to_string(ClusterSource s) {
  return s == ClusterSource::kOriginal ? "original" : "shifted";
}

struct Cluster {
  std::vector<PointIndex> point_idx;  // sorted, unique
  ClassId class_id = kUnlabeled;
  ClusterSource source = ClusterSource::kOriginal;

  std::size_t size() const { return point_idx.size(); }
  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct InstancePrediction {
  std::vector<PointIndex> point_idx;  // sorted, unique
  ClassId class_id = kUnlabeled;
  double score = 0.0;

  friend bool operator==(const InstancePrediction&,
                         const InstancePrediction&) = default;
};

struct GroundTruthInstance {
  std::vector<PointIndex> point_idx;  // sorted, unique
  ClassId class_id = kUnlabeled;
};

/// Ground-truth instances of a scene plus the point -> instance lookup.
struct GroundTruth {
  std::vector<GroundTruthInstance> instances;
  std::vector<std::int32_t> instance_of_point;
};

/// Arg-max class of one score row; ties go to the lowest class id.
inline ClassId argmax_class(std::span<const float> row) {
  ClassId best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[static_cast<std::size_t>(best)]) best = static_cast<ClassId>(c);
  }
  return best;
}

/// Checks every Scene invariant; throws ValidationError naming the point
/// (0-based) that violates it. `line_offset` converts point indices into
/// file line numbers for loader diagnostics (0 disables line numbers).
inline void validate_scene(const Scene& s, std::size_t line_offset = 0) {
  auto where = [&](std::size_t i) {
    return line_offset == 0 ? "point " + std::to_string(i)
                            : "line " + std::to_string(i + line_offset);
  };
  const std::size_t n = s.coords.size();
  if (s.n_classes < 1) throw ValidationError("n_classes must be >= 1");
  if (s.colors.size() != n || s.sem_labels.size() != n || s.inst_ids.size() != n) {
    throw ValidationError("per-point field length mismatch");
  }
  if (!s.sem_scores.empty() &&
      s.sem_scores.size() != n * static_cast<std::size_t>(s.n_classes)) {
    throw ValidationError("semantic score table has wrong size");
  }
  for (std::size_t k = 0; k < s.stuff_classes.size(); ++k) {
    const ClassId c = s.stuff_classes[k];
    if (c < 0 || c >= s.n_classes) throw ValidationError("stuff class out of range");
    if (k > 0 && s.stuff_classes[k - 1] >= c) {
      throw ValidationError("stuff classes must be sorted and unique");
    }
  }
  std::vector<ClassId> inst_label;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(s.coords[i])) throw ValidationError(where(i) + ": non-finite coordinate");
    const ClassId lab = s.sem_labels[i];
    if (lab < kUnlabeled || lab >= s.n_classes) {
      throw ValidationError(where(i) + ": semantic label out of range");
    }
    const std::int32_t inst = s.inst_ids[i];
    if (inst < kNoInstance) throw ValidationError(where(i) + ": instance id below -1");
    if (inst >= 0) {
      if (!s.is_thing(lab)) {
        throw ValidationError(where(i) + ": instance point with stuff or unlabeled class");
      }
      const auto u = static_cast<std::size_t>(inst);
      if (inst_label.size() <= u) inst_label.resize(u + 1, kUnlabeled);
      if (inst_label[u] == kUnlabeled) {
        inst_label[u] = lab;
      } else if (inst_label[u] != lab) {
        throw ValidationError(where(i) + ": instance label inconsistency");
      }
    }
    if (s.has_scores()) {
      double sum = 0.0;
      for (float p : s.scores_of(i)) {
        if (!std::isfinite(p) || p < 0.F) {
          throw ValidationError(where(i) + ": negative or non-finite semantic score");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-5) {
        throw ValidationError(where(i) + ": semantic scores do not sum to 1");
      }
      if (argmax_class(s.scores_of(i)) != lab) {
        throw ValidationError(where(i) + ": semantic label is not the score arg-max");
      }
    }
  }
  for (std::size_t j = 0; j < inst_label.size(); ++j) {
    if (inst_label[j] == kUnlabeled) {
      throw ValidationError("instance ids are not contiguous: id " + std::to_string(j) +
                            " is missing");
    }
  }
}

inline void validate_offsets(const OffsetField& o, std::size_t n_points) {
  if (o.offsets.size() != n_points) {
    throw ValidationError("offset field length " + std::to_string(o.offsets.size()) +
                          " does not match scene size " + std::to_string(n_points));
  }
  for (std::size_t i = 0; i < o.offsets.size(); ++i) {
    if (!is_finite(o.offsets[i])) {
      throw ValidationError("point " + std::to_string(i) + ": non-finite offset");
    }
  }
}

/// Q = P + O, evaluated in 32-bit like the stored coordinates.
inline std::vector<Vec3f> shifted_coords(const Scene& scene, const OffsetField& offsets) {
  validate_offsets(offsets, scene.n_points());
  std::vector<Vec3f> q(scene.n_points());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& p = scene.coords[i];
    const auto& o = offsets.offsets[i];
    q[i] = {p.x + o.x, p.y + o.y, p.z + o.z};
  }
  return q;
}

inline GroundTruth ground_truth(const Scene& scene) {
  GroundTruth gt;
  gt.instances.resize(static_cast<std::size_t>(scene.n_instances()));
  gt.instance_of_point = scene.inst_ids;
  for (std::size_t i = 0; i < scene.n_points(); ++i) {
    const auto id = scene.inst_ids[i];
    if (id < 0) continue;
    auto& inst = gt.instances[static_cast<std::size_t>(id)];
    inst.point_idx.push_back(static_cast<PointIndex>(i));
    inst.class_id = scene.sem_labels[i];
  }
  return gt;
}

}  // namespace pgroup
