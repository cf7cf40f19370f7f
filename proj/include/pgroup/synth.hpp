// Deterministic synthetic rooms: floor and walls as stuff, surface-sampled
// box / cylinder / sphere objects as instances, oracle semantic scores and
// centroid offsets, plus noise models for imperfect predictions.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "pgroup/core.hpp"
#include "pgroup/losses.hpp"
#include "pgroup/parallel.hpp"
#include "pgroup/random.hpp"

namespace pgroup {

inline constexpr ClassId kFloorClass = 0;
inline constexpr ClassId kWallClass = 1;

enum class Primitive { kBox, kCylinder, kSphere };

/// Thing classes cycle through box, cylinder, sphere.
inline Primitive primitive_of(ClassId c) {
  switch ((c - 2) % 3) {
    case 0: return Primitive::kBox;
    case 1: return Primitive::kCylinder;
    default: return Primitive::kSphere;
  }
}

struct GenConfig {
  std::uint64_t seed = 0;
  Vec3d room{4.0, 4.0, 2.0};
  int n_classes = 6;  // 0 floor and 1 wall are stuff, the rest are objects
  std::size_t n_objects = 8;
  std::vector<double> class_weights;  // over thing classes 2..n_classes-1; empty = uniform
  double size_min = 0.25;             // object footprint/height range, meters
  double size_max = 0.6;
  double density = 1.0 / (0.015 * 0.015);  // object surface points per m^2
  double stuff_density = 150.0;            // floor/wall points per m^2
  std::size_t adjacent_pairs = 0;          // same-class box pairs separated by adjacent_gap
  double adjacent_gap = 0.02;
  double gap_min = 0.05;  // every other object pair is at least gap_min apart
  double gap_max = 0.20;  // objects are placed next to an earlier one with a gap in [gap_min, gap_max]
  double wall_margin = 0.15;
  // Noise applied by generate_sample().
  double p_sem = 0.0;
  double temperature = 1.0;
  double sigma0 = 0.0;
  double beta = 0.0;

  int n_thing_classes() const { return n_classes - 2; }

  void validate() const {
    if (n_classes < 3) throw ValidationError("need at least one object class besides floor and wall");
    if (!(room.x > 0 && room.y > 0 && room.z > 0)) throw ValidationError("room extents must be positive");
    if (!(density > 0 && stuff_density > 0)) throw ValidationError("densities must be positive");
    if (!(size_min > 0 && size_max >= size_min)) throw ValidationError("invalid object size range");
    if (!(adjacent_gap >= 0 && gap_min >= 0 && gap_max >= gap_min)) throw ValidationError("invalid gap range");
    if (!(p_sem >= 0 && p_sem <= 1)) throw ValidationError("p_sem must lie in [0,1]");
    if (!(temperature > 0)) throw ValidationError("temperature must be positive");
    if (!(sigma0 >= 0 && beta >= 0)) throw ValidationError("offset noise parameters must be >= 0");
    if (2 * adjacent_pairs > n_objects) throw ValidationError("more adjacent pairs than objects allow");
    if (!class_weights.empty()) {
      if (class_weights.size() != static_cast<std::size_t>(n_thing_classes()))
        throw ValidationError("class_weights must have one entry per object class");
      double sum = 0.0;
      for (double w : class_weights) {
        if (!(w >= 0)) throw ValidationError("class weights must be >= 0");
        sum += w;
      }
      if (!(sum > 0)) throw ValidationError("class weights sum to zero");
    }
    if (adjacent_pairs > 0 && n_classes < 3) throw ValidationError("adjacent pairs need a box class");
  }
};

struct GeneratedScene {
  Scene scene;          // oracle labels, one-hot scores, instance ids
  OffsetField offsets;  // oracle offsets (centroid - p)
};

namespace detail {

// RNG stream ids.
inline constexpr std::uint64_t kLayoutStream = 1;
inline constexpr std::uint64_t kStuffStream = 2;
inline constexpr std::uint64_t kObjectStream = 1000;
inline constexpr std::uint64_t kSemanticStream = 3;
inline constexpr std::uint64_t kOffsetStream = 4;

struct ObjectSpec {
  ClassId class_id = 2;
  Primitive shape = Primitive::kBox;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // footprint
  double height = 0;
};

inline double footprint_gap(const ObjectSpec& a, const ObjectSpec& b) {
  const double gx = std::max({0.0, a.x0 - b.x1, b.x0 - a.x1});
  const double gy = std::max({0.0, a.y0 - b.y1, b.y0 - a.y1});
  return std::hypot(gx, gy);
}

inline ClassId draw_class(const GenConfig& cfg, CounterRng& rng) {
  const int n = cfg.n_thing_classes();
  if (cfg.class_weights.empty()) return 2 + static_cast<ClassId>(rng.below(static_cast<std::uint64_t>(n)));
  double total = 0.0;
  for (double w : cfg.class_weights) total += w;
  double u = rng.uniform() * total;
  for (int k = 0; k < n; ++k) {
    u -= cfg.class_weights[static_cast<std::size_t>(k)];
    if (u < 0.0) return 2 + k;
  }
  return 1 + n;
}

inline ObjectSpec draw_shape(const GenConfig& cfg, ClassId c, CounterRng& rng) {
  ObjectSpec o;
  o.class_id = c;
  o.shape = primitive_of(c);
  double w = rng.uniform(cfg.size_min, cfg.size_max);
  double d = rng.uniform(cfg.size_min, cfg.size_max);
  o.height = rng.uniform(cfg.size_min, cfg.size_max);
  if (o.shape != Primitive::kBox) {
    w = d = std::min(w, d);
    if (o.shape == Primitive::kSphere) o.height = w;
  }
  o.x1 = w;
  o.y1 = d;
  return o;
}

inline void move_to(ObjectSpec& o, double x0, double y0) {
  const double w = o.x1 - o.x0;
  const double d = o.y1 - o.y0;
  o.x0 = x0;
  o.y0 = y0;
  o.x1 = x0 + w;
  o.y1 = y0 + d;
}

/// Places `o` beside `anchor` on a random side with the given gap and a
/// random lateral shift that keeps the footprints facing each other.
inline void place_beside(ObjectSpec& o, const ObjectSpec& anchor, double gap, CounterRng& rng) {
  const double w = o.x1 - o.x0;
  const double d = o.y1 - o.y0;
  const auto side = rng.below(4);
  if (side < 2) {
    const double lo = anchor.y0 - d * 0.5;
    const double hi = anchor.y1 - d * 0.5;
    const double y0 = rng.uniform(lo, hi);
    move_to(o, side == 0 ? anchor.x1 + gap : anchor.x0 - gap - w, y0);
  } else {
    const double lo = anchor.x0 - w * 0.5;
    const double hi = anchor.x1 - w * 0.5;
    const double x0 = rng.uniform(lo, hi);
    move_to(o, x0, side == 2 ? anchor.y1 + gap : anchor.y0 - gap - d);
  }
}

inline bool inside_room(const GenConfig& cfg, const ObjectSpec& o) {
  const double m = cfg.wall_margin;
  return o.x0 >= m && o.y0 >= m && o.x1 <= cfg.room.x - m && o.y1 <= cfg.room.y - m && o.height <= cfg.room.z;
}

inline std::vector<ObjectSpec> layout_objects(const GenConfig& cfg) {
  constexpr int kRetries = 2000;
  CounterRng rng(cfg.seed, kLayoutStream);
  std::vector<ObjectSpec> placed;
  // Pair members may sit closer than gap_min only to their own partner.
  std::vector<std::size_t> partner;
  auto fits = [&](const ObjectSpec& o, std::optional<std::size_t> allowed, double allowed_gap) {
    if (!inside_room(cfg, o)) return false;
    for (std::size_t k = 0; k < placed.size(); ++k) {
      const double g = footprint_gap(o, placed[k]);
      if (allowed && *allowed == k) {
        if (g + 1e-9 < allowed_gap) return false;
      } else if (g < cfg.gap_min) {
        return false;
      }
    }
    return true;
  };
  auto random_spot = [&](ObjectSpec& o) {
    const double w = o.x1 - o.x0;
    const double d = o.y1 - o.y0;
    move_to(o, rng.uniform(cfg.wall_margin, std::max(cfg.wall_margin, cfg.room.x - cfg.wall_margin - w)),
            rng.uniform(cfg.wall_margin, std::max(cfg.wall_margin, cfg.room.y - cfg.wall_margin - d)));
  };
  auto near_spot = [&](ObjectSpec& o) {
    if (placed.empty()) {
      random_spot(o);
      return;
    }
    const auto& anchor = placed[rng.below(placed.size())];
    place_beside(o, anchor, rng.uniform(cfg.gap_min, cfg.gap_max), rng);
  };

  // Box classes available for adjacency pairs.
  std::vector<ClassId> box_classes;
  for (ClassId c = 2; c < cfg.n_classes; ++c) {
    if (primitive_of(c) == Primitive::kBox) box_classes.push_back(c);
  }

  for (std::size_t p = 0; p < cfg.adjacent_pairs; ++p) {
    bool ok = false;
    for (int attempt = 0; attempt < kRetries && !ok; ++attempt) {
      const ClassId c = box_classes[rng.below(box_classes.size())];
      ObjectSpec a = draw_shape(cfg, c, rng);
      ObjectSpec b = draw_shape(cfg, c, rng);
      near_spot(a);
      if (!fits(a, std::nullopt, 0.0)) continue;
      place_beside(b, a, cfg.adjacent_gap, rng);
      placed.push_back(a);
      if (fits(b, placed.size() - 1, cfg.adjacent_gap)) {
        placed.push_back(b);
        ok = true;
      } else {
        placed.pop_back();
      }
    }
    if (!ok) throw Error("cannot place adjacent object pair within room extents");
  }
  while (placed.size() < cfg.n_objects) {
    bool ok = false;
    for (int attempt = 0; attempt < kRetries && !ok; ++attempt) {
      ObjectSpec o = draw_shape(cfg, draw_class(cfg, rng), rng);
      near_spot(o);
      if (fits(o, std::nullopt, 0.0)) {
        placed.push_back(o);
        ok = true;
      }
    }
    if (!ok) throw Error("cannot place object within room extents after bounded retries");
  }
  return placed;
}

inline std::size_t sample_count(double area, double density) {
  return static_cast<std::size_t>(std::llround(area * density));
}

/// Uniform surface samples of one object (no bottom face).
inline std::vector<Vec3f> sample_object(const ObjectSpec& o, double density, CounterRng& rng) {
  std::vector<Vec3f> pts;
  auto push = [&](double x, double y, double z) {
    pts.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)});
  };
  const double w = o.x1 - o.x0;
  const double d = o.y1 - o.y0;
  const double h = o.height;
  switch (o.shape) {
    case Primitive::kBox: {
      for (std::size_t k = sample_count(w * d, density); k-- > 0;)
        push(o.x0 + rng.uniform() * w, o.y0 + rng.uniform() * d, h);
      for (int side = 0; side < 2; ++side) {
        const double x = side == 0 ? o.x0 : o.x1;
        for (std::size_t k = sample_count(d * h, density); k-- > 0;)
          push(x, o.y0 + rng.uniform() * d, rng.uniform() * h);
        const double y = side == 0 ? o.y0 : o.y1;
        for (std::size_t k = sample_count(w * h, density); k-- > 0;)
          push(o.x0 + rng.uniform() * w, y, rng.uniform() * h);
      }
      break;
    }
    case Primitive::kCylinder: {
      const double r = w * 0.5;
      const double cx = o.x0 + r;
      const double cy = o.y0 + r;
      for (std::size_t k = sample_count(2 * std::numbers::pi * r * h, density); k-- > 0;) {
        const double a = rng.uniform() * 2 * std::numbers::pi;
        push(cx + r * std::cos(a), cy + r * std::sin(a), rng.uniform() * h);
      }
      for (std::size_t k = sample_count(std::numbers::pi * r * r, density); k-- > 0;) {
        const double a = rng.uniform() * 2 * std::numbers::pi;
        const double rr = r * std::sqrt(rng.uniform());
        push(cx + rr * std::cos(a), cy + rr * std::sin(a), h);
      }
      break;
    }
    case Primitive::kSphere: {
      const double r = w * 0.5;
      const double cx = o.x0 + r;
      const double cy = o.y0 + r;
      for (std::size_t k = sample_count(4 * std::numbers::pi * r * r, density); k-- > 0;) {
        // Archimedes: uniform z and azimuth give a uniform sphere sample.
        const double z = rng.uniform(-1.0, 1.0);
        const double a = rng.uniform() * 2 * std::numbers::pi;
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        push(cx + r * s * std::cos(a), cy + r * s * std::sin(a), r + r * z);
      }
      break;
    }
  }
  return pts;
}

inline Color class_color(ClassId c, CounterRng& rng) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(c) + 17);
  auto jitter = [&](std::uint64_t v) {
    const int j = static_cast<int>(v & 0xFF) + static_cast<int>(rng.below(21)) - 10;
    return static_cast<std::uint8_t>(std::clamp(j, 0, 255));
  };
  return {jitter(h), jitter(h >> 8), jitter(h >> 16)};
}

}  // namespace detail

/// Builds a scene with oracle semantics and offsets. Deterministic in
/// config.seed; objects are generated in parallel and concatenated in order.
inline GeneratedScene generate_scene(const GenConfig& cfg) {
  cfg.validate();
  const auto objects = detail::layout_objects(cfg);

  std::vector<std::vector<Vec3f>> obj_points(objects.size());
  std::vector<std::vector<Color>> obj_colors(objects.size());
  parallel_for(
      objects.size(),
      [&](std::size_t k) {
        CounterRng rng(cfg.seed, detail::kObjectStream + k);
        obj_points[k] = detail::sample_object(objects[k], cfg.density, rng);
        obj_colors[k].reserve(obj_points[k].size());
        for (std::size_t i = 0; i < obj_points[k].size(); ++i)
          obj_colors[k].push_back(detail::class_color(objects[k].class_id, rng));
      },
      1);

  Scene s;
  s.n_classes = cfg.n_classes;
  s.stuff_classes = {kFloorClass, kWallClass};
  for (std::size_t k = 0; k < objects.size(); ++k) {
    for (std::size_t i = 0; i < obj_points[k].size(); ++i) {
      s.coords.push_back(obj_points[k][i]);
      s.colors.push_back(obj_colors[k][i]);
      s.sem_labels.push_back(objects[k].class_id);
      s.inst_ids.push_back(static_cast<std::int32_t>(k));
    }
  }

  CounterRng rng(cfg.seed, detail::kStuffStream);
  auto add_stuff = [&](ClassId c, double x, double y, double z) {
    s.coords.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)});
    s.colors.push_back(detail::class_color(c, rng));
    s.sem_labels.push_back(c);
    s.inst_ids.push_back(kNoInstance);
  };
  const auto& room = cfg.room;
  for (std::size_t k = detail::sample_count(room.x * room.y, cfg.stuff_density); k-- > 0;)
    add_stuff(kFloorClass, rng.uniform() * room.x, rng.uniform() * room.y, 0.0);
  for (int side = 0; side < 2; ++side) {
    for (std::size_t k = detail::sample_count(room.y * room.z, cfg.stuff_density); k-- > 0;)
      add_stuff(kWallClass, side == 0 ? 0.0 : room.x, rng.uniform() * room.y, rng.uniform() * room.z);
    for (std::size_t k = detail::sample_count(room.x * room.z, cfg.stuff_density); k-- > 0;)
      add_stuff(kWallClass, rng.uniform() * room.x, side == 0 ? 0.0 : room.y, rng.uniform() * room.z);
  }

  const std::size_t n = s.coords.size();
  s.sem_scores.assign(n * static_cast<std::size_t>(cfg.n_classes), 0.F);
  for (std::size_t i = 0; i < n; ++i)
    s.sem_scores[i * static_cast<std::size_t>(cfg.n_classes) + static_cast<std::size_t>(s.sem_labels[i])] = 1.F;

  validate_scene(s);
  GeneratedScene out;
  out.offsets = offset_targets(s);
  out.scene = std::move(s);
  return out;
}

/// Flips each object-class point to a different random object class with
/// probability p_sem, then rebuilds soft scores whose arg-max is the
/// (possibly flipped) label. Instance ids of the result are cleared.
inline Scene perturb_semantics(const Scene& scene, double p_sem, double temperature, std::uint64_t seed) {
  if (!(p_sem >= 0.0 && p_sem <= 1.0)) throw ValidationError("p_sem must lie in [0,1]");
  if (p_sem == 0.0) return scene;
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  std::vector<ClassId> things;
  for (ClassId c = 0; c < scene.n_classes; ++c) {
    if (!scene.is_stuff(c)) things.push_back(c);
  }
  if (things.size() < 2) throw ValidationError("label flips need at least two object classes");

  Scene out = scene;
  std::fill(out.inst_ids.begin(), out.inst_ids.end(), kNoInstance);
  out.sem_scores.assign(scene.n_points() * static_cast<std::size_t>(scene.n_classes), 0.F);
  const auto nc = static_cast<std::size_t>(scene.n_classes);
  parallel_chunks(scene.n_points(), [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> logit(nc);
    for (std::size_t i = b; i < e; ++i) {
      CounterRng rng(seed, (detail::kSemanticStream << 40) + i);
      ClassId lab = scene.sem_labels[i];
      if (scene.is_thing(lab) && rng.uniform() < p_sem) {
        const auto pick = rng.below(things.size() - 1);
        ClassId other = things[pick];
        if (other >= lab) other = things[pick + 1];
        lab = other;
      }
      out.sem_labels[i] = lab;
      if (lab == kUnlabeled) {
        throw ValidationError("perturb_semantics requires every point to be labelled");
      }
      double top = -INFINITY;
      for (std::size_t c = 0; c < nc; ++c) {
        logit[c] = rng.normal();
        top = std::max(top, logit[c]);
      }
      const double peak = top + 1.0;
      logit[static_cast<std::size_t>(lab)] = peak;
      double z = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        logit[c] = std::exp((logit[c] - peak) / temperature);
        z += logit[c];
      }
      for (std::size_t c = 0; c < nc; ++c) out.sem_scores[i * nc + c] = static_cast<float>(logit[c] / z);
    }
  });
  validate_scene(out);
  return out;
}

/// Adds zero-mean Gaussian noise with stdev sigma0 * (1 + beta * d_i) per
/// component to instance points, d_i being the distance to the instance
/// centroid. Stuff points are untouched.
inline OffsetField perturb_offsets(const OffsetField& offsets, const Scene& scene, double sigma0, double beta,
                                   std::uint64_t seed) {
  if (!(sigma0 >= 0.0) || !(beta >= 0.0)) throw ValidationError("noise parameters must be >= 0");
  validate_offsets(offsets, scene.n_points());
  if (sigma0 == 0.0) return offsets;
  const auto sup = offset_supervision(scene);
  OffsetField out = offsets;
  parallel_for(scene.n_points(), [&](std::size_t i) {
    if (!sup.mask[i]) return;
    CounterRng rng(seed, (detail::kOffsetStream << 40) + i);
    const double sd = sigma0 * (1.0 + beta * norm(sup.target[i]));
    auto& o = out.offsets[i];
    o.x = static_cast<float>(o.x + sd * rng.normal());
    o.y = static_cast<float>(o.y + sd * rng.normal());
    o.z = static_cast<float>(o.z + sd * rng.normal());
  });
  return out;
}

/// A generated scene with the configured noise applied: the scene the
/// pipeline sees, its offsets, and the clean ground-truth scene.
struct SyntheticSample {
  Scene scene;
  OffsetField offsets;
  Scene ground_truth;
};

inline SyntheticSample generate_sample(const GenConfig& cfg) {
  auto gen = generate_scene(cfg);
  SyntheticSample s;
  s.scene = perturb_semantics(gen.scene, cfg.p_sem, cfg.temperature, splitmix64(cfg.seed) ^ 0xA5A5);
  s.offsets = perturb_offsets(gen.offsets, gen.scene, cfg.sigma0, cfg.beta, splitmix64(cfg.seed) ^ 0x5A5A);
  s.ground_truth = std::move(gen.scene);
  return s;
}

}  // namespace pgroup
