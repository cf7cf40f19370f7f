#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pgroup/core.hpp"

namespace pgroup::testing {

/// Random but valid scene: labels in [0, n_classes) (or -1 without scores),
/// stuff class 0, contiguous instance ids, optional score rows.
inline Scene random_scene(std::uint64_t seed, std::size_t n, bool with_scores, int n_classes = 4,
                          float extent = 1.0F) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> coord(0.F, extent);
  std::uniform_int_distribution<int> label(with_scores ? 0 : -1, n_classes - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  Scene s;
  s.n_classes = n_classes;
  s.stuff_classes = {0};
  // Up to two candidate instances per thing class; some stay empty.
  std::vector<int> raw(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    s.coords.push_back({coord(rng), coord(rng), coord(rng)});
    s.colors.push_back({static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                        static_cast<std::uint8_t>(byte(rng))});
    const int lab = label(rng);
    s.sem_labels.push_back(lab);
    if (lab > 0 && rng() % 4 != 0) raw[i] = lab * 2 + static_cast<int>(rng() % 2);
  }
  std::vector<int> remap(static_cast<std::size_t>(2 * n_classes + 2), -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (raw[i] < 0) {
      s.inst_ids.push_back(-1);
      continue;
    }
    auto& m = remap[static_cast<std::size_t>(raw[i])];
    if (m < 0) m = next++;
    s.inst_ids.push_back(m);
  }
  if (with_scores) {
    std::uniform_real_distribution<float> u(0.01F, 1.F);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> row(static_cast<std::size_t>(n_classes));
      float sum = 0.F;
      for (auto& v : row) sum += (v = u(rng));
      auto& mx = row[static_cast<std::size_t>(s.sem_labels[i])];
      mx = 0.F;
      float top = *std::max_element(row.begin(), row.end());
      mx = top + 0.5F;
      sum = 0.F;
      for (auto v : row) sum += v;
      for (auto& v : row) v /= sum;
      s.sem_scores.insert(s.sem_scores.end(), row.begin(), row.end());
    }
  }
  validate_scene(s);
  return s;
}

/// Fresh per-test scratch directory under the system temp directory.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("pgroup_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace pgroup::testing
