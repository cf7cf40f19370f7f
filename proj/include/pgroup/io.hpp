// Text formats: scenes (.sc1), offset fields (.off1), predictions (.pred1)
// and ASCII PLY export. Numbers are written with std::to_chars shortest
// round-trip representation.
#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pgroup/core.hpp"

namespace pgroup {

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

namespace detail {

template <typename T>
void append_number(std::string& out, T value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

/// Reads whitespace-separated tokens from one line of a text file.
class LineReader {
 public:
  LineReader(std::string_view text, std::string path) : text_(text), path_(std::move(path)) {}

  /// Advances to the next line; false at end of input.
  bool next_line() {
    if (pos_ >= text_.size()) return false;
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    line_ = text_.substr(pos_, end - pos_);
    if (!line_.empty() && line_.back() == '\r') line_.remove_suffix(1);
    pos_ = end + 1;
    cursor_ = 0;
    ++line_no_;
    return true;
  }

  void require_line(const char* what) {
    if (!next_line()) fail(std::string("unexpected end of file, expected ") + what);
  }

  std::string_view token(const char* what) {
    while (cursor_ < line_.size() && (line_[cursor_] == ' ' || line_[cursor_] == '\t')) ++cursor_;
    if (cursor_ >= line_.size()) fail(std::string("missing field: ") + what);
    const auto start = cursor_;
    while (cursor_ < line_.size() && line_[cursor_] != ' ' && line_[cursor_] != '\t') ++cursor_;
    return line_.substr(start, cursor_ - start);
  }

  template <typename T>
  T number(const char* what) {
    const auto tok = token(what);
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail("bad value for " + std::string(what) + ": '" + std::string(tok) + "'");
    }
    return value;
  }

  void expect_keyword(std::string_view kw) {
    if (token("header keyword") != kw) fail("malformed header, expected '" + std::string(kw) + "'");
  }

  void expect_end_of_line() {
    while (cursor_ < line_.size() && (line_[cursor_] == ' ' || line_[cursor_] == '\t')) ++cursor_;
    if (cursor_ != line_.size()) fail("field count mismatch: trailing fields");
  }

  void expect_end_of_file() {
    while (next_line()) {
      if (line_.find_first_not_of(" \t") != std::string_view::npos) fail("unexpected trailing content");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::string path_;
  std::string_view line_;
  std::size_t pos_ = 0;
  std::size_t cursor_ = 0;
  std::size_t line_no_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("I/O failure writing " + path);
}

}  // namespace detail

// ---------------------------------------------------------------- scenes

inline Scene parse_scene(std::string_view text, const std::string& path = "<scene>") {
  detail::LineReader r(text, path);
  Scene s;
  r.require_line("SC1 header");
  r.expect_keyword("SC1");
  const auto n = r.number<std::size_t>("n_points");
  s.n_classes = r.number<int>("n_classes");
  r.expect_end_of_line();
  if (s.n_classes < 1) r.fail("n_classes must be >= 1");

  r.require_line("STUFF line");
  r.expect_keyword("STUFF");
  const auto k = r.number<std::size_t>("stuff count");
  for (std::size_t j = 0; j < k; ++j) s.stuff_classes.push_back(r.number<ClassId>("stuff class"));
  r.expect_end_of_line();
  std::vector<ClassId> sorted = s.stuff_classes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) r.fail("duplicate stuff class");
  for (auto c : sorted) {
    if (c < 0 || c >= s.n_classes) r.fail("stuff class out of range");
  }
  s.stuff_classes = std::move(sorted);

  r.require_line("SCORES line");
  r.expect_keyword("SCORES");
  const int has_scores = r.number<int>("scores flag");
  r.expect_end_of_line();
  if (has_scores != 0 && has_scores != 1) r.fail("SCORES flag must be 0 or 1");

  const std::size_t header_lines = r.line_no();
  s.coords.resize(n);
  s.colors.resize(n);
  s.sem_labels.resize(n);
  s.inst_ids.resize(n);
  if (has_scores) s.sem_scores.resize(n * static_cast<std::size_t>(s.n_classes));
  for (std::size_t i = 0; i < n; ++i) {
    r.require_line("point record");
    auto& p = s.coords[i];
    p.x = r.number<float>("x");
    p.y = r.number<float>("y");
    p.z = r.number<float>("z");
    for (auto& ch : s.colors[i]) {
      const int v = r.number<int>("color");
      if (v < 0 || v > 255) r.fail("color component out of range 0-255");
      ch = static_cast<std::uint8_t>(v);
    }
    s.sem_labels[i] = r.number<ClassId>("sem");
    s.inst_ids[i] = r.number<std::int32_t>("inst");
    if (has_scores) {
      for (int c = 0; c < s.n_classes; ++c) {
        s.sem_scores[i * static_cast<std::size_t>(s.n_classes) + static_cast<std::size_t>(c)] =
            r.number<float>("probability");
      }
    }
    r.expect_end_of_line();
  }
  r.expect_end_of_file();
  try {
    validate_scene(s, header_lines + 1);
  } catch (const ValidationError& e) {
    throw ParseError(path + ":" + e.what());
  }
  return s;
}

inline Scene load_scene(const std::string& path) { return parse_scene(detail::read_file(path), path); }

inline std::string format_scene(const Scene& s) {
  validate_scene(s);
  std::string out;
  out.reserve(s.n_points() * (48 + 10 * static_cast<std::size_t>(s.has_scores() ? s.n_classes : 0)));
  out += "SC1 ";
  detail::append_number(out, s.n_points());
  out += ' ';
  detail::append_number(out, s.n_classes);
  out += "\nSTUFF ";
  detail::append_number(out, s.stuff_classes.size());
  for (auto c : s.stuff_classes) {
    out += ' ';
    detail::append_number(out, c);
  }
  out += s.has_scores() ? "\nSCORES 1\n" : "\nSCORES 0\n";
  for (std::size_t i = 0; i < s.n_points(); ++i) {
    const auto& p = s.coords[i];
    detail::append_number(out, p.x);
    out += ' ';
    detail::append_number(out, p.y);
    out += ' ';
    detail::append_number(out, p.z);
    for (auto ch : s.colors[i]) {
      out += ' ';
      detail::append_number(out, static_cast<int>(ch));
    }
    out += ' ';
    detail::append_number(out, s.sem_labels[i]);
    out += ' ';
    detail::append_number(out, s.inst_ids[i]);
    if (s.has_scores()) {
      for (float v : s.scores_of(i)) {
        out += ' ';
        detail::append_number(out, v);
      }
    }
    out += '\n';
  }
  return out;
}

inline void save_scene(const Scene& s, const std::string& path) { detail::write_file(path, format_scene(s)); }

// --------------------------------------------------------------- offsets

inline OffsetField parse_offsets(std::string_view text, const std::string& path = "<offsets>") {
  detail::LineReader r(text, path);
  r.require_line("OFF1 header");
  r.expect_keyword("OFF1");
  const auto n = r.number<std::size_t>("n_points");
  r.expect_end_of_line();
  OffsetField f;
  f.offsets.resize(n);
  for (auto& o : f.offsets) {
    r.require_line("offset record");
    o.x = r.number<float>("dx");
    o.y = r.number<float>("dy");
    o.z = r.number<float>("dz");
    r.expect_end_of_line();
    if (!is_finite(o)) r.fail("non-finite offset");
  }
  r.expect_end_of_file();
  return f;
}

inline OffsetField load_offsets(const std::string& path) {
  return parse_offsets(detail::read_file(path), path);
}

inline std::string format_offsets(const OffsetField& f) {
  std::string out = "OFF1 ";
  detail::append_number(out, f.size());
  out += '\n';
  for (const auto& o : f.offsets) {
    detail::append_number(out, o.x);
    out += ' ';
    detail::append_number(out, o.y);
    out += ' ';
    detail::append_number(out, o.z);
    out += '\n';
  }
  return out;
}

inline void save_offsets(const OffsetField& f, const std::string& path) {
  detail::write_file(path, format_offsets(f));
}

// ----------------------------------------------------------- predictions

inline std::vector<InstancePrediction> parse_predictions(std::string_view text,
                                                         const std::string& path = "<predictions>") {
  detail::LineReader r(text, path);
  r.require_line("PRED1 header");
  r.expect_keyword("PRED1");
  const auto m = r.number<std::size_t>("prediction count");
  r.expect_end_of_line();
  std::vector<InstancePrediction> preds(m);
  for (auto& p : preds) {
    r.require_line("prediction header");
    p.class_id = r.number<ClassId>("class");
    p.score = r.number<double>("score");
    const auto n = r.number<std::size_t>("point count");
    r.expect_end_of_line();
    if (!(p.score >= 0.0 && p.score <= 1.0)) r.fail("score must be in [0,1]");
    if (n == 0) r.fail("empty prediction");
    r.require_line("prediction point list");
    p.point_idx.resize(n);
    for (auto& idx : p.point_idx) idx = r.number<PointIndex>("point index");
    r.expect_end_of_line();
    if (!std::is_sorted(p.point_idx.begin(), p.point_idx.end()) ||
        std::adjacent_find(p.point_idx.begin(), p.point_idx.end()) != p.point_idx.end()) {
      r.fail("point indices must be sorted and unique");
    }
  }
  r.expect_end_of_file();
  return preds;
}

inline std::vector<InstancePrediction> load_predictions(const std::string& path) {
  return parse_predictions(detail::read_file(path), path);
}

inline std::string format_predictions(const std::vector<InstancePrediction>& preds) {
  std::string out = "PRED1 ";
  detail::append_number(out, preds.size());
  out += '\n';
  for (const auto& p : preds) {
    detail::append_number(out, p.class_id);
    out += ' ';
    detail::append_number(out, p.score);
    out += ' ';
    detail::append_number(out, p.point_idx.size());
    out += '\n';
    for (std::size_t k = 0; k < p.point_idx.size(); ++k) {
      if (k > 0) out += ' ';
      detail::append_number(out, p.point_idx[k]);
    }
    out += '\n';
  }
  return out;
}

inline void save_predictions(const std::vector<InstancePrediction>& preds, const std::string& path) {
  detail::write_file(path, format_predictions(preds));
}

// -------------------------------------------------------------------- PLY

inline constexpr Color kUnassignedColor{128, 128, 128};

/// Deterministic, well-spread color for prediction `k`; never the gray
/// used for unassigned points.
inline Color palette_color(std::size_t k) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL * (k + 1);
  h ^= h >> 29;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 32;
  Color c{static_cast<std::uint8_t>(h & 0xFF), static_cast<std::uint8_t>((h >> 8) & 0xFF),
          static_cast<std::uint8_t>((h >> 16) & 0xFF)};
  if (c == kUnassignedColor) c[0] = 0;
  return c;
}

/// Points covered by several predictions take the color of the first one.
inline std::string format_ply(const Scene& scene, const std::vector<InstancePrediction>& preds) {
  std::vector<Color> color(scene.n_points(), kUnassignedColor);
  std::vector<bool> painted(scene.n_points(), false);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Color c = palette_color(k);
    for (auto idx : preds[k].point_idx) {
      if (idx >= scene.n_points()) {
        throw ValidationError("prediction " + std::to_string(k) + " references point " +
                              std::to_string(idx) + " beyond scene size");
      }
      if (!painted[idx]) {
        color[idx] = c;
        painted[idx] = true;
      }
    }
  }
  std::string out =
      "ply\nformat ascii 1.0\nelement vertex " + std::to_string(scene.n_points()) +
      "\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < scene.n_points(); ++i) {
    const auto& p = scene.coords[i];
    detail::append_number(out, p.x);
    out += ' ';
    detail::append_number(out, p.y);
    out += ' ';
    detail::append_number(out, p.z);
    for (auto ch : color[i]) {
      out += ' ';
      detail::append_number(out, static_cast<int>(ch));
    }
    out += '\n';
  }
  return out;
}

inline void export_ply(const Scene& scene, const std::vector<InstancePrediction>& preds,
                       const std::string& path) {
  detail::write_file(path, format_ply(scene, preds));
}

}  // namespace pgroup
