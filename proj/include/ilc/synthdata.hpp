// Synthetic shapes dataset: colored discs, squares and triangles scattered on
// a noisy background, with exact ground truth emitted alongside the images —
// raw per-category counts, instance center points, per-instance binary masks
// and a train/test split manifest. Also ingests external count-annotation
// files into the label domain (counts clamped into the subitizing range).
//
// Dataset layout under a root directory:
//   images/<id>.ppm       rendered images
//   categories.txt        one category name per line (fixes category order)
//   counts.txt            header "categories <names...>", then "<id> <c0> <c1> ..."
//   points.txt            instance centers, image-pixel coordinates
//   masks.rle             per-instance binary masks (mask-archive format)
//   splits.txt            "<id> train|test"
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/datamodel.hpp"
#include "ilc/io.hpp"

namespace ilc::synth {

struct GenConfig {
  int num_images = 100;
  int image_size = 64;
  std::vector<std::string> categories = {"disc", "square", "triangle"};
  double p_zero = 0.3;     // probability a category is absent from an image
  double p_beyond = 0.15;  // probability of a count in 5..max_count
  int max_count = 8;       // inclusive upper bound on raw counts
  double occlusion_rate = 0.3;  // allowed pairwise bounding-box overlap
  int min_radius = 4;
  int max_radius = 7;
  double train_fraction = 0.8;
  uint64_t seed = 1;
};

struct GenSummary {
  int num_images = 0;
  int train_images = 0;
  int test_images = 0;
  std::vector<long long> instances_per_category;
};

namespace detail {

// splitmix64 finalizer: decorrelates per-image seeds derived from one base.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline bool inside_shape(const std::string& kind, double dy, double dx,
                         double r) {
  if (kind == "disc") return dy * dy + dx * dx <= r * r;
  if (kind == "square") return std::max(std::abs(dy), std::abs(dx)) <= r;
  // triangle: apex at the top, base at the bottom
  return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
}

struct Placement {
  int cy = 0, cx = 0, r = 0;
};

inline double box_overlap(const Placement& a, const Placement& b) {
  const double ax0 = a.cx - a.r, ax1 = a.cx + a.r, ay0 = a.cy - a.r,
               ay1 = a.cy + a.r;
  const double bx0 = b.cx - b.r, bx1 = b.cx + b.r, by0 = b.cy - b.r,
               by1 = b.cy + b.r;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double amin = std::min((ax1 - ax0) * (ay1 - ay0), (bx1 - bx0) * (by1 - by0));
  return amin > 0.0 ? inter / amin : 0.0;
}

// Saturated base colors, one per category slot (cycled if more categories).
inline std::array<double, 3> base_color(size_t category) {
  static const std::array<std::array<double, 3>, 3> palette = {
      {{0.85, 0.15, 0.15}, {0.10, 0.70, 0.15}, {0.15, 0.20, 0.85}}};
  return palette[category % palette.size()];
}

}  // namespace detail

inline void validate(const GenConfig& cfg) {
  check(cfg.num_images >= 1, "gen: num_images must be >= 1");
  check(!cfg.categories.empty(), "gen: need at least one category");
  for (const auto& c : cfg.categories)
    check(c == "disc" || c == "square" || c == "triangle",
          "gen: unknown shape type '" + c + "' (disc|square|triangle)");
  check(cfg.image_size >= 16, "gen: image_size must be >= 16");
  check(cfg.min_radius >= 2 && cfg.max_radius >= cfg.min_radius,
        "gen: bad radius range");
  check(2 * cfg.max_radius + 2 < cfg.image_size,
        "gen: shapes larger than image (reduce max_radius or grow image_size)");
  check(cfg.p_zero >= 0.0 && cfg.p_beyond >= 0.0 &&
            cfg.p_zero + cfg.p_beyond <= 1.0,
        "gen: count distribution probabilities out of range");
  check(cfg.max_count > 4, "gen: max_count must exceed 4");
  check(cfg.occlusion_rate >= 0.0 && cfg.occlusion_rate <= 1.0,
        "gen: occlusion_rate must be in [0,1]");
  check(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0,
        "gen: train_fraction must be in (0,1)");
}

inline GenSummary generate(const GenConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");

  const int s = cfg.image_size;
  const size_t n_cat = cfg.categories.size();
  GenSummary summary;
  summary.num_images = cfg.num_images;
  summary.instances_per_category.assign(n_cat, 0);
  summary.train_images = static_cast<int>(
      std::lround(cfg.train_fraction * cfg.num_images));
  summary.train_images = std::max(1, std::min(cfg.num_images - 1,
                                              summary.train_images));
  if (cfg.num_images == 1) summary.train_images = 1;
  summary.test_images = cfg.num_images - summary.train_images;

  std::ostringstream counts_os, splits_os;
  counts_os << "categories";
  for (const auto& c : cfg.categories) counts_os << " " << c;
  counts_os << "\n";
  std::vector<io::PointRecord> points;
  std::vector<io::MaskRecord> masks;

  for (int idx = 0; idx < cfg.num_images; ++idx) {
    Rng rng(detail::derive_seed(cfg.seed, static_cast<uint64_t>(idx)));
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "img_%05d", idx);
    const std::string id = id_buf;

    // Raw counts per category.
    std::vector<int> counts(n_cat, 0);
    for (size_t c = 0; c < n_cat; ++c) {
      const double u = rng.uniform();
      if (u < cfg.p_zero)
        counts[c] = 0;
      else if (u < cfg.p_zero + cfg.p_beyond)
        counts[c] = rng.uniform_int(5, cfg.max_count);
      else
        counts[c] = rng.uniform_int(1, 4);
    }

    Tensor3 img(3, s, s, 0.9);
    std::vector<detail::Placement> placed;
    for (size_t c = 0; c < n_cat; ++c) {
      const auto base = detail::base_color(c);
      for (int inst = 0; inst < counts[c]; ++inst) {
        detail::Placement p;
        p.r = rng.uniform_int(cfg.min_radius, cfg.max_radius);
        const int lo = p.r + 1, hi = s - p.r - 2;
        for (int attempt = 0;; ++attempt) {
          p.cy = rng.uniform_int(lo, hi);
          p.cx = rng.uniform_int(lo, hi);
          bool ok = true;
          for (const auto& q : placed)
            if (detail::box_overlap(p, q) > cfg.occlusion_rate) {
              ok = false;
              break;
            }
          if (ok || attempt >= 50) break;  // soft cap: place anyway after retries
        }
        placed.push_back(p);
        summary.instances_per_category[c] += 1;

        double color[3];
        for (int ch = 0; ch < 3; ++ch)
          color[ch] = base[ch] + rng.uniform(-0.12, 0.12);

        Grid mask(s, s);
        for (int i = p.cy - p.r; i <= p.cy + p.r; ++i)
          for (int j = p.cx - p.r; j <= p.cx + p.r; ++j) {
            if (i < 0 || i >= s || j < 0 || j >= s) continue;
            if (!detail::inside_shape(cfg.categories[c], i - p.cy, j - p.cx,
                                      p.r))
              continue;
            mask.at(i, j) = 1.0;
            for (int ch = 0; ch < 3; ++ch) img.at(ch, i, j) = color[ch];
          }

        io::MaskRecord mr;
        mr.image_id = id;
        mr.category = static_cast<int>(c);
        mr.instance = inst;
        mr.score = 1.0;
        mr.mask = std::move(mask);
        masks.push_back(std::move(mr));
        points.push_back({id, static_cast<int>(c), static_cast<double>(p.cy),
                          static_cast<double>(p.cx)});
      }
    }

    // Mild pixel noise over everything, then clamp on write.
    for (auto& v : img.v) v += rng.normal(0.0, 0.02);
    io::write_ppm((fs::path(out_dir) / "images" / (id + ".ppm")).string(), img);

    counts_os << id;
    for (size_t c = 0; c < n_cat; ++c) counts_os << " " << counts[c];
    counts_os << "\n";
    splits_os << id << " " << (idx < summary.train_images ? "train" : "test")
              << "\n";
  }

  std::ostringstream cat_os;
  for (const auto& c : cfg.categories) cat_os << c << "\n";
  io::write_text((fs::path(out_dir) / "categories.txt").string(), cat_os.str());
  io::write_text((fs::path(out_dir) / "counts.txt").string(), counts_os.str());
  io::write_text((fs::path(out_dir) / "splits.txt").string(), splits_os.str());
  io::write_points((fs::path(out_dir) / "points.txt").string(), points);
  io::write_mask_archive((fs::path(out_dir) / "masks.rle").string(), masks);
  return summary;
}

// ---- annotation ingestion ------------------------------------------------------

struct AnnotationRow {
  std::string image_id;
  std::vector<long long> raw_counts;
  int line = 0;  // 1-based line number in the source file
};

// Parses an annotation file: optional "categories <names...>" header (names
// must then match `categories` exactly), then one row per image with C
// integer raw counts. Malformed rows are reported with their line numbers;
// duplicate ids name both lines.
inline std::vector<AnnotationRow> load_annotation_rows(
    const std::string& path, const std::vector<std::string>& categories) {
  check(!categories.empty(), "ingest: category list is empty");
  const auto lines = io::read_lines(path);
  std::vector<AnnotationRow> rows;
  std::map<std::string, int> seen;  // id -> line
  bool header_allowed = true;
  for (size_t li = 0; li < lines.size(); ++li) {
    const int line_no = static_cast<int>(li) + 1;
    const auto toks = io::split_tokens(lines[li]);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (header_allowed && toks[0] == "categories") {
      if (toks.size() - 1 != categories.size())
        io::fail(path, "line " + std::to_string(line_no) + ": header lists " +
                           std::to_string(toks.size() - 1) +
                           " categories, expected " +
                           std::to_string(categories.size()));
      for (size_t c = 0; c < categories.size(); ++c)
        if (toks[c + 1] != categories[c])
          io::fail(path, "line " + std::to_string(line_no) +
                             ": unknown category name '" + toks[c + 1] +
                             "' (expected '" + categories[c] + "')");
      header_allowed = false;
      continue;
    }
    header_allowed = false;
    if (toks.size() != categories.size() + 1)
      io::fail(path, "line " + std::to_string(line_no) + ": expected " +
                         std::to_string(categories.size() + 1) +
                         " fields, got " + std::to_string(toks.size()));
    AnnotationRow row;
    row.image_id = toks[0];
    row.line = line_no;
    for (size_t c = 1; c < toks.size(); ++c) {
      try {
        size_t used = 0;
        const long long v = std::stoll(toks[c], &used);
        if (used != toks[c].size()) throw std::invalid_argument("trailing");
        row.raw_counts.push_back(v);
      } catch (const std::exception&) {
        io::fail(path, "line " + std::to_string(line_no) +
                           ": invalid count '" + toks[c] + "'");
      }
    }
    const auto prev = seen.find(row.image_id);
    if (prev != seen.end())
      io::fail(path, "duplicate image id '" + row.image_id + "' on lines " +
                         std::to_string(prev->second) + " and " +
                         std::to_string(line_no));
    seen.emplace(row.image_id, line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Split manifest: "<id> <tag>" per line.
inline std::map<std::string, std::string> load_splits(const std::string& path) {
  std::map<std::string, std::string> splits;
  const auto lines = io::read_lines(path);
  for (size_t li = 0; li < lines.size(); ++li) {
    const auto toks = io::split_tokens(lines[li]);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 2)
      io::fail(path, "line " + std::to_string(li + 1) +
                         ": expected '<image_id> <split>'");
    splits[toks[0]] = toks[1];
  }
  return splits;
}

struct IngestedAnnotation {
  CountAnnotation annotation;
  std::string split;  // empty when no manifest entry exists
};

// Raw counts are clamped into the label domain; split tags are attached from
// the manifest when one is provided.
inline std::vector<IngestedAnnotation> ingest_counts(
    const std::string& annotation_path,
    const std::vector<std::string>& categories,
    const std::map<std::string, std::string>* splits = nullptr) {
  const auto rows = load_annotation_rows(annotation_path, categories);
  std::vector<IngestedAnnotation> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<int> labels(row.raw_counts.size());
    for (size_t c = 0; c < row.raw_counts.size(); ++c) {
      try {
        labels[c] = clamp_raw_count(row.raw_counts[c]);
      } catch (const std::exception& e) {
        io::fail(annotation_path,
                 "line " + std::to_string(row.line) + ": " + e.what());
      }
    }
    IngestedAnnotation rec{CountAnnotation(row.image_id, labels), ""};
    if (splits) {
      const auto it = splits->find(row.image_id);
      if (it != splits->end()) rec.split = it->second;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---- dataset view used by training and evaluation -------------------------------

struct Dataset {
  std::string root;
  std::vector<std::string> categories;
  std::vector<std::string> ids;
  std::vector<CountAnnotation> annotations;       // clamped labels
  std::vector<std::vector<long long>> raw_counts;  // unclamped ground truth

  int num_categories() const { return static_cast<int>(categories.size()); }
  size_t size() const { return ids.size(); }
  Tensor3 image(size_t i) const {
    return io::read_ppm(
        (std::filesystem::path(root) / "images" / (ids[i] + ".ppm")).string());
  }
};

// Loads a dataset directory, optionally restricted to one split tag.
inline Dataset load_dataset(const std::string& root,
                            const std::string& split_filter = "") {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.root = root;
  for (const auto& line : io::read_lines((fs::path(root) / "categories.txt").string())) {
    const auto toks = io::split_tokens(line);
    if (!toks.empty()) ds.categories.push_back(toks[0]);
  }
  check(!ds.categories.empty(), "dataset: categories.txt is empty");
  std::map<std::string, std::string> splits;
  const auto splits_path = (fs::path(root) / "splits.txt").string();
  if (fs::exists(splits_path)) splits = load_splits(splits_path);
  const auto rows = load_annotation_rows(
      (fs::path(root) / "counts.txt").string(), ds.categories);
  for (const auto& row : rows) {
    if (!split_filter.empty()) {
      const auto it = splits.find(row.image_id);
      if (it == splits.end() || it->second != split_filter) continue;
    }
    std::vector<int> labels(row.raw_counts.size());
    for (size_t c = 0; c < row.raw_counts.size(); ++c)
      labels[c] = clamp_raw_count(row.raw_counts[c]);
    ds.ids.push_back(row.image_id);
    ds.annotations.emplace_back(row.image_id, labels);
    ds.raw_counts.push_back(row.raw_counts);
  }
  return ds;
}

}  // namespace ilc::synth
