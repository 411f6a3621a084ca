#pragma once
// Evaluation metrics for counting and instance segmentation:
//   - the RMSE family over per-category counts (plain / relative,
//     all-images / nonzero-only),
//   - grid-cell density deviation at a given partition level,
//   - average best overlap between predicted and ground-truth masks,
//   - average precision of scored masks at an IoU threshold.
//
// All per-category results use the same container: a value per category
// (NaN where a category was excluded), the excluded category ids, and the
// mean over the included ones.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/io.hpp"

namespace ilc {

using io::MaskRecord;

struct PerCategoryMetric {
  std::vector<double> per_category;  // NaN at excluded categories
  std::vector<int> excluded;         // categories left out of the mean
  double mean = std::numeric_limits<double>::quiet_NaN();
};

inline void finalize_mean(PerCategoryMetric& m) {
  double sum = 0.0;
  int n = 0;
  for (size_t c = 0; c < m.per_category.size(); ++c) {
    if (std::find(m.excluded.begin(), m.excluded.end(), static_cast<int>(c)) !=
        m.excluded.end())
      continue;
    sum += m.per_category[c];
    ++n;
  }
  m.mean = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

// ---- count RMSE family ----------------------------------------------------

// One matched (image, category) record: true count vs predicted count.
struct CountSample {
  int ground_truth = 0;
  int predicted = 0;
};

// samples[c] holds every matched record of category c. `relative` divides each
// squared error by (t + 1); `nonzero_only` restricts to records with t > 0,
// and a category with no such records is excluded from the mean.
inline PerCategoryMetric rmse_family(
    const std::vector<std::vector<CountSample>>& samples, bool relative,
    bool nonzero_only) {
  check(!samples.empty(), "rmse_family: no categories");
  size_t total = 0;
  for (const auto& cat : samples) total += cat.size();
  check(total > 0, "rmse_family: empty record set");

  PerCategoryMetric out;
  out.per_category.assign(samples.size(),
                          std::numeric_limits<double>::quiet_NaN());
  for (size_t c = 0; c < samples.size(); ++c) {
    double sum = 0.0;
    long long used = 0;
    for (const CountSample& s : samples[c]) {
      if (nonzero_only && s.ground_truth <= 0) continue;
      const double err = static_cast<double>(s.ground_truth - s.predicted);
      double term = err * err;
      if (relative) term /= static_cast<double>(s.ground_truth) + 1.0;
      sum += term;
      ++used;
    }
    if (used == 0) {
      check(nonzero_only, "rmse_family: category " + std::to_string(c) +
                              " has no records");
      out.excluded.push_back(static_cast<int>(c));
      continue;
    }
    out.per_category[c] = std::sqrt(sum / static_cast<double>(used));
  }
  finalize_mean(out);
  return out;
}

// ---- grid-cell density deviation -------------------------------------------

struct GridPoint {
  int row = 0;
  int col = 0;
};

namespace detail {

// Partition an extent into k near-equal integer cells; boundary i is
// floor(i * extent / k), so cell widths differ by at most one.
inline std::vector<int> cell_boundaries(int extent, int k) {
  std::vector<int> b(static_cast<size_t>(k) + 1);
  for (int i = 0; i <= k; ++i)
    b[static_cast<size_t>(i)] =
        static_cast<int>((static_cast<long long>(i) * extent) / k);
  return b;
}

}  // namespace detail

// Sum over all 2^n x 2^n cells of |predicted cell mass - point count in cell|.
// Points are in grid coordinates (row, col) and must lie inside the grid.
inline double game_cell_deviation(const Grid& density,
                                  const std::vector<GridPoint>& points,
                                  int n) {
  check(n >= 0, "game: level must be non-negative");
  const int k = 1 << n;
  for (const GridPoint& p : points)
    check(p.row >= 0 && p.row < density.h && p.col >= 0 && p.col < density.w,
          "game: point outside the grid");
  const std::vector<int> rb = detail::cell_boundaries(density.h, k);
  const std::vector<int> cb = detail::cell_boundaries(density.w, k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double mass = 0.0;
      for (int r = rb[i]; r < rb[i + 1]; ++r)
        for (int c = cb[j]; c < cb[j + 1]; ++c) mass += density.at(r, c);
      long long count = 0;
      for (const GridPoint& p : points)
        if (p.row >= rb[i] && p.row < rb[i + 1] && p.col >= cb[j] &&
            p.col < cb[j + 1])
          ++count;
      total += std::abs(mass - static_cast<double>(count));
    }
  }
  return total;
}

// Mean of game_cell_deviation over a collection of (grid, points) pairs.
inline double game(const std::vector<Grid>& densities,
                   const std::vector<std::vector<GridPoint>>& points, int n) {
  check(densities.size() == points.size(), "game: size mismatch");
  check(!densities.empty(), "game: empty collection");
  double sum = 0.0;
  for (size_t i = 0; i < densities.size(); ++i)
    sum += game_cell_deviation(densities[i], points[i], n);
  return sum / static_cast<double>(densities.size());
}

// ---- mask overlap metrics ---------------------------------------------------

// Intersection over union of two binary masks (nonzero = foreground).
inline double mask_iou(const Grid& a, const Grid& b) {
  check(a.same_shape(b), "mask_iou: shape mismatch");
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const bool fa = a.v[i] != 0.0, fb = b.v[i] != 0.0;
    inter += (fa && fb) ? 1 : 0;
    uni += (fa || fb) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

inline void check_category(const MaskRecord& r, int num_categories,
                           const char* who) {
  check(r.category >= 0 && r.category < num_categories,
        std::string(who) + ": record with category outside [0, C)");
}

// predictions of one category, grouped by image id.
inline std::unordered_map<std::string, std::vector<const MaskRecord*>>
group_by_image(const std::vector<MaskRecord>& records, int category) {
  std::unordered_map<std::string, std::vector<const MaskRecord*>> by_image;
  for (const MaskRecord& r : records)
    if (r.category == category) by_image[r.image_id].push_back(&r);
  return by_image;
}

}  // namespace detail

// Average best overlap: for every ground-truth instance, the best IoU over
// predicted masks of the same image and category (0 when there are none),
// averaged per category and then over the categories that have instances.
inline PerCategoryMetric abo(const std::vector<MaskRecord>& predictions,
                             const std::vector<MaskRecord>& ground_truth,
                             int num_categories) {
  check(num_categories > 0, "abo: need at least one category");
  for (const MaskRecord& r : ground_truth)
    detail::check_category(r, num_categories, "abo");
  for (const MaskRecord& r : predictions)
    detail::check_category(r, num_categories, "abo");

  PerCategoryMetric out;
  out.per_category.assign(static_cast<size_t>(num_categories),
                          std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < num_categories; ++c) {
    auto preds = detail::group_by_image(predictions, c);
    double sum = 0.0;
    long long instances = 0;
    for (const MaskRecord& gt : ground_truth) {
      if (gt.category != c) continue;
      double best = 0.0;
      auto it = preds.find(gt.image_id);
      if (it != preds.end())
        for (const MaskRecord* p : it->second)
          best = std::max(best, mask_iou(p->mask, gt.mask));
      sum += best;
      ++instances;
    }
    if (instances == 0) {
      out.excluded.push_back(c);
      continue;
    }
    out.per_category[static_cast<size_t>(c)] =
        sum / static_cast<double>(instances);
  }
  finalize_mean(out);
  return out;
}

// Average precision of scored masks at one IoU threshold. Predictions are
// ranked by descending score (ties keep input order); each is matched greedily
// to the best-overlap unmatched ground-truth instance of its image and
// category, counting a true positive when that IoU reaches the threshold.
// AP is the area under the precision envelope (precision at recall r taken as
// the maximum precision at any recall >= r). Empty sets are not errors: a
// category with no ground-truth instances or no predictions scores 0.
inline PerCategoryMetric average_precision(
    const std::vector<MaskRecord>& predictions,
    const std::vector<MaskRecord>& ground_truth, int num_categories,
    double iou_threshold) {
  check(num_categories > 0, "average_precision: need at least one category");
  check(iou_threshold > 0.0 && iou_threshold <= 1.0,
        "average_precision: threshold must lie in (0, 1]");
  for (const MaskRecord& r : ground_truth)
    detail::check_category(r, num_categories, "average_precision");
  for (const MaskRecord& r : predictions)
    detail::check_category(r, num_categories, "average_precision");

  PerCategoryMetric out;
  out.per_category.assign(static_cast<size_t>(num_categories),
                          std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < num_categories; ++c) {
    auto gts = detail::group_by_image(ground_truth, c);
    long long total_gt = 0;
    for (const auto& [id, list] : gts) total_gt += static_cast<long long>(list.size());
    if (total_gt == 0) {
      out.per_category[static_cast<size_t>(c)] = 0.0;
      continue;
    }

    std::vector<const MaskRecord*> ranked;
    for (const MaskRecord& r : predictions)
      if (r.category == c) ranked.push_back(&r);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const MaskRecord* a, const MaskRecord* b) {
                       return a->score > b->score;
                     });

    std::unordered_map<std::string, std::vector<bool>> taken;
    for (const auto& [id, list] : gts)
      taken[id].assign(list.size(), false);

    std::vector<double> precision, recall;
    long long tp = 0, fp = 0;
    for (const MaskRecord* p : ranked) {
      double best = -1.0;
      int best_idx = -1;
      auto it = gts.find(p->image_id);
      if (it != gts.end()) {
        const auto& list = it->second;
        for (size_t g = 0; g < list.size(); ++g) {
          if (taken[p->image_id][g]) continue;
          const double v = mask_iou(p->mask, list[g]->mask);
          if (v > best) {
            best = v;
            best_idx = static_cast<int>(g);
          }
        }
      }
      if (best_idx >= 0 && best >= iou_threshold) {
        taken[p->image_id][static_cast<size_t>(best_idx)] = true;
        ++tp;
      } else {
        ++fp;
      }
      precision.push_back(static_cast<double>(tp) /
                          static_cast<double>(tp + fp));
      recall.push_back(static_cast<double>(tp) /
                       static_cast<double>(total_gt));
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] <= prev_recall) continue;
      double envelope = 0.0;
      for (size_t j = i; j < precision.size(); ++j)
        envelope = std::max(envelope, precision[j]);
      ap += (recall[i] - prev_recall) * envelope;
      prev_recall = recall[i];
    }
    out.per_category[static_cast<size_t>(c)] = ap;
  }
  finalize_mean(out);
  return out;
}

// ---- report file ------------------------------------------------------------

struct MetricRow {
  std::string metric;   // e.g. "rmse", "game", "abo", "ap"
  std::string variant;  // e.g. "plain", "relative-nz", "n=2", "iou=0.5"
  PerCategoryMetric value;
};

// One header comment plus one space-separated row per metric:
//   metric variant <per-category values...> mean
// Excluded categories print as nan.
inline std::string format_metric_report(
    const std::vector<std::string>& categories,
    const std::vector<MetricRow>& rows) {
  std::string out = "# metric variant";
  for (const std::string& c : categories) out += " " + c;
  out += " mean\n";
  for (const MetricRow& row : rows) {
    check(row.value.per_category.size() == categories.size(),
          "format_metric_report: category arity mismatch");
    out += row.metric + " " + row.variant;
    for (double v : row.value.per_category) out += " " + io::format_double(v);
    out += " " + io::format_double(row.value.mean) + "\n";
  }
  return out;
}

inline void write_metric_report(const std::string& path,
                                const std::vector<std::string>& categories,
                                const std::vector<MetricRow>& rows) {
  io::write_text(path, format_metric_report(categories, rows));
}

}  // namespace ilc
