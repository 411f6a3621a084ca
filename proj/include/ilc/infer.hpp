// Counting inference: one eval-mode forward pass per image, class confidences
// from category-map peaks, and the presence-gated count rule — a category
// whose confidence is not positive reports zero no matter what its density
// map holds; otherwise the density sum rounds to the nearest integer (half
// away from zero) and clamps at zero.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/io.hpp"
#include "ilc/network.hpp"
#include "ilc/peaks.hpp"

namespace ilc::infer {

struct Prediction {
  std::vector<double> scores;    // class confidences s_c
  std::vector<double> raw_sums;  // unclamped density sums
  std::vector<int> counts;       // gated, rounded, clamped
  CategoryMaps category_maps;    // C x h x w
  DensityMaps density;           // C x h x w, unmodified
};

// Gate + round + clamp for one category.
inline int gated_count(double score, double raw_sum) {
  if (score <= 0.0) return 0;
  const long rounded = std::lround(raw_sum);  // half away from zero
  return rounded < 0 ? 0 : static_cast<int>(rounded);
}

inline Prediction predict(net::IlcNetwork& network, const Tensor3& image) {
  Tensor4 x(1, image.c, image.h, image.w);
  x.v = image.v;
  auto [m, d] = network.forward(x, /*training=*/false);
  const int C = m.c;
  Prediction p;
  p.category_maps = Tensor3(C, m.h, m.w);
  p.density = Tensor3(C, d.h, d.w);
  p.scores.resize(C);
  p.raw_sums.resize(C);
  p.counts.resize(C);
  const int radius = network.head_config().peak_radius;
  for (int c = 0; c < C; ++c) {
    const Grid mc = m.grid(0, c);
    const Grid dc = d.grid(0, c);
    p.category_maps.set_channel(c, mc);
    p.density.set_channel(c, dc);
    p.scores[c] = peaks::class_confidence(peaks::extract_peaks(mc, radius));
    p.raw_sums[c] = dc.sum();
    p.counts[c] = gated_count(p.scores[c], p.raw_sums[c]);
  }
  return p;
}

inline std::vector<io::PredictionRecord> to_records(
    const std::string& image_id, const Prediction& p) {
  std::vector<io::PredictionRecord> records;
  records.reserve(p.counts.size());
  for (size_t c = 0; c < p.counts.size(); ++c)
    records.push_back({image_id, static_cast<int>(c), p.scores[c],
                       p.raw_sums[c], p.counts[c]});
  return records;
}

}  // namespace ilc::infer
