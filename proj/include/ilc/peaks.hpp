// Local-maxima peak maps over category response grids, class confidence
// scores and pseudo ground-truth masks for the density branch.
#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "ilc/core.hpp"

namespace ilc::peaks {

// Strict local maxima of a category map. Non-peak cells are exactly zero;
// peak cells keep the source map value. A peak whose map value is exactly
// 0.0 is indistinguishable from background and is dropped.
struct PeakMap {
  Grid values;
  int radius = 1;
};

// Binary pseudo ground-truth mask: 1 exactly at peak locations whose value
// reached the threshold h_c (ties included).
struct PseudoMask {
  Grid values;             // entries in {0, 1}
  double threshold = 0.0;  // h_c
};

// A cell is a peak when its value strictly exceeds every in-bounds neighbor
// within Chebyshev radius r. Cells outside the grid compare as -inf, so
// border cells can be peaks. Search runs at every location (stride one).
inline PeakMap extract_peaks(const Grid& map, int radius = 1) {
  check(map.h >= 1 && map.w >= 1 && !map.v.empty(), "extract_peaks: empty grid");
  check(radius >= 1, "extract_peaks: radius must be >= 1");
  PeakMap out;
  out.radius = radius;
  out.values = Grid(map.h, map.w, 0.0);
  for (int i = 0; i < map.h; ++i) {
    for (int j = 0; j < map.w; ++j) {
      const double v = map.at(i, j);
      bool is_peak = true;
      for (int di = -radius; di <= radius && is_peak; ++di) {
        const int ni = i + di;
        if (ni < 0 || ni >= map.h) continue;
        for (int dj = -radius; dj <= radius; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int nj = j + dj;
          if (nj < 0 || nj >= map.w) continue;
          if (map.at(ni, nj) >= v) {
            is_peak = false;
            break;
          }
        }
      }
      if (is_peak) out.values.at(i, j) = v;
    }
  }
  return out;
}

inline std::vector<std::pair<int, int>> peak_positions(const PeakMap& peaks) {
  std::vector<std::pair<int, int>> pos;
  for (int i = 0; i < peaks.values.h; ++i)
    for (int j = 0; j < peaks.values.w; ++j)
      if (peaks.values.at(i, j) != 0.0) pos.emplace_back(i, j);
  return pos;
}

// Class confidence s^c: arithmetic mean of the nonzero peak entries.
// An all-zero peak map scores 0 (neutral input to the soft-margin loss).
inline double class_confidence(const PeakMap& peaks) {
  double sum = 0.0;
  int count = 0;
  for (double v : peaks.values.v) {
    if (v != 0.0) {
      sum += v;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / count;
}

// Pseudo ground-truth mask for a category with supervision label t_c >= 1.
// h_c is the t_c-th highest nonzero peak value; every peak location with
// value >= h_c becomes 1 (ties may push the mask size past t_c). When fewer
// than t_c peaks exist, h_c falls back to the smallest nonzero peak value
// and *fell_back is set. An all-zero peak map is an error.
inline PseudoMask pseudo_mask(const PeakMap& peaks, int t_c,
                              bool* fell_back = nullptr) {
  check(t_c >= 1, "pseudo_mask: t_c must be >= 1");
  std::vector<double> vals;
  for (double v : peaks.values.v)
    if (v != 0.0) vals.push_back(v);
  check(!vals.empty(), "pseudo_mask: peak map has no nonzero peaks");

  if (fell_back) *fell_back = false;
  double h;
  if (static_cast<int>(vals.size()) >= t_c) {
    std::nth_element(vals.begin(), vals.begin() + (t_c - 1), vals.end(),
                     std::greater<double>());
    h = vals[t_c - 1];
  } else {
    h = *std::min_element(vals.begin(), vals.end());
    if (fell_back) *fell_back = true;
  }

  PseudoMask mask;
  mask.threshold = h;
  mask.values = Grid(peaks.values.h, peaks.values.w, 0.0);
  for (int i = 0; i < peaks.values.h; ++i)
    for (int j = 0; j < peaks.values.w; ++j) {
      const double v = peaks.values.at(i, j);
      if (v != 0.0 && v >= h) mask.values.at(i, j) = 1.0;
    }
  return mask;
}

// Hadamard masking of a density map by a pseudo ground-truth mask.
inline Grid mask_density(const Grid& density, const PseudoMask& mask) {
  check(density.same_shape(mask.values), "mask_density: shape mismatch");
  Grid out = density;
  for (size_t k = 0; k < out.v.size(); ++k) out.v[k] *= mask.values.v[k];
  return out;
}

}  // namespace ilc::peaks
