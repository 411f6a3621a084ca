#pragma once
// Density-penalized proposal scoring: ranks externally supplied object
// proposals per response peak and keeps the best one as that peak's instance
// mask. A proposal is scored by how much peak response it covers (mask and
// contour), how much background it covers, and how far the density mass under
// it deviates from a single instance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/io.hpp"

namespace ilc {

// ---- proposals ---------------------------------------------------------------

// Binary proposal mask plus its contour (morphological gradient): the mask
// dilated by a 3x3 window minus the mask eroded by the same window, with
// everything outside the grid treated as background.
struct Proposal {
  Grid mask;
  Grid contour;
};

namespace detail {

inline bool mask_hit(const Grid& g, int r, int c) {
  return r >= 0 && r < g.h && c >= 0 && c < g.w && g.at(r, c) != 0.0;
}

}  // namespace detail

inline Grid morphological_gradient(const Grid& mask) {
  Grid out(mask.h, mask.w, 0.0);
  for (int r = 0; r < mask.h; ++r) {
    for (int c = 0; c < mask.w; ++c) {
      bool any = false, all = true;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const bool hit = detail::mask_hit(mask, r + dr, c + dc);
          any = any || hit;
          all = all && hit;
        }
      out.at(r, c) = (any && !all) ? 1.0 : 0.0;
    }
  }
  return out;
}

// Nearest-neighbor resampling: output cell (r, c) copies the input cell at
// (r * in_h / out_h, c * in_w / out_w), integer division.
inline Grid resample_nearest(const Grid& g, int out_h, int out_w) {
  check(out_h > 0 && out_w > 0, "resample_nearest: empty target shape");
  Grid out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * g.h / out_h);
    for (int c = 0; c < out_w; ++c) {
      const int sc = static_cast<int>(static_cast<long long>(c) * g.w / out_w);
      out.at(r, c) = g.at(sr, sc);
    }
  }
  return out;
}

inline Proposal make_proposal(Grid mask) {
  for (double v : mask.v)
    check(v == 0.0 || v == 1.0, "make_proposal: mask must be binary");
  Proposal p;
  p.contour = morphological_gradient(mask);
  p.mask = std::move(mask);
  return p;
}

// Builds proposals from archive records, resampling each mask to the target
// resolution first (so the contour is computed at that resolution).
inline std::vector<Proposal> proposals_from_records(
    const std::vector<io::MaskRecord>& records, int h, int w) {
  std::vector<Proposal> out;
  out.reserve(records.size());
  for (const io::MaskRecord& r : records) {
    Grid mask = (r.mask.h == h && r.mask.w == w)
                    ? r.mask
                    : resample_nearest(r.mask, h, w);
    out.push_back(make_proposal(std::move(mask)));
  }
  return out;
}

// ---- peak evidence and weights -------------------------------------------------

struct PeakEvidence {
  int row = 0;
  int col = 0;
  int category = 0;
  Grid response;  // non-negative instance cue map for this peak
};

struct ScoreWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  void validate() const {
    check(std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma),
          "score weights must be finite");
  }
};

// Background mask: 1 where the category response map falls strictly below the
// given quantile of its own values (threshold taken at the nearest ascending
// rank, index floor(q * (n - 1))). A flat map yields an all-zero mask.
inline Grid background_mask(const Grid& category_map, double quantile = 0.5) {
  check(quantile >= 0.0 && quantile <= 1.0,
        "background_mask: quantile must lie in [0, 1]");
  std::vector<double> sorted = category_map.v;
  std::sort(sorted.begin(), sorted.end());
  const double threshold =
      sorted[static_cast<size_t>(quantile * (sorted.size() - 1))];
  Grid out(category_map.h, category_map.w, 0.0);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = category_map.v[i] < threshold ? 1.0 : 0.0;
  return out;
}

// Stand-in response map when no precomputed one is available: the category
// map rescaled to [0, 1], windowed by a Gaussian centered on the peak, then
// normalized to unit mass so its dot products stay commensurate with the
// unit-count density penalty.
inline Grid fallback_response(const Grid& category_map, int peak_row,
                              int peak_col, double sigma = 4.0) {
  check(peak_row >= 0 && peak_row < category_map.h && peak_col >= 0 &&
            peak_col < category_map.w,
        "fallback_response: peak outside the map");
  check(sigma > 0.0, "fallback_response: sigma must be positive");
  const double lo = *std::min_element(category_map.v.begin(),
                                      category_map.v.end());
  const double hi = *std::max_element(category_map.v.begin(),
                                      category_map.v.end());
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  Grid out(category_map.h, category_map.w);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c) {
      const double dr = r - peak_row, dc = c - peak_col;
      const double window = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
      out.at(r, c) = (category_map.at(r, c) - lo) * scale * window;
    }
  const double mass = out.sum();
  if (mass > 0.0)
    for (auto& v : out.v) v /= mass;
  return out;
}

// ---- scoring --------------------------------------------------------------------

inline double grid_dot(const Grid& a, const Grid& b) {
  check(a.same_shape(b), "grid_dot: shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) sum += a.v[i] * b.v[i];
  return sum;
}

// |1 - (density mass inside the proposal)|: zero for an ideal single-instance
// proposal, ~1 for one that spans two instances or none.
inline double density_penalty(const Grid& density, const Proposal& proposal) {
  return std::abs(1.0 - grid_dot(density, proposal.mask));
}

// The four scoring terms and their combination:
//   total = alpha*<R, mask> + <R, contour> - beta*<Q, mask> - gamma*d_p.
struct ScoreBreakdown {
  double peak_term = 0.0;        // alpha * <R, mask>
  double contour_term = 0.0;     // <R, contour>
  double background_term = 0.0;  // beta * <Q, mask>, subtracted
  double penalty_term = 0.0;     // gamma * d_p, subtracted
  double total = 0.0;
};

inline ScoreBreakdown score_breakdown(const PeakEvidence& evidence,
                                      const Proposal& proposal, const Grid& q,
                                      const Grid& density,
                                      const ScoreWeights& weights) {
  weights.validate();
  for (double v : evidence.response.v)
    check(v >= 0.0, "score: response map must be non-negative");
  ScoreBreakdown b;
  b.peak_term = weights.alpha * grid_dot(evidence.response, proposal.mask);
  b.contour_term = grid_dot(evidence.response, proposal.contour);
  b.background_term = weights.beta * grid_dot(q, proposal.mask);
  b.penalty_term = weights.gamma * density_penalty(density, proposal);
  b.total = b.peak_term + b.contour_term - b.background_term - b.penalty_term;
  return b;
}

inline double score_proposal(const PeakEvidence& evidence,
                             const Proposal& proposal, const Grid& q,
                             const Grid& density, const ScoreWeights& weights) {
  return score_breakdown(evidence, proposal, q, density, weights).total;
}

// ---- selection ---------------------------------------------------------------------

struct SelectedMask {
  int peak_index = 0;
  int proposal_index = -1;  // -1 when the peak went unmatched
  double score = 0.0;
};

namespace detail {

inline long long mask_area(const Grid& mask) {
  long long n = 0;
  for (double v : mask.v) n += v != 0.0 ? 1 : 0;
  return n;
}

}  // namespace detail

// Per peak, the argmax proposal under score_proposal against that peak's
// category channels. Exact score ties prefer the smaller proposal area, then
// the earlier proposal. With no proposals at all every peak is reported
// unmatched (index -1). One proposal may serve several peaks.
inline std::vector<SelectedMask> select_masks(
    const std::vector<PeakEvidence>& peaks,
    const std::vector<Proposal>& proposals, const Tensor3& density_maps,
    const Tensor3& q_maps, const ScoreWeights& weights) {
  check(density_maps.c == q_maps.c && density_maps.h == q_maps.h &&
            density_maps.w == q_maps.w,
        "select_masks: density/background map shapes differ");
  std::vector<SelectedMask> out;
  out.reserve(peaks.size());
  for (size_t pi = 0; pi < peaks.size(); ++pi) {
    const PeakEvidence& ev = peaks[pi];
    check(ev.category >= 0 && ev.category < density_maps.c,
          "select_masks: peak category outside the maps");
    const Grid density = density_maps.channel(ev.category);
    const Grid q = q_maps.channel(ev.category);
    SelectedMask sel;
    sel.peak_index = static_cast<int>(pi);
    long long best_area = 0;
    for (size_t ri = 0; ri < proposals.size(); ++ri) {
      const double s = score_proposal(ev, proposals[ri], q, density, weights);
      const long long area = detail::mask_area(proposals[ri].mask);
      const bool better =
          sel.proposal_index < 0 || s > sel.score ||
          (s == sel.score && area < best_area);
      if (better) {
        sel.proposal_index = static_cast<int>(ri);
        sel.score = s;
        best_area = area;
      }
    }
    out.push_back(sel);
  }
  return out;
}

// Selected proposals as archive records (category and score from the peak's
// selection); unmatched peaks are skipped.
inline std::vector<io::MaskRecord> to_mask_records(
    const std::string& image_id, const std::vector<PeakEvidence>& peaks,
    const std::vector<Proposal>& proposals,
    const std::vector<SelectedMask>& selections) {
  std::vector<io::MaskRecord> out;
  for (const SelectedMask& s : selections) {
    if (s.proposal_index < 0) continue;
    io::MaskRecord r;
    r.image_id = image_id;
    r.category = peaks[static_cast<size_t>(s.peak_index)].category;
    r.instance = s.peak_index;
    r.score = s.score;
    r.mask = proposals[static_cast<size_t>(s.proposal_index)].mask;
    out.push_back(std::move(r));
  }
  return out;
}

// ---- score-breakdown report ---------------------------------------------------------

struct BreakdownRow {
  int peak_index = 0;
  int proposal_index = 0;
  ScoreBreakdown terms;
};

// One space-separated row per scored (peak, proposal) pair.
inline std::string format_score_breakdown(const std::vector<BreakdownRow>& rows) {
  std::string out =
      "# peak proposal peak_term contour_term background_term penalty_term "
      "total\n";
  for (const BreakdownRow& r : rows) {
    out += std::to_string(r.peak_index) + " " +
           std::to_string(r.proposal_index) + " " +
           io::format_double(r.terms.peak_term) + " " +
           io::format_double(r.terms.contour_term) + " " +
           io::format_double(r.terms.background_term) + " " +
           io::format_double(r.terms.penalty_term) + " " +
           io::format_double(r.terms.total) + "\n";
  }
  return out;
}

// Breakdown rows for every (peak, proposal) pair, in peak-major order.
inline std::vector<BreakdownRow> score_all(
    const std::vector<PeakEvidence>& peaks,
    const std::vector<Proposal>& proposals, const Tensor3& density_maps,
    const Tensor3& q_maps, const ScoreWeights& weights) {
  std::vector<BreakdownRow> rows;
  rows.reserve(peaks.size() * proposals.size());
  for (size_t pi = 0; pi < peaks.size(); ++pi) {
    const PeakEvidence& ev = peaks[pi];
    check(ev.category >= 0 && ev.category < density_maps.c,
          "score_all: peak category outside the maps");
    const Grid density = density_maps.channel(ev.category);
    const Grid q = q_maps.channel(ev.category);
    for (size_t ri = 0; ri < proposals.size(); ++ri)
      rows.push_back({static_cast<int>(pi), static_cast<int>(ri),
                      score_breakdown(ev, proposals[ri], q, density, weights)});
  }
  return rows;
}

}  // namespace ilc
