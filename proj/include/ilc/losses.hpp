// The five training loss terms, their analytic gradients and the
// lambda-weighted mini-batch combination.
//
// Sign conventions: every term is >= 0. Gradients are returned unscaled by
// batch averaging; the trainer applies the per-term batch denominators.
#pragma once

#include <optional>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/datamodel.hpp"
#include "ilc/peaks.hpp"

namespace ilc::losses {

// Per-term values for one mini-batch plus the lambda-weighted total.
struct LossReport {
  double class_loss = 0.0;
  double sp_plus = 0.0;
  double sp_minus = 0.0;
  double mse = 0.0;
  double rank = 0.0;
  double lambda_rank = 0.0;
  double total = 0.0;
};

// Multi-label soft-margin loss over class confidence scores: mean over
// categories of the logistic BCE with target 1 for present categories
// (within or beyond the subitizing range) and 0 for absent ones.
inline double class_loss(const std::vector<double>& scores,
                         const CategoryPartition& partition) {
  const int c_total = partition.total();
  check(static_cast<int>(scores.size()) == c_total,
        "class_loss: score count does not match partition");
  double loss = 0.0;
  for (int c = 0; c < c_total; ++c) {
    const bool positive = partition.is_positive(c);
    loss -= positive ? log_sigmoid(scores[c])
                     : log_one_minus_sigmoid(scores[c]);
  }
  return loss / c_total;
}

// d class_loss / d s_c = (sigmoid(s_c) - y_c) / C
inline std::vector<double> class_loss_grad(const std::vector<double>& scores,
                                           const CategoryPartition& partition) {
  const int c_total = partition.total();
  check(static_cast<int>(scores.size()) == c_total,
        "class_loss_grad: score count does not match partition");
  std::vector<double> g(scores.size());
  for (int c = 0; c < c_total; ++c) {
    const double y = partition.is_positive(c) ? 1.0 : 0.0;
    g[c] = (sigmoid(scores[c]) - y) / c_total;
  }
  return g;
}

// One category's contribution to L_sp+: logistic BCE against target 1 at
// the mask positions, normalized by |S| * ||B||. The caller sums over c in S.
inline double spatial_positive_loss(const Grid& masked_density,
                                    const peaks::PseudoMask& mask,
                                    int cardinality_s) {
  check(masked_density.same_shape(mask.values),
        "spatial_positive_loss: shape mismatch");
  check(cardinality_s >= 1, "spatial_positive_loss: |S| must be >= 1");
  const double mask_sum = mask.values.sum();
  check(mask_sum > 0.0, "spatial_positive_loss: empty pseudo mask");
  double acc = 0.0;
  for (size_t k = 0; k < masked_density.v.size(); ++k)
    if (mask.values.v[k] != 0.0) acc -= log_sigmoid(masked_density.v[k]);
  return acc / (cardinality_s * mask_sum);
}

// Gradient of the L_sp+ contribution w.r.t. the masked density map, with the
// mask applied: (sigmoid(d) - 1) / (|S| * ||B||) on mask positions, exactly
// zero elsewhere. Nothing propagates through the mask itself, so the
// classification branch receives no gradient from this term.
inline Grid sp_plus_gradient(const Grid& masked_density,
                             const peaks::PseudoMask& mask,
                             int cardinality_s = 1) {
  check(masked_density.same_shape(mask.values),
        "sp_plus_gradient: shape mismatch");
  check(cardinality_s >= 1, "sp_plus_gradient: |S| must be >= 1");
  const double mask_sum = mask.values.sum();
  Grid g(masked_density.h, masked_density.w, 0.0);
  if (mask_sum == 0.0) return g;  // fully masked out: no gradient anywhere
  const double scale = 1.0 / (cardinality_s * mask_sum);
  for (size_t k = 0; k < g.v.size(); ++k)
    if (mask.values.v[k] != 0.0)
      g.v[k] = (sigmoid(masked_density.v[k]) - 1.0) * scale;
  return g;
}

// One category's contribution to L_sp-: logistic BCE against an all-zero
// mask over the whole grid, normalized by |A| * H * W.
inline double spatial_negative_loss(const Grid& density, int cardinality_a) {
  check(cardinality_a >= 1, "spatial_negative_loss: |A| must be >= 1");
  double acc = 0.0;
  for (double d : density.v) acc -= log_one_minus_sigmoid(d);
  return acc / (static_cast<double>(cardinality_a) * density.h * density.w);
}

inline Grid spatial_negative_grad(const Grid& density, int cardinality_a) {
  check(cardinality_a >= 1, "spatial_negative_grad: |A| must be >= 1");
  Grid g(density.h, density.w);
  const double scale =
      1.0 / (static_cast<double>(cardinality_a) * density.h * density.w);
  for (size_t k = 0; k < g.v.size(); ++k)
    g.v[k] = sigmoid(density.v[k]) * scale;
  return g;
}

// Global count loss over absent and within-range categories:
// sum_{c in A u S} (t_hat_c - t_c)^2 / (|A| + |S|). Predicted counts are the
// raw density sums, unclamped. Returns 0 when both sets are empty
// (*degenerate flags that case).
inline double global_mse_loss(const std::vector<double>& predicted_counts,
                              const CountAnnotation& labels,
                              const CategoryPartition& partition,
                              bool* degenerate = nullptr) {
  check(static_cast<int>(predicted_counts.size()) == labels.num_categories(),
        "global_mse_loss: prediction count mismatch");
  const size_t denom = partition.absent.size() + partition.within.size();
  if (degenerate) *degenerate = (denom == 0);
  if (denom == 0) return 0.0;
  double acc = 0.0;
  for (int c : partition.absent) acc += predicted_counts[c] * predicted_counts[c];
  for (int c : partition.within) {
    const double e = predicted_counts[c] - labels.counts[c];
    acc += e * e;
  }
  return acc / static_cast<double>(denom);
}

// d L_MSE / d t_hat_c; zero for categories outside A u S.
inline std::vector<double> global_mse_grad(
    const std::vector<double>& predicted_counts, const CountAnnotation& labels,
    const CategoryPartition& partition) {
  check(static_cast<int>(predicted_counts.size()) == labels.num_categories(),
        "global_mse_grad: prediction count mismatch");
  std::vector<double> g(predicted_counts.size(), 0.0);
  const size_t denom = partition.absent.size() + partition.within.size();
  if (denom == 0) return g;
  for (int c : partition.absent)
    g[c] = 2.0 * predicted_counts[c] / static_cast<double>(denom);
  for (int c : partition.within)
    g[c] = 2.0 * (predicted_counts[c] - labels.counts[c]) /
           static_cast<double>(denom);
  return g;
}

// Zero-margin ranking loss over beyond-range categories:
// sum_c max(0, t_tilde - t_hat_c) / |S_tilde|. Empty set -> 0.
inline double rank_loss(const std::vector<double>& predicted_beyond,
                        double t_tilde) {
  if (predicted_beyond.empty()) return 0.0;
  double acc = 0.0;
  for (double t_hat : predicted_beyond) acc += std::max(0.0, t_tilde - t_hat);
  return acc / static_cast<double>(predicted_beyond.size());
}

// Hinge subgradient: -1/|S_tilde| while under-counting, 0 at and past the
// margin.
inline std::vector<double> rank_grad(const std::vector<double>& predicted_beyond,
                                     double t_tilde) {
  std::vector<double> g(predicted_beyond.size(), 0.0);
  if (predicted_beyond.empty()) return g;
  const double scale = -1.0 / static_cast<double>(predicted_beyond.size());
  for (size_t k = 0; k < g.size(); ++k)
    if (predicted_beyond[k] < t_tilde) g[k] = scale;
  return g;
}

// Loss terms contributed by one image. A disengaged optional means the
// term's relevant category set was empty for this image; such images are
// excluded from that term's batch average.
struct ImageLossTerms {
  double class_term = 0.0;
  std::optional<double> sp_plus;
  std::optional<double> sp_minus;
  std::optional<double> mse;
  std::optional<double> rank;
};

// Batch combination: every term is averaged over the images that carry it,
// then total = L_class + (L_sp+ + L_sp-) + (L_MSE + lambda * L_rank).
inline LossReport combine_batch(const std::vector<ImageLossTerms>& images,
                                double lambda_rank) {
  check(!images.empty(), "combine_batch: empty batch");
  check(std::isfinite(lambda_rank), "combine_batch: lambda must be finite");
  LossReport r;
  r.lambda_rank = lambda_rank;

  double class_acc = 0.0;
  double acc[4] = {0, 0, 0, 0};
  int cnt[4] = {0, 0, 0, 0};
  for (const auto& img : images) {
    class_acc += img.class_term;
    const std::optional<double>* terms[4] = {&img.sp_plus, &img.sp_minus,
                                             &img.mse, &img.rank};
    for (int k = 0; k < 4; ++k)
      if (terms[k]->has_value()) {
        acc[k] += **terms[k];
        ++cnt[k];
      }
  }
  r.class_loss = class_acc / static_cast<double>(images.size());
  r.sp_plus = cnt[0] ? acc[0] / cnt[0] : 0.0;
  r.sp_minus = cnt[1] ? acc[1] / cnt[1] : 0.0;
  r.mse = cnt[2] ? acc[2] / cnt[2] : 0.0;
  r.rank = cnt[3] ? acc[3] / cnt[3] : 0.0;
  r.total = r.class_loss + (r.sp_plus + r.sp_minus) +
            (r.mse + lambda_rank * r.rank);
  return r;
}

}  // namespace ilc::losses
