// Two-stage trainer. Stage 1 optimizes the classification loss plus the
// global count losses (MSE and, weighted by lambda, the ranking hinge);
// stage 2 adds the spatial losses, regenerating pseudo ground-truth masks
// from the current classification-branch peaks every batch.
//
// Gradient routing rules enforced here:
//   - the classification loss reaches the category maps only through the
//     peak positions that defined each class confidence (uniform share);
//   - the positive spatial loss reaches the density maps only at pseudo-mask
//     positions, and never flows through the mask into the classifier;
//   - count losses spread uniformly over a density map (the count is its sum);
//   - absent-category density terms see only the per-batch negative subsample.
//
// Everything is single-threaded and seed-deterministic: identical seeds,
// configs and data reproduce loss logs bit for bit.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/datamodel.hpp"
#include "ilc/losses.hpp"
#include "ilc/network.hpp"
#include "ilc/peaks.hpp"

namespace ilc::train {

struct TrainConfig {
  double backbone_lr = 1e-4;
  double head_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 16;
  double lambda_rank = 0.1;
  double negative_fraction = 0.1;  // share of absent categories fed to the
                                   // density branch, resampled per batch
  int stage1_epochs = 10;
  int stage2_epochs = 10;
  double t_tilde = kSubitizingLimit;  // ranking-loss margin
  bool flip_augmentation = false;
  int lr_decay_every = 0;        // epochs between decays; 0 disables
  double lr_decay_factor = 0.1;  // multiplier applied at each decay
  uint64_t seed = 1;

  void validate() const {
    check(backbone_lr > 0.0 && head_lr > 0.0, "train: learning rates must be positive");
    check(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0,1)");
    check(weight_decay >= 0.0, "train: weight decay must be >= 0");
    check(batch_size >= 1, "train: batch size must be >= 1");
    check(lambda_rank >= 0.0, "train: lambda must be >= 0");
    check(negative_fraction > 0.0 && negative_fraction <= 1.0,
          "train: negative fraction must be in (0,1]");
    check(stage1_epochs >= 0 && stage2_epochs >= 0, "train: negative epoch count");
    check(t_tilde > 0.0, "train: ranking margin must be positive");
    check(lr_decay_every >= 0 && lr_decay_factor > 0.0, "train: bad decay config");
  }
};

// Uniformly random subset of the absent set, ceil(fraction * |A|) strong,
// resampled by the caller each batch. Returned sorted so downstream
// summation order is fixed.
inline std::vector<int> sample_negatives(const CategoryPartition& partition,
                                         double fraction, Rng& rng) {
  check(fraction > 0.0 && fraction <= 1.0,
        "sample_negatives: fraction must be in (0,1]");
  std::vector<int> pool = partition.absent;
  if (pool.empty()) return pool;
  const size_t want = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(pool.size())));
  rng.shuffle(pool);
  pool.resize(std::min(want, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline Tensor3 flip_horizontal(const Tensor3& img) {
  Tensor3 out(img.c, img.h, img.w);
  for (int c = 0; c < img.c; ++c)
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j)
        out.at(c, i, j) = img.at(c, i, img.w - 1 - j);
  return out;
}

struct TrainStats {
  std::vector<std::pair<uint64_t, losses::LossReport>> log;  // (step, report)
  long long mask_fallbacks = 0;   // pseudo masks built from fewer peaks than t_c
  long long skipped_positive = 0; // (image, category) pairs with no usable peaks
};

// In-memory training set. Holding only clamped annotations here is load-
// bearing: no training path can observe a raw count above the subitizing
// range because the type cannot represent one.
struct TrainSet {
  std::vector<Tensor3> images;
  std::vector<CountAnnotation> annotations;

  void validate(int num_categories) const {
    check(!images.empty(), "train: dataset is empty");
    check(images.size() == annotations.size(),
          "train: image/annotation count mismatch");
    for (const auto& a : annotations)
      check(a.num_categories() == num_categories,
            "train: annotation category count mismatch");
  }
};

namespace detail {

class Sgd {
 public:
  Sgd(std::vector<net::ParamRef> params, const TrainConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_)
      velocity_.emplace_back(p.value->size(), 0.0);
  }

  void step(double lr_scale) {
    for (size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto& vel = velocity_[k];
      const double lr =
          (p.is_backbone ? cfg_.backbone_lr : cfg_.head_lr) * lr_scale;
      for (size_t i = 0; i < vel.size(); ++i) {
        const double g = (*p.grad)[i] + cfg_.weight_decay * (*p.value)[i];
        vel[i] = cfg_.momentum * vel[i] + g;
        (*p.value)[i] -= lr * vel[i];
      }
    }
  }

 private:
  std::vector<net::ParamRef> params_;
  std::vector<std::vector<double>> velocity_;
  TrainConfig cfg_;
};

// Everything computed for one image during the loss pass and reused during
// gradient assembly.
struct ImageWork {
  CategoryPartition partition;       // full partition (classification view)
  std::vector<int> sampled_absent;   // density-branch negative subsample
  std::vector<peaks::PeakMap> peak_maps;
  std::vector<std::optional<peaks::PseudoMask>> masks;  // only for c in S
  std::vector<double> scores;  // class confidences s_c
  std::vector<double> t_hat;   // raw density sums
  losses::ImageLossTerms terms;
};

}  // namespace detail

// Runs `epochs` epochs over the set; `include_spatial` switches stage-2
// behavior on. Appends one log row per optimizer step and advances
// network.step. Throws on non-finite loss.
inline void run_epochs(net::IlcNetwork& network, const TrainSet& data,
                       const TrainConfig& cfg, int epochs, bool include_spatial,
                       TrainStats& stats) {
  cfg.validate();
  const int C = network.head_config().num_categories;
  data.validate(C);
  const int radius = network.head_config().peak_radius;

  detail::Sgd sgd(network.params(), cfg);
  // One stream drives batch order, flips and negative sampling; seeded from
  // the config plus the network's step so a resumed run does not replay the
  // schedule prefix it already consumed.
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + network.step);

  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    double lr_scale = 1.0;
    if (cfg.lr_decay_every > 0)
      lr_scale = std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
    rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t b =
          std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);

      // ---- batch tensor (optionally flipped copies) ----
      const Tensor3& probe = data.images[order[start]];
      Tensor4 x(static_cast<int>(b), probe.c, probe.h, probe.w);
      for (size_t k = 0; k < b; ++k) {
        const Tensor3& src = data.images[order[start + k]];
        check(src.c == probe.c && src.h == probe.h && src.w == probe.w,
              "train: images in a batch must share one shape");
        const bool flip = cfg.flip_augmentation && rng.uniform() < 0.5;
        const Tensor3 view = flip ? flip_horizontal(src) : src;
        std::copy(view.v.begin(), view.v.end(),
                  x.v.begin() + static_cast<size_t>(k) * view.v.size());
      }

      auto [m, d] = network.forward(x, /*training=*/true);

      // ---- pass 1: per-image terms ----
      std::vector<detail::ImageWork> work(b);
      std::vector<losses::ImageLossTerms> batch_terms(b);
      for (size_t k = 0; k < b; ++k) {
        auto& wrk = work[k];
        const CountAnnotation& ann = data.annotations[order[start + k]];
        wrk.partition = partition_categories(ann);
        wrk.sampled_absent =
            sample_negatives(wrk.partition, cfg.negative_fraction, rng);

        wrk.peak_maps.reserve(C);
        wrk.scores.resize(C);
        wrk.t_hat.resize(C);
        wrk.masks.resize(C);
        for (int c = 0; c < C; ++c) {
          wrk.peak_maps.push_back(
              peaks::extract_peaks(m.grid(static_cast<int>(k), c), radius));
          wrk.scores[c] = peaks::class_confidence(wrk.peak_maps[c]);
          wrk.t_hat[c] = d.grid(static_cast<int>(k), c).sum();
        }

        auto& terms = wrk.terms;
        terms.class_term = losses::class_loss(wrk.scores, wrk.partition);

        // Density-branch partition: absent categories replaced by the
        // subsample; counts for them are zero by definition.
        CategoryPartition density_part = wrk.partition;
        density_part.absent = wrk.sampled_absent;
        bool degenerate = false;
        const double mse =
            losses::global_mse_loss(wrk.t_hat, ann, density_part, &degenerate);
        if (!degenerate) terms.mse = mse;

        if (!wrk.partition.beyond.empty()) {
          std::vector<double> beyond_hat;
          for (int c : wrk.partition.beyond) beyond_hat.push_back(wrk.t_hat[c]);
          terms.rank = losses::rank_loss(beyond_hat, cfg.t_tilde);
        }

        if (include_spatial) {
          if (!wrk.sampled_absent.empty()) {
            double sp_minus = 0.0;
            for (int c : wrk.sampled_absent)
              sp_minus += losses::spatial_negative_loss(
                  d.grid(static_cast<int>(k), c),
                  static_cast<int>(wrk.sampled_absent.size()));
            terms.sp_minus = sp_minus;
          }
          if (!wrk.partition.within.empty()) {
            const int s_count = static_cast<int>(wrk.partition.within.size());
            double sp_plus = 0.0;
            bool any = false;
            for (int c : wrk.partition.within) {
              const int t_c = ann.counts[c];
              bool fell_back = false;
              try {
                wrk.masks[c] =
                    peaks::pseudo_mask(wrk.peak_maps[c], t_c, &fell_back);
              } catch (const std::invalid_argument&) {
                stats.skipped_positive += 1;  // no usable peaks this batch
                continue;
              }
              if (fell_back) stats.mask_fallbacks += 1;
              const Grid masked = peaks::mask_density(
                  d.grid(static_cast<int>(k), c), *wrk.masks[c]);
              sp_plus +=
                  losses::spatial_positive_loss(masked, *wrk.masks[c], s_count);
              any = true;
            }
            if (any) terms.sp_plus = sp_plus;
          }
        }
        batch_terms[k] = terms;
      }

      const losses::LossReport report =
          losses::combine_batch(batch_terms, cfg.lambda_rank);
      if (!std::isfinite(report.total))
        throw std::runtime_error("train: non-finite loss at step " +
                                 std::to_string(network.step));

      // ---- pass 2: gradients, scaled by each term's batch denominator ----
      int n_sp_plus = 0, n_sp_minus = 0, n_mse = 0, n_rank = 0;
      for (const auto& t : batch_terms) {
        n_sp_plus += t.sp_plus.has_value();
        n_sp_minus += t.sp_minus.has_value();
        n_mse += t.mse.has_value();
        n_rank += t.rank.has_value();
      }
      const double f_class = 1.0 / static_cast<double>(b);
      const double f_sp_plus = n_sp_plus ? 1.0 / n_sp_plus : 0.0;
      const double f_sp_minus = n_sp_minus ? 1.0 / n_sp_minus : 0.0;
      const double f_mse = n_mse ? 1.0 / n_mse : 0.0;
      const double f_rank = n_rank ? 1.0 / n_rank : 0.0;

      Tensor4 dm(m.n, m.c, m.h, m.w, 0.0);
      Tensor4 dd(d.n, d.c, d.h, d.w, 0.0);
      const size_t plane = static_cast<size_t>(m.h) * m.w;

      for (size_t k = 0; k < b; ++k) {
        auto& wrk = work[k];
        const CountAnnotation& ann = data.annotations[order[start + k]];

        // Classification loss -> category maps, via peak positions only.
        const auto g_s = losses::class_loss_grad(wrk.scores, wrk.partition);
        for (int c = 0; c < C; ++c) {
          const auto positions = peaks::peak_positions(wrk.peak_maps[c]);
          if (positions.empty()) continue;
          const double share =
              f_class * g_s[c] / static_cast<double>(positions.size());
          double* slab = dm.slab(static_cast<int>(k), c);
          for (const auto& [pi, pj] : positions)
            slab[static_cast<size_t>(pi) * m.w + pj] += share;
        }

        // Count losses -> uniform over each density map.
        CategoryPartition density_part = wrk.partition;
        density_part.absent = wrk.sampled_absent;
        if (wrk.terms.mse) {
          const auto g_mse =
              losses::global_mse_grad(wrk.t_hat, ann, density_part);
          for (int c = 0; c < C; ++c) {
            if (g_mse[c] == 0.0) continue;
            const double add = f_mse * g_mse[c];
            double* slab = dd.slab(static_cast<int>(k), c);
            for (size_t i = 0; i < plane; ++i) slab[i] += add;
          }
        }
        if (wrk.terms.rank) {
          std::vector<double> beyond_hat;
          for (int c : wrk.partition.beyond) beyond_hat.push_back(wrk.t_hat[c]);
          const auto g_rank = losses::rank_grad(beyond_hat, cfg.t_tilde);
          for (size_t j = 0; j < g_rank.size(); ++j) {
            if (g_rank[j] == 0.0) continue;
            const double add = f_rank * cfg.lambda_rank * g_rank[j];
            double* slab = dd.slab(static_cast<int>(k), wrk.partition.beyond[j]);
            for (size_t i = 0; i < plane; ++i) slab[i] += add;
          }
        }

        if (include_spatial) {
          if (wrk.terms.sp_minus) {
            for (int c : wrk.sampled_absent) {
              const Grid g = losses::spatial_negative_grad(
                  d.grid(static_cast<int>(k), c),
                  static_cast<int>(wrk.sampled_absent.size()));
              double* slab = dd.slab(static_cast<int>(k), c);
              for (size_t i = 0; i < plane; ++i)
                slab[i] += f_sp_minus * g.v[i];
            }
          }
          if (wrk.terms.sp_plus) {
            const int s_count = static_cast<int>(wrk.partition.within.size());
            for (int c : wrk.partition.within) {
              if (!wrk.masks[c]) continue;  // skipped: no usable peaks
              const Grid masked = peaks::mask_density(
                  d.grid(static_cast<int>(k), c), *wrk.masks[c]);
              const Grid g =
                  losses::sp_plus_gradient(masked, *wrk.masks[c], s_count);
              double* slab = dd.slab(static_cast<int>(k), c);
              for (size_t i = 0; i < plane; ++i)
                slab[i] += f_sp_plus * g.v[i];
            }
          }
        }
      }

      network.zero_grad();
      network.backward(dm, dd);
      sgd.step(lr_scale);
      network.step += 1;
      stats.log.emplace_back(network.step, report);
    }
  }
}

// Stage 1: classification plus global count supervision only.
inline void train_stage1(net::IlcNetwork& network, const TrainSet& data,
                         const TrainConfig& cfg, TrainStats& stats) {
  run_epochs(network, data, cfg, cfg.stage1_epochs, /*include_spatial=*/false,
             stats);
}

// Stage 2: full objective with the spatial losses and per-batch pseudo masks.
inline void train_stage2(net::IlcNetwork& network, const TrainSet& data,
                         const TrainConfig& cfg, TrainStats& stats) {
  run_epochs(network, data, cfg, cfg.stage2_epochs, /*include_spatial=*/true,
             stats);
}

// Loss-log serialization: one CSV row per step with fixed formatting so
// identical runs produce identical bytes.
inline std::string format_loss_log(const TrainStats& stats) {
  std::string out = "step,class,sp_plus,sp_minus,mse,rank,total\n";
  char buf[256];
  for (const auto& [step, r] : stats.log) {
    std::snprintf(buf, sizeof(buf), "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<unsigned long long>(step), r.class_loss,
                  r.sp_plus, r.sp_minus, r.mse, r.rank, r.total);
    out += buf;
  }
  return out;
}

}  // namespace ilc::train
