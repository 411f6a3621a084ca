// Acceptance gate for the counting library and CLI. Runs nine independent
// checks — gradient correctness, peak/pseudo-mask/metric oracle equivalence,
// loss closed forms, an end-to-end synthetic counting run with its ablation
// trend, the adjacent-instance mask-selection fixture, and training
// determinism — printing one PASS/FAIL line per criterion. Exit code is the
// number of failed criteria.
//
// The end-to-end block shells out to the real CLI binary (path injected by
// the build) and works inside a scratch directory under the system temp path.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/datamodel.hpp"
#include "ilc/io.hpp"
#include "ilc/losses.hpp"
#include "ilc/metrics.hpp"
#include "ilc/peaks.hpp"
#include "ilc/segscore.hpp"
#include "ilc/synthdata.hpp"

namespace fs = std::filesystem;
using ilc::CountSample;
using ilc::Grid;
using ilc::GridPoint;
using ilc::MaskRecord;
using ilc::Rng;

namespace {

// ---- pinned tolerances ------------------------------------------------------

constexpr double kGradRelTol = 1e-4;    // finite-difference agreement
constexpr double kFdStep = 1e-4;        // central-difference step
constexpr double kClosedFormTol = 1e-6; // worked loss examples
constexpr double kRmseCeiling = 0.6;    // end-to-end test mRMSE bound
constexpr double kBeyondMeanFloor = 4.0;  // mean predicted count, GT in 5..8
constexpr double kAblationGap = 0.02;   // full model vs class+MSE
constexpr double kGameMonotoneSlack = 1e-9;
constexpr int kE2eTimeLimitSec = 1800;  // 30 minutes
constexpr int kGradTimeLimitSec = 60;

int g_failures = 0;

void report(int idx, const std::string& name, bool pass,
            const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  " << idx << ". " << name;
  if (!detail.empty()) std::cout << " — " << detail;
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

double central_diff(const std::function<double(double)>& f, double x) {
  return (f(x + kFdStep) - f(x - kFdStep)) / (2.0 * kFdStep);
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---- criterion 1: finite-difference gradient checks --------------------------

bool grad_check_fixture(Rng& rng, std::string* why) {
  const int h = 8, w = 8;

  // Masked-map positive loss: gradient on mask entries, exact zero off-mask.
  Grid density(h, w);
  for (auto& v : density.v) v = rng.uniform(-3.0, 3.0);
  ilc::peaks::PseudoMask mask;
  mask.values = Grid(h, w, 0.0);
  int entries = rng.uniform_int(1, 6);
  for (int k = 0; k < entries; ++k)
    mask.values.at(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1.0;
  const int cardinality_s = rng.uniform_int(1, 3);
  Grid masked = density;
  for (size_t k = 0; k < masked.v.size(); ++k)
    if (mask.values.v[k] == 0.0) masked.v[k] = 0.0;
  Grid g = ilc::losses::sp_plus_gradient(masked, mask, cardinality_s);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (mask.values.at(i, j) == 0.0) {
        if (g.at(i, j) != 0.0) {
          *why = "sp+ gradient nonzero off-mask";
          return false;
        }
        continue;
      }
      auto f = [&](double x) {
        Grid probe = masked;
        probe.at(i, j) = x;
        return ilc::losses::spatial_positive_loss(probe, mask, cardinality_s);
      };
      if (rel_err(g.at(i, j), central_diff(f, masked.at(i, j))) >
          kGradRelTol) {
        *why = "sp+ gradient mismatch at mask position";
        return false;
      }
    }
  }

  // Negative spatial loss: dense gradient over the whole grid.
  const int cardinality_a = rng.uniform_int(1, 3);
  Grid gn = ilc::losses::spatial_negative_grad(density, cardinality_a);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      auto f = [&](double x) {
        Grid probe = density;
        probe.at(i, j) = x;
        return ilc::losses::spatial_negative_loss(probe, cardinality_a);
      };
      if (rel_err(gn.at(i, j), central_diff(f, density.at(i, j))) >
          kGradRelTol) {
        *why = "sp- gradient mismatch";
        return false;
      }
    }

  // Classification loss over a random partition.
  const int c_total = rng.uniform_int(2, 5);
  ilc::CategoryPartition part;
  std::vector<int> labels(c_total);
  for (int c = 0; c < c_total; ++c) {
    int roll = rng.uniform_int(0, 2);
    if (roll == 0) part.absent.push_back(c);
    else if (roll == 1) part.within.push_back(c);
    else part.beyond.push_back(c);
  }
  if (part.total() == 0) part.absent.push_back(0);
  std::vector<double> scores(c_total);
  for (auto& s : scores) s = rng.uniform(-3.0, 3.0);
  auto gc = ilc::losses::class_loss_grad(scores, part);
  for (int c = 0; c < c_total; ++c) {
    auto f = [&](double x) {
      auto probe = scores;
      probe[size_t(c)] = x;
      return ilc::losses::class_loss(probe, part);
    };
    if (rel_err(gc[size_t(c)], central_diff(f, scores[size_t(c)])) >
        kGradRelTol) {
      *why = "class gradient mismatch";
      return false;
    }
  }

  // Global count MSE over a random absent/within split.
  std::vector<int> counts(size_t(c_total), 0);
  for (int c : part.within) counts[size_t(c)] = rng.uniform_int(1, 4);
  for (int c : part.beyond) counts[size_t(c)] = ilc::kBeyond;
  ilc::CountAnnotation ann("fx", counts);
  std::vector<double> preds(static_cast<size_t>(c_total));
  for (auto& p : preds) p = rng.uniform(0.0, 5.0);
  auto gm = ilc::losses::global_mse_grad(preds, ann, part);
  for (int c = 0; c < c_total; ++c) {
    auto f = [&](double x) {
      auto probe = preds;
      probe[size_t(c)] = x;
      return ilc::losses::global_mse_loss(probe, ann, part);
    };
    if (rel_err(gm[size_t(c)], central_diff(f, preds[size_t(c)])) >
        kGradRelTol) {
      *why = "mse gradient mismatch";
      return false;
    }
  }

  // Ranking hinge, sampled away from the kink at the margin.
  const double t_tilde = 5.0;
  const int n_beyond = rng.uniform_int(1, 4);
  std::vector<double> beyond(static_cast<size_t>(n_beyond));
  for (auto& b : beyond) {
    b = rng.uniform(0.0, 9.0);
    if (std::abs(b - t_tilde) < 0.5) b += 1.0;
  }
  auto gr = ilc::losses::rank_grad(beyond, t_tilde);
  for (size_t k = 0; k < beyond.size(); ++k) {
    auto f = [&](double x) {
      auto probe = beyond;
      probe[k] = x;
      return ilc::losses::rank_loss(probe, t_tilde);
    };
    if (rel_err(gr[k], central_diff(f, beyond[k])) > kGradRelTol) {
      *why = "rank gradient mismatch";
      return false;
    }
  }
  return true;
}

void criterion1() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  std::string why;
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial)
    ok = grad_check_fixture(rng, &why);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (ok && secs >= kGradTimeLimitSec) {
    ok = false;
    why = "runtime " + fmt(secs) + "s exceeds " +
          std::to_string(kGradTimeLimitSec) + "s";
  }
  report(1, "finite-difference gradient checks (100 fixtures)", ok,
         ok ? "all five losses, " + fmt(secs) + "s" : why);
}

// ---- criterion 2: peak extraction vs brute-force oracle ----------------------

Grid brute_force_peaks(const Grid& m, int radius) {
  Grid out(m.h, m.w, 0.0);
  for (int i = 0; i < m.h; ++i)
    for (int j = 0; j < m.w; ++j) {
      bool strict_max = true;
      for (int di = -radius; di <= radius && strict_max; ++di)
        for (int dj = -radius; dj <= radius && strict_max; ++dj) {
          if (di == 0 && dj == 0) continue;
          int r = i + di, c = j + dj;
          if (r < 0 || r >= m.h || c < 0 || c >= m.w) continue;
          if (m.at(r, c) >= m.at(i, j)) strict_max = false;
        }
      if (strict_max) out.at(i, j) = m.at(i, j);
    }
  return out;
}

void criterion2() {
  Rng rng(202);
  bool ok = true;
  std::string why;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    int h = rng.uniform_int(1, 64), w = rng.uniform_int(1, 64);
    Grid m(h, w);
    const bool quantized = trial % 3 == 0;  // force plateaus and ties
    for (auto& v : m.v)
      v = quantized ? 0.25 * rng.uniform_int(0, 4) : rng.uniform(0.0, 1.0);
    int radius = 1 + trial % 2;
    Grid expect = brute_force_peaks(m, radius);
    ilc::peaks::PeakMap got = ilc::peaks::extract_peaks(m, radius);
    if (got.values.v != expect.v) {
      ok = false;
      why = "mismatch on trial " + std::to_string(trial);
    }
  }
  report(2, "peak extraction equals neighborhood oracle (1000 grids)", ok,
         why);
}

// ---- criterion 3: pseudo-mask vs sort-and-threshold oracle -------------------

void criterion3() {
  Rng rng(303);
  bool ok = true;
  std::string why;
  int tie_cases = 0, fallback_cases = 0;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    int h = rng.uniform_int(3, 24), w = rng.uniform_int(3, 24);
    Grid m(h, w);
    // Quantized values guarantee repeated peak heights (tie coverage).
    for (auto& v : m.v) v = 0.2 * rng.uniform_int(0, 5);
    m.at(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1.3;
    ilc::peaks::PeakMap pm = ilc::peaks::extract_peaks(m, 1);

    std::vector<double> vals;
    for (double v : pm.values.v)
      if (v != 0.0) vals.push_back(v);
    if (vals.empty()) continue;  // all-zero maps are rejected by contract
    std::sort(vals.begin(), vals.end(), std::greater<double>());
    int t_c = rng.uniform_int(1, 5);
    double threshold =
        t_c <= static_cast<int>(vals.size()) ? vals[size_t(t_c - 1)] : vals.back();
    if (t_c > static_cast<int>(vals.size())) ++fallback_cases;
    if (std::count(vals.begin(), vals.end(), threshold) > 1) ++tie_cases;

    Grid expect(h, w, 0.0);
    for (size_t k = 0; k < expect.v.size(); ++k)
      if (pm.values.v[k] != 0.0 && pm.values.v[k] >= threshold)
        expect.v[k] = 1.0;

    bool fell_back = false;
    ilc::peaks::PseudoMask got = ilc::peaks::pseudo_mask(pm, t_c, &fell_back);
    if (got.values.v != expect.v || got.threshold != threshold ||
        fell_back != (t_c > static_cast<int>(vals.size()))) {
      ok = false;
      why = "mismatch on trial " + std::to_string(trial);
    }
  }
  if (ok && (tie_cases < 50 || fallback_cases < 20)) {
    ok = false;
    why = "fixture pool too easy: " + std::to_string(tie_cases) + " ties, " +
          std::to_string(fallback_cases) + " fallbacks";
  }
  report(3, "pseudo-mask equals sort-and-threshold oracle (1000 maps)", ok,
         ok ? std::to_string(tie_cases) + " tie cases, " +
                  std::to_string(fallback_cases) + " threshold fallbacks"
            : why);
}

// ---- criterion 4: worked loss examples ---------------------------------------

void criterion4() {
  using namespace ilc::losses;
  bool ok = true;
  std::string why;
  auto expect_near = [&](double got, double want, const std::string& label) {
    if (std::abs(got - want) > kClosedFormTol) {
      ok = false;
      why = label + ": got " + fmt(got) + ", want " + fmt(want);
    }
  };

  // Logistic classification on s = [2, -2], positive then absent.
  ilc::CategoryPartition p1;
  p1.within = {0};
  p1.absent = {1};
  expect_near(class_loss({2.0, -2.0}, p1), 0.126928011042973, "class");

  // Single-entry pseudo mask with a zero response.
  ilc::peaks::PseudoMask m1;
  m1.values = Grid(1, 1, 1.0);
  expect_near(spatial_positive_loss(Grid(1, 1, 0.0), m1, 1),
              0.693147180559945, "sp+ single");

  // Two mask entries with responses {0, 2}.
  ilc::peaks::PseudoMask m2;
  m2.values = Grid(1, 2, 1.0);
  Grid d2(1, 2, 0.0);
  d2.at(0, 1) = 2.0;
  expect_near(spatial_positive_loss(d2, m2, 1), 0.410037595801459, "sp+ pair");

  // One cell holding 3 on an absent category.
  expect_near(spatial_negative_loss(Grid(1, 1, 3.0), 1), 3.048587351573742,
              "sp-");

  // Absent category predicting 0.5 plus an exact within-range hit.
  ilc::CategoryPartition p2;
  p2.absent = {0};
  p2.within = {1};
  ilc::CountAnnotation ann("fx", {0, 2});
  expect_near(global_mse_loss({0.5, 2.0}, ann, p2), 0.125, "mse");

  // Two beyond-range categories, one under the margin by 1.
  expect_near(rank_loss({5.0, 4.0}, 5.0), 0.5, "rank");

  report(4, "six worked loss examples reproduce to 1e-6", ok, why);
}

// ---- criterion 5: metric oracles ---------------------------------------------

double rmse_reference(const std::vector<CountSample>& records, bool relative,
                      bool nonzero_only, bool* empty) {
  double sum = 0.0;
  long long n = 0;
  for (const CountSample& s : records) {
    if (nonzero_only && s.ground_truth <= 0) continue;
    double e = double(s.ground_truth) - double(s.predicted);
    double term = e * e;
    if (relative) term /= double(s.ground_truth) + 1.0;
    sum += term;
    n += 1;
  }
  *empty = (n == 0);
  return *empty ? 0.0 : std::sqrt(sum / double(n));
}

double game_reference(const Grid& d, const std::vector<GridPoint>& pts,
                      int n) {
  const int k = 1 << n;
  auto lo = [&](long long i, int extent) {
    return static_cast<int>(i * extent / k);
  };
  double total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double mass = 0.0;
      for (int r = 0; r < d.h; ++r)
        for (int c = 0; c < d.w; ++c)
          if (r >= lo(i, d.h) && r < lo(i + 1, d.h) && c >= lo(j, d.w) &&
              c < lo(j + 1, d.w))
            mass += d.at(r, c);
      long long cnt = 0;
      for (const GridPoint& p : pts)
        if (p.row >= lo(i, d.h) && p.row < lo(i + 1, d.h) &&
            p.col >= lo(j, d.w) && p.col < lo(j + 1, d.w))
          ++cnt;
      total += std::abs(mass - double(cnt));
    }
  return total;
}

double iou_reference(const Grid& a, const Grid& b) {
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    bool fa = a.v[i] != 0.0, fb = b.v[i] != 0.0;
    if (fa && fb) ++inter;
    if (fa || fb) ++uni;
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

double abo_reference(const std::vector<MaskRecord>& preds,
                     const std::vector<MaskRecord>& gt, int num_categories,
                     std::vector<double>* per_cat) {
  per_cat->assign(size_t(num_categories), std::nan(""));
  double mean_sum = 0.0;
  int mean_n = 0;
  for (int c = 0; c < num_categories; ++c) {
    double sum = 0.0;
    long long inst = 0;
    for (const MaskRecord& g : gt) {
      if (g.category != c) continue;
      double best = 0.0;
      for (const MaskRecord& p : preds)
        if (p.category == c && p.image_id == g.image_id)
          best = std::max(best, iou_reference(p.mask, g.mask));
      sum += best;
      ++inst;
    }
    if (inst == 0) continue;
    (*per_cat)[size_t(c)] = sum / double(inst);
    mean_sum += (*per_cat)[size_t(c)];
    ++mean_n;
  }
  return mean_n ? mean_sum / mean_n : std::nan("");
}

double ap_reference_category(const std::vector<MaskRecord>& preds,
                             const std::vector<MaskRecord>& gt, int category,
                             double threshold) {
  std::vector<int> gt_idx;
  for (size_t i = 0; i < gt.size(); ++i)
    if (gt[i].category == category) gt_idx.push_back(int(i));
  if (gt_idx.empty()) return 0.0;

  std::vector<int> order;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i].category == category) order.push_back(int(i));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[size_t(a)].score > preds[size_t(b)].score;
  });

  std::vector<bool> used(gt_idx.size(), false);
  std::vector<double> prec, rec;
  long long tp = 0, fp = 0;
  for (int pi : order) {
    double best = -1.0;
    int best_g = -1;
    for (size_t g = 0; g < gt_idx.size(); ++g) {
      if (used[g]) continue;
      const MaskRecord& cand = gt[size_t(gt_idx[g])];
      if (cand.image_id != preds[size_t(pi)].image_id) continue;
      double v = iou_reference(preds[size_t(pi)].mask, cand.mask);
      if (v > best) {
        best = v;
        best_g = int(g);
      }
    }
    if (best_g >= 0 && best >= threshold) {
      used[size_t(best_g)] = true;
      ++tp;
    } else {
      ++fp;
    }
    prec.push_back(double(tp) / double(tp + fp));
    rec.push_back(double(tp) / double(gt_idx.size()));
  }

  std::vector<double> env(prec.size());
  for (int i = int(prec.size()) - 1; i >= 0; --i)
    env[size_t(i)] =
        std::max(prec[size_t(i)],
                 i + 1 < int(prec.size()) ? env[size_t(i + 1)] : 0.0);
  double ap = 0.0, prev = 0.0;
  for (size_t i = 0; i < prec.size(); ++i) {
    if (rec[i] <= prev) continue;
    ap += (rec[i] - prev) * env[i];
    prev = rec[i];
  }
  return ap;
}

Grid random_mask(Rng& rng, int h, int w) {
  if (rng.uniform() < 0.1) return Grid(h, w, 0.0);
  int rh = rng.uniform_int(1, h), cw = rng.uniform_int(1, w);
  int r0 = rng.uniform_int(0, h - rh), c0 = rng.uniform_int(0, w - cw);
  Grid g(h, w, 0.0);
  for (int r = r0; r < r0 + rh; ++r)
    for (int c = c0; c < c0 + cw; ++c) g.at(r, c) = 1.0;
  return g;
}

void criterion5() {
  Rng rng(505);
  bool ok = true;
  std::string why;

  // RMSE family: per-category exact equality on all four variants.
  for (int trial = 0; trial < 100 && ok; ++trial) {
    int n_cat = rng.uniform_int(1, 4);
    std::vector<std::vector<CountSample>> samples(static_cast<size_t>(n_cat));
    for (auto& cat : samples) {
      int n = rng.uniform_int(1, 30);
      for (int k = 0; k < n; ++k)
        cat.push_back({rng.uniform_int(0, 8), rng.uniform_int(0, 9)});
    }
    for (bool relative : {false, true})
      for (bool nonzero : {false, true}) {
        bool any_nonzero = true;
        if (nonzero)
          for (const auto& cat : samples) {
            bool has = false;
            for (const auto& s : cat) has = has || s.ground_truth > 0;
            any_nonzero = any_nonzero && has;
          }
        // Plain variants error out on empty categories; skip the comparison
        // only where the library contract specifies an exclusion instead.
        ilc::PerCategoryMetric got =
            ilc::rmse_family(samples, relative, nonzero);
        for (int c = 0; c < n_cat && ok; ++c) {
          bool empty = false;
          double want =
              rmse_reference(samples[size_t(c)], relative, nonzero, &empty);
          if (empty) {
            if (!got.per_category.empty() &&
                !std::isnan(got.per_category[size_t(c)])) {
              ok = false;
              why = "rmse: empty category not excluded";
            }
            continue;
          }
          if (got.per_category[size_t(c)] != want) {
            ok = false;
            why = "rmse mismatch on trial " + std::to_string(trial);
          }
        }
        (void)any_nonzero;
      }
  }

  // GAME: exact equality against the full-grid scan plus monotonicity in n.
  for (int trial = 0; trial < 100 && ok; ++trial) {
    int h = rng.uniform_int(1, 32), w = rng.uniform_int(1, 32);
    Grid d(h, w);
    for (auto& v : d.v) v = rng.uniform(0.0, 0.4);
    int n_pts = rng.uniform_int(0, 10);
    std::vector<GridPoint> pts;
    for (int k = 0; k < n_pts; ++k)
      pts.push_back({rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)});
    double prev = -1.0;
    for (int n = 0; n <= 3; ++n) {
      double got = ilc::game_cell_deviation(d, pts, n);
      double want = game_reference(d, pts, n);
      if (got != want) {
        ok = false;
        why = "game mismatch on trial " + std::to_string(trial);
        break;
      }
      if (prev >= 0.0 && got + kGameMonotoneSlack < prev) {
        ok = false;
        why = "game not monotone in n on trial " + std::to_string(trial);
        break;
      }
      prev = got;
    }
  }

  // ABO and AP against the direct references on shared mask fixtures.
  for (int trial = 0; trial < 100 && ok; ++trial) {
    const int n_cat = 2, h = 8, w = 8;
    std::vector<MaskRecord> preds, gt;
    for (const std::string& img : {"a", "b"}) {
      int n_gt = rng.uniform_int(0, 3), n_pred = rng.uniform_int(0, 4);
      for (int k = 0; k < n_gt; ++k) {
        MaskRecord r;
        r.image_id = img;
        r.category = rng.uniform_int(0, n_cat - 1);
        r.instance = k;
        r.mask = random_mask(rng, h, w);
        gt.push_back(std::move(r));
      }
      for (int k = 0; k < n_pred; ++k) {
        MaskRecord r;
        r.image_id = img;
        r.category = rng.uniform_int(0, n_cat - 1);
        r.instance = k;
        r.score = 0.25 * rng.uniform_int(0, 4);  // duplicate scores likely
        r.mask = random_mask(rng, h, w);
        preds.push_back(std::move(r));
      }
    }
    std::vector<double> abo_want_cat;
    double abo_want = abo_reference(preds, gt, n_cat, &abo_want_cat);
    ilc::PerCategoryMetric abo_got = ilc::abo(preds, gt, n_cat);
    for (int c = 0; c < n_cat && ok; ++c) {
      double wantc = abo_want_cat[size_t(c)];
      double gotc = abo_got.per_category[size_t(c)];
      if (std::isnan(wantc) != std::isnan(gotc) ||
          (!std::isnan(wantc) && wantc != gotc)) {
        ok = false;
        why = "abo mismatch on trial " + std::to_string(trial);
      }
    }
    if (ok && !std::isnan(abo_want) && abo_want != abo_got.mean) {
      ok = false;
      why = "abo mean mismatch on trial " + std::to_string(trial);
    }
    for (double thr : {0.25, 0.5, 0.75}) {
      if (!ok) break;
      ilc::PerCategoryMetric ap_got =
          ilc::average_precision(preds, gt, n_cat, thr);
      for (int c = 0; c < n_cat && ok; ++c) {
        double want = ap_reference_category(preds, gt, c, thr);
        if (ap_got.per_category[size_t(c)] != want) {
          ok = false;
          why = "ap mismatch on trial " + std::to_string(trial);
        }
      }
    }
  }

  report(5, "metric oracles match naive references exactly (100 fixtures)",
         ok, why);
}

// ---- criteria 6, 7, 9: end-to-end runs through the CLI ------------------------

int run_cli(const std::string& args, const fs::path& log) {
  std::string cmd =
      std::string(ILCOUNT_BIN) + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

// Mean per-category RMSE of a prediction dump against raw test-split counts.
// Also surfaces the mean predicted count over beyond-range records and the
// nonzero-only variant for the reporting criteria.
struct EvalNumbers {
  double mrmse = std::nan("");
  double mrmse_nz = std::nan("");
  double beyond_mean = std::nan("");
  long long beyond_records = 0;
};

EvalNumbers eval_predictions(const ilc::synth::Dataset& ds,
                             const std::string& pred_path) {
  auto records = ilc::io::read_predictions(pred_path);
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < ds.ids.size(); ++i) index[ds.ids[i]] = i;

  const int n_cat = ds.num_categories();
  std::vector<std::vector<CountSample>> samples(static_cast<size_t>(n_cat));
  double beyond_sum = 0.0;
  long long beyond_n = 0;
  for (const auto& r : records) {
    auto it = index.find(r.image_id);
    ilc::check(it != index.end(), "acceptance: prediction for unknown image");
    int truth = static_cast<int>(ds.raw_counts[it->second][size_t(r.category)]);
    samples[size_t(r.category)].push_back({truth, r.count});
    if (truth >= 5 && truth <= 8) {
      beyond_sum += r.count;
      ++beyond_n;
    }
  }
  EvalNumbers out;
  out.mrmse = ilc::rmse_family(samples, false, false).mean;
  out.mrmse_nz = ilc::rmse_family(samples, false, true).mean;
  out.beyond_mean = beyond_n ? beyond_sum / double(beyond_n) : std::nan("");
  out.beyond_records = beyond_n;
  return out;
}

void criteria_6_7(const fs::path& work) {
  const fs::path log = work / "cli.log";
  const std::string data = (work / "data").string();
  const auto t0 = std::chrono::steady_clock::now();

  // Shared synthetic set: 1000 train / 200 test, three categories, raw
  // counts 0..8 (supervision is clamped by the training loader).
  int rc = run_cli("gen-synth --out " + data +
                       " --images 1200 --size 64 --train-fraction "
                       "0.8333333333 --max-count 8 --seed 42",
                   log);
  if (rc != 0) {
    report(6, "end-to-end synthetic counting", false, "gen-synth failed");
    report(7, "ablation trend", false, "gen-synth failed");
    return;
  }

  const std::string recipe =
      " --stage1-epochs 30 --stage2-epochs 30 --lr-decay-every 20 "
      "--lr-decay-factor 0.3 --seed 42";

  // Full model: both stages, ranking loss at its default weight.
  auto train_and_eval = [&](const std::string& name, const std::string& args,
                            const std::string& ckpt, EvalNumbers* out) {
    const std::string dir = (work / name).string();
    if (run_cli("train --data " + data + " --out " + dir + " " + args, log) !=
        0)
      return false;
    if (run_cli("predict --checkpoint " + dir + "/" + ckpt + " --data " +
                    data + " --out " + dir + "_pred",
                log) != 0)
      return false;
    ilc::synth::Dataset test = ilc::synth::load_dataset(data, "test");
    *out = eval_predictions(test, dir + "_pred/predictions.txt");
    return true;
  };

  EvalNumbers full;
  bool full_ok = train_and_eval("full", "--stage all" + recipe, "stage2.ckpt",
                                &full);
  const double e2e_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  // 6b requires the numbers reported through the real evaluate command too.
  if (full_ok)
    full_ok = run_cli("evaluate --predictions " + (work / "full_pred").string() +
                          "/predictions.txt --data " + data +
                          " --metrics mrmse,mrmse-nz --out " +
                          (work / "report.txt").string(),
                      log) == 0;

  {
    bool ok = full_ok;
    std::string detail;
    if (!ok) {
      detail = "pipeline failed, see " + log.string();
    } else {
      ok = full.mrmse <= kRmseCeiling && std::isfinite(full.mrmse_nz) &&
           full.beyond_mean >= kBeyondMeanFloor &&
           e2e_secs < kE2eTimeLimitSec;
      detail = "mRMSE " + fmt(full.mrmse) + " (<= " + fmt(kRmseCeiling) +
               "), mRMSE-nz " + fmt(full.mrmse_nz) + ", beyond-range mean " +
               fmt(full.beyond_mean) + " over " +
               std::to_string(full.beyond_records) + " records (>= " +
               fmt(kBeyondMeanFloor) + "), " + fmt(e2e_secs) + "s";
    }
    report(6, "end-to-end synthetic counting (1000/200, counts 0-8)", ok,
           detail);
  }

  // Ablation: class+MSE only (single stage, no ranking), then +spatial
  // (both stages, no ranking), then +ranking (the full model above). Total
  // epoch budgets match across the three runs.
  EvalNumbers base, spatial;
  bool abl_ok =
      full_ok &&
      train_and_eval("base",
                     "--stage 1 --lambda-rank 0 --stage1-epochs 60 "
                     "--lr-decay-every 20 --lr-decay-factor 0.3 --seed 42",
                     "stage1.ckpt", &base) &&
      train_and_eval("spatial", "--stage all --lambda-rank 0" + recipe,
                     "stage2.ckpt", &spatial);
  {
    bool ok = abl_ok;
    std::string detail;
    if (!ok) {
      detail = "pipeline failed, see " + log.string();
    } else {
      ok = base.mrmse >= spatial.mrmse && spatial.mrmse >= full.mrmse &&
           base.mrmse - full.mrmse >= kAblationGap;
      detail = "class+MSE " + fmt(base.mrmse) + " >= +spatial " +
               fmt(spatial.mrmse) + " >= +rank " + fmt(full.mrmse) +
               ", full-model gap " + fmt(base.mrmse - full.mrmse) + " (>= " +
               fmt(kAblationGap) + ")";
    }
    report(7, "ablation trend over loss terms", ok, detail);
  }
}

// Determinism is a property of the training loop, checked at small scale:
// two identical seeded runs must produce byte-identical logs and dumps.
void criterion9(const fs::path& work) {
  const fs::path log = work / "cli.log";
  const std::string small = (work / "det_data").string();
  bool ok = run_cli("gen-synth --out " + small +
                        " --images 60 --size 32 --seed 9",
                    log) == 0;
  std::string log_a, log_b, pred_a, pred_b;
  for (int rep = 0; rep < 2 && ok; ++rep) {
    const std::string dir = (work / ("det_" + std::to_string(rep))).string();
    ok = run_cli("train --data " + small + " --out " + dir +
                     " --stage all --stage1-epochs 2 --stage2-epochs 2 "
                     "--seed 33",
                 log) == 0 &&
         run_cli("predict --checkpoint " + dir + "/stage2.ckpt --data " +
                     small + " --out " + dir + "_pred",
                 log) == 0;
    if (!ok) break;
    (rep == 0 ? log_a : log_b) = ilc::io::read_text(dir + "/train_log.csv");
    (rep == 0 ? pred_a : pred_b) =
        ilc::io::read_text(dir + "_pred/predictions.txt");
  }
  std::string detail;
  if (!ok)
    detail = "pipeline failed, see " + log.string();
  else if (log_a != log_b)
    detail = "loss logs differ between identical seeded runs";
  else if (pred_a != pred_b)
    detail = "prediction dumps differ between identical seeded runs";
  ok = ok && log_a == log_b && pred_a == pred_b && !log_a.empty();
  report(9, "seeded training runs are byte-identical", ok,
         ok ? "loss logs and prediction dumps match" : detail);
}

// ---- criterion 8: adjacent-instance scoring fixture ---------------------------

void criterion8() {
  const int hw = 12;
  auto rect = [&](int r0, int c0, int rh, int cw) {
    Grid g(hw, hw, 0.0);
    for (int r = r0; r < r0 + rh; ++r)
      for (int c = c0; c < c0 + cw; ++c) g.at(r, c) = 1.0;
    return g;
  };
  Grid blob1 = rect(3, 2, 6, 4), blob2 = rect(3, 6, 6, 4);
  Grid category(hw, hw, 0.0), density(hw, hw, 0.0);
  for (int r = 0; r < hw; ++r)
    for (int c = 0; c < hw; ++c)
      if (blob1.at(r, c) != 0.0 || blob2.at(r, c) != 0.0) {
        category.at(r, c) = 1.0;
        density.at(r, c) = 1.0 / 24.0;  // each instance integrates to one
      }

  ilc::PeakEvidence p1{5, 3, 0, ilc::fallback_response(category, 5, 3)};
  ilc::PeakEvidence p2{5, 7, 0, ilc::fallback_response(category, 5, 7)};
  std::vector<ilc::Proposal> props{ilc::make_proposal(blob1),
                                   ilc::make_proposal(blob2),
                                   ilc::make_proposal(category)};
  ilc::Tensor3 d(1, hw, hw), q(1, hw, hw);
  d.set_channel(0, density);
  q.set_channel(0, Grid(hw, hw, 0.0));

  auto strict = ilc::select_masks({p1, p2}, props, d, q, {1.0, 1.0, 1.0});
  auto loose = ilc::select_masks({p1, p2}, props, d, q, {1.0, 1.0, 0.0});
  bool split = strict.size() == 2 && strict[0].proposal_index == 0 &&
               strict[1].proposal_index == 1;
  bool merged_wins =
      loose.size() == 2 &&
      (loose[0].proposal_index == 2 || loose[1].proposal_index == 2);
  bool ok = split && merged_wins;
  std::string detail;
  if (ok)
    detail = "default weights pick the two singles; gamma=0 hands " +
             std::to_string((loose[0].proposal_index == 2) +
                            (loose[1].proposal_index == 2)) +
             " peak(s) to the merged proposal";
  else if (!split)
    detail = "default weights failed to separate the instances";
  else
    detail = "gamma=0 never selected the merged proposal";
  report(8, "density penalty splits adjacent instances", ok, detail);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "ilc_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criteria_6_7(work);
  criterion8();
  criterion9(work);

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : std::to_string(g_failures) +
                                      " CRITERIA FAILED")
            << std::endl;
  return g_failures;
}
