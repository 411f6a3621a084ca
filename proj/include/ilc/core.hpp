// Core value types shared by every module: dense 2-D/3-D/4-D grids of
// doubles, stable logistic helpers and a reproducible RNG front-end.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ilc {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// H x W row-major grid. Rows are indexed first: at(i, j) == row i, col j.
struct Grid {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_) {
    check(h_ >= 1 && w_ >= 1, "Grid: dimensions must be >= 1");
    v.assign(static_cast<size_t>(h_) * w_, fill);
  }
  static Grid from_rows(const std::vector<std::vector<double>>& rows) {
    check(!rows.empty() && !rows[0].empty(), "Grid: empty row data");
    Grid g(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < g.h; ++i) {
      check(static_cast<int>(rows[i].size()) == g.w, "Grid: ragged rows");
      for (int j = 0; j < g.w; ++j) g.at(i, j) = rows[i][j];
    }
    return g;
  }

  double& at(int i, int j) { return v[static_cast<size_t>(i) * w + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * w + j]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

  double sum() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// C x H x W stack of grids. Channel c is a contiguous H*W slab.
struct Tensor3 {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, double fill = 0.0) : c(c_), h(h_), w(w_) {
    check(c_ >= 1 && h_ >= 1 && w_ >= 1, "Tensor3: dimensions must be >= 1");
    v.assign(static_cast<size_t>(c_) * h_ * w_, fill);
  }

  double& at(int ci, int i, int j) {
    return v[(static_cast<size_t>(ci) * h + i) * w + j];
  }
  double at(int ci, int i, int j) const {
    return v[(static_cast<size_t>(ci) * h + i) * w + j];
  }

  Grid channel(int ci) const {
    Grid g(h, w);
    const double* src = v.data() + static_cast<size_t>(ci) * h * w;
    std::copy(src, src + static_cast<size_t>(h) * w, g.v.begin());
    return g;
  }
  void set_channel(int ci, const Grid& g) {
    check(g.h == h && g.w == w, "Tensor3: channel shape mismatch");
    std::copy(g.v.begin(), g.v.end(),
              v.begin() + static_cast<size_t>(ci) * h * w);
  }
  double channel_sum(int ci) const {
    const double* src = v.data() + static_cast<size_t>(ci) * h * w;
    double s = 0.0;
    for (size_t k = 0; k < static_cast<size_t>(h) * w; ++k) s += src[k];
    return s;
  }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Per-category spatial response grids (classification branch output) and
// per-category density maps (density branch output) share one layout.
using CategoryMaps = Tensor3;
using DensityMaps = Tensor3;

// N x C x H x W batch tensor used inside the network.
struct Tensor4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_) {
    check(n_ >= 1 && c_ >= 1 && h_ >= 1 && w_ >= 1,
          "Tensor4: dimensions must be >= 1");
    v.assign(static_cast<size_t>(n_) * c_ * h_ * w_, fill);
  }

  size_t idx(int ni, int ci, int i, int j) const {
    return ((static_cast<size_t>(ni) * c + ci) * h + i) * w + j;
  }
  double& at(int ni, int ci, int i, int j) { return v[idx(ni, ci, i, j)]; }
  double at(int ni, int ci, int i, int j) const { return v[idx(ni, ci, i, j)]; }

  double* slab(int ni, int ci) {
    return v.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
  }
  const double* slab(int ni, int ci) const {
    return v.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
  }

  Grid grid(int ni, int ci) const {
    Grid g(h, w);
    const double* src = slab(ni, ci);
    std::copy(src, src + static_cast<size_t>(h) * w, g.v.begin());
    return g;
  }
  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

// ---- logistic helpers (numerically stable for large |x|) -------------------

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) = -softplus(-x)
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// log(1 - sigmoid(x)) = log(sigmoid(-x))
inline double log_one_minus_sigmoid(double x) { return log_sigmoid(-x); }

// ---- reproducible randomness ------------------------------------------------
//
// std::mt19937_64 has a pinned algorithm, but the standard distributions do
// not, so all mappings from raw engine output to values live here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    check(lo <= hi, "Rng::uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  // Box-Muller; one value per call, the pair partner is cached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(eng_() % i);
      std::swap(xs[i - 1], xs[j]);
    }
  }

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ilc
