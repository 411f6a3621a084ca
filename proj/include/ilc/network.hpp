// Two-branch fully convolutional network: a pluggable backbone followed by a
// shared 1x1 convolution with 2P channels, split evenly into a classification
// branch (object category maps) and a density branch (density maps). Each
// branch applies batch normalization and a rectifier before its final 1x1
// convolution to C channels. No global pooling anywhere.
//
// All layers carry their own backward pass; no autodiff framework involved.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ilc/core.hpp"

namespace ilc::net {

struct ParamRef {
  std::string name;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;
  bool is_backbone = false;
};

// Named tensors for checkpointing: parameters plus non-trained state such as
// batch-norm running statistics.
struct StateRef {
  std::string name;
  std::vector<double>* value = nullptr;
};

// ---- layers -----------------------------------------------------------------

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    check(in_c >= 1 && out_c >= 1 && k >= 1 && stride >= 1 && pad >= 0,
          "Conv2d: bad shape parameters");
    weight_.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.0);
    bias_.assign(out_c, 0.0);
    gw_.assign(weight_.size(), 0.0);
    gb_.assign(bias_.size(), 0.0);
  }

  void init_he(Rng& rng) {
    const double stddev = std::sqrt(2.0 / (in_c_ * k_ * k_));
    for (auto& w : weight_) w = rng.normal(0.0, stddev);
    std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor4 forward(const Tensor4& x) {
    check(x.c == in_c_, "Conv2d: input channel mismatch");
    x_cache_ = x;
    const int oh = out_dim(x.h), ow = out_dim(x.w);
    check(oh >= 1 && ow >= 1, "Conv2d: input too small");
    Tensor4 y(x.n, out_c_, oh, ow);
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_c_; ++co) {
        double* yp = y.slab(n, co);
        const double b = bias_[co];
        for (int i = 0; i < oh * ow; ++i) yp[i] = b;
        for (int ci = 0; ci < in_c_; ++ci) {
          const double* xp = x.slab(n, ci);
          const double* wp =
              &weight_[(static_cast<size_t>(co) * in_c_ + ci) * k_ * k_];
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const double w = wp[ky * k_ + kx];
              if (w == 0.0) continue;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= x.h) continue;
                const double* xrow = xp + static_cast<size_t>(iy) * x.w;
                double* yrow = yp + static_cast<size_t>(oy) * ow;
                int ox0 = 0, ox1 = ow - 1;
                while (ox0 * stride_ - pad_ + kx < 0) ++ox0;
                while (ox1 >= 0 && ox1 * stride_ - pad_ + kx >= x.w) --ox1;
                for (int ox = ox0; ox <= ox1; ++ox)
                  yrow[ox] += w * xrow[ox * stride_ - pad_ + kx];
              }
            }
          }
        }
      }
    }
    return y;
  }

  // Accumulates weight/bias gradients and returns the input gradient.
  Tensor4 backward(const Tensor4& dy) {
    const Tensor4& x = x_cache_;
    check(dy.c == out_c_ && dy.n == x.n, "Conv2d: output grad shape mismatch");
    const int oh = dy.h, ow = dy.w;
    Tensor4 dx(x.n, x.c, x.h, x.w, 0.0);
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_c_; ++co) {
        const double* dyp = dy.slab(n, co);
        double db = 0.0;
        for (int i = 0; i < oh * ow; ++i) db += dyp[i];
        gb_[co] += db;
        for (int ci = 0; ci < in_c_; ++ci) {
          const double* xp = x.slab(n, ci);
          double* dxp = dx.slab(n, ci);
          const size_t wbase = (static_cast<size_t>(co) * in_c_ + ci) * k_ * k_;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const double w = weight_[wbase + ky * k_ + kx];
              double dw = 0.0;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= x.h) continue;
                const double* xrow = xp + static_cast<size_t>(iy) * x.w;
                double* dxrow = dxp + static_cast<size_t>(iy) * x.w;
                const double* dyrow = dyp + static_cast<size_t>(oy) * ow;
                int ox0 = 0, ox1 = ow - 1;
                while (ox0 * stride_ - pad_ + kx < 0) ++ox0;
                while (ox1 >= 0 && ox1 * stride_ - pad_ + kx >= x.w) --ox1;
                for (int ox = ox0; ox <= ox1; ++ox) {
                  const int ix = ox * stride_ - pad_ + kx;
                  dw += dyrow[ox] * xrow[ix];
                  dxrow[ix] += dyrow[ox] * w;
                }
              }
              gw_[wbase + ky * k_ + kx] += dw;
            }
          }
        }
      }
    }
    return dx;
  }

  void zero_grad() {
    std::fill(gw_.begin(), gw_.end(), 0.0);
    std::fill(gb_.begin(), gb_.end(), 0.0);
  }
  void collect(const std::string& prefix, bool backbone,
               std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight_, &gw_, backbone});
    out.push_back({prefix + ".bias", &bias_, &gb_, backbone});
  }
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) {
    out.push_back({prefix + ".weight", &weight_});
    out.push_back({prefix + ".bias", &bias_});
  }

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  std::vector<double> weight_, bias_, gw_, gb_;
  Tensor4 x_cache_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum) {
    gamma_.assign(c_, 1.0);
    beta_.assign(c_, 0.0);
    gg_.assign(c_, 0.0);
    gb_.assign(c_, 0.0);
    run_mean_.assign(c_, 0.0);
    run_var_.assign(c_, 1.0);
  }

  Tensor4 forward(const Tensor4& x, bool training) {
    check(x.c == c_, "BatchNorm2d: channel mismatch");
    Tensor4 y(x.n, x.c, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const double m = static_cast<double>(x.n) * plane;
    if (training) {
      xhat_ = Tensor4(x.n, x.c, x.h, x.w);
      invstd_.assign(c_, 0.0);
      for (int c = 0; c < c_; ++c) {
        double mean = 0.0;
        for (int n = 0; n < x.n; ++n) {
          const double* xp = x.slab(n, c);
          for (size_t i = 0; i < plane; ++i) mean += xp[i];
        }
        mean /= m;
        double var = 0.0;
        for (int n = 0; n < x.n; ++n) {
          const double* xp = x.slab(n, c);
          for (size_t i = 0; i < plane; ++i) {
            const double d = xp[i] - mean;
            var += d * d;
          }
        }
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps_);
        invstd_[c] = inv;
        for (int n = 0; n < x.n; ++n) {
          const double* xp = x.slab(n, c);
          double* xh = xhat_.slab(n, c);
          double* yp = y.slab(n, c);
          for (size_t i = 0; i < plane; ++i) {
            xh[i] = (xp[i] - mean) * inv;
            yp[i] = gamma_[c] * xh[i] + beta_[c];
          }
        }
        run_mean_[c] = (1.0 - momentum_) * run_mean_[c] + momentum_ * mean;
        const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
        run_var_[c] = (1.0 - momentum_) * run_var_[c] + momentum_ * unbiased;
      }
    } else {
      for (int c = 0; c < c_; ++c) {
        const double inv = 1.0 / std::sqrt(run_var_[c] + eps_);
        for (int n = 0; n < x.n; ++n) {
          const double* xp = x.slab(n, c);
          double* yp = y.slab(n, c);
          for (size_t i = 0; i < plane; ++i)
            yp[i] = gamma_[c] * (xp[i] - run_mean_[c]) * inv + beta_[c];
        }
      }
    }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    check(dy.c == c_ && dy.n == xhat_.n, "BatchNorm2d: grad shape mismatch");
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    const double m = static_cast<double>(dy.n) * plane;
    Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < dy.n; ++n) {
        const double* dyp = dy.slab(n, c);
        const double* xh = xhat_.slab(n, c);
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += dyp[i];
          sum_dy_xhat += dyp[i] * xh[i];
        }
      }
      gg_[c] += sum_dy_xhat;
      gb_[c] += sum_dy;
      const double scale = gamma_[c] * invstd_[c];
      for (int n = 0; n < dy.n; ++n) {
        const double* dyp = dy.slab(n, c);
        const double* xh = xhat_.slab(n, c);
        double* dxp = dx.slab(n, c);
        for (size_t i = 0; i < plane; ++i)
          dxp[i] = scale * (dyp[i] - sum_dy / m - xh[i] * sum_dy_xhat / m);
      }
    }
    return dx;
  }

  void zero_grad() {
    std::fill(gg_.begin(), gg_.end(), 0.0);
    std::fill(gb_.begin(), gb_.end(), 0.0);
  }
  void collect(const std::string& prefix, bool backbone,
               std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &gg_, backbone});
    out.push_back({prefix + ".beta", &beta_, &gb_, backbone});
  }
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) {
    out.push_back({prefix + ".gamma", &gamma_});
    out.push_back({prefix + ".beta", &beta_});
    out.push_back({prefix + ".running_mean", &run_mean_});
    out.push_back({prefix + ".running_var", &run_var_});
  }

 private:
  int c_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  std::vector<double> gamma_, beta_, gg_, gb_, run_mean_, run_var_;
  Tensor4 xhat_;
  std::vector<double> invstd_;
};

class Relu {
 public:
  Tensor4 forward(const Tensor4& x) {
    mask_.assign(x.v.size(), 0);
    Tensor4 y = x;
    for (size_t i = 0; i < y.v.size(); ++i) {
      if (y.v[i] > 0.0)
        mask_[i] = 1;
      else
        y.v[i] = 0.0;
    }
    return y;
  }
  Tensor4 backward(const Tensor4& dy) {
    check(dy.v.size() == mask_.size(), "Relu: grad shape mismatch");
    Tensor4 dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
      if (!mask_[i]) dx.v[i] = 0.0;
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

// ---- backbone contract --------------------------------------------------------

// Feature extractor contract: image tensor in, feature grid out, spatial size
// reduced by a fixed stride, deterministic and differentiable end to end.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string kind() const = 0;
  virtual int out_channels() const = 0;
  virtual int stride() const = 0;
  virtual Tensor4 forward(const Tensor4& images, bool training) = 0;
  virtual Tensor4 backward(const Tensor4& dfeat) = 0;
  virtual void zero_grad() = 0;
  virtual void collect(std::vector<ParamRef>& out) = 0;
  virtual void collect_state(std::vector<StateRef>& out) = 0;
  virtual void init(Rng& rng) = 0;
};

struct TinyBackboneConfig {
  std::vector<int> channels = {16, 32, 32};
  std::vector<int> strides = {2, 2, 1};
};

// Three conv-bn-relu blocks with 3x3 kernels, total stride 4 by default.
class TinyBackbone : public Backbone {
 public:
  explicit TinyBackbone(const TinyBackboneConfig& cfg = {}) : cfg_(cfg) {
    check(cfg_.channels.size() == cfg_.strides.size() && !cfg_.channels.empty(),
          "TinyBackbone: channels/strides mismatch");
    int in = 3;
    for (size_t b = 0; b < cfg_.channels.size(); ++b) {
      convs_.emplace_back(in, cfg_.channels[b], 3, cfg_.strides[b], 1);
      bns_.emplace_back(cfg_.channels[b]);
      relus_.emplace_back();
      in = cfg_.channels[b];
    }
  }

  std::string kind() const override { return "tiny-conv3"; }
  int out_channels() const override { return cfg_.channels.back(); }
  int stride() const override {
    int s = 1;
    for (int st : cfg_.strides) s *= st;
    return s;
  }
  const TinyBackboneConfig& config() const { return cfg_; }

  Tensor4 forward(const Tensor4& images, bool training) override {
    check(images.c == 3, "TinyBackbone: expects 3-channel input");
    Tensor4 t = images;
    for (size_t b = 0; b < convs_.size(); ++b) {
      t = convs_[b].forward(t);
      t = bns_[b].forward(t, training);
      t = relus_[b].forward(t);
    }
    return t;
  }

  Tensor4 backward(const Tensor4& dfeat) override {
    Tensor4 t = dfeat;
    for (size_t b = convs_.size(); b-- > 0;) {
      t = relus_[b].backward(t);
      t = bns_[b].backward(t);
      t = convs_[b].backward(t);
    }
    return t;
  }

  void zero_grad() override {
    for (auto& c : convs_) c.zero_grad();
    for (auto& b : bns_) b.zero_grad();
  }
  void collect(std::vector<ParamRef>& out) override {
    for (size_t b = 0; b < convs_.size(); ++b) {
      const std::string p = "backbone.block" + std::to_string(b);
      convs_[b].collect(p + ".conv", true, out);
      bns_[b].collect(p + ".bn", true, out);
    }
  }
  void collect_state(std::vector<StateRef>& out) override {
    for (size_t b = 0; b < convs_.size(); ++b) {
      const std::string p = "backbone.block" + std::to_string(b);
      convs_[b].collect_state(p + ".conv", out);
      bns_[b].collect_state(p + ".bn", out);
    }
  }
  void init(Rng& rng) override {
    for (auto& c : convs_) c.init_he(rng);
  }

 private:
  TinyBackboneConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm2d> bns_;
  std::vector<Relu> relus_;
};

// ---- head + full network ------------------------------------------------------

struct HeadConfig {
  int num_categories = 1;
  double channel_factor = 1.5;  // P = ceil(factor * C)
  int peak_radius = 1;

  int branch_channels() const {
    check(num_categories >= 1, "HeadConfig: C must be >= 1");
    check(channel_factor > 0.0, "HeadConfig: channel factor must be positive");
    return static_cast<int>(std::ceil(channel_factor * num_categories));
  }
  int shared_channels() const { return 2 * branch_channels(); }
};

class IlcNetwork {
 public:
  IlcNetwork(const HeadConfig& head, std::unique_ptr<Backbone> backbone)
      : head_(head), backbone_(std::move(backbone)) {
    const int p = head_.branch_channels();
    conv_shared_ = Conv2d(backbone_->out_channels(), 2 * p, 1, 1, 0);
    bn_cls_ = BatchNorm2d(p);
    bn_den_ = BatchNorm2d(p);
    conv_cls_ = Conv2d(p, head_.num_categories, 1, 1, 0);
    conv_den_ = Conv2d(p, head_.num_categories, 1, 1, 0);
  }

  static IlcNetwork make_default(const HeadConfig& head,
                                 const TinyBackboneConfig& bb = {}) {
    return IlcNetwork(head, std::make_unique<TinyBackbone>(bb));
  }

  const HeadConfig& head_config() const { return head_; }
  const Backbone& backbone() const { return *backbone_; }
  uint64_t step = 0;

  void init(uint64_t seed) {
    Rng rng(seed);
    backbone_->init(rng);
    conv_shared_.init_he(rng);
    conv_cls_.init_he(rng);
    conv_den_.init_he(rng);
  }

  // Returns (category maps M, density maps D), both N x C x H x W at the
  // backbone feature resolution.
  //
  // The density branch ends with a fixed 1/(H*W) output gain: the map's sum
  // is the count estimate, and without the gain both the count's sensitivity
  // to the final convolution and that convolution's gradient grow linearly
  // with map area, which squares the effective step size and makes every
  // workable learning rate resolution-dependent. The gain is constant and
  // pointwise (no spatial aggregation), so it only reparameterizes the layer.
  std::pair<Tensor4, Tensor4> forward(const Tensor4& images, bool training) {
    Tensor4 feat = backbone_->forward(images, training);
    Tensor4 z = conv_shared_.forward(feat);
    const int p = head_.branch_channels();
    auto [z_cls, z_den] = split_channels(z, p);
    Tensor4 m = conv_cls_.forward(relu_cls_.forward(bn_cls_.forward(z_cls, training)));
    Tensor4 d = conv_den_.forward(relu_den_.forward(bn_den_.forward(z_den, training)));
    density_gain_ = 1.0 / (static_cast<double>(d.h) * d.w);
    for (auto& v : d.v) v *= density_gain_;
    return {std::move(m), std::move(d)};
  }

  void backward(const Tensor4& dm, const Tensor4& dd) {
    Tensor4 dd_scaled = dd;
    for (auto& v : dd_scaled.v) v *= density_gain_;
    Tensor4 dz_cls = bn_cls_.backward(relu_cls_.backward(conv_cls_.backward(dm)));
    Tensor4 dz_den =
        bn_den_.backward(relu_den_.backward(conv_den_.backward(dd_scaled)));
    Tensor4 dz = concat_channels(dz_cls, dz_den);
    Tensor4 dfeat = conv_shared_.backward(dz);
    backbone_->backward(dfeat);
  }

  void zero_grad() {
    backbone_->zero_grad();
    conv_shared_.zero_grad();
    bn_cls_.zero_grad();
    bn_den_.zero_grad();
    conv_cls_.zero_grad();
    conv_den_.zero_grad();
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    backbone_->collect(out);
    conv_shared_.collect("head.shared", false, out);
    bn_cls_.collect("head.cls.bn", false, out);
    conv_cls_.collect("head.cls.conv", false, out);
    bn_den_.collect("head.den.bn", false, out);
    conv_den_.collect("head.den.conv", false, out);
    return out;
  }

  std::vector<StateRef> state() {
    std::vector<StateRef> out;
    backbone_->collect_state(out);
    conv_shared_.collect_state("head.shared", out);
    bn_cls_.collect_state("head.cls.bn", out);
    conv_cls_.collect_state("head.cls.conv", out);
    bn_den_.collect_state("head.den.bn", out);
    conv_den_.collect_state("head.den.conv", out);
    return out;
  }

 private:
  static std::pair<Tensor4, Tensor4> split_channels(const Tensor4& z, int p) {
    check(z.c == 2 * p, "split_channels: channel count mismatch");
    Tensor4 a(z.n, p, z.h, z.w), b(z.n, p, z.h, z.w);
    const size_t plane = static_cast<size_t>(z.h) * z.w;
    for (int n = 0; n < z.n; ++n)
      for (int c = 0; c < p; ++c) {
        std::memcpy(a.slab(n, c), z.slab(n, c), plane * sizeof(double));
        std::memcpy(b.slab(n, c), z.slab(n, c + p), plane * sizeof(double));
      }
    return {std::move(a), std::move(b)};
  }

  static Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    check(a.n == b.n && a.h == b.h && a.w == b.w,
          "concat_channels: shape mismatch");
    Tensor4 z(a.n, a.c + b.c, a.h, a.w);
    const size_t plane = static_cast<size_t>(a.h) * a.w;
    for (int n = 0; n < a.n; ++n) {
      for (int c = 0; c < a.c; ++c)
        std::memcpy(z.slab(n, c), a.slab(n, c), plane * sizeof(double));
      for (int c = 0; c < b.c; ++c)
        std::memcpy(z.slab(n, c + a.c), b.slab(n, c), plane * sizeof(double));
    }
    return z;
  }

  HeadConfig head_;
  std::unique_ptr<Backbone> backbone_;
  Conv2d conv_shared_, conv_cls_, conv_den_;
  BatchNorm2d bn_cls_, bn_den_;
  Relu relu_cls_, relu_den_;
  double density_gain_ = 1.0;  // set per forward from the map size
};

// ---- checkpoint file ----------------------------------------------------------
//
// Binary, little-endian. Layout:
//   magic "ILCK" | u32 version | u32 C | f64 channel_factor | u32 peak_radius
//   | u32 n_blocks | n_blocks x (u32 channels, u32 stride) | u64 step
//   | u32 n_tensors | n_tensors x (u32 name_len, name, u64 count, f64 data)

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace detail

inline void save_checkpoint(IlcNetwork& network, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write("ILCK", 4);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, static_cast<uint32_t>(network.head_config().num_categories));
  detail::write_pod(os, network.head_config().channel_factor);
  detail::write_pod(os, static_cast<uint32_t>(network.head_config().peak_radius));
  const auto* tiny = dynamic_cast<const TinyBackbone*>(&network.backbone());
  check(tiny != nullptr, "checkpoint: only the bundled backbone is serializable");
  const auto& bb = tiny->config();
  detail::write_pod(os, static_cast<uint32_t>(bb.channels.size()));
  for (size_t i = 0; i < bb.channels.size(); ++i) {
    detail::write_pod(os, static_cast<uint32_t>(bb.channels[i]));
    detail::write_pod(os, static_cast<uint32_t>(bb.strides[i]));
  }
  detail::write_pod(os, network.step);
  auto tensors = network.state();
  detail::write_pod(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::write_pod(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_pod(os, static_cast<uint64_t>(t.value->size()));
    os.write(reinterpret_cast<const char*>(t.value->data()),
             static_cast<std::streamsize>(t.value->size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

// expected_categories < 0 skips the category cross-check.
inline IlcNetwork load_checkpoint(const std::string& path,
                                  int expected_categories = -1) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ILCK", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  HeadConfig head;
  head.num_categories = static_cast<int>(detail::read_pod<uint32_t>(is));
  head.channel_factor = detail::read_pod<double>(is);
  head.peak_radius = static_cast<int>(detail::read_pod<uint32_t>(is));
  if (expected_categories >= 0 && head.num_categories != expected_categories)
    throw std::runtime_error(
        "checkpoint: category count mismatch (checkpoint has " +
        std::to_string(head.num_categories) + ", caller expects " +
        std::to_string(expected_categories) + ")");
  TinyBackboneConfig bb;
  const auto n_blocks = detail::read_pod<uint32_t>(is);
  bb.channels.resize(n_blocks);
  bb.strides.resize(n_blocks);
  for (uint32_t i = 0; i < n_blocks; ++i) {
    bb.channels[i] = static_cast<int>(detail::read_pod<uint32_t>(is));
    bb.strides[i] = static_cast<int>(detail::read_pod<uint32_t>(is));
  }
  IlcNetwork network = IlcNetwork::make_default(head, bb);
  network.step = detail::read_pod<uint64_t>(is);
  const auto n_tensors = detail::read_pod<uint32_t>(is);
  std::map<std::string, std::vector<double>> loaded;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = detail::read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto count = detail::read_pod<uint64_t>(is);
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    loaded.emplace(std::move(name), std::move(data));
  }
  for (auto& slot : network.state()) {
    auto it = loaded.find(slot.name);
    if (it == loaded.end())
      throw std::runtime_error("checkpoint: missing tensor " + slot.name);
    if (it->second.size() != slot.value->size())
      throw std::runtime_error("checkpoint: size mismatch for " + slot.name);
    *slot.value = it->second;
  }
  return network;
}

}  // namespace ilc::net
