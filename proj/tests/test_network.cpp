#include "ilc/network.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ilc/core.hpp"

using ilc::Grid;
using ilc::Rng;
using ilc::Tensor4;
namespace net = ilc::net;

namespace {

Tensor4 random_input(Rng& rng, int n, int c, int h, int w) {
  Tensor4 x(n, c, h, w);
  for (auto& v : x.v) v = rng.normal();
  return x;
}

double grad_abs_sum(const std::vector<net::ParamRef>& params,
                    const std::string& prefix) {
  double s = 0.0;
  for (const auto& p : params)
    if (p.name.rfind(prefix, 0) == 0)
      for (double g : *p.grad) s += std::abs(g);
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

TEST(Conv, IdentityKernelReproducesInput) {
  net::Conv2d conv(1, 1, 3, 1, 1);
  std::vector<net::ParamRef> ps;
  conv.collect("conv", false, ps);
  (*ps[0].value)[4] = 1.0;  // center tap
  Rng rng(11);
  Tensor4 x = random_input(rng, 1, 1, 5, 6);
  Tensor4 y = conv.forward(x);
  ASSERT_EQ(y.h, 5);
  ASSERT_EQ(y.w, 6);
  for (size_t i = 0; i < x.v.size(); ++i) EXPECT_DOUBLE_EQ(y.v[i], x.v[i]);
}

TEST(Conv, BoxKernelSumsNeighborhood) {
  net::Conv2d conv(1, 1, 3, 1, 1);
  std::vector<net::ParamRef> ps;
  conv.collect("conv", false, ps);
  std::fill(ps[0].value->begin(), ps[0].value->end(), 1.0);
  Tensor4 x(1, 1, 3, 3);
  for (int i = 0; i < 9; ++i) x.v[i] = i + 1;  // 1..9
  Tensor4 y = conv.forward(x);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 45.0);  // full 3x3 sum
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 1 + 2 + 4 + 5);
}

TEST(Conv, StrideTwoSamplesEvenPositions) {
  net::Conv2d conv(1, 1, 1, 2, 0);
  std::vector<net::ParamRef> ps;
  conv.collect("conv", false, ps);
  (*ps[0].value)[0] = 1.0;
  Tensor4 x(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) x.v[i] = i;
  Tensor4 y = conv.forward(x);
  ASSERT_EQ(y.h, 2);
  ASSERT_EQ(y.w, 2);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 2.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 0), 8.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 10.0);
}

TEST(Conv, FiniteDifferenceGradients) {
  Rng rng(42);
  net::Conv2d conv(2, 3, 3, 2, 1);
  conv.init_he(rng);
  Tensor4 x = random_input(rng, 2, 2, 5, 5);

  // loss = 0.5 * sum(y^2); dL/dy = y
  const auto loss = [&]() {
    Tensor4 y = conv.forward(x);
    double s = 0.0;
    for (double v : y.v) s += 0.5 * v * v;
    return s;
  };
  conv.zero_grad();
  Tensor4 y = conv.forward(x);
  Tensor4 dx = conv.backward(y);

  std::vector<net::ParamRef> ps;
  conv.collect("conv", false, ps);
  const double h = 1e-6;
  for (const auto& p : ps) {
    for (size_t i = 0; i < p.value->size(); i += 7) {  // sample every 7th
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = loss();
      (*p.value)[i] = keep - h;
      const double dn = loss();
      (*p.value)[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = (*p.grad)[i];
      EXPECT_NEAR(an, fd, 1e-4 * std::max({std::abs(an), std::abs(fd), 1.0}))
          << p.name << "[" << i << "]";
    }
  }
  // input gradient, same stencil
  for (size_t i = 0; i < x.v.size(); i += 11) {
    const double keep = x.v[i];
    x.v[i] = keep + h;
    const double up = loss();
    x.v[i] = keep - h;
    const double dn = loss();
    x.v[i] = keep;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(dx.v[i], fd,
                1e-4 * std::max({std::abs(dx.v[i]), std::abs(fd), 1.0}));
  }
}

// ---- BatchNorm2d ------------------------------------------------------------

TEST(BatchNorm, NormalizesBatchStatistics) {
  net::BatchNorm2d bn(2);
  Rng rng(7);
  Tensor4 x = random_input(rng, 3, 2, 4, 4);
  for (auto& v : x.v) v = 3.0 + 2.0 * v;  // shift/scale away from (0,1)
  Tensor4 y = bn.forward(x, /*training=*/true);
  const size_t plane = 16;
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 3; ++n) {
      const double* p = y.slab(n, c);
      for (size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= 3 * plane;
    for (int n = 0; n < 3; ++n) {
      const double* p = y.slab(n, c);
      for (size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= 3 * plane;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);  // off by ~eps/batch_var
  }
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  net::BatchNorm2d bn(1);
  Tensor4 x(2, 1, 1, 2);
  x.v = {1.0, 3.0, 5.0, 7.0};  // mean 4, biased var 5, unbiased 20/3
  bn.forward(x, true);
  std::vector<net::StateRef> st;
  bn.collect_state("bn", st);
  double run_mean = 0.0, run_var = 0.0;
  for (const auto& s : st) {
    if (s.name == "bn.running_mean") run_mean = (*s.value)[0];
    if (s.name == "bn.running_var") run_var = (*s.value)[0];
  }
  EXPECT_NEAR(run_mean, 0.9 * 0.0 + 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(run_var, 0.9 * 1.0 + 0.1 * (5.0 * 4.0 / 3.0), 1e-12);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  net::BatchNorm2d bn(1);
  Tensor4 x(1, 1, 1, 2);
  x.v = {2.0, 6.0};
  // Fresh stats: mean 0, var 1 -> eval output = input / sqrt(1 + eps).
  Tensor4 y = bn.forward(x, /*training=*/false);
  EXPECT_NEAR(y.v[0], 2.0, 1e-4);
  EXPECT_NEAR(y.v[1], 6.0, 1e-4);
}

TEST(BatchNorm, FiniteDifferenceGradients) {
  Rng rng(3);
  net::BatchNorm2d bn(2);
  Tensor4 x = random_input(rng, 2, 2, 3, 3);
  const auto loss = [&](Tensor4& input) {
    Tensor4 y = bn.forward(input, true);
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += 0.5 * y.v[i] * y.v[i] * ((i % 3) + 1);
    return s;
  };
  bn.zero_grad();
  Tensor4 y = bn.forward(x, true);
  Tensor4 dy = y;
  for (size_t i = 0; i < dy.v.size(); ++i) dy.v[i] = y.v[i] * ((i % 3) + 1);
  Tensor4 dx = bn.backward(dy);
  const double h = 1e-6;
  for (size_t i = 0; i < x.v.size(); i += 5) {
    const double keep = x.v[i];
    x.v[i] = keep + h;
    const double up = loss(x);
    x.v[i] = keep - h;
    const double dn = loss(x);
    x.v[i] = keep;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(dx.v[i], fd,
                2e-4 * std::max({std::abs(dx.v[i]), std::abs(fd), 1.0}));
  }
}

// ---- head/network shape contracts ---------------------------------------------

TEST(Network, HeadChannelArithmetic) {
  net::HeadConfig head;
  head.num_categories = 20;
  EXPECT_EQ(head.branch_channels(), 30);
  EXPECT_EQ(head.shared_channels(), 60);
  head.num_categories = 3;  // 1.5 * 3 = 4.5 rounds up
  EXPECT_EQ(head.branch_channels(), 5);
  head.num_categories = 1;
  EXPECT_EQ(head.branch_channels(), 2);
}

TEST(Network, StrideFourMapShapes) {
  net::HeadConfig head;
  head.num_categories = 1;
  auto network = net::IlcNetwork::make_default(head);
  network.init(5);
  EXPECT_EQ(network.backbone().stride(), 4);
  Rng rng(9);
  Tensor4 x = random_input(rng, 1, 3, 32, 32);
  auto [m, d] = network.forward(x, false);
  EXPECT_EQ(m.c, 1);
  EXPECT_EQ(m.h, 8);
  EXPECT_EQ(m.w, 8);
  EXPECT_EQ(d.c, 1);
  EXPECT_EQ(d.h, 8);
  EXPECT_EQ(d.w, 8);
}

TEST(Network, BranchesShareSpatialSize) {
  net::HeadConfig head;
  head.num_categories = 3;
  auto network = net::IlcNetwork::make_default(head);
  network.init(1);
  Rng rng(2);
  Tensor4 x = random_input(rng, 2, 3, 24, 40);
  auto [m, d] = network.forward(x, true);
  EXPECT_EQ(m.h, d.h);
  EXPECT_EQ(m.w, d.w);
  EXPECT_EQ(m.h, 6);
  EXPECT_EQ(m.w, 10);
  EXPECT_EQ(m.c, 3);
  EXPECT_EQ(d.c, 3);
}

TEST(Network, DeterministicForward) {
  net::HeadConfig head;
  head.num_categories = 2;
  auto a = net::IlcNetwork::make_default(head);
  auto b = net::IlcNetwork::make_default(head);
  a.init(77);
  b.init(77);
  Rng rng(4);
  Tensor4 x = random_input(rng, 2, 3, 16, 16);
  auto [ma, da] = a.forward(x, true);
  auto [mb, db] = b.forward(x, true);
  EXPECT_EQ(ma.v, mb.v);  // bitwise
  EXPECT_EQ(da.v, db.v);
  auto [ma2, da2] = a.forward(x, true);
  EXPECT_EQ(ma.v, ma2.v);
  EXPECT_EQ(da.v, da2.v);
}

TEST(Network, GradientsReachSharedAndBranchLayers) {
  net::HeadConfig head;
  head.num_categories = 2;
  auto network = net::IlcNetwork::make_default(head);
  network.init(13);
  Rng rng(6);
  Tensor4 x = random_input(rng, 1, 3, 16, 16);
  auto [m, d] = network.forward(x, true);

  // Classification loss only.
  network.zero_grad();
  Tensor4 dm = m, dd(d.n, d.c, d.h, d.w, 0.0);
  network.backward(dm, dd);
  auto params = network.params();
  EXPECT_GT(grad_abs_sum(params, "head.cls.conv"), 0.0);
  EXPECT_GT(grad_abs_sum(params, "head.shared"), 0.0);
  EXPECT_GT(grad_abs_sum(params, "backbone."), 0.0);
  EXPECT_EQ(grad_abs_sum(params, "head.den.conv"), 0.0);

  // Density loss only.
  network.zero_grad();
  std::fill(dm.v.begin(), dm.v.end(), 0.0);
  network.backward(dm, d);
  EXPECT_GT(grad_abs_sum(params, "head.den.conv"), 0.0);
  EXPECT_GT(grad_abs_sum(params, "head.shared"), 0.0);
  EXPECT_GT(grad_abs_sum(params, "backbone."), 0.0);
  EXPECT_EQ(grad_abs_sum(params, "head.cls.conv"), 0.0);
}

TEST(Network, FullBackwardMatchesFiniteDifferences) {
  net::HeadConfig head;
  head.num_categories = 2;
  net::TinyBackboneConfig bb;
  bb.channels = {4, 4};
  bb.strides = {2, 1};
  auto network = net::IlcNetwork(head, std::make_unique<net::TinyBackbone>(bb));
  network.init(2024);
  Rng rng(8);
  Tensor4 x = random_input(rng, 2, 3, 8, 8);

  const auto loss = [&]() {
    auto [m, d] = network.forward(x, true);
    double s = 0.0;
    for (double v : m.v) s += 0.5 * v * v;
    for (double v : d.v) s += 0.5 * v * v;
    return s;
  };
  network.zero_grad();
  auto [m, d] = network.forward(x, true);
  network.backward(m, d);

  const double h = 1e-6;
  int checked = 0;
  for (const auto& p : network.params()) {
    for (size_t i = 0; i < p.value->size(); i += 13) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = loss();
      (*p.value)[i] = keep - h;
      const double dn = loss();
      (*p.value)[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = (*p.grad)[i];
      EXPECT_NEAR(an, fd, 2e-4 * std::max({std::abs(an), std::abs(fd), 1.0}))
          << p.name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GE(checked, 30);
}

TEST(Network, RejectsWrongInputChannels) {
  net::HeadConfig head;
  head.num_categories = 1;
  auto network = net::IlcNetwork::make_default(head);
  network.init(1);
  Tensor4 x(1, 4, 16, 16, 0.5);
  EXPECT_THROW(network.forward(x, false), std::invalid_argument);
}

// ---- checkpointing ---------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesStateAndStep) {
  const std::string path = temp_path("ilc_ckpt_roundtrip.bin");
  net::HeadConfig head;
  head.num_categories = 3;
  auto network = net::IlcNetwork::make_default(head);
  network.init(99);
  network.step = 1234;
  // Touch running stats so they are non-default.
  Rng rng(10);
  Tensor4 x = random_input(rng, 2, 3, 16, 16);
  network.forward(x, true);
  net::save_checkpoint(network, path);

  auto loaded = net::load_checkpoint(path, 3);
  EXPECT_EQ(loaded.step, 1234u);
  EXPECT_EQ(loaded.head_config().num_categories, 3);
  auto a = network.state();
  auto b = loaded.state();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(*a[i].value, *b[i].value);  // bitwise
  }
  // Same input -> bitwise same outputs.
  auto [m1, d1] = network.forward(x, false);
  auto [m2, d2] = loaded.forward(x, false);
  EXPECT_EQ(m1.v, m2.v);
  EXPECT_EQ(d1.v, d2.v);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CategoryMismatchFailsLoudly) {
  const std::string path = temp_path("ilc_ckpt_mismatch.bin");
  net::HeadConfig head;
  head.num_categories = 3;
  auto network = net::IlcNetwork::make_default(head);
  network.init(1);
  net::save_checkpoint(network, path);
  try {
    net::load_checkpoint(path, 5);
    FAIL() << "expected mismatch error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("category count mismatch"), std::string::npos);
    EXPECT_NE(msg.find("3"), std::string::npos);
    EXPECT_NE(msg.find("5"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
  const std::string garbage = temp_path("ilc_ckpt_garbage.bin");
  {
    std::ofstream os(garbage, std::ios::binary);
    os << "NOPE not a checkpoint";
  }
  EXPECT_THROW(net::load_checkpoint(garbage), std::runtime_error);
  std::filesystem::remove(garbage);

  const std::string path = temp_path("ilc_ckpt_trunc.bin");
  net::HeadConfig head;
  head.num_categories = 1;
  auto network = net::IlcNetwork::make_default(head);
  network.init(1);
  net::save_checkpoint(network, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(net::load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}
