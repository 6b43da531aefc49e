#include <cmath>
#include <random>

#include "doctest.h"
#include "rfl/layers.hpp"

using namespace rfl;

namespace {

Tensor<double> random_tensor(int c, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(c, h, w);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Direct convolution with explicit zero padding.
Tensor<double> naive_conv(const Conv2d<double>& conv, const Tensor<double>& x) {
  const int k = conv.kernel(), s = conv.stride(), p = conv.pad();
  const int oh = conv.out_extent(x.height()), ow = conv.out_extent(x.width());
  Tensor<double> y(conv.out_channels(), oh, ow);
  for (int o = 0; o < conv.out_channels(); ++o) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double acc = conv.bias.value[o];
        for (int c = 0; c < conv.in_channels(); ++c) {
          for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
              const int yy = i * s + u - p, xx = j * s + v - p;
              if (yy < 0 || xx < 0 || yy >= x.height() || xx >= x.width()) continue;
              acc += conv.weight.value[((static_cast<std::size_t>(o) * conv.in_channels() + c) * k + u) * k + v] *
                     x(c, yy, xx);
            }
          }
        }
        y(o, i, j) = acc;
      }
    }
  }
  return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct ConvCase {
  int in, out, k, s, p, hw;
};

}  // namespace

TEST_CASE("conv forward matches direct evaluation") {
  std::mt19937_64 rng(1);
  // Covers the 1x1, padded, unpadded and strided paths, including a wide output count.
  for (const ConvCase& cc : {ConvCase{3, 7, 11, 2, 0, 41}, ConvCase{5, 13, 5, 1, 0, 19}, ConvCase{4, 6, 3, 1, 1, 6},
                             ConvCase{8, 70, 3, 1, 0, 12}, ConvCase{9, 5, 1, 1, 0, 6}, ConvCase{6, 80, 3, 1, 1, 7}}) {
    Conv2d<double> conv(cc.in, cc.out, cc.k, cc.s, cc.p);
    conv.init(rng, 1.0, 0.1);
    const auto x = random_tensor(cc.in, cc.hw, cc.hw, rng);
    const auto y = conv.forward(x);
    const auto ref = naive_conv(conv, x);
    REQUIRE(y.same_shape(ref));
    double err = 0;
    for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("conv gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (const ConvCase& cc : {ConvCase{3, 4, 5, 2, 0, 15}, ConvCase{4, 6, 3, 1, 1, 6}, ConvCase{5, 3, 1, 1, 0, 4},
                             ConvCase{4, 70, 3, 1, 0, 7}}) {
    Conv2d<double> conv(cc.in, cc.out, cc.k, cc.s, cc.p);
    conv.init(rng, 1.0, 0.0);
    auto x = random_tensor(cc.in, cc.hw, cc.hw, rng);
    const auto y0 = conv.forward(x);
    const auto r = random_tensor(y0.channels(), y0.height(), y0.width(), rng);
    Tensor<double> dx(cc.in, cc.hw, cc.hw);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    conv.backward(x, r, &dx);

    const double h = 1e-5;
    auto loss = [&] { return dot(conv.forward(x), r); };
    std::uniform_int_distribution<std::size_t> wi(0, conv.weight.size() - 1), xi(0, x.size() - 1),
        bi(0, conv.bias.size() - 1);
    for (int n = 0; n < 10; ++n) {
      const std::size_t i = wi(rng);
      const double keep = conv.weight.value[i];
      conv.weight.value[i] = keep + h;
      const double lp = loss();
      conv.weight.value[i] = keep - h;
      const double lm = loss();
      conv.weight.value[i] = keep;
      CHECK(conv.weight.grad[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-6));

      const std::size_t j = xi(rng);
      const double kx = x[j];
      x[j] = kx + h;
      const double xp = loss();
      x[j] = kx - h;
      const double xm = loss();
      x[j] = kx;
      CHECK(dx[j] == doctest::Approx((xp - xm) / (2 * h)).epsilon(1e-6).scale(1e-6));

      const std::size_t b = bi(rng);
      const double kb = conv.bias.value[b];
      conv.bias.value[b] = kb + h;
      const double bp = loss();
      conv.bias.value[b] = kb - h;
      const double bm = loss();
      conv.bias.value[b] = kb;
      CHECK(conv.bias.grad[b] == doctest::Approx((bp - bm) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("float conv agrees with double conv") {
  std::mt19937_64 rng(3);
  Conv2d<double> cd(3, 12, 11, 2, 0);
  cd.init(rng, 1.0, 0.05);
  Conv2d<float> cf(3, 12, 11, 2, 0);
  for (std::size_t i = 0; i < cd.weight.size(); ++i) cf.weight.value[i] = static_cast<float>(cd.weight.value[i]);
  for (std::size_t i = 0; i < cd.bias.size(); ++i) cf.bias.value[i] = static_cast<float>(cd.bias.value[i]);
  const auto x = random_tensor(3, 63, 63, rng);
  const auto yd = cd.forward(x);
  const auto yf = cf.forward(x.cast<float>());
  double err = 0;
  for (std::size_t i = 0; i < yd.size(); ++i) err = std::max(err, std::abs(yd[i] - yf[i]));
  CHECK(err < 1e-4);
}

TEST_CASE("batch norm normalizes over batch and space") {
  std::mt19937_64 rng(4);
  BatchNorm<double> bn(3);
  std::vector<Tensor<double>> batch{random_tensor(3, 4, 5, rng, 3.0), random_tensor(3, 4, 5, rng, 3.0)};
  for (auto& t : batch) {
    for (int i = 0; i < t.plane(); ++i) t.channel(1)[i] += 10.0;
  }
  bn.forward_train(batch, nullptr, true);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (const auto& t : batch) {
      for (int i = 0; i < t.plane(); ++i) m += t.channel(c)[i];
    }
    m /= 40.0;
    for (const auto& t : batch) {
      for (int i = 0; i < t.plane(); ++i) v += (t.channel(c)[i] - m) * (t.channel(c)[i] - m);
    }
    v /= 40.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Running statistics move from (0, 1) towards the batch statistics.
  CHECK(bn.running_mean[1] > 0.5);
}

TEST_CASE("batch norm gradients match finite differences") {
  std::mt19937_64 rng(5);
  BatchNorm<double> bn(2);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : bn.scale.value) v = 1.0 + 0.3 * n(rng);
  for (auto& v : bn.offset.value) v = 0.3 * n(rng);
  std::vector<Tensor<double>> x{random_tensor(2, 3, 3, rng), random_tensor(2, 3, 3, rng), random_tensor(2, 3, 3, rng)};
  std::vector<Tensor<double>> r{random_tensor(2, 3, 3, rng), random_tensor(2, 3, 3, rng), random_tensor(2, 3, 3, rng)};
  auto loss = [&] {
    auto y = x;
    bn.forward_train(y, nullptr, false);
    double s = 0;
    for (std::size_t b = 0; b < y.size(); ++b) s += dot(y[b], r[b]);
    return s;
  };
  auto y = x;
  BatchNorm<double>::Cache cache;
  bn.forward_train(y, &cache, false);
  auto g = r;
  bn.scale.zero_grad();
  bn.offset.zero_grad();
  bn.backward(cache, g);
  const double h = 1e-6;
  for (std::size_t b = 0; b < x.size(); ++b) {
    for (std::size_t i = 0; i < x[b].size(); i += 3) {
      const double keep = x[b][i];
      x[b][i] = keep + h;
      const double lp = loss();
      x[b][i] = keep - h;
      const double lm = loss();
      x[b][i] = keep;
      CHECK(g[b][i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5).scale(1e-5));
    }
  }
  for (int c = 0; c < 2; ++c) {
    for (auto* p : {&bn.scale, &bn.offset}) {
      const double keep = p->value[c];
      p->value[c] = keep + h;
      const double lp = loss();
      p->value[c] = keep - h;
      const double lm = loss();
      p->value[c] = keep;
      CHECK(p->grad[c] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("batch norm inference uses running statistics") {
  BatchNorm<double> bn(1);
  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0;
  bn.scale.value[0] = 3.0;
  bn.offset.value[0] = 1.0;
  Tensor<double> x(1, 1, 2);
  x[0] = 2.0;
  x[1] = 4.0;
  bn.forward_infer(x);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(1.0 + 3.0 * 2.0 / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("relu and its backward") {
  Tensor<double> x(1, 1, 4);
  x[0] = -1;
  x[1] = 0;
  x[2] = 2;
  x[3] = -0.5;
  relu_inplace(x);
  CHECK(x[0] == 0);
  CHECK(x[2] == 2);
  Tensor<double> g(1, 1, 4, 1.0);
  relu_backward_inplace(x, g);
  CHECK(g[0] == 0);
  CHECK(g[1] == 0);
  CHECK(g[2] == 1);
}

TEST_CASE("max pooling picks window maxima and routes gradients") {
  std::mt19937_64 rng(6);
  const auto x = random_tensor(2, 9, 9, rng);
  std::vector<std::int32_t> arg;
  const auto y = max_pool(x, 3, 2, &arg);
  REQUIRE(y.has_shape(2, 4, 4));
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double m = -1e300;
        for (int u = 0; u < 3; ++u) {
          for (int v = 0; v < 3; ++v) m = std::max(m, x(c, 2 * i + u, 2 * j + v));
        }
        CHECK(y(c, i, j) == m);
      }
    }
  }
  Tensor<double> dy(2, 4, 4, 1.0);
  const auto dx = max_pool_backward(dy, arg, 2, 9, 9);
  double total = 0;
  for (double v : dx.values()) total += v;
  CHECK(total == doctest::Approx(32.0));
}
