#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "rfl/filtergen.hpp"

using namespace rfl;

namespace {

Tensor<double> random_map(int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  Tensor<double> t(c, 6, 6);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

LstmSpec small_spec(int gate_kernel = 3) {
  LstmSpec s;
  s.input_channels = 5;
  s.hidden_channels = 7;
  s.gate_kernel = gate_kernel;
  return s;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("memory initialization shapes and range") {
  std::mt19937_64 rng(1);
  FilterGenerator<float> gen(LstmSpec{}, rng);
  std::mt19937_64 r2(2);
  const auto e0 = random_map(256, r2).cast<float>();
  const auto s = gen.init_state(e0);
  CHECK(s.h.has_shape(1024, 6, 6));
  CHECK(s.c.has_shape(1024, 6, 6));
  for (float v : s.h.values()) CHECK((v > -1.f && v < 1.f));
  for (float v : s.c.values()) CHECK((v > -1.f && v < 1.f));
  CHECK(gen.generate_filter(s.h).has_shape(256, 6, 6));
  const auto next = gen.step(s, e0);
  CHECK(next.h.has_shape(1024, 6, 6));
  CHECK_THROWS_AS(gen.init_state(Tensor<float>(256, 5, 6)), ShapeError);
  CHECK_THROWS_AS(gen.step(s, Tensor<float>(255, 6, 6)), ShapeError);
  CHECK_THROWS_AS(gen.generate_filter(Tensor<float>(512, 6, 6)), ShapeError);
}

TEST_CASE("zero-init variant starts from an all-zero memory") {
  std::mt19937_64 rng(3);
  LstmSpec spec = small_spec();
  spec.zero_init = true;
  FilterGenerator<double> gen(spec, rng);
  const auto s = gen.init_state(random_map(5, rng));
  for (double v : s.h.values()) CHECK(v == 0.0);
  for (double v : s.c.values()) CHECK(v == 0.0);
}

TEST_CASE("zero exemplar with zero init biases gives a zero memory") {
  std::mt19937_64 rng(4);
  FilterGenerator<double> gen(small_spec(), rng);
  gen.init_h.bias.value.assign(gen.init_h.bias.size(), 0.0);
  gen.init_c.bias.value.assign(gen.init_c.bias.size(), 0.0);
  const auto s = gen.init_state(Tensor<double>(5, 6, 6));
  for (double v : s.h.values()) CHECK(v == 0.0);
  for (double v : s.c.values()) CHECK(v == 0.0);
}

TEST_CASE("saturated gates") {
  std::mt19937_64 rng(5);
  FilterGenerator<double> gen(small_spec(), rng);
  const int hid = 7;
  const LstmState<double> prev{random_map(hid, rng), random_map(hid, rng)};
  const auto e = random_map(5, rng);
  auto& b = gen.gates.bias.value;
  SUBCASE("forget open, input closed keeps the cell") {
    for (int o = 0; o < hid; ++o) {
      b[static_cast<int>(Gate::Forget) * hid + o] = 1000.0;
      b[static_cast<int>(Gate::Input) * hid + o] = -1000.0;
    }
    const auto next = gen.step(prev, e);
    for (std::size_t i = 0; i < next.c.size(); ++i) CHECK(next.c[i] == prev.c[i]);
  }
  SUBCASE("closed output gate zeroes the hidden state") {
    for (int o = 0; o < hid; ++o) b[static_cast<int>(Gate::Output) * hid + o] = -1000.0;
    const auto next = gen.step(prev, e);
    for (double v : next.h.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("forget gate bias starts at one") {
  std::mt19937_64 rng(6);
  FilterGenerator<double> gen(small_spec(), rng);
  for (int o = 0; o < 7; ++o) {
    CHECK(gen.gates.bias.value[static_cast<int>(Gate::Forget) * 7 + o] == 1.0);
    CHECK(gen.gates.bias.value[static_cast<int>(Gate::Input) * 7 + o] == 0.0);
  }
  CHECK(gen.gates.in_channels() == 5 + 7);
  CHECK(gen.gates.out_channels() == 4 * 7);
  CHECK(gen.gates.kernel() == 3);
  CHECK(gen.output.kernel() == 1);
}

TEST_CASE("hidden state stays in (-1, 1) and the cell grows at most linearly") {
  std::mt19937_64 rng(7);
  FilterGenerator<double> gen(small_spec(), rng);
  auto s = gen.init_state(random_map(5, rng));
  double c0 = 0;
  for (double v : s.c.values()) c0 = std::max(c0, std::abs(v));
  for (int t = 1; t <= 20; ++t) {
    s = gen.step(s, random_map(5, rng, 3.0));
    double cmax = 0;
    for (double v : s.h.values()) CHECK((v > -1.0 && v < 1.0));
    for (double v : s.c.values()) cmax = std::max(cmax, std::abs(v));
    CHECK(cmax <= c0 + t);
  }
}

TEST_CASE("shifting inputs by one cell shifts the interior of the new state") {
  std::mt19937_64 rng(8);
  FilterGenerator<double> gen(small_spec(), rng);
  const auto e = random_map(5, rng);
  const LstmState<double> s{random_map(7, rng), random_map(7, rng)};
  auto shift = [](const Tensor<double>& t) {
    Tensor<double> out(t.channels(), 6, 6);
    for (int c = 0; c < t.channels(); ++c) {
      for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) out(c, y, x) = t(c, y, (x + 5) % 6);
      }
    }
    return out;
  };
  const auto a = gen.step(s, e);
  const auto b = gen.step({shift(s.h), shift(s.c)}, shift(e));
  // Output column x of the shifted run sees input columns x-1..x+1, i.e. columns x-2..x of
  // the original; columns 2..4 avoid both the wrapped column and the zero padding.
  for (int c = 0; c < 7; ++c) {
    for (int y = 0; y < 6; ++y) {
      for (int x = 2; x <= 4; ++x) {
        CHECK(b.h(c, y, x) == doctest::Approx(a.h(c, y, x - 1)).epsilon(1e-12));
        CHECK(b.c(c, y, x) == doctest::Approx(a.c(c, y, x - 1)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("output layer is affine") {
  std::mt19937_64 rng(9);
  FilterGenerator<double> gen(small_spec(), rng);
  const auto h = random_map(7, rng);
  SUBCASE("zero bias makes it linear") {
    gen.output.bias.value.assign(gen.output.bias.size(), 0.0);
    auto h2 = h;
    h2 *= 2.0;
    const auto f1 = gen.generate_filter(h);
    const auto f2 = gen.generate_filter(h2);
    for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f2[i] == doctest::Approx(2.0 * f1[i]));
  }
  SUBCASE("zero hidden state returns the bias everywhere") {
    const auto f = gen.generate_filter(Tensor<double>(7, 6, 6));
    for (int c = 0; c < 5; ++c) {
      for (int i = 0; i < 36; ++i) CHECK(f.channel(c)[i] == gen.output.bias.value[c]);
    }
  }
}

TEST_CASE("state damping") {
  LstmState<double> zero{Tensor<double>(2, 6, 6, 0.0), Tensor<double>(2, 6, 6, 0.0)};
  LstmState<double> one{Tensor<double>(2, 6, 6, 1.0), Tensor<double>(2, 6, 6, 1.0)};
  const auto a = damp_state(zero, one, 0.06);
  for (double v : a.h.values()) CHECK(v == 0.06);
  for (double v : a.c.values()) CHECK(v == 0.06);
  const auto b = damp_state(one, zero, 0.06);
  for (double v : b.h.values()) CHECK(v == doctest::Approx(0.94).epsilon(1e-15));
  const auto c = damp_state(one, one, 0.37);
  for (double v : c.c.values()) CHECK(v == 1.0);
  CHECK_THROWS(damp_state(zero, one, 1.5));
  CHECK_THROWS_AS(damp_state(zero, LstmState<double>{Tensor<double>(3, 6, 6), Tensor<double>(3, 6, 6)}, 0.1),
                  ShapeError);
}

TEST_CASE("non-finite memory raises a numeric error") {
  std::mt19937_64 rng(10);
  FilterGenerator<double> gen(small_spec(), rng);
  LstmState<double> s{random_map(7, rng), random_map(7, rng)};
  s.c[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(gen.step(s, random_map(5, rng)), NumericError);
}

TEST_CASE("three-step unroll gradients match central differences") {
  for (int gk : {3, 1}) {
    std::mt19937_64 rng(11 + gk);
    FilterGenerator<double> gen(small_spec(gk), rng);
    std::vector<Tensor<double>> e{random_map(5, rng), random_map(5, rng), random_map(5, rng)};
    std::vector<Tensor<double>> r{random_map(5, rng), random_map(5, rng), random_map(5, rng)};
    auto loss = [&] {
      auto s = gen.init_state(e[0]);
      double total = dot(gen.generate_filter(s.h), r[0]);
      for (int t = 1; t < 3; ++t) {
        s = gen.step(s, e[t]);
        total += dot(gen.generate_filter(s.h), r[t]);
      }
      return total;
    };
    for (auto* c : {&gen.gates, &gen.init_h, &gen.init_c, &gen.output}) {
      c->weight.zero_grad();
      c->bias.zero_grad();
    }
    typename FilterGenerator<double>::InitCache ic;
    std::vector<typename FilterGenerator<double>::StepCache> sc(3);
    std::vector<LstmState<double>> states{gen.init_state(e[0], &ic)};
    for (int t = 1; t < 3; ++t) states.push_back(gen.step(states.back(), e[t], &sc[t]));
    LstmState<double> g{Tensor<double>(7, 6, 6), Tensor<double>(7, 6, 6)};
    std::vector<Tensor<double>> ge(3, Tensor<double>(5, 6, 6));
    for (int t = 2; t >= 0; --t) {
      g.h += gen.filter_backward(states[t].h, r[t]);
      if (t > 0) {
        g = gen.step_backward(sc[t], g, &ge[t]);
      } else {
        gen.init_backward(ic, g, &ge[0]);
      }
    }
    const double h = 1e-6;
    for (auto* c : {&gen.gates, &gen.init_h, &gen.init_c, &gen.output}) {
      std::uniform_int_distribution<std::size_t> pick(0, c->weight.size() - 1);
      for (int k = 0; k < 15; ++k) {
        const std::size_t i = pick(rng);
        const double keep = c->weight.value[i];
        c->weight.value[i] = keep + h;
        const double lp = loss();
        c->weight.value[i] = keep - h;
        const double lm = loss();
        c->weight.value[i] = keep;
        const double num = (lp - lm) / (2 * h);
        CHECK(std::abs(num - c->weight.grad[i]) / std::max({std::abs(num), std::abs(c->weight.grad[i]), 1e-8}) <
              1e-3);
      }
    }
    // Input gradients as well.
    for (int t = 0; t < 3; ++t) {
      for (std::size_t i = 0; i < e[t].size(); i += 17) {
        const double keep = e[t][i];
        e[t][i] = keep + h;
        const double lp = loss();
        e[t][i] = keep - h;
        const double lm = loss();
        e[t][i] = keep;
        const double num = (lp - lm) / (2 * h);
        CHECK(std::abs(num - ge[t][i]) / std::max({std::abs(num), std::abs(ge[t][i]), 1e-8}) < 1e-3);
      }
    }
  }
}
