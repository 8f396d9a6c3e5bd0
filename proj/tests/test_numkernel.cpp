#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

#include "synthaug/adam.hpp"
#include "synthaug/binary_io.hpp"
#include "synthaug/checkpoint.hpp"
#include "synthaug/mlp.hpp"
#include "synthaug/numeric.hpp"
#include "synthaug/rng.hpp"
#include "test_util.hpp"

using namespace synthaug;
using namespace synthaug::testing;

namespace {

long double logsumexp_ld(const Vec& v) {
  long double m = v[0];
  for (double x : v) m = std::max<long double>(m, x);
  long double s = 0;
  for (double x : v) s += std::exp(static_cast<long double>(x) - m);
  return m + std::log(s);
}

// Simpson quadrature of KL[N(m, s^2) || N(0, 1)] for one coordinate.
long double kl_quadrature(long double m, long double s) {
  const int n = 20000;
  const long double lo = m - 14 * s, hi = m + 14 * s, h = (hi - lo) / n;
  auto f = [&](long double z) {
    const long double lq = -0.5L * std::log(2 * std::numbers::pi_v<long double> * s * s) -
                           (z - m) * (z - m) / (2 * s * s);
    const long double lp = -0.5L * std::log(2 * std::numbers::pi_v<long double>) - z * z / 2;
    return std::exp(lq) * (lq - lp);
  };
  long double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4 : 2);
  return acc * h / 3;
}

}  // namespace

TEST(Numeric, LogsumexpMatchesExtendedPrecision) {
  RngStream rng(1, 1);
  for (int t = 0; t < 200; ++t) {
    Vec v = random_vec(rng, 1 + rng.uniform_index(10), 50.0);
    EXPECT_NEAR(logsumexp(v), static_cast<double>(logsumexp_ld(v)), 1e-12 * (1 + std::abs(logsumexp(v))));
  }
}

TEST(Numeric, LogsumexpIsStableForHugeInputs) {
  const Vec v{1000.0, 1000.0};
  EXPECT_DOUBLE_EQ(logsumexp(v), 1000.0 + std::log(2.0));
  const Vec w{-1000.0, -1e300};
  EXPECT_DOUBLE_EQ(logsumexp(w), -1000.0);
}

TEST(Numeric, SoftmaxSumsToOneAndMatchesOracle) {
  RngStream rng(2, 1);
  for (int t = 0; t < 100; ++t) {
    Vec v = random_vec(rng, 2 + rng.uniform_index(6), 30.0);
    Vec p = softmax(v);
    const long double lse = logsumexp_ld(v);
    double sum = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(p[i], static_cast<double>(std::exp(v[i] - lse)), 1e-14);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

TEST(Numeric, GaussianKlMatchesQuadrature) {
  RngStream rng(3, 1);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.uniform_index(3);
    Vec mu = random_vec(rng, d), lv = random_vec(rng, d, 0.7);
    long double oracle = 0;
    for (std::size_t i = 0; i < d; ++i) oracle += kl_quadrature(mu[i], std::exp(lv[i] / 2));
    EXPECT_NEAR(gaussian_kl(mu, lv), static_cast<double>(oracle), 1e-9);
  }
}

TEST(Numeric, GaussianKlIsZeroAtPrior) {
  const Vec zero(5, 0.0);
  EXPECT_EQ(gaussian_kl(zero, zero), 0.0);
}

TEST(Numeric, EntropyOfUniformIsLogK) {
  for (std::size_t K = 2; K <= 64; ++K) {
    const Vec logits(K, 0.37);
    const double h = shannon_entropy(softmax(logits));
    const double lk = std::log(static_cast<double>(K));
    EXPECT_LE(std::abs(h - lk), 4 * std::numeric_limits<double>::epsilon() * lk) << "K=" << K;
  }
}

TEST(Numeric, ExactSumIsCorrectlyRounded) {
  EXPECT_EQ(exact_sum(Vec{1e16, 1.0, -1e16}), 1.0);
  EXPECT_EQ(exact_sum(Vec{1.0, 1e-17, 1e-17, 1e-17, 1e-17}), 1.0);
  EXPECT_EQ(exact_sum(Vec{}), 0.0);
  RngStream rng(12, 1);
  for (int t = 0; t < 100; ++t) {
    Vec v = random_vec(rng, 50, 1e3);
    long double s = 0;
    for (double x : v) s += x;
    EXPECT_NEAR(exact_sum(v), static_cast<double>(s), 1e-12);
  }
}

TEST(Numeric, EntropyTreatsZeroProbabilityAsZero) {
  EXPECT_EQ(shannon_entropy(Vec{1.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(shannon_entropy(Vec{0.5, 0.5, 0.0}), std::log(2.0), 1e-15);
}

TEST(Numeric, ArgmaxBreaksTiesToLowestIndex) {
  EXPECT_EQ(argmax(Vec{1.0, 3.0, 3.0, 2.0}), 1u);
  EXPECT_EQ(argmax(Vec{0.0, 0.0, 0.0}), 0u);
  EXPECT_EQ(argmax(Vec{-1.0}), 0u);
}

TEST(Numeric, FinitenessAndNorm) {
  EXPECT_TRUE(all_finite(Vec{1.0, -2.0}));
  EXPECT_FALSE(all_finite(Vec{1.0, std::numeric_limits<double>::quiet_NaN()}));
  EXPECT_FALSE(all_finite(Vec{std::numeric_limits<double>::infinity()}));
  EXPECT_EQ(squared_norm(Vec{3.0, 4.0}), 25.0);
}

TEST(Rng, StreamsAreReproducibleAndIndependentOfDrawCount) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream fresh(42, 7);
  // child identity ignores the parent's consumed state
  auto c1 = a.child(3), c2 = fresh.child(3);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_EQ(fresh.child({1, 2, 3}).next_u64(), a.child({1, 2, 3}).next_u64());
}

TEST(Rng, DistinctStreamsDiffer) {
  std::set<std::uint64_t> firsts;
  const RngStream root(5, 0);
  for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(root.child(i).next_u64());
  EXPECT_EQ(firsts.size(), 1000u);
  EXPECT_NE(root.child({1, 2}).next_u64(), root.child({2, 1}).next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  RngStream rng(9, 9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.015);
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  RngStream rng(4, 4);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Mlp, ForwardMatchesHandComputation) {
  DenseLayer l0{2, 2, Activation::kTanh, Tensor({2, 2}, {1.0, -1.0, 0.5, 2.0}), Tensor({2}, {0.1, -0.2})};
  DenseLayer l1{2, 1, Activation::kIdentity, Tensor({1, 2}, {3.0, -4.0}), Tensor({1}, {0.5})};
  Mlp net({l0, l1});
  const Vec x{0.3, -0.7};
  const double h0 = std::tanh(1.0 * 0.3 - 1.0 * -0.7 + 0.1);
  const double h1 = std::tanh(0.5 * 0.3 + 2.0 * -0.7 - 0.2);
  const Vec y = mlp_forward(net, x);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 3.0 * h0 - 4.0 * h1 + 0.5);
}

TEST(Mlp, ReluForward) {
  DenseLayer l0{2, 2, Activation::kRelu, Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), Tensor({2}, {0.0, 0.0})};
  Mlp net({l0});
  const Vec y = mlp_forward(net, Vec{-2.0, 3.0});
  EXPECT_EQ(y, (Vec{0.0, 3.0}));
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  RngStream rng(11, 0);
  for (int t = 0; t < 60; ++t) {
    const std::size_t depth = 1 + rng.uniform_index(3);
    std::vector<std::size_t> widths{1 + rng.uniform_index(5)};
    std::vector<Activation> acts;
    for (std::size_t k = 0; k < depth; ++k) {
      widths.push_back(1 + rng.uniform_index(5));
      acts.push_back(k + 1 == depth ? Activation::kIdentity : Activation::kTanh);
    }
    RngStream init = rng.child(t);
    Mlp net = Mlp::glorot(widths, acts, init);
    for (auto& L : net.layers())
      for (double& b : L.bias.data) b = 0.3 * rng.normal();
    Vec x = random_vec(rng, widths.front());
    const Vec w = random_vec(rng, widths.back());
    auto objective = [&] {
      const Vec y = mlp_forward(net, x);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
      return s;
    };
    GradTape tape;
    mlp_forward(net, x, &tape);
    const auto back = mlp_backward(net, tape, w);
    EXPECT_LT(relative_error(flatten(back.params), finite_difference(net, objective)), 1e-4);
    EXPECT_LT(relative_error(back.input, finite_difference_input(x, objective)), 1e-4);
  }
}

TEST(Mlp, ReluBackwardAwayFromKinks) {
  DenseLayer l0{2, 3, Activation::kRelu, Tensor({3, 2}, {1.0, 0.5, -1.0, 0.2, 0.7, -0.3}),
                Tensor({3}, {0.1, 0.1, 0.1})};
  DenseLayer l1{3, 1, Activation::kIdentity, Tensor({1, 3}, {1.0, 2.0, -1.0}), Tensor({1}, {0.0})};
  Mlp net({l0, l1});
  Vec x{0.9, 0.4};
  auto f = [&] { return mlp_forward(net, x)[0]; };
  GradTape tape;
  mlp_forward(net, x, &tape);
  const auto back = mlp_backward(net, tape, Vec{1.0});
  EXPECT_LT(relative_error(flatten(back.params), finite_difference(net, f)), 1e-6);
  EXPECT_LT(relative_error(back.input, finite_difference_input(x, f)), 1e-6);
}

TEST(Mlp, EmptyTapeGivesZeroGradients) {
  RngStream rng(1, 2);
  Mlp net = Mlp::glorot({3, 4, 2}, {Activation::kTanh, Activation::kIdentity}, rng);
  GradTape tape;
  const auto back = mlp_backward(net, tape, Vec{1.0, 1.0});
  EXPECT_EQ(back.params, MlpGrad::zeros_like(net));
}

TEST(Mlp, TapeReuseGivesIdenticalGradients) {
  RngStream rng(1, 3);
  Mlp net = Mlp::glorot({3, 4, 2}, {Activation::kTanh, Activation::kIdentity}, rng);
  GradTape tape;
  const Vec x1{0.1, 0.2, 0.3}, x2{-1.0, 0.5, 2.0}, og{1.0, -2.0};
  mlp_forward(net, x1, &tape);
  const auto first = mlp_backward(net, tape, og);
  mlp_forward(net, x2, &tape);
  mlp_forward(net, x1, &tape);
  const auto again = mlp_backward(net, tape, og);
  EXPECT_EQ(first.params, again.params);
  EXPECT_EQ(first.input, again.input);
}

TEST(Mlp, GlorotRangeAndZeroBias) {
  RngStream rng(8, 8);
  Mlp net = Mlp::glorot({10, 6}, {Activation::kIdentity}, rng);
  const double r = std::sqrt(6.0 / 16.0);
  for (double w : net.layers()[0].weight.data) {
    EXPECT_LE(std::abs(w), r);
  }
  for (double b : net.layers()[0].bias.data) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(net.parameter_count(), 66u);
}

namespace {

// Independent reference: Adam with the textbook bias-corrected update.
struct AdamOracle {
  std::vector<long double> m, v;
  long double b1 = 0.9L, b2 = 0.999L, eps = 1e-8L;
  int t = 0;
  void step(std::vector<long double>& x, const Vec& g, long double lr) {
    if (m.empty()) m.assign(x.size(), 0), v.assign(x.size(), 0);
    ++t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const long double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace

TEST(Adam, MatchesExtendedPrecisionReference) {
  RngStream rng(21, 0);
  Vec a = random_vec(rng, 5), b = random_vec(rng, 3);
  std::vector<long double> ref(a.begin(), a.end());
  ref.insert(ref.end(), b.begin(), b.end());
  AdamState st;
  AdamOracle oracle;
  for (int k = 0; k < 50; ++k) {
    Vec ga = random_vec(rng, 5), gb = random_vec(rng, 3, 1e-3);
    std::vector<ParamBlock> blocks{{"a", a, ga}, {"b", b, gb}};
    adam_step(blocks, st, 0.01);
    Vec g = ga;
    g.insert(g.end(), gb.begin(), gb.end());
    oracle.step(ref, g, 0.01L);
  }
  EXPECT_EQ(st.step, 50u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], static_cast<double>(ref[i]), 1e-12);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b[i], static_cast<double>(ref[5 + i]), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Vec x{1.0, 1.0, 1.0};
  const Vec g{3.0, -0.5, 1e3};
  AdamState st;
  std::vector<ParamBlock> blocks{{"x", x, g}};
  adam_step(blocks, st, 0.1);
  EXPECT_NEAR(x[0], 0.9, 1e-8);
  EXPECT_NEAR(x[1], 1.1, 1e-7);
  EXPECT_NEAR(x[2], 0.9, 1e-8);
}

TEST(Adam, NonFiniteGradientLeavesEverythingUntouchedAndNamesBlock) {
  Vec a{1.0, 2.0}, b{3.0};
  const Vec ga{0.1, 0.2}, gb{std::numeric_limits<double>::quiet_NaN()};
  AdamState st;
  std::vector<ParamBlock> blocks{{"energy.layer0.weight", a, ga}, {"generator.layer1.bias", b, gb}};
  try {
    adam_step(blocks, st, 0.1);
    FAIL() << "expected an error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("generator.layer1.bias"), std::string::npos);
  }
  EXPECT_EQ(a, (Vec{1.0, 2.0}));
  EXPECT_EQ(b, (Vec{3.0}));
  EXPECT_EQ(st.step, 0u);
  EXPECT_TRUE(st.first_moment.empty());
}

TEST(Adam, RejectsNonPositiveRate) {
  Vec a{1.0};
  const Vec g{1.0};
  AdamState st;
  std::vector<ParamBlock> blocks{{"a", a, g}};
  EXPECT_THROW(adam_step(blocks, st, 0.0), std::invalid_argument);
}

TEST(Adam, ParamBlockNames) {
  RngStream rng(1, 1);
  Mlp net = Mlp::glorot({2, 3, 1}, {Activation::kTanh, Activation::kIdentity}, rng);
  const MlpGrad g = MlpGrad::zeros_like(net);
  std::vector<ParamBlock> blocks;
  append_param_blocks(blocks, "energy", net, g);
  ASSERT_EQ(blocks.size(), 4u);
  EXPECT_EQ(blocks[0].name, "energy.layer0.weight");
  EXPECT_EQ(blocks[3].name, "energy.layer1.bias");
}

TEST(BinaryIo, LittleEndianLayout) {
  ByteWriter w;
  w.put_u32(0x01020304);
  w.put_f64(1.0);
  const auto& b = w.bytes();
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
  EXPECT_EQ(b[11], 0x3f);
  EXPECT_EQ(b[10], 0xf0);
  ByteReader r(b);
  EXPECT_EQ(r.get_u32(), 0x01020304u);
  EXPECT_EQ(r.get_f64(), 1.0);
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.get_u32(), ParseError);
}

TEST(BinaryIo, NetworkRoundTrip) {
  RngStream rng(3, 3);
  Mlp net = Mlp::glorot({4, 5, 2}, {Activation::kRelu, Activation::kIdentity}, rng);
  ByteWriter w;
  write_network(w, net);
  ByteReader r(w.bytes());
  EXPECT_EQ(read_network(r), net);
  EXPECT_TRUE(r.at_end());
}

TEST(BinaryIo, NetworkRejectsBadActivation) {
  RngStream rng(3, 3);
  Mlp net = Mlp::glorot({2, 2}, {Activation::kTanh}, rng);
  ByteWriter w;
  write_network(w, net);
  auto bytes = w.bytes();
  bytes[12] = 9;  // activation code of layer 0
  ByteReader r(bytes);
  EXPECT_THROW(read_network(r), ParseError);
}
