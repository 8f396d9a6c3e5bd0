#include <gtest/gtest.h>

#include <cmath>

#include "synthaug/binary_io.hpp"
#include "synthaug/data.hpp"
#include "test_util.hpp"

using namespace synthaug;
using namespace synthaug::testing;

namespace {

SynthSpec small_spec(std::uint64_t seed = 3) {
  SynthSpec s;
  s.num_classes = 3;
  s.data_dim = 5;
  s.num_labeled = 10;
  s.num_unlabeled = 20;
  s.test_size = 8;
  s.seed = seed;
  return s;
}

std::size_t nearest_mean(const std::vector<Vec>& means, const Vec& x) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (std::size_t k = 0; k < means.size(); ++k) {
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - means[k][i]) * (x[i] - means[k][i]);
    if (d < bd) bd = d, best = k;
  }
  return best;
}

}  // namespace

TEST(Data, ZeroCovarianceGivesExactMeans) {
  auto s = small_spec();
  s.class_cov_scale = 0.0;
  const auto split = make_synthetic(s);
  const auto means = synthetic_class_means(s);
  for (const auto& e : split.labeled()) EXPECT_EQ(e.x, means[e.y]);
  for (const auto& e : split.test()) EXPECT_EQ(e.x, means[e.y]);
  const auto hidden = audit_hidden_labels(split);
  for (std::size_t i = 0; i < split.unlabeled().size(); ++i) EXPECT_EQ(split.unlabeled()[i], means[hidden[i]]);
}

TEST(Data, MeansLieOnTheScaledSphere) {
  auto s = small_spec();
  s.class_mean_scale = 2.5;
  for (const auto& m : synthetic_class_means(s)) EXPECT_NEAR(std::sqrt(squared_norm(m)), 2.5, 1e-12);
}

TEST(Data, GenerationIsDeterministic) {
  EXPECT_EQ(make_synthetic(small_spec(7)), make_synthetic(small_spec(7)));
  EXPECT_NE(make_synthetic(small_spec(7)), make_synthetic(small_spec(8)));
}

TEST(Data, LabeledSplitIsBalanced) {
  for (std::size_t M : {3u, 4u, 10u, 11u, 40u}) {
    auto s = small_spec();
    s.num_labeled = M;
    const auto split = make_synthetic(s);
    std::vector<std::size_t> counts(3, 0);
    for (const auto& e : split.labeled()) ++counts[e.y];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_EQ(split.labeled().size(), M);
  }
}

TEST(Data, WellSeparatedMixtureIsNearestMeanSeparable) {
  SynthSpec s;
  s.class_mean_scale = 10.0;
  s.class_cov_scale = 1.0;
  s.test_size = 4000;
  s.seed = 11;
  const auto split = make_synthetic(s);
  const auto means = synthetic_class_means(s);
  std::size_t correct = 0;
  for (const auto& e : split.test()) correct += nearest_mean(means, e.x) == e.y;
  EXPECT_GT(static_cast<double>(correct) / split.test().size(), 0.999);
}

TEST(Data, SpecValidation) {
  auto s = small_spec();
  s.num_labeled = 2;
  EXPECT_THROW(make_synthetic(s), std::invalid_argument);
  s = small_spec();
  s.class_mean_scale = 0.0;
  EXPECT_THROW(make_synthetic(s), std::invalid_argument);
  s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(make_synthetic(s), std::invalid_argument);
}

TEST(Data, FileRoundTripIsBitExact) {
  const auto split = make_synthetic(small_spec());
  EXPECT_EQ(deserialize_dataset(serialize_dataset(split)), split);
  const auto dir = scratch_dir("dataset");
  save_dataset(split, dir / "nested" / "dataset.bin");
  const auto back = load_dataset(dir / "nested" / "dataset.bin");
  EXPECT_EQ(back, split);
  const auto h1 = audit_hidden_labels(back), h2 = audit_hidden_labels(split);
  EXPECT_TRUE(std::equal(h1.begin(), h1.end(), h2.begin(), h2.end()));
}

TEST(Data, HeaderLayout) {
  const auto bytes = serialize_dataset(make_synthetic(small_spec()));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 16), std::string(kDatasetMagic));
  const std::span<const std::uint8_t> view(bytes);
  ByteReader r(view.subspan(16));
  EXPECT_EQ(r.get_u32(), 1u);
  EXPECT_EQ(r.get_u32(), 5u);
  EXPECT_EQ(r.get_u32(), 3u);
  EXPECT_EQ(r.get_u32(), 10u);
  EXPECT_EQ(r.get_u32(), 20u);
  EXPECT_EQ(r.get_u32(), 8u);
  EXPECT_EQ(bytes.size(), 40u + (10 + 20 + 8) * (5 * 8 + 4));
}

TEST(Data, TruncatedFileIsRejectedWithOffset) {
  const auto bytes = serialize_dataset(make_synthetic(small_spec()));
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, std::size_t{30}, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + cut);
    try {
      deserialize_dataset(t);
      FAIL() << "accepted truncation at " << cut;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }
  }
}

TEST(Data, ForeignEndiannessIsAVersionError) {
  auto bytes = serialize_dataset(make_synthetic(small_spec()));
  // version 1 written big-endian
  bytes[16] = 0;
  bytes[19] = 1;
  try {
    deserialize_dataset(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    EXPECT_EQ(e.offset(), 16u);
  }
}

TEST(Data, BadLabelAndNonFiniteValuesAreRejected) {
  const auto split = make_synthetic(small_spec());
  auto bytes = serialize_dataset(split);
  auto bad_label = bytes;
  bad_label[40 + 5 * 8] = 9;  // first labeled example's label
  EXPECT_THROW(deserialize_dataset(bad_label), ParseError);
  auto nan = bytes;
  nan[40 + 7] = 0x7f;
  nan[40 + 6] = 0xf8;
  EXPECT_THROW(deserialize_dataset(nan), ParseError);
}
