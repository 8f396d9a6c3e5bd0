#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>
#include <numeric>

#include "synthaug/parallel.hpp"
#include "synthaug/trainer.hpp"
#include "test_util.hpp"

using namespace synthaug;
using namespace synthaug::testing;

namespace {

DatasetSplit small_data(std::uint64_t seed = 1) {
  SynthSpec s;
  s.num_classes = 3;
  s.data_dim = 4;
  s.class_mean_scale = 3.0;
  s.num_labeled = 9;
  s.num_unlabeled = 60;
  s.test_size = 30;
  s.seed = seed;
  return make_synthetic(s);
}

ModelConfig small_model() {
  ModelConfig m;
  m.latent_dim = 2;
  m.hidden = 8;
  return m;
}

TrainSchedule small_schedule() {
  TrainSchedule s;
  s.total_iters = 40;
  s.augment_at = 20;
  s.coreset_refresh_every = 10;
  s.batch_unlabeled = 8;
  s.batch_labeled = 8;
  s.batch_augmented = 8;
  s.num_synthetic = 30;
  s.entropy_threshold = 2.0;
  s.langevin = {5, 0.1, 1.0};
  s.coreset_fraction = 0.5;
  s.eval_every = 10;
  s.eval_n_mc = 2;
  s.elbo_eval_size = 16;
  s.seed = 5;
  return s;
}

ModelParams initial_params(const DatasetSplit& d) {
  ModelConfig cfg = small_model();
  cfg.data_dim = d.data_dim();
  cfg.num_classes = d.num_classes();
  RngStream r(77, 0);
  return ModelParams::init(cfg, r);
}

struct Changed {
  bool energy = false, generator = false, inference = false;
};

Changed changed(const ModelParams& a, const ModelParams& b) {
  return {!(a.energy == b.energy), !(a.generator == b.generator), !(a.inference == b.inference)};
}

}  // namespace

TEST(Trainer, ScheduleValidation) {
  TrainSchedule s = small_schedule();
  EXPECT_NO_THROW(s.validate());
  s.batch_labeled = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_schedule();
  s.coreset_fraction = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_schedule();
  s.lr_prior = -1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_schedule();
  s.coreset_fraction = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Trainer, AugmentationPastTheEndEqualsNoAugmentation) {
  const auto data = small_data();
  TrainSchedule a = small_schedule();
  a.augment_at = a.total_iters + 3;
  TrainSchedule b = small_schedule();
  b.toggles.augment = false;
  b.toggles.augmented_update = false;
  const auto ra = train(data, a, small_model());
  const auto rb = train(data, b, small_model());
  EXPECT_EQ(ra.params, rb.params);
  EXPECT_EQ(ra.report.rows, rb.report.rows);
  for (const auto& row : ra.report.rows) EXPECT_EQ(row.pool_size, 0u);
  EXPECT_TRUE(ra.report.refreshes.empty());
}

TEST(Trainer, ZeroLearningRatesLeaveParametersBitIdentical) {
  const auto data = small_data();
  const auto init = initial_params(data);
  TrainSchedule s = small_schedule();
  s.lr_prior = s.lr_generator = s.lr_supervised = s.lr_augmented = 0.0;
  const auto r = train(data, s, small_model(), &init);
  EXPECT_EQ(r.params, init);
}

TEST(Trainer, EachStepTouchesOnlyItsBlocks) {
  const auto data = small_data();
  const auto init = initial_params(data);
  struct Case {
    bool prior, generator, supervised, augmented;
    Changed expect;
  };
  const Case cases[] = {
      {true, false, false, false, {true, false, false}},
      {false, true, false, false, {false, true, true}},
      {false, false, true, false, {true, false, true}},
      {false, false, false, true, {true, false, true}},
      {false, false, false, false, {false, false, false}},
  };
  for (const auto& c : cases) {
    TrainSchedule s = small_schedule();
    s.toggles.prior_update = c.prior;
    s.toggles.generator_update = c.generator;
    s.toggles.supervised_update = c.supervised;
    s.toggles.augmented_update = c.augmented;
    std::vector<ModelParams> trail;
    const auto r = train(data, s, small_model(), &init,
                         [&](std::size_t, const ModelParams& p) { trail.push_back(p); });
    ASSERT_EQ(trail.size(), s.total_iters);
    const Changed got = changed(init, r.params);
    EXPECT_EQ(got.energy, c.expect.energy);
    EXPECT_EQ(got.generator, c.expect.generator);
    EXPECT_EQ(got.inference, c.expect.inference);
    if (c.augmented && !c.prior && !c.supervised) {
      // the augmented update is absent before augment_at
      EXPECT_EQ(trail[s.augment_at - 1], init);
      EXPECT_NE(trail[s.augment_at], init);
    }
  }
}

TEST(Trainer, ZeroAugmentedCoefficientMatchesNoAugmentedUpdate) {
  const auto data = small_data();
  TrainSchedule a = small_schedule();
  a.aug_loss_coefficient = 0.0;
  TrainSchedule b = small_schedule();
  b.toggles.augmented_update = false;
  const auto ra = train(data, a, small_model());
  const auto rb = train(data, b, small_model());
  EXPECT_EQ(ra.params, rb.params);
  EXPECT_EQ(report_csv(ra.report), report_csv(rb.report));
  // and the augmented step does change something when the coefficient is positive
  const auto rc = train(data, small_schedule(), small_model());
  EXPECT_NE(rc.params, ra.params);
}

TEST(Trainer, ReproducibleAcrossRunsAndThreadCounts) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.pseudo_label_enabled = true;
  s.pseudo_label_threshold = 0.8;
  const int before = thread_count();
  set_thread_count(1);
  const auto r1 = train(data, s, small_model());
  const auto r1b = train(data, s, small_model());
  set_thread_count(4);
  const auto r4 = train(data, s, small_model());
  set_thread_count(before);
  EXPECT_EQ(r1.params, r1b.params);
  EXPECT_EQ(r1.params, r4.params);
  EXPECT_EQ(report_csv(r1.report), report_csv(r4.report));
  EXPECT_EQ(report_json(r1.report), report_json(r4.report));
}

TEST(Trainer, ReportRowsAndExports) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.total_iters = 35;
  const auto r = train(data, s, small_model());
  std::vector<std::size_t> its;
  for (const auto& row : r.report.rows) its.push_back(row.iteration);
  EXPECT_EQ(its, (std::vector<std::size_t>{10, 20, 30, 35}));
  for (const auto& row : r.report.rows) {
    EXPECT_GE(row.accuracy, 0.0);
    EXPECT_LE(row.accuracy, 1.0);
    EXPECT_TRUE(std::isfinite(row.elbo));
  }
  const auto csv = report_csv(r.report);
  EXPECT_EQ(csv.rfind("iteration,accuracy,elbo,pool_size,residual\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = nlohmann::json::parse(report_json(r.report));
  EXPECT_EQ(j["rows"].size(), 4u);
  EXPECT_EQ(j["rows"][3]["iteration"], 35);
  EXPECT_EQ(j["refreshes"].size(), r.report.refreshes.size());
}

TEST(Trainer, RefreshesAtAugmentAtAndEveryR) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.total_iters = 45;
  const auto r = train(data, s, small_model());
  std::vector<std::size_t> at;
  for (const auto& rec : r.report.refreshes) {
    at.push_back(rec.iteration);
    EXPECT_EQ(rec.generated, 30u);
    EXPECT_LE(rec.pool_size, static_cast<std::size_t>(std::floor(0.5 * rec.survivors)));
  }
  EXPECT_EQ(at, (std::vector<std::size_t>{20, 30, 40}));
}

TEST(Trainer, EmptyPoolWarnsAndContinues) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.entropy_threshold = 0.0;
  const auto with = train(data, s, small_model());
  EXPECT_FALSE(with.report.warnings.empty());
  for (const auto& row : with.report.rows) EXPECT_EQ(row.pool_size, 0u);
  TrainSchedule b = small_schedule();
  b.toggles.augmented_update = false;
  EXPECT_EQ(with.params, train(data, b, small_model()).params);
}

TEST(Trainer, RefreshWithFullFractionKeepsEverySurvivor) {
  const auto data = small_data();
  const auto p = initial_params(data);
  TrainSchedule s = small_schedule();
  s.coreset_fraction = 1.0;
  const RngStream rng(3, 3);
  const auto pool = refresh_augmentation(p, s, rng);
  const auto filtered = filter_by_entropy(
      generate_conditional(p, s.per_class(3), s.langevin, rng.child(0)), s.entropy_threshold);
  EXPECT_EQ(pool.samples, filtered.samples);
  EXPECT_EQ(pool.survivors, filtered.samples.size());
  EXPECT_EQ(std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0),
            static_cast<double>(pool.survivors));
  s.entropy_threshold = 0.0;
  const auto empty = refresh_augmentation(p, s, rng);
  EXPECT_TRUE(empty.samples.empty());
  EXPECT_EQ(empty.generated, 30u);
}

TEST(Trainer, CuratedPoolBeatsRandomSubsetsOnResidual) {
  SynthSpec spec;
  spec.num_labeled = 40;
  spec.num_unlabeled = 400;
  spec.test_size = 40;
  spec.class_mean_scale = 4.0;
  const auto data = make_synthetic(spec);
  TrainSchedule s = small_schedule();
  s.total_iters = 300;
  s.augment_at = 1000;
  s.eval_every = 0;
  s.lr_prior = 1e-4;
  const auto trained = train(data, s, ModelConfig{});
  s.num_synthetic = 400;
  s.entropy_threshold = 0.5;
  s.coreset_fraction = 0.1;
  s.langevin = {30, 0.1, 1.0};
  const RngStream rng(9, 9);
  const auto pool = refresh_augmentation(trained.params, s, rng);
  ASSERT_GT(pool.samples.size(), 1u);

  const auto survivors = filter_by_entropy(
      generate_conditional(trained.params, s.per_class(4), s.langevin, rng.child(0)), s.entropy_threshold);
  std::vector<Vec> xs;
  std::vector<std::size_t> ys;
  for (const auto& smp : survivors.samples) xs.push_back(smp.x), ys.push_back(smp.y);
  const auto proxies = compute_proxies(trained.params, xs, ys);
  const auto dist = pairwise_distances(proxies);
  RngStream pick(1, 1);
  double mean = 0;
  const int draws = 50;
  for (int t = 0; t < draws; ++t) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[pick.uniform_index(i + 1)]);
    idx.resize(pool.samples.size());
    mean += weigh_selection(proxies, dist, idx, idx.size()).residual;
  }
  mean /= draws;
  EXPECT_LE(pool.residual, mean);
}

TEST(Trainer, ZeroEnergyNetPredictsClassZero) {
  const auto data = small_data();
  auto p = initial_params(data);
  for (auto& L : p.energy.layers()) {
    std::fill(L.weight.data.begin(), L.weight.data.end(), 0.0);
    std::fill(L.bias.data.begin(), L.bias.data.end(), 0.0);
  }
  std::size_t zeros = 0;
  for (const auto& e : data.test()) zeros += e.y == 0;
  const double acc = evaluate(p, data.test(), 3, RngStream(1, 1));
  EXPECT_EQ(acc, static_cast<double>(zeros) / data.test().size());
  EXPECT_EQ(acc, evaluate(p, data.test(), 3, RngStream(1, 1)));
}

TEST(Trainer, HandBuiltNearestMeanClassifierIsPerfect) {
  const std::size_t D = 4, K = 3;
  std::vector<Vec> means(K, Vec(D, 0.0));
  for (std::size_t k = 0; k < K; ++k) means[k][k] = 5.0;
  RngStream rng(2, 2);
  std::vector<LabeledExample> test;
  for (std::size_t i = 0; i < 300; ++i) {
    Vec x = means[i % K];
    for (double& v : x) v += 2.0 * rng.uniform() - 1.0;
    test.push_back({x, i % K});
  }
  ModelParams p;
  p.latent_dim = D;
  p.data_dim = D;
  p.num_classes = K;
  // q(z|x): mu = x, log_var = -60.
  DenseLayer inf{D, 2 * D, Activation::kIdentity, Tensor({2 * D, D}), Tensor({2 * D})};
  for (std::size_t i = 0; i < D; ++i) {
    inf.weight[i * D + i] = 1.0;
    inf.bias[D + i] = -60.0;
  }
  // F_k(z) = m_k . z - |m_k|^2 / 2.
  DenseLayer en{D, K, Activation::kIdentity, Tensor({K, D}), Tensor({K})};
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < D; ++i) en.weight[k * D + i] = means[k][i];
    en.bias[k] = -0.5 * squared_norm(means[k]);
  }
  p.inference = Mlp({inf});
  p.energy = Mlp({en});
  p.generator = Mlp::zeros({D, D}, {Activation::kIdentity});
  p.validate();
  EXPECT_EQ(evaluate(p, test, 10, RngStream(0, 0)), 1.0);
}

TEST(Trainer, DivergenceCarriesIteration) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.langevin = {20, 50.0, 1.0};
  try {
    train(data, s, small_model());
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 0u);
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
  }
}

TEST(Trainer, PseudoLabelsAreCountedAtRefresh) {
  const auto data = small_data();
  TrainSchedule s = small_schedule();
  s.pseudo_label_enabled = true;
  s.pseudo_label_threshold = std::log(3.0) + 1.0;
  const auto r = train(data, s, small_model());
  ASSERT_FALSE(r.report.refreshes.empty());
  for (const auto& rec : r.report.refreshes) EXPECT_EQ(rec.pseudo_labeled, data.unlabeled().size());
}

TEST(Trainer, RejectsDatasetMissingAClass) {
  std::vector<LabeledExample> lab{{Vec{0.0}, 0}, {Vec{1.0}, 0}};
  DatasetSplit d(1, 2, lab, {Vec{0.5}}, {0}, {{Vec{0.0}, 0}});
  EXPECT_THROW(train(d, small_schedule(), small_model()), std::invalid_argument);
}
