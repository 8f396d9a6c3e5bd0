#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "synthaug/augment.hpp"
#include "synthaug/coreset.hpp"
#include "synthaug/data.hpp"
#include "synthaug/model.hpp"
#include "synthaug/sampler.hpp"

namespace synthaug {

// Individually switchable parts of a training iteration.
struct StepToggles {
  bool prior_update = true;       // contrastive energy-prior update
  bool generator_update = true;   // ELBO update of generator + inference nets
  bool supervised_update = true;  // labeled cross-entropy update
  bool augment = true;            // build the synthetic pool at augment_at
  bool augmented_update = true;   // weighted cross-entropy on the pool
};

struct TrainSchedule {
  std::size_t total_iters = 20000;
  std::size_t augment_at = 10000;

  double lr_prior = 1e-4;         // eta0
  double lr_generator = 1e-3;     // eta1
  double lr_supervised = 1e-3;    // eta2
  double lr_augmented = 1e-3;     // eta3

  std::size_t batch_unlabeled = 32;
  std::size_t batch_labeled = 32;
  std::size_t batch_augmented = 32;

  std::size_t num_synthetic = 2000;  // L, split evenly across classes
  double entropy_threshold = 1e-6;
  LangevinConfig langevin{};         // T_LD steps for both chain kinds

  bool coreset_enabled = true;
  double coreset_fraction = 0.10;
  std::size_t coreset_refresh_every = 2000;
  double aug_loss_coefficient = 0.1;

  bool pseudo_label_enabled = false;
  double pseudo_label_threshold = 1e-6;

  std::size_t eval_every = 500;
  std::size_t eval_n_mc = 10;
  std::size_t elbo_eval_size = 256;

  std::uint64_t seed = 0;
  StepToggles toggles{};

  void validate() const;
  std::size_t per_class(std::size_t num_classes) const;
  bool augmentation_active() const { return toggles.augment && augment_at < total_iters; }
};

struct ReportRow {
  std::size_t iteration = 0;
  double accuracy = 0.0;
  double elbo = 0.0;
  std::size_t pool_size = 0;
  double residual = 0.0;

  bool operator==(const ReportRow&) const = default;
};

struct RefreshRecord {
  std::size_t iteration = 0;
  std::size_t generated = 0;
  std::size_t survivors = 0;
  std::size_t pool_size = 0;
  std::size_t pseudo_labeled = 0;
  double residual = 0.0;
};

struct TrainReport {
  std::vector<ReportRow> rows;
  std::vector<RefreshRecord> refreshes;
  std::vector<std::string> warnings;
  std::string checkpoint;  // path of the final checkpoint, when written
};

// Entropy-filtered, optionally CRAIG-reduced synthetic pool.
struct CuratedPool {
  std::vector<AugmentedSample> samples;
  Vec weights;  // gamma per sample; unit when no coreset step runs
  std::size_t generated = 0;
  std::size_t survivors = 0;
  double residual = 0.0;
};

// generate_conditional(L / K per class) -> filter_by_entropy -> (when
// coreset_enabled) compute_proxies + select with budget
// floor(coreset_fraction * survivors). An empty result is legal.
CuratedPool refresh_augmentation(const ModelParams& p, const TrainSchedule& schedule,
                                 const RngStream& rng);

// Fraction of test examples whose argmax prediction (lowest index on ties)
// matches the label. Example i uses stream rng.child(i).
double evaluate(const ModelParams& p, std::span<const LabeledExample> test, std::size_t n_mc,
                const RngStream& rng);

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Called after each completed iteration with (iteration count, params).
using TrainObserver = std::function<void(std::size_t, const ModelParams&)>;

// Joint semi-supervised training. The model's data_dim and num_classes are
// taken from the dataset. When init is given it is used instead of a fresh
// initialization. Throws DivergenceError carrying the iteration index.
TrainResult train(const DatasetSplit& data, const TrainSchedule& schedule,
                  const ModelConfig& model, const ModelParams* init = nullptr,
                  const TrainObserver& observer = {});

std::string report_csv(const TrainReport& report);
std::string report_json(const TrainReport& report);

}  // namespace synthaug
