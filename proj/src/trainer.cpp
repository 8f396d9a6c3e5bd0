#include "synthaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "synthaug/adam.hpp"
#include "synthaug/parallel.hpp"

namespace synthaug {

namespace {

constexpr std::uint64_t kTrainDomain = 0x747261696e;  // "train"
constexpr std::size_t kChunk = 8;

// Stream roles within one iteration.
enum Role : std::uint64_t {
  kUnlabeledBatch = 0,
  kLabeledBatch = 1,
  kAugBatch = 2,
  kPosteriorEps = 3,
  kPriorChain = 4,
  kLabeledEps = 5,
  kAugEps = 6,
};

// Top-level stream families.
enum Family : std::uint64_t {
  kInit = 0,
  kIteration = 1,
  kRefresh = 2,
  kEvalAccuracy = 3,
  kEvalElbo = 4,
  kPseudoLabel = 5,
};

void zero(ModelGrad& g) {
  g.energy.set_zero();
  g.generator.set_zero();
  g.inference.set_zero();
}

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Runs body(i, acc) with one accumulator per fixed-size chunk, then sums the
// chunks in index order into out. Independent of the thread count.
template <class Acc, class Body>
void chunked_reduce(std::size_t n, std::vector<Acc>& chunks, Acc& out, Body&& body) {
  const std::size_t nc = chunk_count(n);
  parallel_for(nc, [&](std::size_t c) {
    const std::size_t hi = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < hi; ++i) body(i, chunks[c]);
  });
  for (std::size_t c = 0; c < nc; ++c) out.add_scaled(chunks[c], 1.0);
}

std::vector<std::size_t> draw_batch(RngStream rng, std::size_t pool, std::size_t size) {
  std::vector<std::size_t> idx(size);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(pool));
  return idx;
}

struct ThetaExample {
  const Vec* x;
  std::size_t y;
  double weight;
};

[[noreturn]] void diverged(std::size_t iteration, const std::string& what) {
  throw DivergenceError("training diverged at iteration " + std::to_string(iteration) + ": " + what,
                        iteration);
}

}  // namespace

void TrainSchedule::validate() const {
  require(total_iters >= 1, "TrainSchedule: total_iters must be at least 1");
  for (double lr : {lr_prior, lr_generator, lr_supervised, lr_augmented})
    require(std::isfinite(lr) && lr >= 0.0, "TrainSchedule: learning rates must be finite and >= 0");
  require(batch_unlabeled >= 1 && batch_labeled >= 1 && batch_augmented >= 1,
          "TrainSchedule: batch sizes must be at least 1");
  require(num_synthetic >= 1, "TrainSchedule: num_synthetic must be at least 1");
  require(!std::isnan(entropy_threshold), "TrainSchedule: entropy_threshold is NaN");
  require(!std::isnan(pseudo_label_threshold), "TrainSchedule: pseudo_label_threshold is NaN");
  require(!pseudo_label_enabled || pseudo_label_threshold > 0,
          "TrainSchedule: pseudo_label_threshold must be > 0 when pseudo-labeling is enabled");
  require(coreset_fraction > 0.0 && coreset_fraction <= 1.0,
          "TrainSchedule: coreset_fraction must be in (0, 1]");
  require(std::isfinite(aug_loss_coefficient) && aug_loss_coefficient >= 0.0,
          "TrainSchedule: aug_loss_coefficient must be finite and >= 0");
  require(eval_n_mc >= 1, "TrainSchedule: eval_n_mc must be at least 1");
  langevin.validate();
}

std::size_t TrainSchedule::per_class(std::size_t num_classes) const {
  require(num_classes >= 1, "per_class: no classes");
  return num_synthetic / num_classes;
}

CuratedPool refresh_augmentation(const ModelParams& p, const TrainSchedule& schedule,
                                 const RngStream& rng) {
  CuratedPool pool;
  const std::size_t per_class = schedule.per_class(p.num_classes);
  const auto batch = generate_conditional(p, per_class, schedule.langevin, rng.child(0));
  pool.generated = batch.samples.size();
  auto kept = filter_by_entropy(batch, schedule.entropy_threshold);
  pool.survivors = kept.samples.size();
  if (kept.samples.empty()) return pool;

  if (!schedule.coreset_enabled) {
    pool.samples = std::move(kept.samples);
    pool.weights.assign(pool.samples.size(), 1.0);
    return pool;
  }

  std::vector<Vec> xs;
  std::vector<std::size_t> ys;
  xs.reserve(pool.survivors);
  ys.reserve(pool.survivors);
  for (const auto& s : kept.samples) {
    xs.push_back(s.x);
    ys.push_back(s.y);
  }
  const auto proxies = compute_proxies(p, xs, ys);
  const auto budget = static_cast<std::size_t>(
      std::floor(schedule.coreset_fraction * static_cast<double>(pool.survivors)));
  if (budget == 0) return pool;
  const auto sel = select_coreset(proxies, budget);
  pool.residual = sel.residual;
  for (std::size_t k = 0; k < sel.indices.size(); ++k) {
    pool.samples.push_back(kept.samples[sel.indices[k]]);
    pool.weights.push_back(sel.weights[k]);
  }
  return pool;
}

double evaluate(const ModelParams& p, std::span<const LabeledExample> test, std::size_t n_mc,
                const RngStream& rng) {
  require(!test.empty(), "evaluate: empty test set");
  std::vector<unsigned char> hit(test.size(), 0);
  parallel_for(test.size(), [&](std::size_t i) {
    RngStream r = rng.child(i);
    hit[i] = argmax(predict(p, test[i].x, r, n_mc)) == test[i].y ? 1 : 0;
  });
  std::size_t correct = 0;
  for (auto h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

TrainResult train(const DatasetSplit& data, const TrainSchedule& schedule,
                  const ModelConfig& model, const ModelParams* init,
                  const TrainObserver& observer) {
  schedule.validate();
  const std::size_t K = data.num_classes();
  require(!data.labeled().empty() && !data.unlabeled().empty() && !data.test().empty(),
          "train: dataset has an empty split");
  {
    std::vector<std::size_t> counts(K, 0);
    for (const auto& e : data.labeled()) ++counts[e.y];
    for (auto c : counts) require(c >= 1, "train: every class needs a labeled example");
  }

  const RngStream root(schedule.seed, kTrainDomain);
  TrainResult result;
  ModelParams& p = result.params;
  if (init) {
    init->validate();
    require(init->data_dim == data.data_dim() && init->num_classes == K,
            "train: initial params do not match the dataset");
    p = *init;
  } else {
    ModelConfig cfg = model;
    cfg.data_dim = data.data_dim();
    cfg.num_classes = K;
    RngStream r = root.child(kInit);
    p = ModelParams::init(cfg, r);
  }
  TrainReport& report = result.report;
  const StepToggles& on = schedule.toggles;
  const std::size_t d = p.latent_dim;

  AdamState adam_prior, adam_psi, adam_theta;
  const ModelGrad zero_grad = ModelGrad::zeros_like(p);

  const std::size_t n = schedule.batch_unlabeled;
  const std::size_t m = schedule.batch_labeled;
  const std::size_t l = schedule.batch_augmented;
  std::vector<ModelGrad> chunks(chunk_count(std::max({n, m, l})), zero_grad);
  std::vector<ModelGrad> neg_chunks(chunk_count(n), zero_grad);
  ModelGrad g_pos = zero_grad, g_neg = zero_grad, g_psi = zero_grad, g_sup = zero_grad,
            g_aug = zero_grad;

  std::vector<Vec> eps_u(n, Vec(d)), z_pos(n), z_neg(n);
  std::vector<Vec> eps_l(m, Vec(d)), eps_a(l, Vec(d));

  std::vector<LabeledExample> labeled_stream = data.labeled();
  CuratedPool pool;

  const bool augment = schedule.augmentation_active();
  auto refresh_due = [&](std::size_t t) {
    if (!augment || t < schedule.augment_at) return false;
    if (t == schedule.augment_at) return true;
    const std::size_t R = schedule.coreset_refresh_every;
    return R > 0 && (t - schedule.augment_at) % R == 0;
  };

  auto record = [&](std::size_t k) {
    ReportRow row;
    row.iteration = k;
    row.accuracy = evaluate(p, data.test(), schedule.eval_n_mc, root.child({kEvalAccuracy, k}));
    const std::size_t ne = std::min(schedule.elbo_eval_size, data.unlabeled().size());
    Vec vals(ne);
    const RngStream er = root.child({kEvalElbo, k});
    parallel_for(ne, [&](std::size_t i) {
      RngStream r = er.child(i);
      vals[i] = elbo(p, data.unlabeled()[i], r, schedule.eval_n_mc);
    });
    double s = 0.0;
    for (double v : vals) s += v;
    row.elbo = ne ? s / static_cast<double>(ne) : 0.0;
    row.pool_size = pool.samples.size();
    row.residual = pool.residual;
    report.rows.push_back(row);
  };

  auto adam = [&](std::vector<ParamBlock>& blocks, AdamState& st, double lr, std::size_t t) {
    try {
      adam_step(blocks, st, lr);
    } catch (const std::domain_error& e) {
      diverged(t, e.what());
    }
  };

  for (std::size_t t = 0; t < schedule.total_iters; ++t) {
    if (refresh_due(t)) {
      const RngStream rr = root.child({kRefresh, t});
      try {
        pool = refresh_augmentation(p, schedule, rr);
      } catch (const DivergenceError& e) {
        diverged(t, e.what());
      }
      RefreshRecord rec{t, pool.generated, pool.survivors, pool.samples.size(), 0, pool.residual};
      if (pool.samples.empty())
        report.warnings.push_back("iteration " + std::to_string(t) +
                                  ": augmented pool is empty after filtering; skipping the "
                                  "augmented update until the next refresh");
      if (schedule.pseudo_label_enabled) {
        const auto pl = pseudo_label(p, data.unlabeled(), schedule.pseudo_label_threshold,
                                     root.child({kPseudoLabel, t}), schedule.eval_n_mc);
        labeled_stream.assign(data.labeled().begin(), data.labeled().end());
        for (const auto& s : pl) labeled_stream.push_back({s.x, s.y});
        rec.pseudo_labeled = pl.size();
      }
      report.refreshes.push_back(rec);
    }

    const RngStream it = root.child({kIteration, t});

    // Unlabeled batch, posterior samples, prior chains started from q.
    const bool need_unlabeled = (on.prior_update && schedule.lr_prior > 0.0) ||
                                (on.generator_update && schedule.lr_generator > 0.0);
    if (need_unlabeled) {
      const auto ub = draw_batch(it.child(kUnlabeledBatch), data.unlabeled().size(), n);
      const bool prior = on.prior_update && schedule.lr_prior > 0.0;
      const RngStream er = it.child(kPosteriorEps), cr = it.child(kPriorChain);
      try {
        parallel_for(n, [&](std::size_t i) {
          RngStream r = er.child(i);
          r.fill_normal(eps_u[i]);
          z_pos[i] = reparameterize(encode(p, data.unlabeled()[ub[i]]), eps_u[i]);
          if (prior) {
            RngStream c = cr.child(i);
            z_neg[i] = langevin_prior(p, z_pos[i], schedule.langevin, c).final_z;
          }
        });
      } catch (const DivergenceError& e) {
        diverged(t, e.what());
      }

      // Prior update.
      if (prior) {
        zero(g_pos);
        zero(g_neg);
        for (auto& c : chunks) zero(c);
        for (auto& c : neg_chunks) zero(c);
        chunked_reduce(n, chunks, g_pos, [&](std::size_t i, ModelGrad& acc) {
          accumulate_free_energy_param_grad(p, z_pos[i], acc.energy);
        });
        chunked_reduce(n, neg_chunks, g_neg, [&](std::size_t i, ModelGrad& acc) {
          accumulate_free_energy_param_grad(p, z_neg[i], acc.energy);
        });
        // Descend on -(E_q grad f - E_p grad f).
        MlpGrad step = g_neg.energy;
        step.add_scaled(g_pos.energy, -1.0);
        step.scale(1.0 / static_cast<double>(n));
        std::vector<ParamBlock> blocks;
        append_param_blocks(blocks, "energy", p.energy, step);
        adam(blocks, adam_prior, schedule.lr_prior, t);
      }

      // Generator / inference update.
      if (on.generator_update && schedule.lr_generator > 0.0) {
        zero(g_psi);
        for (auto& c : chunks) zero(c);
        chunked_reduce(n, chunks, g_psi, [&](std::size_t i, ModelGrad& acc) {
          accumulate_grad_inference_generator(p, data.unlabeled()[ub[i]], eps_u[i], acc);
        });
        g_psi.scale(-1.0 / static_cast<double>(n));
        std::vector<ParamBlock> blocks;
        append_param_blocks(blocks, "generator", p.generator, g_psi.generator);
        append_param_blocks(blocks, "inference", p.inference, g_psi.inference);
        adam(blocks, adam_psi, schedule.lr_generator, t);
      }
    }

    // Supervised and augmented terms share one theta update.
    const bool sup = on.supervised_update && schedule.lr_supervised > 0.0;
    const bool aug = on.augmented_update && schedule.lr_augmented > 0.0 &&
                     !pool.samples.empty() && schedule.aug_loss_coefficient > 0.0;
    if (sup || aug) {
      zero(g_sup);
      zero(g_aug);
      if (sup) {
        const auto lb = draw_batch(it.child(kLabeledBatch), labeled_stream.size(), m);
        const RngStream er = it.child(kLabeledEps);
        for (auto& c : chunks) zero(c);
        chunked_reduce(m, chunks, g_sup, [&](std::size_t j, ModelGrad& acc) {
          RngStream r = er.child(j);
          r.fill_normal(eps_l[j]);
          const auto& e = labeled_stream[lb[j]];
          accumulate_grad_supervised(p, e.x, e.y, eps_l[j], 1.0, acc);
        });
        g_sup.scale(1.0 / static_cast<double>(m));
      }
      if (aug) {
        const auto ab = draw_batch(it.child(kAugBatch), pool.samples.size(), l);
        const RngStream er = it.child(kAugEps);
        for (auto& c : chunks) zero(c);
        chunked_reduce(l, chunks, g_aug, [&](std::size_t j, ModelGrad& acc) {
          RngStream r = er.child(j);
          r.fill_normal(eps_a[j]);
          const auto& s = pool.samples[ab[j]];
          const double w = pool.weights[ab[j]] * schedule.aug_loss_coefficient;
          if (w > 0.0) accumulate_grad_supervised(p, s.x, s.y, eps_a[j], w, acc);
        });
        g_aug.scale(1.0 / static_cast<double>(l));
      }
      // The shared step runs at eta2 when the supervised term is on; the
      // augmented term enters at relative scale eta3 / eta2.
      double lr = schedule.lr_augmented;
      if (sup) {
        lr = schedule.lr_supervised;
        if (aug) g_sup.add_scaled(g_aug, schedule.lr_augmented / schedule.lr_supervised);
      } else {
        g_sup = g_aug;
      }
      g_sup.scale(-1.0);
      std::vector<ParamBlock> blocks;
      append_param_blocks(blocks, "energy", p.energy, g_sup.energy);
      append_param_blocks(blocks, "inference", p.inference, g_sup.inference);
      adam(blocks, adam_theta, lr, t);
    }

    const std::size_t done = t + 1;
    if (observer) observer(done, p);
    if ((schedule.eval_every > 0 && done % schedule.eval_every == 0) ||
        done == schedule.total_iters)
      record(done);
  }
  return result;
}

namespace {
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string report_csv(const TrainReport& report) {
  std::string out = "iteration,accuracy,elbo,pool_size,residual\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.iteration) + ',' + g17(r.accuracy) + ',' + g17(r.elbo) + ',' +
           std::to_string(r.pool_size) + ',' + g17(r.residual) + '\n';
  }
  return out;
}

std::string report_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"iteration", r.iteration},
                         {"accuracy", r.accuracy},
                         {"elbo", r.elbo},
                         {"pool_size", r.pool_size},
                         {"residual", r.residual}});
  j["refreshes"] = nlohmann::ordered_json::array();
  for (const auto& r : report.refreshes)
    j["refreshes"].push_back({{"iteration", r.iteration},
                              {"generated", r.generated},
                              {"survivors", r.survivors},
                              {"pool_size", r.pool_size},
                              {"pseudo_labeled", r.pseudo_labeled},
                              {"residual", r.residual}});
  j["warnings"] = report.warnings;
  j["checkpoint"] = report.checkpoint;
  return j.dump(2) + "\n";
}

}  // namespace synthaug
