#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "synthaug/mlp.hpp"
#include "synthaug/numeric.hpp"
#include "synthaug/rng.hpp"

namespace synthaug {

struct ModelConfig {
  std::size_t latent_dim = 8;
  std::size_t data_dim = 16;
  std::size_t num_classes = 4;
  std::size_t hidden = 32;
  double obs_sigma = 0.3;
};

// Latent energy-based generative classifier.
//   energy:    z -> F(z) in R^K; the prior is exp(F(z)[y]) N(z; 0, I) / Z
//   generator: z -> g(z) in R^D; p(x|z) = N(g(z), obs_sigma^2 I)
//   inference: x -> [mu, log_var] in R^{2d}; q(z|x) = N(mu, diag(exp(log_var)))
// The partition function Z is never represented.
struct ModelParams {
  Mlp energy;
  Mlp generator;
  Mlp inference;
  double obs_sigma = 0.3;
  std::size_t latent_dim = 0;
  std::size_t data_dim = 0;
  std::size_t num_classes = 0;

  // tanh hidden layers, identity outputs, Glorot-uniform weights.
  static ModelParams init(const ModelConfig& cfg, RngStream& rng);
  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

struct PosteriorMoments {
  Vec mu;
  Vec log_var;
};

// Gradients for all three networks. Operations that leave a network fixed
// return zeros in its slot.
struct ModelGrad {
  MlpGrad energy;
  MlpGrad generator;
  MlpGrad inference;

  static ModelGrad zeros_like(const ModelParams& p);
  void add_scaled(const ModelGrad& other, double scale);
  void scale(double s);
  bool operator==(const ModelGrad&) const = default;
};

// All gradient operations return ascent directions of the objective they
// name (the ELBO, or log p(y|x)); a trainer descends on their negation.

Vec energy_logits(const ModelParams& p, std::span<const double> z);
double free_energy(const ModelParams& p, std::span<const double> z);
Vec classify_latent(const ModelParams& p, std::span<const double> z);

// Value and z-gradient of F(z)[y] and of logsumexp F(z). The tape is scratch.
double conditional_logit_grad_z(const ModelParams& p, std::span<const double> z, std::size_t y,
                                Vec& grad_z, GradTape& tape);
double free_energy_grad_z(const ModelParams& p, std::span<const double> z, Vec& grad_z,
                          GradTape& tape);

PosteriorMoments encode(const ModelParams& p, std::span<const double> x);
// z = mu + exp(log_var / 2) * eps.
Vec reparameterize(const PosteriorMoments& q, std::span<const double> eps);
Vec sample_posterior(const ModelParams& p, std::span<const double> x, RngStream& rng);
Vec decode_mean(const ModelParams& p, std::span<const double> z);

// log N(x; g(z), sigma^2 I).
double reconstruction_log_likelihood(const ModelParams& p, std::span<const double> x,
                                     std::span<const double> z);

// Single-sample surrogate log p(x|z) - KL[q || N(0, I)] + logsumexp F(z) at
// z = mu + sigma * eps. Equals the ELBO up to the constant log Z.
double elbo_sample(const ModelParams& p, std::span<const double> x, std::span<const double> eps);
double elbo(const ModelParams& p, std::span<const double> x, RngStream& rng, std::size_t n_mc);

// mean_i grad_alpha f(z_i^+) - mean_j grad_alpha f(z_j^-).
ModelGrad grad_prior(const ModelParams& p, std::span<const Vec> posterior_zs,
                     std::span<const Vec> prior_zs);

// Gradient of elbo_sample w.r.t. generator and inference parameters.
ModelGrad grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                   std::span<const double> eps);
ModelGrad grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                   RngStream& rng);

// log softmax(F(z))[y] at z = mu + sigma * eps.
double supervised_objective(const ModelParams& p, std::span<const double> x, std::size_t y,
                            std::span<const double> eps);
// Gradient of supervised_objective w.r.t. energy and inference parameters.
ModelGrad grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                          std::span<const double> eps, double weight);
ModelGrad grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                          RngStream& rng, double weight);

// Accumulating forms for batched training: each adds one example's
// contribution into acc without touching other slots.
void accumulate_free_energy_param_grad(const ModelParams& p, std::span<const double> z,
                                       MlpGrad& energy_acc);
void accumulate_grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                         std::span<const double> eps, ModelGrad& acc);
void accumulate_grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                                std::span<const double> eps, double weight, ModelGrad& acc);

// Monte-Carlo estimate of p(y|x) = E_q softmax(F(z)).
Vec predict(const ModelParams& p, std::span<const double> x, RngStream& rng, std::size_t n_mc);

// Checkpoint: magic, u32 version, u32 d, u32 D, u32 K, f64 obs_sigma, then the
// energy, generator and inference networks.
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& p);
ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace synthaug
