#include "synthaug/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "synthaug/binary_io.hpp"
#include "synthaug/checkpoint.hpp"

namespace synthaug {

ModelParams ModelParams::init(const ModelConfig& cfg, RngStream& rng) {
  require(cfg.latent_dim > 0 && cfg.data_dim > 0 && cfg.hidden > 0, "ModelConfig: zero dimension");
  require(cfg.num_classes >= 2, "ModelConfig: need at least two classes");
  require(cfg.obs_sigma > 0.0, "ModelConfig: obs_sigma must be positive");
  const std::size_t d = cfg.latent_dim, D = cfg.data_dim, K = cfg.num_classes, h = cfg.hidden;
  const std::vector<Activation> acts{Activation::kTanh, Activation::kTanh, Activation::kIdentity};
  RngStream e = rng.child(1), g = rng.child(2), q = rng.child(3);
  ModelParams p;
  p.energy = Mlp::glorot({d, h, h, K}, acts, e);
  p.generator = Mlp::glorot({d, h, h, D}, acts, g);
  p.inference = Mlp::glorot({D, h, h, 2 * d}, acts, q);
  p.obs_sigma = cfg.obs_sigma;
  p.latent_dim = d;
  p.data_dim = D;
  p.num_classes = K;
  p.validate();
  return p;
}

void ModelParams::validate() const {
  require(num_classes >= 2, "ModelParams: K must be >= 2");
  require(obs_sigma > 0.0 && std::isfinite(obs_sigma), "ModelParams: obs_sigma must be > 0");
  require(energy.in_width() == latent_dim && energy.out_width() == num_classes,
          "ModelParams: energy net must map R^d -> R^K");
  require(generator.in_width() == latent_dim && generator.out_width() == data_dim,
          "ModelParams: generator net must map R^d -> R^D");
  require(inference.in_width() == data_dim && inference.out_width() == 2 * latent_dim,
          "ModelParams: inference net must map R^D -> R^2d");
}

ModelGrad ModelGrad::zeros_like(const ModelParams& p) {
  return {MlpGrad::zeros_like(p.energy), MlpGrad::zeros_like(p.generator),
          MlpGrad::zeros_like(p.inference)};
}

void ModelGrad::add_scaled(const ModelGrad& other, double s) {
  energy.add_scaled(other.energy, s);
  generator.add_scaled(other.generator, s);
  inference.add_scaled(other.inference, s);
}

void ModelGrad::scale(double s) {
  energy.scale(s);
  generator.scale(s);
  inference.scale(s);
}

namespace {

void check_latent(const ModelParams& p, std::span<const double> z) {
  require(z.size() == p.latent_dim, "latent vector has length " + std::to_string(z.size()) +
                                        ", expected " + std::to_string(p.latent_dim));
}

void check_data(const ModelParams& p, std::span<const double> x) {
  require(x.size() == p.data_dim, "data vector has length " + std::to_string(x.size()) +
                                      ", expected " + std::to_string(p.data_dim));
}

void check_eps(const ModelParams& p, std::span<const double> eps) {
  require(eps.size() == p.latent_dim, "noise vector must have latent dimension");
}

// Forward through the inference net, split into moments and draw z.
struct Posterior {
  Vec mu, log_var, sd, z;
};

Posterior posterior_forward(const ModelParams& p, std::span<const double> x,
                            std::span<const double> eps, GradTape* tape) {
  const Vec out = mlp_forward(p.inference, x, tape);
  const std::size_t d = p.latent_dim;
  Posterior q;
  q.mu.assign(out.begin(), out.begin() + d);
  q.log_var.assign(out.begin() + d, out.end());
  q.sd.resize(d);
  q.z.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    q.sd[i] = std::exp(0.5 * q.log_var[i]);
    q.z[i] = q.mu[i] + q.sd[i] * eps[i];
  }
  return q;
}

}  // namespace

Vec energy_logits(const ModelParams& p, std::span<const double> z) {
  check_latent(p, z);
  return mlp_forward(p.energy, z);
}

double free_energy(const ModelParams& p, std::span<const double> z) {
  return logsumexp(energy_logits(p, z));
}

Vec classify_latent(const ModelParams& p, std::span<const double> z) {
  return softmax(energy_logits(p, z));
}

double conditional_logit_grad_z(const ModelParams& p, std::span<const double> z, std::size_t y,
                                Vec& grad_z, GradTape& tape) {
  check_latent(p, z);
  require(y < p.num_classes, "class index out of range");
  const Vec logits = mlp_forward(p.energy, z, &tape);
  Vec og(p.num_classes, 0.0);
  og[y] = 1.0;
  mlp_backward_accumulate(p.energy, tape, og, nullptr, grad_z);
  return logits[y];
}

double free_energy_grad_z(const ModelParams& p, std::span<const double> z, Vec& grad_z,
                          GradTape& tape) {
  check_latent(p, z);
  const Vec logits = mlp_forward(p.energy, z, &tape);
  const Vec prob = softmax(logits);
  mlp_backward_accumulate(p.energy, tape, prob, nullptr, grad_z);
  return logsumexp(logits);
}

PosteriorMoments encode(const ModelParams& p, std::span<const double> x) {
  check_data(p, x);
  const Vec out = mlp_forward(p.inference, x);
  const std::size_t d = p.latent_dim;
  return {Vec(out.begin(), out.begin() + d), Vec(out.begin() + d, out.end())};
}

Vec reparameterize(const PosteriorMoments& q, std::span<const double> eps) {
  require(q.mu.size() == eps.size() && q.log_var.size() == eps.size(),
          "reparameterize: length mismatch");
  Vec z(eps.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mu[i] + std::exp(0.5 * q.log_var[i]) * eps[i];
  return z;
}

Vec sample_posterior(const ModelParams& p, std::span<const double> x, RngStream& rng) {
  const PosteriorMoments q = encode(p, x);
  Vec eps(p.latent_dim);
  rng.fill_normal(eps);
  return reparameterize(q, eps);
}

Vec decode_mean(const ModelParams& p, std::span<const double> z) {
  check_latent(p, z);
  return mlp_forward(p.generator, z);
}

double reconstruction_log_likelihood(const ModelParams& p, std::span<const double> x,
                                     std::span<const double> z) {
  check_data(p, x);
  const Vec g = decode_mean(p, z);
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - g[i]) * (x[i] - g[i]);
  const double var = p.obs_sigma * p.obs_sigma;
  return -sq / (2.0 * var) -
         0.5 * static_cast<double>(p.data_dim) * std::log(2.0 * std::numbers::pi * var);
}

double elbo_sample(const ModelParams& p, std::span<const double> x, std::span<const double> eps) {
  check_data(p, x);
  check_eps(p, eps);
  const Posterior q = posterior_forward(p, x, eps, nullptr);
  return reconstruction_log_likelihood(p, x, q.z) - gaussian_kl(q.mu, q.log_var) +
         free_energy(p, q.z);
}

double elbo(const ModelParams& p, std::span<const double> x, RngStream& rng, std::size_t n_mc) {
  require(n_mc >= 1, "elbo: n_mc must be >= 1");
  check_data(p, x);
  const PosteriorMoments m = encode(p, x);
  const double kl = gaussian_kl(m.mu, m.log_var);
  Vec eps(p.latent_dim);
  double acc = 0.0;
  for (std::size_t s = 0; s < n_mc; ++s) {
    rng.fill_normal(eps);
    const Vec z = reparameterize(m, eps);
    acc += reconstruction_log_likelihood(p, x, z) + free_energy(p, z);
  }
  return acc / static_cast<double>(n_mc) - kl;
}

void accumulate_free_energy_param_grad(const ModelParams& p, std::span<const double> z,
                                       MlpGrad& energy_acc) {
  check_latent(p, z);
  GradTape tape;
  Vec gz;
  const Vec logits = mlp_forward(p.energy, z, &tape);
  mlp_backward_accumulate(p.energy, tape, softmax(logits), &energy_acc, gz);
}

ModelGrad grad_prior(const ModelParams& p, std::span<const Vec> posterior_zs,
                     std::span<const Vec> prior_zs) {
  require(!posterior_zs.empty() && !prior_zs.empty(), "grad_prior: empty sample batch");
  auto batch_mean = [&](std::span<const Vec> zs) {
    MlpGrad acc = MlpGrad::zeros_like(p.energy);
    for (const Vec& z : zs) accumulate_free_energy_param_grad(p, z, acc);
    acc.scale(1.0 / static_cast<double>(zs.size()));
    return acc;
  };
  ModelGrad g = ModelGrad::zeros_like(p);
  g.energy = batch_mean(posterior_zs);
  g.energy.add_scaled(batch_mean(prior_zs), -1.0);
  return g;
}

void accumulate_grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                         std::span<const double> eps, ModelGrad& g) {
  check_data(p, x);
  check_eps(p, eps);
  const std::size_t d = p.latent_dim;
  GradTape enc_tape, gen_tape, energy_tape;

  const Posterior q = posterior_forward(p, x, eps, &enc_tape);

  // Reconstruction: d/dg log N(x; g, s^2 I) = (x - g) / s^2.
  const Vec mean = mlp_forward(p.generator, q.z, &gen_tape);
  const double inv_var = 1.0 / (p.obs_sigma * p.obs_sigma);
  Vec dg(p.data_dim);
  for (std::size_t i = 0; i < p.data_dim; ++i) dg[i] = (x[i] - mean[i]) * inv_var;
  Vec dz;
  mlp_backward_accumulate(p.generator, gen_tape, dg, &g.generator, dz);

  // Energy term f(z) flows into phi only.
  Vec dz_energy;
  const Vec logits = mlp_forward(p.energy, q.z, &energy_tape);
  mlp_backward_accumulate(p.energy, energy_tape, softmax(logits), nullptr, dz_energy);
  for (std::size_t i = 0; i < d; ++i) dz[i] += dz_energy[i];

  // Chain through z = mu + exp(lv/2) eps, minus the closed-form KL gradient.
  Vec dout(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    dout[i] = dz[i] - q.mu[i];
    dout[d + i] = dz[i] * eps[i] * 0.5 * q.sd[i] - 0.5 * (q.sd[i] * q.sd[i] - 1.0);
  }
  Vec dx;
  mlp_backward_accumulate(p.inference, enc_tape, dout, &g.inference, dx);
}

ModelGrad grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                   std::span<const double> eps) {
  ModelGrad g = ModelGrad::zeros_like(p);
  accumulate_grad_inference_generator(p, x, eps, g);
  return g;
}

ModelGrad grad_inference_generator(const ModelParams& p, std::span<const double> x,
                                   RngStream& rng) {
  Vec eps(p.latent_dim);
  rng.fill_normal(eps);
  return grad_inference_generator(p, x, eps);
}

double supervised_objective(const ModelParams& p, std::span<const double> x, std::size_t y,
                            std::span<const double> eps) {
  check_data(p, x);
  check_eps(p, eps);
  require(y < p.num_classes, "class index out of range");
  const Posterior q = posterior_forward(p, x, eps, nullptr);
  const Vec logits = energy_logits(p, q.z);
  return logits[y] - logsumexp(logits);
}

void accumulate_grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                                std::span<const double> eps, double weight, ModelGrad& g) {
  check_data(p, x);
  check_eps(p, eps);
  require(y < p.num_classes, "grad_supervised: class index out of range");
  require(weight > 0.0, "grad_supervised: weight must be positive");
  const std::size_t d = p.latent_dim;
  GradTape enc_tape, energy_tape;

  const Posterior q = posterior_forward(p, x, eps, &enc_tape);
  const Vec logits = mlp_forward(p.energy, q.z, &energy_tape);
  Vec dlogits = softmax(logits);
  for (double& v : dlogits) v = -weight * v;
  dlogits[y] += weight;
  Vec dz;
  mlp_backward_accumulate(p.energy, energy_tape, dlogits, &g.energy, dz);

  Vec dout(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    dout[i] = dz[i];
    dout[d + i] = dz[i] * eps[i] * 0.5 * q.sd[i];
  }
  Vec dx;
  mlp_backward_accumulate(p.inference, enc_tape, dout, &g.inference, dx);
}

ModelGrad grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                          std::span<const double> eps, double weight) {
  ModelGrad g = ModelGrad::zeros_like(p);
  accumulate_grad_supervised(p, x, y, eps, weight, g);
  return g;
}

ModelGrad grad_supervised(const ModelParams& p, std::span<const double> x, std::size_t y,
                          RngStream& rng, double weight) {
  Vec eps(p.latent_dim);
  rng.fill_normal(eps);
  return grad_supervised(p, x, y, eps, weight);
}

Vec predict(const ModelParams& p, std::span<const double> x, RngStream& rng, std::size_t n_mc) {
  require(n_mc >= 1, "predict: n_mc must be >= 1");
  const PosteriorMoments m = encode(p, x);
  Vec acc(p.num_classes, 0.0);
  Vec eps(p.latent_dim);
  for (std::size_t s = 0; s < n_mc; ++s) {
    rng.fill_normal(eps);
    const Vec prob = classify_latent(p, reparameterize(m, eps));
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += prob[k];
  }
  for (double& v : acc) v /= static_cast<double>(n_mc);
  return acc;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& p) {
  p.validate();
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u32(static_cast<std::uint32_t>(p.latent_dim));
  w.put_u32(static_cast<std::uint32_t>(p.data_dim));
  w.put_u32(static_cast<std::uint32_t>(p.num_classes));
  w.put_f64(p.obs_sigma);
  write_network(w, p.energy);
  write_network(w, p.generator);
  write_network(w, p.inference);
  return w.bytes();
}

ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_bytes(kCheckpointMagic, "checkpoint magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  ModelParams p;
  p.latent_dim = r.get_u32();
  p.data_dim = r.get_u32();
  p.num_classes = r.get_u32();
  const std::size_t sigma_at = r.offset();
  p.obs_sigma = r.get_f64();
  if (!(p.obs_sigma > 0.0) || !std::isfinite(p.obs_sigma))
    throw ParseError("obs_sigma must be positive", sigma_at);
  p.energy = read_network(r);
  p.generator = read_network(r);
  p.inference = read_network(r);
  if (!r.at_end()) throw ParseError("trailing bytes after checkpoint", r.offset());
  try {
    p.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("inconsistent checkpoint: ") + e.what(), r.offset());
  }
  return p;
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(p));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace synthaug
