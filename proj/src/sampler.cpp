#include "synthaug/sampler.hpp"

#include <cmath>
#include <string>

namespace synthaug {

void LangevinConfig::validate() const {
  require(steps >= 1, "LangevinConfig: steps must be >= 1");
  require(step_size >= 0.0 && std::isfinite(step_size), "LangevinConfig: bad step size");
  require(temperature >= 0.0 && std::isfinite(temperature), "LangevinConfig: bad temperature");
}

ConditionalEnergyDrift::ConditionalEnergyDrift(const ModelParams& p, std::size_t y)
    : params_(p), label_(y) {
  require(y < p.num_classes, "langevin: class index out of range");
}

double ConditionalEnergyDrift::tilt_and_grad(std::span<const double> z, Vec& grad) {
  return conditional_logit_grad_z(params_, z, label_, grad, tape_);
}

double FreeEnergyDrift::tilt_and_grad(std::span<const double> z, Vec& grad) {
  return free_energy_grad_z(params_, z, grad, tape_);
}

double QuadraticDrift::tilt_and_grad(std::span<const double> z, Vec& grad) {
  grad.resize(z.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    grad[i] = -a_ * z[i];
    sq += z[i] * z[i];
  }
  return -0.5 * a_ * sq;
}

ChainResult langevin(DriftProvider& drift, std::span<const double> z0, const LangevinConfig& cfg,
                     RngStream& rng) {
  cfg.validate();
  require(all_finite(z0), "langevin: initial state must be finite");
  ChainResult out{Vec(z0.begin(), z0.end()), {}};
  out.energy_trace.reserve(cfg.steps);
  Vec& z = out.final_z;
  Vec grad;
  const double noise = std::sqrt(2.0 * cfg.step_size * cfg.temperature);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const double tilt = drift.tilt_and_grad(z, grad);
    out.energy_trace.push_back(tilt - 0.5 * squared_norm(z));
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += cfg.step_size * (grad[i] - z[i]);
      if (noise > 0.0) z[i] += noise * rng.normal();
    }
    const double n2 = squared_norm(z);
    if (!std::isfinite(n2) || n2 > kDivergenceNorm * kDivergenceNorm)
      throw DivergenceError("langevin: chain diverged at step " + std::to_string(t), t);
  }
  return out;
}

ChainResult langevin_conditional(const ModelParams& p, std::size_t y, std::span<const double> z0,
                                 const LangevinConfig& cfg, RngStream& rng) {
  require(z0.size() == p.latent_dim, "langevin: initial state must have latent dimension");
  ConditionalEnergyDrift drift(p, y);
  return langevin(drift, z0, cfg, rng);
}

ChainResult langevin_prior(const ModelParams& p, std::span<const double> z0,
                           const LangevinConfig& cfg, RngStream& rng) {
  require(z0.size() == p.latent_dim, "langevin: initial state must have latent dimension");
  FreeEnergyDrift drift(p);
  return langevin(drift, z0, cfg, rng);
}

ChainResult tempered_descent(const ModelParams& p, std::size_t y, std::span<const double> z0,
                             const LangevinConfig& cfg, RngStream& rng) {
  require(cfg.temperature == 0.0, "tempered_descent: temperature must be 0");
  return langevin_conditional(p, y, z0, cfg, rng);
}

}  // namespace synthaug
