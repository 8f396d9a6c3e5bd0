#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "synthaug/mlp.hpp"
#include "synthaug/model.hpp"
#include "synthaug/numeric.hpp"
#include "synthaug/rng.hpp"

namespace synthaug {

struct LangevinConfig {
  std::size_t steps = 30;
  double step_size = 0.1;
  double temperature = 1.0;

  void validate() const;
};

struct ChainResult {
  Vec final_z;
  // Target log-density (up to a constant) at the state entering each step.
  Vec energy_trace;
};

// Tilt term of a latent target exp(tilt(z)) N(z; 0, I). Implementations carry
// scratch space, so one instance per concurrently running chain.
class DriftProvider {
 public:
  virtual ~DriftProvider() = default;
  // Returns tilt(z) and writes its gradient into grad.
  virtual double tilt_and_grad(std::span<const double> z, Vec& grad) = 0;
};

// F(z)[y] of a model's energy net.
class ConditionalEnergyDrift final : public DriftProvider {
 public:
  ConditionalEnergyDrift(const ModelParams& p, std::size_t y);
  double tilt_and_grad(std::span<const double> z, Vec& grad) override;

 private:
  const ModelParams& params_;
  std::size_t label_;
  GradTape tape_;
};

// logsumexp_y F(z)[y].
class FreeEnergyDrift final : public DriftProvider {
 public:
  explicit FreeEnergyDrift(const ModelParams& p) : params_(p) {}
  double tilt_and_grad(std::span<const double> z, Vec& grad) override;

 private:
  const ModelParams& params_;
  GradTape tape_;
};

// Closed-form -a |z|^2 / 2; the full target is N(0, I / (1 + a)).
class QuadraticDrift final : public DriftProvider {
 public:
  explicit QuadraticDrift(double a) : a_(a) {}
  double tilt_and_grad(std::span<const double> z, Vec& grad) override;

 private:
  double a_;
};

// Unadjusted overdamped Langevin on tilt(z) - |z|^2/2:
//   z <- z + s * grad + sqrt(2 s T) * eps.
// Throws DivergenceError (with the step index) on non-finite state or
// |z| > 1e6.
ChainResult langevin(DriftProvider& drift, std::span<const double> z0, const LangevinConfig& cfg,
                     RngStream& rng);

ChainResult langevin_conditional(const ModelParams& p, std::size_t y, std::span<const double> z0,
                                 const LangevinConfig& cfg, RngStream& rng);
ChainResult langevin_prior(const ModelParams& p, std::span<const double> z0,
                           const LangevinConfig& cfg, RngStream& rng);
// Zero-temperature conditional dynamics: deterministic gradient ascent.
ChainResult tempered_descent(const ModelParams& p, std::size_t y, std::span<const double> z0,
                             const LangevinConfig& cfg, RngStream& rng);

inline constexpr double kDivergenceNorm = 1e6;

}  // namespace synthaug
