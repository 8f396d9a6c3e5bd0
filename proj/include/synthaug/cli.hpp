#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "synthaug/data.hpp"
#include "synthaug/model.hpp"
#include "synthaug/trainer.hpp"

namespace synthaug {

enum class Variant { kBaseline, kUnfiltered, kEntropy, kEntropyCraig, kEntropyCraigPl };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

// Forces the schedule flags a variant implies. Baseline moves augment_at past
// total_iters; unfiltered disables the entropy threshold.
void apply_variant(TrainSchedule& schedule, Variant v);

struct RunConfig {
  SynthSpec synth{};
  ModelConfig model{};
  TrainSchedule schedule{};
  Variant variant = Variant::kEntropyCraig;
  std::string output_dir = "out";
  int threads = 0;  // 0 keeps the OpenMP default

  // Schedule as the trainer sees it, with the variant applied.
  TrainSchedule effective_schedule() const;
};

// Bad option value, unknown config key, or inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Applies a flat JSON object of config keys onto cfg.
void apply_config_json(RunConfig& cfg, std::string_view json_text);
std::string config_to_json(const RunConfig& cfg);

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

// Full command-line entry point. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace synthaug
