#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "synthaug/model.hpp"
#include "synthaug/numeric.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/sampler.hpp"

namespace synthaug {

enum class SampleSource : std::uint8_t { kSynthetic = 0, kPseudoLabeled = 1 };

struct AugmentedSample {
  Vec x;
  std::size_t y = 0;
  double entropy = 0.0;
  SampleSource source = SampleSource::kSynthetic;

  bool operator==(const AugmentedSample&) const = default;
};

struct AugmentationBatch {
  std::vector<AugmentedSample> samples;
  std::vector<std::size_t> per_class_counts;
  double threshold_used = std::numeric_limits<double>::infinity();

  bool operator==(const AugmentationBatch&) const = default;
};

// Shannon entropy of p(y|z).
double entropy_score(const ModelParams& p, std::span<const double> z);

// per_class conditional chains for each label, started from N(0, I). Each
// sample is decoded as g(z) + sigma * eps and scored on the chain's final z.
// Sample k (label-major order) uses stream rng.child(k).
AugmentationBatch generate_conditional(const ModelParams& p, std::size_t per_class,
                                       const LangevinConfig& cfg, const RngStream& rng);

// Keeps samples with entropy strictly below threshold, in order.
AugmentationBatch filter_by_entropy(const AugmentationBatch& batch, double threshold);

// Stable ascending sort by entropy.
AugmentationBatch sort_by_entropy(const AugmentationBatch& batch);

struct PseudoLabelScore {
  std::size_t label;
  double entropy;
};

// Argmax label and entropy of the n_mc-averaged prediction for each x.
// Point i uses stream rng.child(i).
std::vector<PseudoLabelScore> score_unlabeled(const ModelParams& p, std::span<const Vec> unlabeled,
                                              const RngStream& rng, std::size_t n_mc);

// Points whose averaged-prediction entropy is below threshold, labeled with
// their argmax class (ties to the lowest index).
std::vector<AugmentedSample> pseudo_label(const ModelParams& p, std::span<const Vec> unlabeled,
                                          double threshold, const RngStream& rng,
                                          std::size_t n_mc);

// Sample file: magic, u32 version, u32 count, then per sample u32 label,
// f64 entropy, u8 source, f64[D] data. D is recovered from the payload size.
inline constexpr std::string_view kSampleMagic{"SYNTHAUG-AUG\0\0\0\0", 16};
inline constexpr std::uint32_t kSampleVersion = 1;

std::vector<std::uint8_t> serialize_samples(std::span<const AugmentedSample> samples);
std::vector<AugmentedSample> deserialize_samples(std::span<const std::uint8_t> bytes);
void save_samples(std::span<const AugmentedSample> samples, const std::filesystem::path& path);
std::vector<AugmentedSample> load_samples(const std::filesystem::path& path);

// Binary PGM (P5) tiling of samples in the given order, row-major, each tile
// sqrt(D) x sqrt(D). Pixel values are a global min-max rescale to [0, 255].
// Returns false (and writes nothing) when D is not a perfect square or the
// list is empty.
struct GridLayout {
  std::size_t tile = 0;
  std::size_t cols = 0;
  std::size_t rows = 0;
};
GridLayout grid_layout(std::size_t count, std::size_t dim);
bool write_sample_grid(std::span<const AugmentedSample> samples, const std::filesystem::path& path);

}  // namespace synthaug
