#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "synthaug/numeric.hpp"

namespace synthaug {

struct LabeledExample {
  Vec x;
  std::size_t y = 0;

  bool operator==(const LabeledExample&) const = default;
};

// Labeled / unlabeled / test partition. The generating labels of the
// unlabeled block are kept private; only audit_hidden_labels() exposes them.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(std::size_t data_dim, std::size_t num_classes, std::vector<LabeledExample> labeled,
               std::vector<Vec> unlabeled, std::vector<std::size_t> hidden_labels,
               std::vector<LabeledExample> test);

  std::size_t data_dim() const { return data_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<LabeledExample>& labeled() const { return labeled_; }
  const std::vector<Vec>& unlabeled() const { return unlabeled_; }
  const std::vector<LabeledExample>& test() const { return test_; }

  bool operator==(const DatasetSplit&) const = default;

  friend std::span<const std::size_t> audit_hidden_labels(const DatasetSplit& split);

 private:
  std::size_t data_dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<LabeledExample> labeled_;
  std::vector<Vec> unlabeled_;
  std::vector<std::size_t> hidden_labels_;
  std::vector<LabeledExample> test_;
};

// Ground truth for the unlabeled block. For pseudo-label auditing and
// dataset I/O only.
std::span<const std::size_t> audit_hidden_labels(const DatasetSplit& split);

struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t data_dim = 16;
  double class_mean_scale = 2.0;
  double class_cov_scale = 1.0;
  std::size_t num_labeled = 40;
  std::size_t num_unlabeled = 4000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gaussian mixture: K class means drawn uniformly on the sphere of radius
// class_mean_scale, examples N(mean_y, class_cov_scale^2 I). Labels of every
// block cycle through 0..K-1, so each block is class-balanced within one.
DatasetSplit make_synthetic(const SynthSpec& spec);
std::vector<Vec> synthetic_class_means(const SynthSpec& spec);

inline constexpr std::string_view kDatasetMagic{"SYNTHAUG-DATA\0\0\0", 16};
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> serialize_dataset(const DatasetSplit& split);
DatasetSplit deserialize_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_dataset(const std::filesystem::path& path);

}  // namespace synthaug
