#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synthaug/model.hpp"
#include "synthaug/numeric.hpp"

namespace synthaug {

// Last-layer cross-entropy gradients p - onehot(y), one per example.
struct GradientProxy {
  std::vector<Vec> vectors;

  std::size_t size() const { return vectors.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
};

struct CoresetSelection {
  std::vector<std::size_t> indices;  // ascending
  std::vector<double> weights;       // gamma_j, aligned with indices
  std::size_t budget = 0;
  double residual = 0.0;
  double objective = 0.0;            // facility-location value of the set
  std::vector<double> marginal_gains;  // per pick, greedy paths only

  bool operator==(const CoresetSelection&) const = default;
};

// Symmetric n x n distance matrix, row-major.
struct DistanceMatrix {
  std::size_t n = 0;
  Vec values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double max() const;
};

// Proxies at the posterior mean: softmax(F(mu(x_i))) - onehot(y_i).
GradientProxy compute_proxies(const ModelParams& p, std::span<const Vec> xs,
                              std::span<const std::size_t> ys);

DistanceMatrix pairwise_distances(const GradientProxy& proxies);

// sum_i max_{j in S} (d_max - d_ij); zero for the empty set.
double facility_location_value(const DistanceMatrix& dist, std::span<const std::size_t> set);

// Assigns every candidate to its nearest member of `set` (members to
// themselves, otherwise lowest index on ties), sets gamma_j to the cluster
// sizes, and computes the residual.
CoresetSelection weigh_selection(const GradientProxy& proxies, const DistanceMatrix& dist,
                                 std::vector<std::size_t> set, std::size_t budget);

// Lazy-greedy facility-location maximization (CRAIG).
CoresetSelection select_coreset(const GradientProxy& proxies, std::size_t budget);
// Plain greedy; reference for the lazy variant.
CoresetSelection naive_greedy_select(const GradientProxy& proxies, std::size_t budget);

inline constexpr std::size_t kBruteForceLimit = 15;
// Exhaustive maximization; refuses more than kBruteForceLimit candidates.
CoresetSelection brute_force_select(const GradientProxy& proxies, std::size_t budget);

// |sum_i proxy_i - sum_{j in S} gamma_j proxy_j|.
double weighted_gradient_residual(const GradientProxy& proxies, const CoresetSelection& selection);

// Selection file: "# craig budget=<b> residual=<r>" then "index<TAB>gamma" rows.
std::string format_selection(const CoresetSelection& selection);
CoresetSelection parse_selection(const std::string& text);
void save_selection(const CoresetSelection& selection, const std::filesystem::path& path);
CoresetSelection load_selection(const std::filesystem::path& path);

// Raw proxy matrix: u32 magic 0x43524147, u32 rows, u32 cols, f64[rows*cols].
inline constexpr std::uint32_t kProxyMatrixMagic = 0x43524147;
std::vector<std::uint8_t> serialize_proxy_matrix(const GradientProxy& proxies);
GradientProxy deserialize_proxy_matrix(std::span<const std::uint8_t> bytes);

}  // namespace synthaug
