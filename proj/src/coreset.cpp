#include "synthaug/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "synthaug/binary_io.hpp"
#include "synthaug/parallel.hpp"

namespace synthaug {

namespace {

void check_proxies(const GradientProxy& proxies) {
  require(!proxies.vectors.empty(), "coreset: at least one proxy required");
  const std::size_t k = proxies.dim();
  for (const auto& v : proxies.vectors) require(v.size() == k, "coreset: ragged proxy set");
}

double gain_of(const DistanceMatrix& dist, double dmax, std::span<const double> cur,
               std::size_t j) {
  double g = 0.0;
  for (std::size_t i = 0; i < dist.n; ++i) {
    const double s = dmax - dist(i, j);
    if (s > cur[i]) g += s - cur[i];
  }
  return g;
}

void absorb(const DistanceMatrix& dist, double dmax, std::span<double> cur, std::size_t j) {
  for (std::size_t i = 0; i < dist.n; ++i) cur[i] = std::max(cur[i], dmax - dist(i, j));
}

}  // namespace

double DistanceMatrix::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

GradientProxy compute_proxies(const ModelParams& p, std::span<const Vec> xs,
                              std::span<const std::size_t> ys) {
  require(xs.size() == ys.size(), "compute_proxies: examples and labels differ in count");
  GradientProxy out;
  out.vectors.resize(xs.size());
  for (std::size_t y : ys) require(y < p.num_classes, "compute_proxies: class index out of range");
  parallel_for(xs.size(), [&](std::size_t i) {
    Vec v = classify_latent(p, encode(p, xs[i]).mu);
    v[ys[i]] -= 1.0;
    out.vectors[i] = std::move(v);
  });
  return out;
}

DistanceMatrix pairwise_distances(const GradientProxy& proxies) {
  check_proxies(proxies);
  DistanceMatrix d;
  d.n = proxies.size();
  d.values.assign(d.n * d.n, 0.0);
  parallel_for(d.n, [&](std::size_t i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      if (i == j) continue;
      // Same operand order for (i, j) and (j, i) keeps the matrix bitwise symmetric.
      const Vec& lo = proxies.vectors[std::min(i, j)];
      const Vec& hi = proxies.vectors[std::max(i, j)];
      double s = 0.0;
      for (std::size_t k = 0; k < lo.size(); ++k) s += (lo[k] - hi[k]) * (lo[k] - hi[k]);
      d.values[i * d.n + j] = std::sqrt(s);
    }
  });
  return d;
}

double facility_location_value(const DistanceMatrix& dist, std::span<const std::size_t> set) {
  if (set.empty()) return 0.0;
  const double dmax = dist.max();
  double total = 0.0;
  for (std::size_t i = 0; i < dist.n; ++i) {
    double best = 0.0;
    for (std::size_t j : set) best = std::max(best, dmax - dist(i, j));
    total += best;
  }
  return total;
}

double weighted_gradient_residual(const GradientProxy& proxies, const CoresetSelection& selection) {
  check_proxies(proxies);
  require(selection.indices.size() == selection.weights.size(),
          "weighted_gradient_residual: indices and weights differ in length");
  for (std::size_t j : selection.indices)
    require(j < proxies.size(), "weighted_gradient_residual: index out of range");
  const std::size_t K = proxies.dim();
  std::vector<double> terms;
  double sq = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    terms.clear();
    for (const auto& v : proxies.vectors) terms.push_back(v[k]);
    for (std::size_t s = 0; s < selection.indices.size(); ++s) {
      // gamma * p split exactly into hi + lo.
      const double a = selection.weights[s], b = proxies.vectors[selection.indices[s]][k];
      const double hi = a * b;
      const double lo = std::fma(a, b, -hi);
      terms.push_back(-hi);
      terms.push_back(-lo);
    }
    const double r = exact_sum(terms);
    sq += r * r;
  }
  return std::sqrt(sq);
}

CoresetSelection weigh_selection(const GradientProxy& proxies, const DistanceMatrix& dist,
                                 std::vector<std::size_t> set, std::size_t budget) {
  std::sort(set.begin(), set.end());
  require(std::adjacent_find(set.begin(), set.end()) == set.end(),
          "weigh_selection: duplicate indices");
  require(!set.empty(), "weigh_selection: empty set");
  for (std::size_t j : set) require(j < dist.n, "weigh_selection: index out of range");

  std::vector<std::size_t> slot_of(dist.n, SIZE_MAX);
  for (std::size_t s = 0; s < set.size(); ++s) slot_of[set[s]] = s;
  std::vector<double> counts(set.size(), 0.0);
  for (std::size_t i = 0; i < dist.n; ++i) {
    std::size_t best = slot_of[i];
    if (best == SIZE_MAX) {
      best = 0;
      for (std::size_t s = 1; s < set.size(); ++s)
        if (dist(i, set[s]) < dist(i, set[best])) best = s;
    }
    counts[best] += 1.0;
  }
  CoresetSelection out;
  out.indices = std::move(set);
  out.weights = std::move(counts);
  out.budget = budget;
  out.objective = facility_location_value(dist, out.indices);
  out.residual = weighted_gradient_residual(proxies, out);
  return out;
}

CoresetSelection naive_greedy_select(const GradientProxy& proxies, std::size_t budget) {
  check_proxies(proxies);
  require(budget >= 1, "select: budget must be >= 1");
  const DistanceMatrix dist = pairwise_distances(proxies);
  const double dmax = dist.max();
  const std::size_t picks = std::min(budget, dist.n);
  Vec cur(dist.n, 0.0);
  std::vector<bool> taken(dist.n, false);
  std::vector<std::size_t> set;
  std::vector<double> gains;
  for (std::size_t r = 0; r < picks; ++r) {
    std::size_t best = SIZE_MAX;
    double best_gain = -1.0;
    for (std::size_t j = 0; j < dist.n; ++j) {
      if (taken[j]) continue;
      const double g = gain_of(dist, dmax, cur, j);
      if (g > best_gain) {
        best_gain = g;
        best = j;
      }
    }
    taken[best] = true;
    set.push_back(best);
    gains.push_back(best_gain);
    absorb(dist, dmax, cur, best);
  }
  CoresetSelection out = weigh_selection(proxies, dist, std::move(set), budget);
  out.marginal_gains = std::move(gains);
  return out;
}

CoresetSelection select_coreset(const GradientProxy& proxies, std::size_t budget) {
  check_proxies(proxies);
  require(budget >= 1, "select: budget must be >= 1");
  const DistanceMatrix dist = pairwise_distances(proxies);
  const double dmax = dist.max();
  const std::size_t picks = std::min(budget, dist.n);

  struct Entry {
    double gain;
    std::size_t index;
    std::size_t round;
  };
  // Highest gain first; lowest index among equal gains.
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.gain != b.gain) return a.gain < b.gain;
    return a.index > b.index;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  Vec cur(dist.n, 0.0);
  for (std::size_t j = 0; j < dist.n; ++j) heap.push({gain_of(dist, dmax, cur, j), j, 0});

  std::vector<std::size_t> set;
  std::vector<double> gains;
  for (std::size_t r = 0; r < picks; ++r) {
    while (true) {
      Entry top = heap.top();
      heap.pop();
      if (top.round == r) {
        set.push_back(top.index);
        gains.push_back(top.gain);
        absorb(dist, dmax, cur, top.index);
        break;
      }
      top.gain = gain_of(dist, dmax, cur, top.index);
      top.round = r;
      heap.push(top);
    }
  }
  CoresetSelection out = weigh_selection(proxies, dist, std::move(set), budget);
  out.marginal_gains = std::move(gains);
  return out;
}

CoresetSelection brute_force_select(const GradientProxy& proxies, std::size_t budget) {
  check_proxies(proxies);
  require(budget >= 1, "brute_force_select: budget must be >= 1");
  if (proxies.size() > kBruteForceLimit)
    throw std::length_error("brute_force_select: " + std::to_string(proxies.size()) +
                            " candidates exceeds the enumeration limit of " +
                            std::to_string(kBruteForceLimit));
  const DistanceMatrix dist = pairwise_distances(proxies);
  const std::size_t n = dist.n;
  const std::size_t b = std::min(budget, n);

  std::vector<std::size_t> comb(b);
  for (std::size_t i = 0; i < b; ++i) comb[i] = i;
  std::vector<std::size_t> best = comb;
  double best_value = facility_location_value(dist, comb);
  while (true) {
    // Next combination in lexicographic order.
    std::size_t i = b;
    while (i > 0 && comb[i - 1] == n - b + (i - 1)) --i;
    if (i == 0) break;
    ++comb[i - 1];
    for (std::size_t j = i; j < b; ++j) comb[j] = comb[j - 1] + 1;
    const double v = facility_location_value(dist, comb);
    if (v > best_value) {
      best_value = v;
      best = comb;
    }
  }
  return weigh_selection(proxies, dist, std::move(best), budget);
}

std::string format_selection(const CoresetSelection& selection) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "# craig budget=%zu residual=%.17g\n", selection.budget,
                selection.residual);
  out += buf;
  for (std::size_t s = 0; s < selection.indices.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\n", selection.indices[s], selection.weights[s]);
    out += buf;
  }
  return out;
}

CoresetSelection parse_selection(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError("selection: missing header", 0);
  CoresetSelection out;
  unsigned long long budget = 0;
  double residual = 0.0;
  int consumed = 0;
  if (std::sscanf(line.c_str(), "# craig budget=%llu residual=%lf%n", &budget, &residual,
                  &consumed) != 2 ||
      static_cast<std::size_t>(consumed) != line.size())
    throw ParseError("selection: malformed header line", 0);
  out.budget = budget;
  out.residual = residual;
  offset += line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    unsigned long long idx = 0;
    double gamma = 0.0;
    consumed = 0;
    if (std::sscanf(line.c_str(), "%llu\t%lf%n", &idx, &gamma, &consumed) != 2 ||
        static_cast<std::size_t>(consumed) != line.size() || line.find('\t') == std::string::npos)
      throw ParseError("selection: malformed row '" + line + "'", offset);
    out.indices.push_back(idx);
    out.weights.push_back(gamma);
    offset += line.size() + 1;
  }
  return out;
}

void save_selection(const CoresetSelection& selection, const std::filesystem::path& path) {
  const std::string text = format_selection(selection);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

CoresetSelection load_selection(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_selection(std::string(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> serialize_proxy_matrix(const GradientProxy& proxies) {
  ByteWriter w;
  w.put_u32(kProxyMatrixMagic);
  w.put_u32(static_cast<std::uint32_t>(proxies.size()));
  w.put_u32(static_cast<std::uint32_t>(proxies.dim()));
  for (const auto& v : proxies.vectors) w.put_f64s(v);
  return w.bytes();
}

GradientProxy deserialize_proxy_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_u32() != kProxyMatrixMagic) throw ParseError("bad proxy matrix magic", 0);
  const std::uint32_t rows = r.get_u32();
  const std::uint32_t cols = r.get_u32();
  if (static_cast<unsigned long long>(rows) * cols * 8 != r.remaining())
    throw ParseError("proxy matrix payload does not match rows x cols", r.offset());
  GradientProxy out;
  out.vectors.assign(rows, Vec(cols));
  for (auto& v : out.vectors) r.get_f64s(v);
  return out;
}

}  // namespace synthaug
