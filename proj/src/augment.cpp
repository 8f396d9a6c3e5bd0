#include "synthaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "synthaug/binary_io.hpp"
#include "synthaug/parallel.hpp"

namespace synthaug {

double entropy_score(const ModelParams& p, std::span<const double> z) {
  return shannon_entropy(classify_latent(p, z));
}

AugmentationBatch generate_conditional(const ModelParams& p, std::size_t per_class,
                                       const LangevinConfig& cfg, const RngStream& rng) {
  require(per_class >= 1, "generate_conditional: per_class must be >= 1");
  cfg.validate();
  const std::size_t K = p.num_classes;
  const std::size_t total = K * per_class;
  AugmentationBatch out;
  out.samples.resize(total);
  out.per_class_counts.assign(K, per_class);

  parallel_for(total, [&](std::size_t k) {
    const std::size_t y = k / per_class;
    RngStream stream = rng.child(k);
    Vec z0(p.latent_dim);
    stream.fill_normal(z0);
    ChainResult chain;
    try {
      chain = langevin_conditional(p, y, z0, cfg, stream);
    } catch (const DivergenceError& e) {
      throw DivergenceError("generate_conditional: chain " + std::to_string(k) + " (label " +
                                std::to_string(y) + "): " + e.what(),
                            e.step());
    }
    AugmentedSample& s = out.samples[k];
    s.x = decode_mean(p, chain.final_z);
    for (double& v : s.x) v += p.obs_sigma * stream.normal();
    s.y = y;
    s.entropy = entropy_score(p, chain.final_z);
    s.source = SampleSource::kSynthetic;
  });
  return out;
}

AugmentationBatch filter_by_entropy(const AugmentationBatch& batch, double threshold) {
  require(!std::isnan(threshold), "filter_by_entropy: threshold is NaN");
  AugmentationBatch out;
  out.per_class_counts.assign(batch.per_class_counts.size(), 0);
  out.threshold_used = threshold;
  for (const auto& s : batch.samples) {
    if (s.entropy < threshold) {
      out.samples.push_back(s);
      if (s.y < out.per_class_counts.size()) ++out.per_class_counts[s.y];
    }
  }
  return out;
}

AugmentationBatch sort_by_entropy(const AugmentationBatch& batch) {
  AugmentationBatch out = batch;
  std::stable_sort(out.samples.begin(), out.samples.end(),
                   [](const AugmentedSample& a, const AugmentedSample& b) {
                     return a.entropy < b.entropy;
                   });
  return out;
}

std::vector<PseudoLabelScore> score_unlabeled(const ModelParams& p, std::span<const Vec> unlabeled,
                                              const RngStream& rng, std::size_t n_mc) {
  std::vector<PseudoLabelScore> out(unlabeled.size());
  parallel_for(unlabeled.size(), [&](std::size_t i) {
    RngStream stream = rng.child(i);
    const Vec prob = predict(p, unlabeled[i], stream, n_mc);
    out[i] = {argmax(prob), shannon_entropy(prob)};
  });
  return out;
}

std::vector<AugmentedSample> pseudo_label(const ModelParams& p, std::span<const Vec> unlabeled,
                                          double threshold, const RngStream& rng,
                                          std::size_t n_mc) {
  require(threshold > 0.0, "pseudo_label: threshold must be positive");
  const auto scores = score_unlabeled(p, unlabeled, rng, n_mc);
  std::vector<AugmentedSample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].entropy < threshold)
      out.push_back({unlabeled[i], scores[i].label, scores[i].entropy, SampleSource::kPseudoLabeled});
  }
  return out;
}

std::vector<std::uint8_t> serialize_samples(std::span<const AugmentedSample> samples) {
  ByteWriter w;
  w.put_bytes(kSampleMagic);
  w.put_u32(kSampleVersion);
  w.put_u32(static_cast<std::uint32_t>(samples.size()));
  const std::size_t D = samples.empty() ? 0 : samples.front().x.size();
  for (const auto& s : samples) {
    require(s.x.size() == D, "serialize_samples: samples must share one dimension");
    w.put_u32(static_cast<std::uint32_t>(s.y));
    w.put_f64(s.entropy);
    w.put_u8(static_cast<std::uint8_t>(s.source));
    w.put_f64s(s.x);
  }
  return w.bytes();
}

std::vector<AugmentedSample> deserialize_samples(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_bytes(kSampleMagic, "sample file magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32();
  if (version != kSampleVersion)
    throw ParseError("unsupported sample file version " + std::to_string(version), version_at);
  const std::uint32_t count = r.get_u32();
  std::vector<AugmentedSample> out;
  if (count == 0) {
    if (!r.at_end()) throw ParseError("trailing bytes after empty sample list", r.offset());
    return out;
  }
  // Each record is 13 header bytes plus 8 * D data bytes.
  const std::size_t payload = r.remaining();
  if (payload % count != 0 || payload / count < 13 + 8 || (payload / count - 13) % 8 != 0)
    throw ParseError("sample payload size inconsistent with count " + std::to_string(count),
                     r.offset());
  const std::size_t D = (payload / count - 13) / 8;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    AugmentedSample s;
    s.y = r.get_u32();
    s.entropy = r.get_f64();
    const std::size_t src_at = r.offset();
    const std::uint8_t src = r.get_u8();
    if (src > 1) throw ParseError("unknown sample source code", src_at);
    s.source = static_cast<SampleSource>(src);
    s.x.resize(D);
    r.get_f64s(s.x);
    out.push_back(std::move(s));
  }
  return out;
}

void save_samples(std::span<const AugmentedSample> samples, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_samples(samples));
}

std::vector<AugmentedSample> load_samples(const std::filesystem::path& path) {
  return deserialize_samples(read_file_bytes(path));
}

GridLayout grid_layout(std::size_t count, std::size_t dim) {
  GridLayout g;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (count == 0 || side * side != dim) return g;
  g.tile = side;
  g.cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  g.rows = (count + g.cols - 1) / g.cols;
  return g;
}

bool write_sample_grid(std::span<const AugmentedSample> samples, const std::filesystem::path& path) {
  if (samples.empty()) return false;
  const std::size_t D = samples.front().x.size();
  const GridLayout g = grid_layout(samples.size(), D);
  if (g.tile == 0) return false;

  double lo = samples.front().x.front(), hi = lo;
  for (const auto& s : samples)
    for (double v : s.x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const std::size_t width = g.cols * g.tile, height = g.rows * g.tile;
  std::vector<std::uint8_t> pixels(width * height, 0);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::size_t tr = k / g.cols, tc = k % g.cols;
    for (std::size_t i = 0; i < D; ++i) {
      const double v = samples[k].x[i];
      const double u = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const auto px = static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
      const std::size_t row = tr * g.tile + i / g.tile, col = tc * g.tile + i % g.tile;
      pixels[row * width + col] = px;
    }
  }
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  write_file_bytes(path, bytes);
  return true;
}

}  // namespace synthaug
