#include "synthaug/data.hpp"

#include <cmath>
#include <string>

#include "synthaug/binary_io.hpp"
#include "synthaug/rng.hpp"

namespace synthaug {

DatasetSplit::DatasetSplit(std::size_t data_dim, std::size_t num_classes,
                           std::vector<LabeledExample> labeled, std::vector<Vec> unlabeled,
                           std::vector<std::size_t> hidden_labels,
                           std::vector<LabeledExample> test)
    : data_dim_(data_dim),
      num_classes_(num_classes),
      labeled_(std::move(labeled)),
      unlabeled_(std::move(unlabeled)),
      hidden_labels_(std::move(hidden_labels)),
      test_(std::move(test)) {
  require(data_dim_ > 0, "DatasetSplit: data dimension must be positive");
  require(num_classes_ >= 2, "DatasetSplit: need at least two classes");
  require(hidden_labels_.size() == unlabeled_.size(),
          "DatasetSplit: one hidden label per unlabeled example");
  auto check_x = [&](const Vec& x) {
    require(x.size() == data_dim_, "DatasetSplit: example has wrong dimension");
    require(all_finite(x), "DatasetSplit: non-finite example");
  };
  for (const auto& e : labeled_) {
    check_x(e.x);
    require(e.y < num_classes_, "DatasetSplit: label out of range");
  }
  for (const auto& e : test_) {
    check_x(e.x);
    require(e.y < num_classes_, "DatasetSplit: label out of range");
  }
  for (const auto& x : unlabeled_) check_x(x);
  for (std::size_t y : hidden_labels_) require(y < num_classes_, "DatasetSplit: label out of range");
}

std::span<const std::size_t> audit_hidden_labels(const DatasetSplit& split) {
  return split.hidden_labels_;
}

void SynthSpec::validate() const {
  require(num_classes >= 2, "SynthSpec: need at least two classes");
  require(data_dim >= 1, "SynthSpec: data_dim must be positive");
  require(num_labeled >= num_classes && num_unlabeled >= num_classes && test_size >= num_classes,
          "SynthSpec: every split needs at least K examples");
  require(class_mean_scale > 0.0 && std::isfinite(class_mean_scale),
          "SynthSpec: class_mean_scale must be positive");
  require(class_cov_scale >= 0.0 && std::isfinite(class_cov_scale),
          "SynthSpec: class_cov_scale must be non-negative");
}

std::vector<Vec> synthetic_class_means(const SynthSpec& spec) {
  spec.validate();
  RngStream rng = RngStream(spec.seed, 0x64617461).child(0);
  std::vector<Vec> means(spec.num_classes, Vec(spec.data_dim));
  for (auto& m : means) {
    double n2 = 0.0;
    do {
      rng.fill_normal(m);
      n2 = squared_norm(m);
    } while (n2 == 0.0);
    const double s = spec.class_mean_scale / std::sqrt(n2);
    for (double& v : m) v *= s;
  }
  return means;
}

DatasetSplit make_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto means = synthetic_class_means(spec);
  const RngStream root(spec.seed, 0x64617461);
  auto draw = [&](RngStream& rng, std::size_t y) {
    Vec x = means[y];
    for (double& v : x) v += spec.class_cov_scale * rng.normal();
    return x;
  };
  const std::size_t K = spec.num_classes;

  RngStream lab = root.child(1);
  std::vector<LabeledExample> labeled;
  for (std::size_t i = 0; i < spec.num_labeled; ++i) labeled.push_back({draw(lab, i % K), i % K});

  RngStream unl = root.child(2);
  std::vector<Vec> unlabeled;
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i < spec.num_unlabeled; ++i) {
    unlabeled.push_back(draw(unl, i % K));
    hidden.push_back(i % K);
  }

  RngStream tst = root.child(3);
  std::vector<LabeledExample> test;
  for (std::size_t i = 0; i < spec.test_size; ++i) test.push_back({draw(tst, i % K), i % K});

  return DatasetSplit(spec.data_dim, K, std::move(labeled), std::move(unlabeled),
                      std::move(hidden), std::move(test));
}

std::vector<std::uint8_t> serialize_dataset(const DatasetSplit& split) {
  ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put_u32(kDatasetVersion);
  w.put_u32(static_cast<std::uint32_t>(split.data_dim()));
  w.put_u32(static_cast<std::uint32_t>(split.num_classes()));
  w.put_u32(static_cast<std::uint32_t>(split.labeled().size()));
  w.put_u32(static_cast<std::uint32_t>(split.unlabeled().size()));
  w.put_u32(static_cast<std::uint32_t>(split.test().size()));
  for (const auto& e : split.labeled()) {
    w.put_f64s(e.x);
    w.put_u32(static_cast<std::uint32_t>(e.y));
  }
  const auto hidden = audit_hidden_labels(split);
  for (std::size_t i = 0; i < split.unlabeled().size(); ++i) {
    w.put_f64s(split.unlabeled()[i]);
    w.put_u32(static_cast<std::uint32_t>(hidden[i]));
  }
  for (const auto& e : split.test()) {
    w.put_f64s(e.x);
    w.put_u32(static_cast<std::uint32_t>(e.y));
  }
  return w.bytes();
}

DatasetSplit deserialize_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_bytes(kDatasetMagic, "dataset magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32();
  if (version != kDatasetVersion)
    throw ParseError("unsupported dataset version " + std::to_string(version) +
                         " (foreign endianness or newer writer)",
                     version_at);
  const std::size_t dims_at = r.offset();
  const std::uint32_t D = r.get_u32(), K = r.get_u32();
  const std::uint32_t M = r.get_u32(), N = r.get_u32(), T = r.get_u32();
  if (D == 0 || K < 2) throw ParseError("invalid dimensions in dataset header", dims_at);
  const unsigned long long record = 8ULL * D + 4;
  if (record * (static_cast<unsigned long long>(M) + N + T) != r.remaining())
    throw ParseError("dataset payload size does not match header counts", r.offset());

  auto read_label = [&](std::vector<std::size_t>* sink) {
    const std::size_t at = r.offset();
    const std::uint32_t y = r.get_u32();
    if (y >= K) throw ParseError("label out of range", at);
    sink->push_back(y);
  };
  auto read_block = [&](std::uint32_t count, std::vector<Vec>& xs, std::vector<std::size_t>& ys) {
    for (std::uint32_t i = 0; i < count; ++i) {
      Vec x(D);
      const std::size_t at = r.offset();
      r.get_f64s(x);
      if (!all_finite(x)) throw ParseError("non-finite example", at);
      xs.push_back(std::move(x));
      read_label(&ys);
    }
  };
  std::vector<Vec> lx, ux, tx;
  std::vector<std::size_t> ly, uy, ty;
  read_block(M, lx, ly);
  read_block(N, ux, uy);
  read_block(T, tx, ty);

  std::vector<LabeledExample> labeled, test;
  for (std::size_t i = 0; i < lx.size(); ++i) labeled.push_back({std::move(lx[i]), ly[i]});
  for (std::size_t i = 0; i < tx.size(); ++i) test.push_back({std::move(tx[i]), ty[i]});
  return DatasetSplit(D, K, std::move(labeled), std::move(ux), std::move(uy), std::move(test));
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_dataset(split));
}

DatasetSplit load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(read_file_bytes(path));
}

}  // namespace synthaug
