// Writes the curate fixture: checkpoint.bin, samples.bin (20 samples),
// config.json and golden_selection.tsv computed by exhaustive search.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "synthaug/augment.hpp"
#include "synthaug/checkpoint.hpp"
#include "synthaug/coreset.hpp"

using namespace synthaug;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_curate_fixture <dir>\n");
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  const double fraction = 0.25;

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ModelConfig cfg;
    cfg.latent_dim = 2;
    cfg.hidden = 8;
    cfg.data_dim = 4;
    cfg.num_classes = 4;
    RngStream init(seed, 1);
    const auto params = ModelParams::init(cfg, init);
    const auto batch = generate_conditional(params, 5, LangevinConfig{20, 0.1, 1.0}, RngStream(seed, 2));

    std::vector<double> h;
    for (const auto& s : batch.samples) h.push_back(s.entropy);
    std::sort(h.begin(), h.end());
    if (h[11] == h[12]) continue;
    const double threshold = 0.5 * (h[11] + h[12]);

    std::vector<std::size_t> kept;
    std::vector<Vec> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i = 0; i < batch.samples.size(); ++i)
      if (batch.samples[i].entropy < threshold) {
        kept.push_back(i);
        xs.push_back(batch.samples[i].x);
        ys.push_back(batch.samples[i].y);
      }
    const auto budget = static_cast<std::size_t>(fraction * static_cast<double>(kept.size()));
    const auto proxies = compute_proxies(params, xs, ys);
    auto best = brute_force_select(proxies, budget);
    // the greedy path must reach the unique optimum for the fixture to be meaningful
    if (select_coreset(proxies, budget).indices != best.indices) continue;
    for (auto& i : best.indices) i = kept[i];

    save_checkpoint(params, dir / "checkpoint.bin");
    save_samples(batch.samples, dir / "samples.bin");
    save_selection(best, dir / "golden_selection.tsv");
    nlohmann::ordered_json j = {{"entropy_threshold", threshold}, {"coreset_fraction", fraction}};
    std::ofstream(dir / "config.json") << j.dump(2) << "\n";
    std::printf("seed %llu survivors %zu budget %zu\n", static_cast<unsigned long long>(seed), kept.size(),
                budget);
    return 0;
  }
  std::fprintf(stderr, "no suitable seed\n");
  return 1;
}
