#include "synthaug/cli.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "synthaug/augment.hpp"
#include "synthaug/binary_io.hpp"
#include "synthaug/coreset.hpp"
#include "synthaug/parallel.hpp"
#include "synthaug/sampler.hpp"

namespace synthaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<Variant, std::string_view> kVariants[] = {
    {Variant::kBaseline, "baseline"},
    {Variant::kUnfiltered, "unfiltered"},
    {Variant::kEntropy, "entropy"},
    {Variant::kEntropyCraig, "entropy_craig"},
    {Variant::kEntropyCraigPl, "entropy_craig_pl"},
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- scalar parsing shared by JSON values and flag text -----------------

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  if (s.empty() || s[0] == '-' || s[0] == '+') throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || *end != '\0') throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || errno == ERANGE || *end != '\0' || std::isnan(v))
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::string json_scalar_text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return g17(v.get<double>());
  throw ConfigError(key + ": expected a scalar value");
}

json double_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

// One config key: JSON name, extra flag aliases, text setter, JSON getter.
struct Field {
  std::string key;
  std::vector<std::string> aliases;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<json(const RunConfig&)> get;
};

template <class Get>
Field size_field(std::string key, std::vector<std::string> aliases, std::string help, Get ref) {
  return {key, std::move(aliases), std::move(help),
          [key, ref](RunConfig& c, const std::string& s) {
            const auto v = parse_uint(key, s);
            if (v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError(key + ": value too large");
            ref(c) = static_cast<std::size_t>(v);
          },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field u64_field(std::string key, std::vector<std::string> aliases, std::string help, Get ref) {
  return {key, std::move(aliases), std::move(help),
          [key, ref](RunConfig& c, const std::string& s) { ref(c) = parse_uint(key, s); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field double_field(std::string key, std::vector<std::string> aliases, std::string help, Get ref) {
  return {key, std::move(aliases), std::move(help),
          [key, ref](RunConfig& c, const std::string& s) { ref(c) = parse_double(key, s); },
          [ref](const RunConfig& c) { return double_to_json(ref(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field bool_field(std::string key, std::vector<std::string> aliases, std::string help, Get ref) {
  return {key, std::move(aliases), std::move(help),
          [key, ref](RunConfig& c, const std::string& s) { ref(c) = parse_bool(key, s); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // dataset
    f.push_back(size_field("num_classes", {}, "K", [](RunConfig& c) -> auto& { return c.synth.num_classes; }));
    f.push_back(size_field("data_dim", {}, "D", [](RunConfig& c) -> auto& { return c.synth.data_dim; }));
    f.push_back(double_field("class_mean_scale", {}, "radius of the class-mean sphere",
                             [](RunConfig& c) -> auto& { return c.synth.class_mean_scale; }));
    f.push_back(double_field("class_cov_scale", {}, "per-coordinate class standard deviation",
                             [](RunConfig& c) -> auto& { return c.synth.class_cov_scale; }));
    f.push_back(size_field("num_labeled", {}, "M", [](RunConfig& c) -> auto& { return c.synth.num_labeled; }));
    f.push_back(size_field("num_unlabeled", {}, "N", [](RunConfig& c) -> auto& { return c.synth.num_unlabeled; }));
    f.push_back(size_field("test_size", {}, "test split size", [](RunConfig& c) -> auto& { return c.synth.test_size; }));
    f.push_back(u64_field("data_seed", {}, "dataset seed", [](RunConfig& c) -> auto& { return c.synth.seed; }));
    // model
    f.push_back(size_field("latent_dim", {}, "d", [](RunConfig& c) -> auto& { return c.model.latent_dim; }));
    f.push_back(size_field("hidden", {}, "hidden width of every network",
                           [](RunConfig& c) -> auto& { return c.model.hidden; }));
    f.push_back(double_field("obs_sigma", {}, "observation noise", [](RunConfig& c) -> auto& { return c.model.obs_sigma; }));
    // schedule
    f.push_back(size_field("total_iters", {"--t-total"}, "T", [](RunConfig& c) -> auto& { return c.schedule.total_iters; }));
    f.push_back(size_field("augment_at", {"--t-a"}, "T_a", [](RunConfig& c) -> auto& { return c.schedule.augment_at; }));
    f.push_back(double_field("lr_prior", {"--eta0"}, "prior learning rate",
                             [](RunConfig& c) -> auto& { return c.schedule.lr_prior; }));
    f.push_back(double_field("lr_generator", {"--eta1"}, "generator/inference learning rate",
                             [](RunConfig& c) -> auto& { return c.schedule.lr_generator; }));
    f.push_back(double_field("lr_supervised", {"--eta2"}, "supervised learning rate",
                             [](RunConfig& c) -> auto& { return c.schedule.lr_supervised; }));
    f.push_back(double_field("lr_augmented", {"--eta3"}, "augmented learning rate",
                             [](RunConfig& c) -> auto& { return c.schedule.lr_augmented; }));
    f.push_back(size_field("batch_unlabeled", {}, "n", [](RunConfig& c) -> auto& { return c.schedule.batch_unlabeled; }));
    f.push_back(size_field("batch_labeled", {}, "m", [](RunConfig& c) -> auto& { return c.schedule.batch_labeled; }));
    f.push_back(size_field("batch_augmented", {}, "l", [](RunConfig& c) -> auto& { return c.schedule.batch_augmented; }));
    f.push_back(size_field("num_synthetic", {}, "L", [](RunConfig& c) -> auto& { return c.schedule.num_synthetic; }));
    f.push_back(double_field("entropy_threshold", {"--threshold"}, "entropy filter threshold",
                             [](RunConfig& c) -> auto& { return c.schedule.entropy_threshold; }));
    f.push_back(size_field("langevin_steps", {"--t-ld"}, "T_LD",
                           [](RunConfig& c) -> auto& { return c.schedule.langevin.steps; }));
    f.push_back(double_field("langevin_step_size", {}, "Langevin step size",
                             [](RunConfig& c) -> auto& { return c.schedule.langevin.step_size; }));
    f.push_back(double_field("langevin_temperature", {}, "Langevin temperature",
                             [](RunConfig& c) -> auto& { return c.schedule.langevin.temperature; }));
    f.push_back(double_field("coreset_fraction", {"--fraction"}, "coreset budget fraction",
                             [](RunConfig& c) -> auto& { return c.schedule.coreset_fraction; }));
    f.push_back(size_field("coreset_refresh_every", {"--refresh-every"}, "R",
                           [](RunConfig& c) -> auto& { return c.schedule.coreset_refresh_every; }));
    f.push_back(double_field("aug_loss_coefficient", {}, "augmented loss coefficient",
                             [](RunConfig& c) -> auto& { return c.schedule.aug_loss_coefficient; }));
    f.push_back(double_field("pseudo_label_threshold", {}, "pseudo-label entropy threshold",
                             [](RunConfig& c) -> auto& { return c.schedule.pseudo_label_threshold; }));
    f.push_back(size_field("eval_every", {}, "evaluation cadence", [](RunConfig& c) -> auto& { return c.schedule.eval_every; }));
    f.push_back(size_field("eval_n_mc", {"--n-mc"}, "Monte-Carlo samples per prediction",
                           [](RunConfig& c) -> auto& { return c.schedule.eval_n_mc; }));
    f.push_back(size_field("elbo_eval_size", {}, "unlabeled points in the ELBO estimate",
                           [](RunConfig& c) -> auto& { return c.schedule.elbo_eval_size; }));
    f.push_back(u64_field("seed", {}, "training / sampling seed", [](RunConfig& c) -> auto& { return c.schedule.seed; }));
    f.push_back(bool_field("step_prior", {}, "enable the prior update",
                           [](RunConfig& c) -> auto& { return c.schedule.toggles.prior_update; }));
    f.push_back(bool_field("step_generator", {}, "enable the generator/inference update",
                           [](RunConfig& c) -> auto& { return c.schedule.toggles.generator_update; }));
    f.push_back(bool_field("step_supervised", {}, "enable the supervised update",
                           [](RunConfig& c) -> auto& { return c.schedule.toggles.supervised_update; }));
    f.push_back(bool_field("step_augmented", {}, "enable the augmented update",
                           [](RunConfig& c) -> auto& { return c.schedule.toggles.augmented_update; }));
    // run
    f.push_back({"variant", {}, "baseline|unfiltered|entropy|entropy_craig|entropy_craig_pl",
                 [](RunConfig& c, const std::string& s) { c.variant = parse_variant(s); },
                 [](const RunConfig& c) { return json(std::string(variant_name(c.variant))); }});
    f.push_back({"output_dir", {"--out-dir"}, "output directory",
                 [](RunConfig& c, const std::string& s) {
                   if (s.empty()) throw ConfigError("output_dir: must not be empty");
                   c.output_dir = s;
                 },
                 [](const RunConfig& c) { return json(c.output_dir); }});
    f.push_back({"threads", {}, "OpenMP threads (0 = default)",
                 [](RunConfig& c, const std::string& s) {
                   const auto v = parse_uint("threads", s);
                   if (v > 4096) throw ConfigError("threads: value too large");
                   c.threads = static_cast<int>(v);
                 },
                 [](const RunConfig& c) { return json(c.threads); }});
    return f;
  }();
  return table;
}

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (char& ch : s)
    if (ch == '_') ch = '-';
  return s;
}

// --- commands ------------------------------------------------------------

struct Paths {
  std::string config;
  std::string data;
  std::string checkpoint;
  std::string samples;
  std::size_t label = 0;
};

fs::path out_path(const RunConfig& cfg, const char* name) { return fs::path(cfg.output_dir) / name; }

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  const auto split = make_synthetic(cfg.synth);
  const auto path = out_path(cfg, "dataset.bin");
  save_dataset(split, path);
  out << path.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Paths& paths, std::ostream& out, std::ostream& err) {
  if (paths.data.empty()) throw ConfigError("train: --data is required");
  const auto split = load_dataset(paths.data);
  const TrainSchedule schedule = cfg.effective_schedule();
  TrainResult result;
  try {
    result = train(split, schedule, cfg.model);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (iteration " << e.step() << ")\n";
    return kExitDivergence;
  }
  result.report.checkpoint = "checkpoint.bin";
  save_checkpoint(result.params, out_path(cfg, "checkpoint.bin"));
  write_text(out_path(cfg, "report.csv"), report_csv(result.report));
  write_text(out_path(cfg, "report.json"), report_json(result.report));
  for (const auto& w : result.report.warnings) err << "warning: " << w << "\n";
  if (!result.report.rows.empty()) out << g17(result.report.rows.back().accuracy) << "\n";
  return kExitOk;
}

int cmd_curate(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.samples.empty() || paths.checkpoint.empty())
    throw ConfigError("curate: --samples and --checkpoint are required");
  const auto samples = load_samples(paths.samples);
  const auto params = load_checkpoint(paths.checkpoint);
  const TrainSchedule& s = cfg.schedule;
  if (!(s.coreset_fraction > 0.0 && s.coreset_fraction <= 1.0))
    throw ConfigError("coreset_fraction must be in (0, 1]");

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != params.data_dim || samples[i].y >= params.num_classes)
      throw ParseError("sample " + std::to_string(i) + " does not match the checkpoint", 0);
    if (samples[i].entropy < s.entropy_threshold) kept.push_back(i);
  }

  CoresetSelection sel;
  const auto budget =
      static_cast<std::size_t>(std::floor(s.coreset_fraction * static_cast<double>(kept.size())));
  if (budget > 0) {
    std::vector<Vec> xs;
    std::vector<std::size_t> ys;
    for (auto i : kept) {
      xs.push_back(samples[i].x);
      ys.push_back(samples[i].y);
    }
    sel = select_coreset(compute_proxies(params, xs, ys), budget);
    for (auto& idx : sel.indices) idx = kept[idx];
  }
  sel.budget = budget;
  save_selection(sel, out_path(cfg, "selection.tsv"));

  std::vector<AugmentedSample> survivors;
  for (auto i : kept) survivors.push_back(samples[i]);
  AugmentationBatch batch;
  batch.samples = std::move(survivors);
  const auto sorted = sort_by_entropy(batch);
  const bool grid = write_sample_grid(sorted.samples, out_path(cfg, "grid.pgm"));
  out << "survivors " << kept.size() << " selected " << sel.indices.size()
      << (grid ? " grid written" : " no grid") << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.data.empty() || paths.checkpoint.empty())
    throw ConfigError("evaluate: --data and --checkpoint are required");
  const auto params = load_checkpoint(paths.checkpoint);
  const auto split = load_dataset(paths.data);
  if (params.data_dim != split.data_dim() || params.num_classes != split.num_classes())
    throw ConfigError("evaluate: checkpoint does not match the dataset dimensions");
  const std::size_t n_mc = cfg.schedule.eval_n_mc;
  if (n_mc == 0) throw ConfigError("eval_n_mc must be at least 1");
  const double acc = evaluate(params, split.test(), n_mc, RngStream(cfg.schedule.seed, 0x6576616c));
  out << g17(acc) << "\n";
  json j = {{"accuracy", acc}, {"n_mc", n_mc}, {"test_size", split.test().size()},
            {"seed", cfg.schedule.seed}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_sample(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.checkpoint.empty()) throw ConfigError("sample: --checkpoint is required");
  const auto params = load_checkpoint(paths.checkpoint);
  const TrainSchedule& s = cfg.schedule;
  s.langevin.validate();
  const std::size_t per_class = s.num_synthetic / params.num_classes;
  if (per_class == 0) throw ConfigError("num_synthetic must be at least the number of classes");
  const auto batch = generate_conditional(params, per_class, s.langevin, RngStream(s.seed, 0x73616d70));
  save_samples(batch.samples, out_path(cfg, "samples.bin"));
  out << batch.samples.size() << "\n";
  return kExitOk;
}

int cmd_trace(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.checkpoint.empty()) throw ConfigError("trace: --checkpoint is required");
  const auto params = load_checkpoint(paths.checkpoint);
  if (paths.label >= params.num_classes) throw ConfigError("trace: --label out of range");
  RngStream rng(cfg.schedule.seed, 0x74726163);
  Vec z0(params.latent_dim);
  rng.fill_normal(z0);
  const auto chain = langevin_conditional(params, paths.label, z0, cfg.schedule.langevin, rng);
  std::string text = "step,value\n";
  for (std::size_t k = 0; k < chain.energy_trace.size(); ++k)
    text += std::to_string(k) + "," + g17(chain.energy_trace[k]) + "\n";
  write_text(out_path(cfg, "trace.csv"), text);
  out << chain.energy_trace.size() << "\n";
  return kExitOk;
}

}  // namespace

Variant parse_variant(std::string_view name) {
  for (const auto& [v, n] : kVariants)
    if (n == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) {
  for (const auto& [x, n] : kVariants)
    if (x == v) return n;
  return "?";
}

void apply_variant(TrainSchedule& s, Variant v) {
  s.coreset_enabled = v == Variant::kEntropyCraig || v == Variant::kEntropyCraigPl;
  s.pseudo_label_enabled = v == Variant::kEntropyCraigPl;
  switch (v) {
    case Variant::kBaseline:
      s.augment_at = s.total_iters + 1;
      break;
    case Variant::kUnfiltered:
      s.entropy_threshold = std::numeric_limits<double>::infinity();
      break;
    default:
      break;
  }
}

TrainSchedule RunConfig::effective_schedule() const {
  TrainSchedule s = schedule;
  apply_variant(s, variant);
  return s;
}

void apply_config_json(RunConfig& cfg, std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& [key, value] : j.items()) {
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second->set(cfg, json_scalar_text(key, value));
  }
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& f : fields()) j[f.key] = f.get(cfg);
  return j.dump(2) + "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"synthaug: latent EBM generative classifier with curated synthetic augmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  Paths paths;
  app.add_option("--config", paths.config, "JSON config file; flags override its values");
  std::vector<std::pair<const Field*, std::string>> flag_values;
  flag_values.reserve(fields().size());
  std::vector<CLI::Option*> flag_opts;
  for (const auto& f : fields()) {
    flag_values.emplace_back(&f, std::string());
    std::string names = flag_name(f.key);
    for (const auto& a : f.aliases) names += "," + a;
    flag_opts.push_back(app.add_option(names, flag_values.back().second, f.help));
  }

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset to <out>/dataset.bin");
  auto* trn = app.add_subcommand("train", "train; writes checkpoint.bin, report.csv, report.json");
  trn->add_option("--data", paths.data, "dataset file")->required();
  auto* cur = app.add_subcommand("curate", "filter + coreset a sample file; writes selection.tsv, grid.pgm");
  cur->add_option("--samples", paths.samples, "sample file")->required();
  cur->add_option("--checkpoint", paths.checkpoint, "checkpoint file")->required();
  auto* evl = app.add_subcommand("evaluate", "print test accuracy of a checkpoint");
  evl->add_option("--checkpoint", paths.checkpoint, "checkpoint file")->required();
  evl->add_option("--data", paths.data, "dataset file")->required();
  auto* smp = app.add_subcommand("sample", "draw class-conditional samples; writes samples.bin");
  smp->add_option("--checkpoint", paths.checkpoint, "checkpoint file")->required();
  auto* trc = app.add_subcommand("trace", "run one conditional chain; writes trace.csv");
  trc->add_option("--checkpoint", paths.checkpoint, "checkpoint file")->required();
  trc->add_option("--label", paths.label, "class label");

  std::vector<std::string> argv_store;
  argv_store.push_back("synthaug");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!paths.config.empty()) {
      const auto bytes = read_file_bytes(paths.config);
      apply_config_json(cfg, std::string(bytes.begin(), bytes.end()));
    }
    for (std::size_t i = 0; i < flag_values.size(); ++i)
      if (flag_opts[i]->count() > 0) flag_values[i].first->set(cfg, flag_values[i].second);
    if (cfg.threads > 0) set_thread_count(cfg.threads);

    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (trn->parsed()) return cmd_train(cfg, paths, out, err);
    if (cur->parsed()) return cmd_curate(cfg, paths, out);
    if (evl->parsed()) return cmd_evaluate(cfg, paths, out);
    if (smp->parsed()) return cmd_sample(cfg, paths, out);
    if (trc->parsed()) return cmd_trace(cfg, paths, out);
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace synthaug
