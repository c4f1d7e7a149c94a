#include "imbgan/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "imbgan/checkpoint.hpp"
#include "imbgan/grid.hpp"
#include "imbgan/random.hpp"
#include "imbgan/text.hpp"

namespace imbgan {

namespace fs = std::filesystem;

namespace {

fs::path find_idx(const fs::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw DataMissingError("missing dataset file " + (dir / stem).string() +
                         "[.gz]; set experiment.data_root or DATA_ROOT");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  Rng rng = make_rng(seed, {key});
  return rng();
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

fs::path dataset_dir(const ExperimentConfig& config) {
  switch (config.preset) {
    case DatasetPreset::mnist:
      return fs::path(config.data_root) / "mnist";
    case DatasetPreset::fmnist:
      return fs::path(config.data_root) / "fashion-mnist";
    case DatasetPreset::synthetic:
      break;
  }
  return {};
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed,
                          std::ostream& log) {
  const std::size_t C = config.num_classes();
  LabeledImageSet pool, test;
  if (config.preset == DatasetPreset::synthetic) {
    std::vector<std::size_t> pool_counts = config.per_class_counts;
    for (auto& n : pool_counts) n += config.holdout_per_class;
    pool = synthetic_blobs(pool_counts, derive_seed(seed, 60));
    const std::vector<std::size_t> test_counts(C, config.synthetic_test_per_class);
    test = synthetic_blobs(test_counts, derive_seed(seed, 61));
  } else {
    const fs::path dir = dataset_dir(config);
    pool = load_idx(find_idx(dir, "train-images-idx3-ubyte"),
                    find_idx(dir, "train-labels-idx1-ubyte"), C);
    test = load_idx(find_idx(dir, "t10k-images-idx3-ubyte"),
                    find_idx(dir, "t10k-labels-idx1-ubyte"), C);
  }

  PreparedData out{make_imbalanced(pool, config.per_class_counts, seed), {}, {},
                   std::move(test)};
  out.balanced = make_balanced_by_repetition(out.train, seed);
  if (config.holdout_per_class > 0) {
    out.holdout = make_holdout(pool, out.train, config.holdout_per_class, seed);
  }

  log << "data: preset=" << to_string(config.preset) << " train=" << out.train.base.size()
      << " holdout=" << out.holdout.size() << " test=" << out.test.size() << '\n';
  log << "data: counts=";
  for (std::size_t c = 0; c < C; ++c) {
    log << (c ? "," : "") << out.train.per_class_counts[c];
  }
  log << " IR = " << format_double(out.train.imbalance_ratio()) << '\n';
  return out;
}

PretrainedModel run_pretraining(const ExperimentConfig& config,
                                const PreparedData& data, std::uint64_t seed,
                                std::ostream& log, SlpplHistory* history) {
  NetworkBundle bundle =
      build_networks(config.architecture(), config.num_classes(), seed);
  SlpplHistory h = train_slppl(data.train, bundle, config.slppl_config(seed));
  if (!h.epochs.empty()) {
    const auto& last = h.epochs.back();
    log << "slppl: " << h.epochs.size() << " epochs, rec=" << format_double(last.rec)
        << " bce=" << format_double(last.bce) << '\n';
  }
  ClassPriors priors = fit_class_priors(data.train, bundle, config.prior_epsilon,
                                        config.diagonal_prior);
  if (history) *history = std::move(h);
  return {std::move(bundle), std::move(priors)};
}

void save_model(const fs::path& path, const NetworkBundle& bundle,
                const ClassPriors& priors) {
  auto records = bundle_records(bundle);
  auto prior = prior_records(priors);
  records.insert(records.end(), prior.begin(), prior.end());
  write_container(path, records);
}

PretrainedModel load_model(const fs::path& path, const ExperimentConfig& config) {
  if (!fs::exists(path)) {
    throw DataMissingError("missing checkpoint " + path.string());
  }
  const auto records = read_container(path);
  return {bundle_from_records(config.architecture(), config.num_classes(), records),
          priors_from_records(records, config.num_classes(), config.latent_dim)};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_slppl_history(const SlpplHistory& history, const fs::path& path) {
  std::ostringstream os;
  os << "epoch,rec,bce,total\n";
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    os << i + 1 << ',' << format_double(e.rec) << ',' << format_double(e.bce)
       << ',' << format_double(e.total) << '\n';
  }
  write_text(path, os.str());
}

std::string metrics_csv(StrategyKind strategy,
                        const std::vector<SeedResult>& results) {
  std::ostringstream os;
  os << "seed,strategy,acsa,f_macro,g_macro,r_min,p_maj\n";
  for (const auto& r : results) {
    os << r.seed << ',' << to_string(strategy) << ',' << format_double(r.report.acsa)
       << ',' << format_double(r.report.f_macro) << ','
       << format_double(r.report.g_macro) << ',' << format_double(r.report.r_min)
       << ',' << format_double(r.report.p_maj) << '\n';
  }
  return os.str();
}

MetricsReport evaluate_model(const NetworkBundle& bundle, const PreparedData& data) {
  const std::vector<int> pred = predict(bundle, [&] {
    std::vector<std::size_t> all(data.test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return data.test.gather(all);
  }());
  return evaluate(confusion(data.test.labels, pred, data.train.per_class_counts));
}

AdvOutcome run_strategy(const ExperimentConfig& config, const PreparedData& data,
                        const PretrainedModel& model, std::uint64_t seed,
                        const fs::path& dir, std::ostream& log) {
  NetworkBundle bundle = transfer_init(model.bundle);
  const AdvConfig adv = config.adv_config(seed);
  const AdvData adv_data{data.train, data.balanced,
                         data.holdout.size() ? &data.holdout : nullptr};

  auto on_epoch = [&](const EpochRecord& r, const NetworkBundle& b) {
    log << "epoch " << r.epoch << ": l_g=" << format_double(r.l_g)
        << " l_dis=" << format_double(r.l_dis) << " l_q=" << format_double(r.l_q)
        << " acsa=" << fixed4(r.acsa) << '\n';
    if (config.checkpoint_every > 0 && (r.epoch + 1) % config.checkpoint_every == 0) {
      save_model(dir / ("epoch-" + std::to_string(r.epoch + 1) + ".nbnd"), b,
                 model.priors);
    }
  };

  AdvOutcome outcome;
  try {
    outcome = config.strategy == StrategyKind::dso
                  ? train_dso_baseline(adv_data, bundle, adv, on_epoch)
                  : train_adversarial(config.strategy, adv_data, model.priors,
                                      bundle, adv, on_epoch);
  } catch (const DivergenceError&) {
    save_model(dir / "last_good.nbnd", bundle, model.priors);
    throw;
  }
  outcome.history.write_csv(dir / "history.csv");
  save_model(dir / "best.nbnd", outcome.best, model.priors);
  save_model(dir / "final.nbnd", bundle, model.priors);
  log << "strategy " << to_string(config.strategy) << ": best epoch "
      << outcome.best_epoch << '\n';
  return outcome;
}

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path root = config.output_dir.empty() ? fs::path("runs")
                                                  : fs::path(config.output_dir);
  return root / ("seed-" + std::to_string(seed));
}

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed,
                    const fs::path& dir, std::ostream& log) {
  fs::create_directories(dir);
  write_text(dir / "config.snapshot", config_snapshot(config));
  log << "== seed " << seed << " ==\n";

  const PreparedData data = prepare_data(config, seed, log);
  SlpplHistory slppl_history;
  const PretrainedModel model = run_pretraining(config, data, seed, log, &slppl_history);
  write_slppl_history(slppl_history, dir / "slppl_history.csv");
  save_model(dir / "slppl.nbnd", model.bundle, model.priors);

  const AdvOutcome outcome = run_strategy(config, data, model, seed, dir, log);

  SeedResult result{seed, evaluate_model(outcome.best, data), outcome.best_epoch};
  write_text(dir / "metrics.csv", metrics_csv(config.strategy, {result}));
  emit_sample_grid(outcome.best, model.priors, config.grid_rows_per_class,
                   dir / "grid.pgm", seed);
  log << format_metrics_table({{to_string(config.strategy), result.report}});
  return result;
}

std::vector<SeedResult> run_experiment(const ExperimentConfig& config,
                                       std::ostream& log) {
  std::vector<SeedResult> results;
  for (const auto seed : config.seeds) {
    results.push_back(run_seed(config, seed, seed_dir(config, seed), log));
  }
  const fs::path root = seed_dir(config, 0).parent_path();
  write_text(root / "config.snapshot", config_snapshot(config));
  write_text(root / "metrics.csv", metrics_csv(config.strategy, results));
  const std::string summary = format_summary(config.strategy, results);
  write_text(root / "summary.txt", summary);
  log << summary;
  return results;
}

std::string format_summary(StrategyKind strategy,
                           const std::vector<SeedResult>& results) {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& r : results) {
    rows.emplace_back(to_string(strategy) + " seed " + std::to_string(r.seed),
                      r.report);
  }
  if (!results.empty()) {
    MetricsReport mean, lo = results.front().report, hi = lo;
    auto fold = [](MetricsReport& acc, const MetricsReport& r, auto op) {
      acc.acsa = op(acc.acsa, r.acsa);
      acc.f_macro = op(acc.f_macro, r.f_macro);
      acc.g_macro = op(acc.g_macro, r.g_macro);
      acc.p_maj = op(acc.p_maj, r.p_maj);
      acc.r_min = op(acc.r_min, r.r_min);
    };
    for (const auto& r : results) {
      fold(mean, r.report, std::plus<double>());
      fold(lo, r.report, [](double a, double b) { return std::min(a, b); });
      fold(hi, r.report, [](double a, double b) { return std::max(a, b); });
    }
    const double n = static_cast<double>(results.size());
    fold(mean, MetricsReport{}, [n](double a, double) { return a / n; });
    rows.emplace_back(to_string(strategy) + " mean", mean);
    rows.emplace_back(to_string(strategy) + " min", lo);
    rows.emplace_back(to_string(strategy) + " max", hi);
  }
  return format_metrics_table(rows);
}

}  // namespace imbgan
