// Acceptance runner: one PASS / FAIL / NOT RUN line per criterion.
// Exit 0 when every selected criterion passed, 1 on any failure, 77 when
// nothing could be run.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "imbgan/advtrain.hpp"
#include "imbgan/config.hpp"
#include "imbgan/experiment.hpp"
#include "imbgan/ops.hpp"
#include "imbgan/slppl.hpp"
#include "oracles.hpp"

using namespace imbgan;
namespace fs = std::filesystem;
namespace O = imbgan::ops;

namespace {

enum class Status { pass, fail, not_run };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

// Collects named checks; the first few failures go into the detail line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) failures_ += (failures_.empty() ? "" : "; ") + what;
  }
  void close(double got, double want, double tol, const std::string& what) {
    std::ostringstream os;
    os << what << " = " << got << " (want " << want << ")";
    expect(std::abs(got - want) <= tol, os.str());
  }
  Outcome outcome(const std::string& summary) const {
    if (failed_ == 0) return {Status::pass, summary + ", " + std::to_string(total_) + " checks"};
    return {Status::fail, std::to_string(failed_) + "/" + std::to_string(total_) +
                              " checks failed: " + failures_};
  }

 private:
  std::size_t total_ = 0, failed_ = 0;
  std::string failures_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("imbgan_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

// ---- real-data criteria -------------------------------------------------

std::string data_root() {
  const char* env = std::getenv("DATA_ROOT");
  return env && *env ? env : "data";
}

bool dataset_present(const ExperimentConfig& c) {
  for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                           "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
    const fs::path p = dataset_dir(c) / stem;
    if (!fs::exists(p) && !fs::exists(p.string() + ".gz")) return false;
  }
  return true;
}

using StrategyRuns = std::map<StrategyKind, std::vector<SeedResult>>;

// Runs every strategy for the preset once and caches it for later criteria.
const StrategyRuns& real_runs(DatasetPreset preset, const std::vector<std::uint64_t>& seeds,
                              const std::vector<StrategyKind>& strategies) {
  static std::map<DatasetPreset, StrategyRuns> cache;
  auto it = cache.find(preset);
  if (it != cache.end()) return it->second;
  StrategyRuns runs;
  const fs::path root = scratch(to_string(preset));
  for (StrategyKind s : strategies) {
    ExperimentConfig c = preset_defaults(preset);
    c.data_root = data_root();
    c.seeds = seeds;
    c.strategy = s;
    c.output_dir = (root / to_string(s)).string();
    std::ostringstream log;
    runs[s] = run_experiment(c, log);
  }
  return cache[preset] = runs;
}

ExperimentConfig real_config(DatasetPreset p) {
  ExperimentConfig c = preset_defaults(p);
  c.data_root = data_root();
  return c;
}

Outcome missing(const ExperimentConfig& c) {
  return {Status::not_run, "dataset not found under " + dataset_dir(c).string() +
                               " (set DATA_ROOT)"};
}

Outcome criterion_1() {
  const ExperimentConfig c = real_config(DatasetPreset::mnist);
  if (!dataset_present(c)) return missing(c);
  const auto& runs = real_runs(DatasetPreset::mnist, {0, 1, 2},
                               {StrategyKind::adso, StrategyKind::amo, StrategyKind::dso});
  const auto& adso = runs.at(StrategyKind::adso);
  const auto& amo = runs.at(StrategyKind::amo);
  const auto& dso = runs.at(StrategyKind::dso);
  int wins = 0;
  double adso_mean = 0, dso_mean = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < adso.size(); ++i) {
    const double a = adso[i].report.acsa, m = amo[i].report.acsa, d = dso[i].report.acsa;
    wins += a > m && a > d;
    adso_mean += a / static_cast<double>(adso.size());
    dso_mean += d / static_cast<double>(adso.size());
    per_seed += " seed " + std::to_string(adso[i].seed) + ": " + fmt(a) + "/" + fmt(m) + "/" +
                fmt(d);
  }
  const bool ok = wins >= 2 && adso_mean >= 0.90 && dso_mean >= 0.88;
  return {ok ? Status::pass : Status::fail,
          "ADSO/AMO/DSO ACSA" + per_seed + "; ADSO best in " + std::to_string(wins) +
              "/3; means " + fmt(adso_mean) + " (>= 0.90), " + fmt(dso_mean) + " (>= 0.88)"};
}

Outcome criterion_2() {
  const ExperimentConfig c = real_config(DatasetPreset::mnist);
  if (!dataset_present(c)) return missing(c);
  const auto& runs = real_runs(DatasetPreset::mnist, {0, 1, 2},
                               {StrategyKind::adso, StrategyKind::amo, StrategyKind::dso});
  const auto& adso = runs.at(StrategyKind::adso);
  const auto& dso = runs.at(StrategyKind::dso);
  int wins = 0;
  double mean = 0;
  for (std::size_t i = 0; i < adso.size(); ++i) {
    wins += adso[i].report.r_min > dso[i].report.r_min;
    mean += adso[i].report.r_min / static_cast<double>(adso.size());
  }
  const bool ok = wins >= 2 && mean >= 0.75;
  return {ok ? Status::pass : Status::fail,
          "ADSO R_min above DSO in " + std::to_string(wins) + "/3 seeds; ADSO mean R_min " +
              fmt(mean) + " (>= 0.75)"};
}

Outcome criterion_3() {
  const ExperimentConfig c = real_config(DatasetPreset::fmnist);
  if (!dataset_present(c)) return missing(c);
  const auto& runs = real_runs(DatasetPreset::fmnist, {0}, {StrategyKind::adso});
  const double a = runs.at(StrategyKind::adso).front().report.acsa;
  return {a >= 0.80 ? Status::pass : Status::fail,
          "FMNIST ADSO ACSA " + fmt(a) + " (>= 0.80, single seed)"};
}

Outcome criterion_4(const std::map<int, Outcome>& done) {
  std::string detail =
      "CelebA and the external baselines are out of scope; substituted by criteria 5, 6, 7";
  for (int k : {5, 6, 7}) {
    auto it = done.find(k);
    if (it == done.end()) return {Status::not_run, detail + " (not selected in this run)"};
    if (it->second.status != Status::pass) return {Status::fail, detail + " (substitute failed)"};
  }
  return {Status::pass, detail};
}

// ---- property suites ----------------------------------------------------

Var table(const std::vector<std::vector<double>>& probs) {
  Tensor t({probs.size(), probs[0].size()});
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t c = 0; c < probs[i].size(); ++c)
      t[i * probs[i].size() + c] = probs[i][c] > 0 ? std::log(probs[i][c]) : -1e300;
  return Var(t);
}

Var scores(std::size_t n, double v) { return Var(Tensor({n}, v)); }

Outcome criterion_5() {
  Checks k;
  // closed-form stub values
  {
    const Var x(Tensor({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4}));
    const Var x1(Tensor({1, 1, 2, 2}, {0.1, 0.7, 0.3, 0.4}));
    k.close(reconstruction_loss(x, x).item(), 0.0, 1e-6, "L_rec identical");
    k.close(reconstruction_loss(x, x1).item(), 0.5, 1e-6, "L_rec one pixel");
    const Var a(Tensor({2, 1, 1, 2}, {0, 0, 0, 0}));
    const Var b(Tensor({2, 1, 1, 2}, {0.3, 0, 0.3, 0.4}));
    k.close(reconstruction_loss(a, b).item(), 0.4, 1e-6, "L_rec batch");
    const std::vector<int> y0{0}, y1{1}, y3{3};
    k.close(class_nll(table({{1.0, 0.0}}), y0).item(), 0.0, 1e-6, "NLL certain");
    k.close(class_nll(table({std::vector<double>(10, 0.1)}), y3).item(), 2.302585, 1e-6,
            "NLL uniform");
    k.close(class_nll(table({{0.5, 0.25, 0.25}}), y1).item(), 1.386294, 1e-6, "NLL quarter");
  }
  {
    const std::vector<double> uniform(10, 0.1);
    const std::vector<int> y{0, 3, 7, 9};
    const Var u4 = table({uniform, uniform, uniform, uniform});
    k.close(generator_loss(scores(4, 0.5), u4, y, GanFunctional::vanilla).item(), 1.609438,
            1e-6, "L_G vanilla");
    std::vector<std::vector<double>> perfect(4, std::vector<double>(10, 0.0));
    for (std::size_t i = 0; i < 4; ++i) perfect[i][static_cast<std::size_t>(y[i])] = 1.0;
    k.close(generator_loss(scores(4, 1.0), table(perfect), y, GanFunctional::wgan).item(), 0.0,
            1e-6, "L_G wgan perfect");

    const std::vector<int> yr{0, 1, 2}, yg{4, 5, 6};
    const Var u3 = table({uniform, uniform, uniform});
    k.close(classifier_loss(StrategyKind::adso, u3, yr, u3, yg, 0).item(), 2.407946, 1e-6,
            "L_Q ADSO");
    std::vector<std::vector<double>> pr(3, std::vector<double>(10, 0.0)), pg = pr;
    for (std::size_t i = 0; i < 3; ++i) {
      pr[i][static_cast<std::size_t>(yr[i])] = 1.0;
      pg[i][static_cast<std::size_t>(yg[i])] = 1.0;
    }
    k.close(classifier_loss(StrategyKind::amo, table(pr), yr, table(pg), yg, 0).item(), 0.0,
            1e-6, "L_Q AMO perfect");
    k.close(discriminator_objective(scores(5, 0.2), scores(5, 0.2), GanFunctional::wgan).item(),
            1.0, 1e-6, "Dis objective wgan");
    k.close(
        discriminator_objective(scores(5, 0.5), scores(5, 0.5), GanFunctional::vanilla).item(),
        -1.386294, 1e-6, "Dis objective vanilla");
  }
  // gradients on tiny networks
  {
    const NetworkBundle raw = build_networks(ArchitectureSpec::tiny(3, 2), 3, 2);
    std::mt19937_64 rng(4);
    const Var x(oracle::random_tensor({4, 1, 3, 3}, rng, 0, 1));
    const std::vector<int> yr{0, 1, 2, 0}, yg{1, 2, 2, 1};
    auto ed = raw.enc.vars();
    for (const auto& v : raw.dec.vars()) ed.push_back(v);
    k.expect(oracle::finite_difference_check([&] { return loss_rec(x, raw); }, ed).max_rel_error <
                 1e-4,
             "FD L_rec");
    k.expect(oracle::finite_difference_check([&] { return loss_bce(x, yr, raw); }, raw.enc.vars())
                     .max_rel_error < 1e-4,
             "FD L_bce");

    const NetworkBundle b = transfer_init(raw);
    const Tensor real = oracle::random_tensor({4, 1, 3, 3}, rng, 0, 1);
    const Tensor fake = oracle::random_tensor({4, 1, 3, 3}, rng, 0, 1);
    const GeneratorBatch gb{oracle::random_tensor({4, 2}, rng), yg};
    // generator, discriminator and classifier losses under both oversampling strategies
    for (auto s : {StrategyKind::adso, StrategyKind::amo}) {
      const std::string tag = to_string(s);
      for (auto f : {GanFunctional::vanilla, GanFunctional::wgan}) {
        k.expect(oracle::finite_difference_check(
                     [&] { return loss_generator(gb, b, f, GeneratorClassTerm::ce); },
                     b.gen.vars())
                         .max_rel_error < 1e-4,
                 "FD L_G " + tag);
        k.expect(oracle::finite_difference_check(
                     [&] { return O::neg(loss_discriminator(real, fake, b, f)); }, b.dis.vars())
                         .max_rel_error < 1e-4,
                 "FD L_Dis " + tag);
      }
      k.expect(oracle::finite_difference_check(
                   [&] {
                     Rng drop = make_rng(5, {});
                     return loss_classifier(s, real, yr, fake, yg, b, 0, &drop);
                   },
                   b.clf.vars())
                       .max_rel_error < 1e-4,
               "FD L_Q " + tag);
    }
    k.expect(oracle::finite_difference_check(
                 [&] { return gradient_penalty_0gp(b, real, 10.0, GanFunctional::vanilla); },
                 b.dis.vars())
                     .max_rel_error < 1e-4,
             "FD 0-gp");
  }
  return k.outcome("stub values within 1e-6, gradients within 1e-4");
}

Outcome criterion_6() {
  Checks k;
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> classes(2, 10);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int C = classes(rng);
    std::uniform_int_distribution<int> label(0, C - 1);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(
        static_cast<std::size_t>(C), 300)(rng);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i)
      truth[i] = i < static_cast<std::size_t>(C) ? static_cast<int>(i) : label(rng);
    const double noise = unit(rng);
    for (std::size_t i = 0; i < n; ++i) pred[i] = unit(rng) < noise ? label(rng) : truth[i];
    std::vector<std::size_t> train(static_cast<std::size_t>(C));
    for (auto& t : train) t = std::uniform_int_distribution<std::size_t>(1, 5000)(rng);
    const auto maj = static_cast<int>(std::max_element(train.begin(), train.end()) - train.begin());
    const auto mnr = static_cast<int>(std::min_element(train.begin(), train.end()) - train.begin());

    const ConfusionMatrix cm = confusion(truth, pred, train);
    const auto b = oracle::brute_metrics(truth, pred, C, maj, mnr);
    bool counts = true;
    for (int t = 0; t < C; ++t)
      for (int p = 0; p < C; ++p)
        counts = counts && cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p)) ==
                               b.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    const std::string tag = "trial " + std::to_string(trial);
    k.expect(counts, tag + " counts");
    const MetricsReport r = evaluate(cm);
    k.close(r.acsa, b.acsa, 1e-12, tag + " acsa");
    k.close(r.f_macro, b.f_macro, 1e-12, tag + " f_macro");
    k.close(r.g_macro, b.g_macro, 1e-12, tag + " g_macro");
    k.close(r.p_maj, b.p_maj, 1e-12, tag + " p_maj");
    k.close(r.r_min, b.r_min, 1e-12, tag + " r_min");
    k.expect(r.g_macro <= r.acsa + 1e-15, tag + " g_macro <= acsa");
  }
  return k.outcome("1000 randomized sets agree with brute force");
}

Outcome criterion_7() {
  Checks k;
  const std::vector<std::size_t> mnist_counts{4000, 2000, 1000, 750, 500, 350, 200, 100, 60, 40};
  LabeledImageSet pool;
  pool.height = pool.width = pool.channels = 1;
  pool.num_classes = 10;
  for (int c = 0; c < 10; ++c) {
    for (int i = 0; i < 4100; ++i) {
      pool.labels.push_back(c);
      pool.pixels.push_back(c / 10.0);
    }
  }
  for (std::uint64_t seed : {0, 1, 2}) {
    const ImbalancedDataset d = make_imbalanced(pool, mnist_counts, seed);
    std::vector<std::size_t> hist(10, 0);
    for (int y : d.base.labels) ++hist[static_cast<std::size_t>(y)];
    k.expect(hist == mnist_counts, "MNIST split histogram, seed " + std::to_string(seed));
    k.expect(d.imbalance_ratio() == 100.0, "IR 100");

    const BalancedView v = make_balanced_by_repetition(d, seed);
    std::vector<std::size_t> per(10, 0);
    for (auto i : v.indices) ++per[static_cast<std::size_t>(d.base.labels[i])];
    k.expect(std::all_of(per.begin(), per.end(), [](std::size_t n) { return n == 4000; }),
             "balanced view has 4000 per class");
    const auto mult = oracle::multiset(v.indices);
    bool spread = true;
    for (std::size_t i = 0; i < d.base.size(); ++i) {
      const std::size_t n = d.per_class_counts[static_cast<std::size_t>(d.base.labels[i])];
      const std::size_t m = mult.count(i) ? mult.at(i) : 0;
      spread = spread && m >= 4000 / n && m <= (4000 + n - 1) / n;
    }
    k.expect(spread, "floor/ceil multiplicities");
  }
  {
    Eigen::MatrixXd lat(4, 3);
    lat << 1, 0, 2, 3, 1, 0, 2, -1, 1, 0, 0, 1;
    const std::vector<int> labels{0, 0, 0, 0};
    const ClassPriors p = fit_priors_from_latents(lat, labels, 1, 1e-4);
    const std::size_t n = 10000;
    const Tensor s = sample_prior(p, 0, n, 17);
    const Eigen::MatrixXd sigma = p.cov[0] + 1e-4 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd m =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            s.ptr(), static_cast<Eigen::Index>(n), 3);
    const Eigen::RowVectorXd mean = m.colwise().mean();
    const Eigen::MatrixXd centred = m.rowwise() - mean;
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
    for (int a = 0; a < 3; ++a) {
      k.expect(std::abs(mean(a) - p.mean[0](a)) < 3 * std::sqrt(sigma(a, a) / n), "prior mean");
      for (int b = 0; b < 3; ++b) {
        const double se = std::sqrt((sigma(a, b) * sigma(a, b) + sigma(a, a) * sigma(b, b)) / n);
        k.expect(std::abs(cov(a, b) - sigma(a, b)) < 3 * se, "prior covariance");
      }
    }
  }
  {
    const NetworkBundle b = transfer_init(build_networks(ArchitectureSpec::mnist(), 10, 3));
    std::mt19937_64 rng(1);
    const Var z(oracle::random_tensor({4, 64}, rng, -2, 2));
    k.expect(generate(b, z).value() == decode(b, z).value(), "generate == decode");
  }
  return k.outcome("histograms, balanced view, prior moments and transfer exact");
}

// ---- synthetic end-to-end -----------------------------------------------

Outcome criterion_8() {
  const fs::path root = scratch("synthetic");
  ExperimentConfig c = preset_defaults(DatasetPreset::synthetic);
  c.strategy = StrategyKind::adso;
  c.seeds = {0, 1, 2};
  c.output_dir = (root / "a").string();
  std::ostringstream log;

  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_experiment(c, log);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ExperimentConfig again = c;
  again.seeds = {0};
  again.output_dir = (root / "b").string();
  run_experiment(again, log);
  const bool reproducible = slurp(seed_dir(c, 0) / "metrics.csv") ==
                                slurp(seed_dir(again, 0) / "metrics.csv") &&
                            slurp(seed_dir(c, 0) / "history.csv") ==
                                slurp(seed_dir(again, 0) / "history.csv");

  bool all = true;
  std::string per_seed, last;
  for (const auto& r : results) {
    all = all && r.report.acsa >= 0.95;
    per_seed += " " + fmt(r.report.acsa);
    const PreparedData data = prepare_data(c, r.seed, log);
    const PretrainedModel fin = load_model(seed_dir(c, r.seed) / "final.nbnd", c);
    last += " " + fmt(evaluate_model(fin.bundle, data).acsa);
  }
  std::cout << "  info: last-epoch test ACSA per seed:" << last
            << " (the selected model is the best-holdout epoch)\n";
  const bool ok = all && reproducible && secs < 300.0;
  fs::remove_all(root);
  return {ok ? Status::pass : Status::fail,
          "IR 10, 300 epochs, selected-model test ACSA" + per_seed + " (>= 0.95), " +
              fmt(secs / static_cast<double>(results.size())) + " s/seed (< 300), " +
              (reproducible ? "reproducible" : "NOT reproducible")};
}

std::set<int> parse_criteria(int argc, char** argv) {
  std::set<int> out;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criteria" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    }
  }
  if (out.empty()) out = {1, 2, 3, 4, 5, 6, 7, 8};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  try {
    wanted = parse_criteria(argc, argv);
  } catch (const std::exception&) {
    std::cerr << "usage: acceptance [--criteria 1,2,...]\n";
    return 2;
  }
  const std::map<int, std::function<Outcome()>> runners{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}};

  std::map<int, Outcome> done;
  auto report = [&](int id, const Outcome& o, double secs) {
    static const char* names[] = {"PASS", "FAIL", "NOT RUN"};
    std::cout << "criterion " << id << ": " << names[static_cast<int>(o.status)] << " - "
              << o.detail << " [" << fmt(secs) << " s]" << std::endl;
    done[id] = o;
  };
  for (int id : wanted) {
    if (id == 4) continue;
    auto it = runners.find(id);
    if (it == runners.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if ((id >= 5 && id <= 7) && o.status == Status::pass && secs >= 60.0) {
      o = {Status::fail, o.detail + " but exceeded 60 s"};
    }
    report(id, o, secs);
  }
  if (wanted.count(4)) report(4, criterion_4(done), 0.0);

  bool any_fail = false, any_run = false;
  for (const auto& [id, o] : done) {
    any_fail = any_fail || o.status == Status::fail;
    any_run = any_run || o.status != Status::not_run;
  }
  if (any_fail) return 1;
  return any_run ? 0 : 77;
}
