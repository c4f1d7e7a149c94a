#include "imbgan/advtrain.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "imbgan/metrics.hpp"
#include "imbgan/ops.hpp"
#include "imbgan/text.hpp"

namespace imbgan {

std::string to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::adso:
      return "adso";
    case StrategyKind::amo:
      return "amo";
    case StrategyKind::dso:
      return "dso";
  }
  return "?";
}

std::string to_string(GanFunctional f) {
  return f == GanFunctional::vanilla ? "vanilla" : "wgan";
}

std::string to_string(GeneratorClassTerm t) {
  return t == GeneratorClassTerm::ce ? "ce" : "cce";
}

double f_apply(GanFunctional functional, double s) {
  return functional == GanFunctional::vanilla ? std::log(std::max(s, kProbFloor))
                                              : s;
}

Var f_apply(GanFunctional functional, const Var& s) {
  return functional == GanFunctional::vanilla
             ? ops::log(ops::clamp_min(s, kProbFloor))
             : s;
}

GeneratorBatch sample_generator_batch(const ClassPriors& priors,
                                      std::size_t batch, bool exclude_majority,
                                      int majority_class, Rng& rng) {
  std::vector<int> allowed;
  for (std::size_t c = 0; c < priors.num_classes(); ++c) {
    if (exclude_majority && static_cast<int>(c) == majority_class) continue;
    allowed.push_back(static_cast<int>(c));
  }
  if (allowed.empty()) {
    throw DomainError("generator label support is empty (one class, majority excluded)");
  }
  GeneratorBatch out;
  out.labels.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    out.labels.push_back(allowed[uniform_index(rng, allowed.size())]);
  }
  out.latents = sample_latents(priors, out.labels, rng);
  return out;
}

GeneratorBatch sample_generator_batch(const ClassPriors& priors,
                                      std::size_t batch, std::uint64_t seed,
                                      bool exclude_majority,
                                      int majority_class) {
  Rng rng = make_rng(seed, {42});
  return sample_generator_batch(priors, batch, exclude_majority,
                                majority_class, rng);
}

namespace {

// Probability each row assigns to its label, shape (B).
Var label_prob(const Var& log_probs, std::span<const int> labels) {
  return ops::exp(pick_label(log_probs, labels));
}

// mean log(max(1 - p, floor))
Var mean_log_complement(const Var& p) {
  return ops::mean(
      ops::log(ops::clamp_min(ops::add_scalar(ops::neg(p), 1.0), kProbFloor)));
}

void require_finite(const Var& v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v.item())) {
    throw DivergenceError(std::string(what) + " became non-finite in epoch " +
                              std::to_string(epoch),
                          static_cast<int>(epoch));
  }
}

}  // namespace

Var generator_loss(const Var& dis_fake, const Var& gen_log_probs,
                   std::span<const int> gen_labels, GanFunctional functional,
                   GeneratorClassTerm term) {
  const Var adversarial =
      ops::mean(f_apply(functional, ops::add_scalar(ops::neg(dis_fake), 1.0)));
  const Var cls = term == GeneratorClassTerm::ce
                      ? class_nll(gen_log_probs, gen_labels)
                      : mean_log_complement(label_prob(gen_log_probs, gen_labels));
  return ops::add(adversarial, cls);
}

Var classifier_loss(StrategyKind strategy, const Var& real_log_probs,
                    std::span<const int> real_labels, const Var& gen_log_probs,
                    std::span<const int> gen_labels, int majority_class) {
  const Var real = class_nll(real_log_probs, real_labels);
  if (strategy == StrategyKind::dso || gen_labels.empty()) return real;
  if (strategy == StrategyKind::amo) {
    for (int y : gen_labels) {
      if (y == majority_class) {
        throw ContractError("AMO classifier batch contains a generated sample "
                            "of the majority class " +
                            std::to_string(majority_class));
      }
    }
    return ops::add(real, class_nll(gen_log_probs, gen_labels));
  }
  // ADSO: push generated samples away from their own label.
  return ops::sub(real,
                  mean_log_complement(label_prob(gen_log_probs, gen_labels)));
}

Var discriminator_objective(const Var& dis_real, const Var& dis_fake,
                            GanFunctional functional) {
  return ops::add(
      ops::mean(f_apply(functional, dis_real)),
      ops::mean(f_apply(functional, ops::add_scalar(ops::neg(dis_fake), 1.0))));
}

Var gradient_penalty_0gp(const std::function<Var(const Var&)>& discriminator,
                         const Tensor& x_real, double gamma) {
  if (gamma < 0.0) throw DomainError("gradient penalty weight must be >= 0");
  const Var x(x_real, true);
  const Var scores = discriminator(x);
  const Var dx = grad(ops::sum(scores), std::span<const Var>(&x, 1),
                      /*create_graph=*/true)[0];
  const double batch = static_cast<double>(x_real.shape().at(0));
  return ops::scale(ops::sum(ops::mul(dx, dx)), gamma / (2.0 * batch));
}

Var loss_generator(const GeneratorBatch& batch, const NetworkBundle& bundle,
                   GanFunctional functional, GeneratorClassTerm term) {
  const Var fake = generate(bundle, Var(batch.latents));
  return generator_loss(discriminate(bundle, fake, functional),
                        classify_log_probs(bundle, fake), batch.labels,
                        functional, term);
}

Var loss_classifier(StrategyKind strategy, const Tensor& real_x,
                    std::span<const int> real_y, const Tensor& gen_x,
                    std::span<const int> gen_y, const NetworkBundle& bundle,
                    int majority_class, Rng* dropout_rng) {
  const Var real_lp = classify_log_probs(bundle, Var(real_x), dropout_rng);
  Var gen_lp;
  if (strategy != StrategyKind::dso && !gen_y.empty()) {
    gen_lp = classify_log_probs(bundle, Var(gen_x), dropout_rng);
  }
  return classifier_loss(strategy, real_lp, real_y, gen_lp, gen_y,
                         majority_class);
}

Var loss_discriminator(const Tensor& real_x, const Tensor& gen_x,
                       const NetworkBundle& bundle, GanFunctional functional) {
  return discriminator_objective(discriminate(bundle, Var(real_x), functional),
                                 discriminate(bundle, Var(gen_x), functional),
                                 functional);
}

Var gradient_penalty_0gp(const NetworkBundle& bundle, const Tensor& x_real,
                         double gamma, GanFunctional functional) {
  return gradient_penalty_0gp(
      [&](const Var& x) { return discriminate(bundle, x, functional); }, x_real,
      gamma);
}

void AdvConfig::validate() const {
  if (gp_gamma < 0.0) throw ConfigError("gp_gamma must be >= 0");
  if (dis_steps < 1 || gen_steps < 1 || clf_steps < 1) {
    throw ConfigError("update ratios must be >= 1");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,l_g,l_dis,l_q,gp,acsa\n";
  for (const auto& r : epochs) {
    os << r.epoch << ',' << format_double(r.l_g) << ',' << format_double(r.l_dis)
       << ',' << format_double(r.l_q) << ',' << format_double(r.gp) << ','
       << format_double(r.acsa) << '\n';
  }
  return os.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << to_csv();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

double evaluate_acsa(const NetworkBundle& bundle, const LabeledImageSet& set) {
  std::vector<int> pred;
  pred.reserve(set.size());
  std::vector<std::size_t> idx;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + kChunk); ++i) {
      idx.push_back(i);
    }
    const auto p = predict(bundle, set.gather(idx));
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return acsa(confusion(set.labels, pred, set.num_classes));
}

namespace {

struct Running {
  double l_g = 0.0, l_dis = 0.0, l_q = 0.0, gp = 0.0;
  std::size_t n_g = 0, n_dis = 0, n_q = 0;
};

double avg(double s, std::size_t n) {
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

Tensor generate_detached(const NetworkBundle& bundle, const Tensor& latents) {
  NoGradGuard no_grad;
  return generate(bundle, Var(latents)).value();
}

void finish_epoch(std::size_t epoch, const Running& run, const AdvData& data,
                  NetworkBundle& bundle, const NetworkBundle& last_good,
                  AdvOutcome& outcome, double& best_acsa,
                  const EpochCallback& on_epoch) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.l_g = avg(run.l_g, run.n_g);
  rec.l_dis = avg(run.l_dis, run.n_dis);
  rec.l_q = avg(run.l_q, run.n_q);
  rec.gp = avg(run.gp, run.n_dis);
  if (!bundle.gen.all_finite() || !bundle.dis.all_finite() ||
      !bundle.clf.all_finite()) {
    bundle = last_good;
    throw DivergenceError("parameters became non-finite in epoch " +
                              std::to_string(epoch),
                          static_cast<int>(epoch));
  }
  rec.acsa = evaluate_acsa(bundle, data.eval ? *data.eval : data.train.base);
  outcome.history.epochs.push_back(rec);
  if (rec.acsa > best_acsa) {
    best_acsa = rec.acsa;
    outcome.best = bundle;
    outcome.best_epoch = epoch;
  }
  if (on_epoch) on_epoch(rec, bundle);
}

}  // namespace

AdvOutcome train_adversarial(StrategyKind strategy, const AdvData& data,
                             const ClassPriors& priors, NetworkBundle& bundle,
                             const AdvConfig& config,
                             const EpochCallback& on_epoch) {
  if (strategy == StrategyKind::dso) {
    return train_dso_baseline(data, bundle, config, on_epoch);
  }
  config.validate();
  if (priors.num_classes() != bundle.num_classes) {
    throw ConsistencyError("priors cover " + std::to_string(priors.num_classes()) +
                           " classes, networks " +
                           std::to_string(bundle.num_classes));
  }
  const int majority = data.train.majority_class();
  const auto dis_params = bundle.dis.vars();
  const auto gen_params = bundle.gen.vars();
  const auto clf_params = bundle.clf.vars();
  Adam opt_dis(dis_params, config.dis);
  Adam opt_gen(gen_params, config.gen);
  Adam opt_clf(clf_params, config.clf);

  AdvOutcome outcome{{}, bundle, 0};
  double best_acsa = -1.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const NetworkBundle last_good = bundle;
    Rng gen_rng = make_rng(config.seed, {40, epoch});
    Rng drop_rng = make_rng(config.seed, {41, epoch});
    auto it = strategy == StrategyKind::adso
                  ? batch_iter(data.train, data.balanced, config.batch_size,
                               config.seed, epoch)
                  : batch_iter(data.train.base, config.batch_size, config.seed,
                               epoch);
    Running run;
    try {
      while (it.has_next()) {
        const Batch real = it.next();
        const std::size_t b = real.labels.size();

        for (std::size_t k = 0; k < config.dis_steps; ++k) {
          const auto gb =
              sample_generator_batch(priors, b, false, majority, gen_rng);
          const Tensor fake = generate_detached(bundle, gb.latents);
          const Var objective =
              loss_discriminator(real.images, fake, bundle, config.functional);
          Var loss = ops::neg(objective);
          Var gp;
          if (config.gp_gamma > 0.0) {
            gp = gradient_penalty_0gp(bundle, real.images, config.gp_gamma,
                                      config.functional);
            loss = ops::add(loss, gp);
          }
          require_finite(loss, "discriminator loss", epoch);
          opt_dis.step(grad(loss, dis_params));
          run.l_dis += objective.item();
          run.gp += gp.defined() ? gp.item() : 0.0;
          ++run.n_dis;
        }

        for (std::size_t k = 0; k < config.gen_steps; ++k) {
          const auto gb =
              sample_generator_batch(priors, b, false, majority, gen_rng);
          const Var loss = loss_generator(gb, bundle, config.functional,
                                          config.g_cls_term);
          require_finite(loss, "generator loss", epoch);
          opt_gen.step(grad(loss, gen_params));
          run.l_g += loss.item();
          ++run.n_g;
        }

        for (std::size_t k = 0; k < config.clf_steps; ++k) {
          const auto gb = sample_generator_batch(
              priors, b, strategy == StrategyKind::amo, majority, gen_rng);
          const Tensor fake = generate_detached(bundle, gb.latents);
          const Var loss =
              loss_classifier(strategy, real.images, real.labels, fake,
                              gb.labels, bundle, majority, &drop_rng);
          require_finite(loss, "classifier loss", epoch);
          opt_clf.step(grad(loss, clf_params));
          run.l_q += loss.item();
          ++run.n_q;
        }
      }
    } catch (const DivergenceError&) {
      bundle = last_good;
      throw;
    }
    finish_epoch(epoch, run, data, bundle, last_good, outcome, best_acsa,
                 on_epoch);
  }
  return outcome;
}

AdvOutcome train_dso_baseline(const AdvData& data, NetworkBundle& bundle,
                              const AdvConfig& config,
                              const EpochCallback& on_epoch) {
  config.validate();
  const auto clf_params = bundle.clf.vars();
  Adam opt_clf(clf_params, config.clf);
  const int majority = data.train.majority_class();

  AdvOutcome outcome{{}, bundle, 0};
  double best_acsa = -1.0;
  const Tensor no_images;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const NetworkBundle last_good = bundle;
    Rng drop_rng = make_rng(config.seed, {41, epoch});
    auto it = batch_iter(data.train, data.balanced, config.batch_size,
                         config.seed, epoch);
    Running run;
    try {
      while (it.has_next()) {
        const Batch real = it.next();
        const Var loss =
            loss_classifier(StrategyKind::dso, real.images, real.labels,
                            no_images, {}, bundle, majority, &drop_rng);
        require_finite(loss, "classifier loss", epoch);
        opt_clf.step(grad(loss, clf_params));
        run.l_q += loss.item();
        ++run.n_q;
      }
    } catch (const DivergenceError&) {
      bundle = last_good;
      throw;
    }
    finish_epoch(epoch, run, data, bundle, last_good, outcome, best_acsa,
                 on_epoch);
  }
  return outcome;
}

}  // namespace imbgan
