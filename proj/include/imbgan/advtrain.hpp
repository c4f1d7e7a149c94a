#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imbgan/data.hpp"
#include "imbgan/nets.hpp"
#include "imbgan/optim.hpp"
#include "imbgan/slppl.hpp"

namespace imbgan {

// A caller broke a documented precondition of a loss (e.g. a majority-class
// sample in an AMO generated batch).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class StrategyKind { adso, amo, dso };

// How the generator loss rewards the classifier for recognising G(z) as its
// label: `ce` adds -log Q_y(G(z)); `cce` adds log(1 - Q_y(G(z))).
enum class GeneratorClassTerm { ce, cce };

std::string to_string(StrategyKind s);
std::string to_string(GanFunctional f);
std::string to_string(GeneratorClassTerm t);

double f_apply(GanFunctional functional, double s);
Var f_apply(GanFunctional functional, const Var& s);

struct GeneratorBatch {
  Tensor latents;  // (B, q)
  std::vector<int> labels;
};

// Labels uniform over all classes, or over every class but `majority_class`
// when `exclude_majority` is set; latents drawn from the matching prior.
GeneratorBatch sample_generator_batch(const ClassPriors& priors, std::size_t batch,
                                      bool exclude_majority, int majority_class,
                                      Rng& rng);
GeneratorBatch sample_generator_batch(const ClassPriors& priors, std::size_t batch,
                                      std::uint64_t seed, bool exclude_majority,
                                      int majority_class);

// ---- losses on network outputs ----------------------------------------------
// `dis_*` are discriminator scores (B); `*_log_probs` classifier
// log-probabilities (B, C).

// mean f(1 - Dis(G(z))) + generator class term.
Var generator_loss(const Var& dis_fake, const Var& gen_log_probs,
                   std::span<const int> gen_labels, GanFunctional functional,
                   GeneratorClassTerm term = GeneratorClassTerm::ce);

// ADSO: CE on real + complementary CE on generated.
// AMO:  CE on real + CE on generated (minority labels only).
// DSO:  CE on real only; generated inputs are ignored.
Var classifier_loss(StrategyKind strategy, const Var& real_log_probs,
                    std::span<const int> real_labels, const Var& gen_log_probs,
                    std::span<const int> gen_labels, int majority_class);

// mean f(Dis(x)) + mean f(1 - Dis(G(z))); the discriminator maximises it.
Var discriminator_objective(const Var& dis_real, const Var& dis_fake,
                            GanFunctional functional);

// (gamma / 2) * mean_i ||grad_x Dis(x_i)||^2 over the real batch. The result
// is differentiable with respect to the discriminator's parameters.
Var gradient_penalty_0gp(const std::function<Var(const Var&)>& discriminator,
                         const Tensor& x_real, double gamma);

// ---- losses on a bundle -----------------------------------------------------

Var loss_generator(const GeneratorBatch& batch, const NetworkBundle& bundle,
                   GanFunctional functional,
                   GeneratorClassTerm term = GeneratorClassTerm::ce);
Var loss_classifier(StrategyKind strategy, const Tensor& real_x,
                    std::span<const int> real_y, const Tensor& gen_x,
                    std::span<const int> gen_y, const NetworkBundle& bundle,
                    int majority_class, Rng* dropout_rng = nullptr);
Var loss_discriminator(const Tensor& real_x, const Tensor& gen_x,
                       const NetworkBundle& bundle, GanFunctional functional);
Var gradient_penalty_0gp(const NetworkBundle& bundle, const Tensor& x_real,
                         double gamma, GanFunctional functional);

// ---- training -----------------------------------------------------------------

struct AdvConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  AdamOptions gen{};
  AdamOptions dis{};
  AdamOptions clf{};
  double gp_gamma = 10.0;
  std::size_t dis_steps = 1;
  std::size_t gen_steps = 1;
  std::size_t clf_steps = 1;
  GanFunctional functional = GanFunctional::vanilla;
  GeneratorClassTerm g_cls_term = GeneratorClassTerm::ce;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const AdvConfig&, const AdvConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_g = 0.0;
  double l_dis = 0.0;
  double l_q = 0.0;
  double gp = 0.0;
  double acsa = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // epoch,l_g,l_dis,l_q,gp,acsa
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Real data for the adversarial phase. `eval` scores ACSA after every epoch
// (and picks the best epoch); without it the training set X_org is scored.
struct AdvData {
  const ImbalancedDataset& train;
  const BalancedView& balanced;
  const LabeledImageSet* eval = nullptr;
};

struct AdvOutcome {
  TrainHistory history;
  NetworkBundle best;  // parameters at the epoch with the highest eval ACSA
  std::size_t best_epoch = 0;
};

// Called after each epoch with the record and current parameters.
using EpochCallback =
    std::function<void(const EpochRecord&, const NetworkBundle&)>;

// Three-player training for ADSO or AMO; `bundle` must have been through
// transfer_init. On divergence the bundle is rolled back to the end of the
// last finite epoch and DivergenceError is thrown.
AdvOutcome train_adversarial(StrategyKind strategy, const AdvData& data,
                             const ClassPriors& priors, NetworkBundle& bundle,
                             const AdvConfig& config,
                             const EpochCallback& on_epoch = {});

// DSO+Q baseline: classifier alone, plain CE on the balanced view.
AdvOutcome train_dso_baseline(const AdvData& data, NetworkBundle& bundle,
                              const AdvConfig& config,
                              const EpochCallback& on_epoch = {});

// ACSA of the classifier on a labelled set.
double evaluate_acsa(const NetworkBundle& bundle, const LabeledImageSet& set);

}  // namespace imbgan
