#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "imbgan/checkpoint.hpp"
#include "imbgan/data.hpp"
#include "imbgan/nets.hpp"
#include "imbgan/optim.hpp"

namespace imbgan {

inline constexpr double kProbFloor = 1e-12;

// Mean over the batch of the per-sample Euclidean norm ||x - x_hat||_2
// (unsquared), taken over all pixels of a sample.
Var reconstruction_loss(const Var& x, const Var& x_hat);

// Mean negative log-likelihood of the labels under row-wise log-probabilities,
// with probabilities floored at kProbFloor.
Var class_nll(const Var& log_probs, std::span<const int> labels);

// Log-probability of each row's label, shape (B).
Var pick_label(const Var& log_probs, std::span<const int> labels);

Var loss_rec(const Var& x, const NetworkBundle& bundle);
Var loss_bce(const Var& x, std::span<const int> labels,
             const NetworkBundle& bundle);

struct SlpplConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  AdamOptions adam{};
  std::uint64_t seed = 0;
};

struct SlpplEpoch {
  double rec = 0.0;
  double bce = 0.0;
  double total = 0.0;
};

struct SlpplHistory {
  std::vector<SlpplEpoch> epochs;
};

// Trains the encoder (with its class head) and decoder on L_rec + L_bce.
// Throws DivergenceError on a non-finite loss.
SlpplHistory train_slppl(const ImbalancedDataset& data, NetworkBundle& bundle,
                         const SlpplConfig& config);

// Per-class multivariate normal over encoder latents.
struct ClassPriors {
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;
  // Lower-triangular factor of cov + epsilon * I.
  std::vector<Eigen::MatrixXd> chol;
  double epsilon = 1e-4;

  std::size_t num_classes() const { return mean.size(); }
  std::size_t latent_dim() const {
    return mean.empty() ? 0 : static_cast<std::size_t>(mean.front().size());
  }
};

// Encoder latents (N, q) of a set, computed in inference mode.
Eigen::MatrixXd encode_all(const NetworkBundle& bundle,
                           const LabeledImageSet& set,
                           std::size_t batch_size = 256);

// Fit from latent rows grouped by label. Covariance is the biased (1/n)
// estimate; `diagonal` keeps only its diagonal.
ClassPriors fit_priors_from_latents(const Eigen::MatrixXd& latents,
                                    std::span<const int> labels,
                                    std::size_t num_classes, double epsilon,
                                    bool diagonal = false);

ClassPriors fit_class_priors(const ImbalancedDataset& data,
                             const NetworkBundle& bundle, double epsilon,
                             bool diagonal = false);

// n draws mean_c + chol_c * u with u ~ N(0, I), as rows of an (n, q) tensor.
Tensor sample_prior(const ClassPriors& priors, int cls, std::size_t n,
                    std::uint64_t seed);

// One latent per label, drawn from `rng`.
Tensor sample_latents(const ClassPriors& priors, std::span<const int> labels,
                      Rng& rng);

std::vector<NamedTensor> prior_records(const ClassPriors& priors);
ClassPriors priors_from_records(const std::vector<NamedTensor>& records,
                                std::size_t num_classes,
                                std::size_t latent_dim);

}  // namespace imbgan
