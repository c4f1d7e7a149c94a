#include "imbgan/slppl.hpp"

#include <cmath>
#include <string>

#include "imbgan/ops.hpp"

namespace imbgan {

Var reconstruction_loss(const Var& x, const Var& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("reconstruction of shape " + shape_str(x_hat.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  const Var r = ops::flatten(ops::sub(x, x_hat));
  const Var norms = ops::sqrt(ops::row_sum(ops::mul(r, r)));
  return ops::mean(norms);
}

Var pick_label(const Var& log_probs, std::span<const int> labels) {
  const Shape& s = log_probs.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw ShapeError("log-probabilities " + shape_str(s) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor onehot(s, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= s[1]) {
      throw DomainError("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(s[1]) + ")");
    }
    onehot[i * s[1] + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return ops::row_sum(ops::mul_const(log_probs, onehot));
}

Var class_nll(const Var& log_probs, std::span<const int> labels) {
  const Var lp = ops::clamp_min(pick_label(log_probs, labels),
                                std::log(kProbFloor));
  return ops::neg(ops::mean(lp));
}

Var loss_rec(const Var& x, const NetworkBundle& bundle) {
  return reconstruction_loss(x, decode(bundle, encode(bundle, x).latent));
}

Var loss_bce(const Var& x, std::span<const int> labels,
             const NetworkBundle& bundle) {
  return class_nll(encode(bundle, x).log_probs, labels);
}

SlpplHistory train_slppl(const ImbalancedDataset& data, NetworkBundle& bundle,
                         const SlpplConfig& config) {
  std::vector<Var> params = bundle.enc.vars();
  const auto dec = bundle.dec.vars();
  params.insert(params.end(), dec.begin(), dec.end());
  Adam adam(params, config.adam);

  SlpplHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double rec_sum = 0.0, bce_sum = 0.0;
    std::size_t seen = 0;
    auto it = batch_iter(data.base, config.batch_size, config.seed, epoch);
    while (it.has_next()) {
      const Batch batch = it.next();
      const Var x(batch.images);
      const Encoding e = encode(bundle, x);
      const Var rec = reconstruction_loss(x, decode(bundle, e.latent));
      const Var bce = class_nll(e.log_probs, batch.labels);
      const Var total = ops::add(rec, bce);
      if (!std::isfinite(total.item())) {
        throw DivergenceError("SLPPL loss became non-finite in epoch " +
                                  std::to_string(epoch),
                              static_cast<int>(epoch));
      }
      const auto g = grad(total, params);
      adam.step(g);
      const auto b = static_cast<double>(batch.labels.size());
      rec_sum += rec.item() * b;
      bce_sum += bce.item() * b;
      seen += batch.labels.size();
    }
    SlpplEpoch rec{rec_sum / static_cast<double>(seen),
                   bce_sum / static_cast<double>(seen), 0.0};
    rec.total = rec.rec + rec.bce;
    history.epochs.push_back(rec);
  }
  return history;
}

Eigen::MatrixXd encode_all(const NetworkBundle& bundle,
                           const LabeledImageSet& set, std::size_t batch_size) {
  NoGradGuard no_grad;
  const std::size_t q = bundle.arch.latent_dim;
  Eigen::MatrixXd out(set.size(), q);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Var z = encode(bundle, Var(set.gather(idx))).latent;
    for (std::size_t i = 0; i < end - start; ++i) {
      for (std::size_t j = 0; j < q; ++j) {
        out(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(j)) =
            z.value()[i * q + j];
      }
    }
  }
  return out;
}

namespace {
Eigen::MatrixXd factor(const Eigen::MatrixXd& cov, double epsilon, int cls) {
  const auto q = cov.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(cov +
                                  epsilon * Eigen::MatrixXd::Identity(q, q));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("Cholesky factorisation failed for class " +
                         std::to_string(cls));
  }
  return llt.matrixL();
}
}  // namespace

ClassPriors fit_priors_from_latents(const Eigen::MatrixXd& latents,
                                    std::span<const int> labels,
                                    std::size_t num_classes, double epsilon,
                                    bool diagonal) {
  if (static_cast<std::size_t>(latents.rows()) != labels.size()) {
    throw ShapeError("latent rows and labels disagree in count");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
  const auto q = latents.cols();
  ClassPriors p;
  p.epsilon = epsilon;
  for (std::size_t c = 0; c < num_classes; ++c) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == c) {
        mean += latents.row(static_cast<Eigen::Index>(i)).transpose();
        ++n;
      }
    }
    if (n == 0) {
      throw CapacityError("class " + std::to_string(c) +
                          " has no samples to fit a prior");
    }
    mean /= static_cast<double>(n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == c) {
        const Eigen::VectorXd d =
            latents.row(static_cast<Eigen::Index>(i)).transpose() - mean;
        cov.noalias() += d * d.transpose();
      }
    }
    cov /= static_cast<double>(n);
    if (diagonal) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
    p.chol.push_back(factor(cov, epsilon, static_cast<int>(c)));
    p.mean.push_back(std::move(mean));
    p.cov.push_back(std::move(cov));
  }
  return p;
}

ClassPriors fit_class_priors(const ImbalancedDataset& data,
                             const NetworkBundle& bundle, double epsilon,
                             bool diagonal) {
  const Eigen::MatrixXd z = encode_all(bundle, data.base);
  return fit_priors_from_latents(z, data.base.labels, data.num_classes(),
                                 epsilon, diagonal);
}

namespace {
void draw_into(const ClassPriors& priors, int cls, Rng& rng, double* out) {
  if (cls < 0 || static_cast<std::size_t>(cls) >= priors.num_classes()) {
    throw DomainError("class " + std::to_string(cls) + " has no prior");
  }
  const auto c = static_cast<std::size_t>(cls);
  const auto q = static_cast<Eigen::Index>(priors.latent_dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u(q);
  for (Eigen::Index j = 0; j < q; ++j) u(j) = normal(rng);
  const Eigen::VectorXd z = priors.mean[c] + priors.chol[c] * u;
  for (Eigen::Index j = 0; j < q; ++j) out[j] = z(j);
}
}  // namespace

Tensor sample_prior(const ClassPriors& priors, int cls, std::size_t n,
                    std::uint64_t seed) {
  const std::size_t q = priors.latent_dim();
  Tensor out({n, q});
  Rng rng = make_rng(seed, {30, static_cast<std::uint64_t>(cls)});
  for (std::size_t i = 0; i < n; ++i) draw_into(priors, cls, rng, out.ptr() + i * q);
  return out;
}

Tensor sample_latents(const ClassPriors& priors, std::span<const int> labels,
                      Rng& rng) {
  const std::size_t q = priors.latent_dim();
  Tensor out({labels.size(), q});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    draw_into(priors, labels[i], rng, out.ptr() + i * q);
  }
  return out;
}

std::vector<NamedTensor> prior_records(const ClassPriors& priors) {
  std::vector<NamedTensor> out;
  const std::size_t q = priors.latent_dim();
  for (std::size_t c = 0; c < priors.num_classes(); ++c) {
    Tensor mu({q});
    Tensor sigma({q, q});
    for (std::size_t i = 0; i < q; ++i) {
      mu[i] = priors.mean[c](static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < q; ++j) {
        sigma[i * q + j] = priors.cov[c](static_cast<Eigen::Index>(i),
                                         static_cast<Eigen::Index>(j));
      }
    }
    out.push_back({"prior.mu." + std::to_string(c), std::move(mu)});
    out.push_back({"prior.sigma." + std::to_string(c), std::move(sigma)});
  }
  out.push_back({"prior.eps", Tensor::scalar(priors.epsilon)});
  return out;
}

ClassPriors priors_from_records(const std::vector<NamedTensor>& records,
                                std::size_t num_classes,
                                std::size_t latent_dim) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& r : records) {
      if (r.name == name) return r.value;
    }
    throw FormatError("checkpoint lacks " + name);
  };
  ClassPriors p;
  p.epsilon = find("prior.eps").item();
  const auto q = static_cast<Eigen::Index>(latent_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const Tensor& mu = find("prior.mu." + std::to_string(c));
    const Tensor& sigma = find("prior.sigma." + std::to_string(c));
    if (mu.shape() != Shape{latent_dim} ||
        sigma.shape() != Shape{latent_dim, latent_dim}) {
      throw ShapeError("prior for class " + std::to_string(c) +
                       " does not have latent dimension " +
                       std::to_string(latent_dim));
    }
    Eigen::VectorXd m(q);
    Eigen::MatrixXd s(q, q);
    for (Eigen::Index i = 0; i < q; ++i) {
      m(i) = mu[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < q; ++j) {
        s(i, j) = sigma[static_cast<std::size_t>(i * q + j)];
      }
    }
    p.chol.push_back(factor(s, p.epsilon, static_cast<int>(c)));
    p.mean.push_back(std::move(m));
    p.cov.push_back(std::move(s));
  }
  return p;
}

}  // namespace imbgan
