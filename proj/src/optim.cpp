#include "imbgan/optim.hpp"

#include <cmath>

#include "imbgan/error.hpp"

namespace imbgan {

Adam::Adam(std::vector<Var> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void Adam::step(std::span<const Var> grads) {
  if (grads.size() != params_.size()) {
    throw ConsistencyError("Adam::step got " + std::to_string(grads.size()) +
                           " gradients for " + std::to_string(params_.size()) +
                           " parameters");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].mutable_value();
    const Tensor& g = grads[i].value();
    if (g.shape() != p.shape()) {
      throw ShapeError("gradient shape " + shape_str(g.shape()) +
                       " does not match parameter " + shape_str(p.shape()));
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

}  // namespace imbgan
