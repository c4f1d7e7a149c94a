#pragma once

#include <span>
#include <vector>

#include "imbgan/autograd.hpp"

namespace imbgan {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

// Adam over a fixed list of parameters; the moment buffers follow the list
// order, so step() must receive gradients in that same order.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  void step(std::span<const Var> grads);
  const AdamOptions& options() const { return options_; }
  long steps_taken() const { return t_; }

 private:
  std::vector<Var> params_;
  AdamOptions options_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace imbgan
