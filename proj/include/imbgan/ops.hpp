#pragma once

#include <cstddef>

#include "imbgan/autograd.hpp"

// Differentiable tensor operations. Every backward rule is expressed through
// these same ops, so gradients can be differentiated again (needed for the
// input-gradient penalty on the discriminator).
namespace imbgan::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
// Elementwise product with a constant (non-differentiable) tensor.
Var mul_const(const Var& a, const Tensor& c);

Var exp(const Var& a);
Var log(const Var& a);
// Square root with the subgradient 0 chosen at 0.
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var clamp_min(const Var& a, double lo);

// Sum of all elements, rank-0 result.
Var sum(const Var& a);
Var mean(const Var& a);
// Broadcast a single-element tensor to `shape`.
Var expand(const Var& scalar, const Shape& shape);

Var reshape(const Var& a, const Shape& shape);
// Collapse all axes after the first: (N, ...) -> (N, D).
Var flatten(const Var& a);
Var transpose(const Var& a);
Var matmul(const Var& a, const Var& b);

// (N, F) -> (N): per-row sum; expand_cols is its adjoint.
Var row_sum(const Var& a);
Var expand_cols(const Var& v, std::size_t cols);

// Broadcast a length-C vector along axis 1 of `shape` (N, C, ...), and the
// adjoint reduction back to length C.
Var broadcast_axis1(const Var& b, const Shape& shape);
Var sum_to_axis1(const Var& a);
// a + b broadcast along axis 1.
Var add_bias(const Var& a, const Var& b);

Var log_softmax(const Var& a);
Var softmax(const Var& a);

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

std::size_t conv_out_size(std::size_t in, std::size_t kernel,
                          const ConvGeometry& g);

// x (N, C, H, W), w (O, C, k, k) -> (N, O, Ho, Wo).
Var conv2d(const Var& x, const Var& w, const ConvGeometry& g);
// Adjoint of conv2d in x: grad (N, O, Ho, Wo) -> (N, C, H, W). Also serves as
// the transposed convolution.
Var conv2d_input_grad(const Var& grad, const Var& w, const Shape& input_shape,
                      const ConvGeometry& g);
// Adjoint of conv2d in w: x (N, C, H, W), grad (N, O, Ho, Wo) -> (O, C, k, k).
Var conv2d_weight_grad(const Var& x, const Var& grad, const Shape& weight_shape,
                       const ConvGeometry& g);

}  // namespace imbgan::ops
