#include "imbgan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "imbgan/error.hpp"

namespace imbgan::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

std::vector<Var> grads(std::size_t n) { return std::vector<Var>(n); }

// ---- convolution kernels on raw tensors ----------------------------------

struct ConvDims {
  std::size_t n, c, h, w, o, k, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& w, const ConvGeometry& g) {
  if (x.size() != 4 || w.size() != 4 || w[2] != w[3]) {
    throw ShapeError("conv2d expects x (N,C,H,W) and square w (O,C,k,k), got " +
                     shape_str(x) + " and " + shape_str(w));
  }
  if (x[1] != w[1]) {
    throw ShapeError("conv2d channel mismatch: x " + shape_str(x) + ", w " +
                     shape_str(w));
  }
  ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], 0, 0};
  d.ho = conv_out_size(d.h, d.k, g);
  d.wo = conv_out_size(d.w, d.k, g);
  return d;
}

// cols has shape (C*k*k, N*Ho*Wo); column index n*Ho*Wo + oy*Wo + ox.
RowMat im2col(const Tensor& x, const ConvDims& d, const ConvGeometry& g) {
  const std::size_t spatial = d.ho * d.wo;
  RowMat cols = RowMat::Zero(d.c * d.k * d.k, d.n * spatial);
  const double* src = x.ptr();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* plane = src + (n * d.c + c) * d.h * d.w;
      for (std::size_t ky = 0; ky < d.k; ++ky) {
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          double* row = cols.data() + ((c * d.k + ky) * d.k + kx) * cols.cols() +
                        n * spatial;
          for (std::size_t oy = 0; oy < d.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t ox = 0; ox < d.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
              row[oy * d.wo + ox] = plane[iy * d.w + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const RowMat& cols, const Shape& x_shape, const ConvDims& d,
              const ConvGeometry& g) {
  Tensor x(x_shape, 0.0);
  const std::size_t spatial = d.ho * d.wo;
  double* dst = x.ptr();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      double* plane = dst + (n * d.c + c) * d.h * d.w;
      for (std::size_t ky = 0; ky < d.k; ++ky) {
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          const double* row = cols.data() +
                              ((c * d.k + ky) * d.k + kx) * cols.cols() +
                              n * spatial;
          for (std::size_t oy = 0; oy < d.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t ox = 0; ox < d.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
              plane[iy * d.w + ix] += row[oy * d.wo + ox];
            }
          }
        }
      }
    }
  }
  return x;
}

// (N, O, S) tensor <-> (O, N*S) matrix.
RowMat to_channel_major(const Tensor& t, std::size_t n, std::size_t o,
                        std::size_t s) {
  RowMat m(o, n * s);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < o; ++c) {
      std::copy_n(t.ptr() + (i * o + c) * s, s, m.data() + c * n * s + i * s);
    }
  }
  return m;
}

Tensor from_channel_major(const RowMat& m, Shape shape, std::size_t n,
                          std::size_t o, std::size_t s) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < o; ++c) {
      std::copy_n(m.data() + c * n * s + i * s, s, t.ptr() + (i * o + c) * s);
    }
  }
  return t;
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  const auto d = conv_dims(x.shape(), w.shape(), g);
  const RowMat cols = im2col(x, d, g);
  const ConstMatMap wm(w.ptr(), d.o, d.c * d.k * d.k);
  const RowMat out = wm * cols;
  return from_channel_major(out, {d.n, d.o, d.ho, d.wo}, d.n, d.o,
                            d.ho * d.wo);
}

Tensor conv_input_grad(const Tensor& grad, const Tensor& w,
                       const Shape& x_shape, const ConvGeometry& g) {
  const auto d = conv_dims(x_shape, w.shape(), g);
  if (grad.shape() != Shape{d.n, d.o, d.ho, d.wo}) {
    throw ShapeError("conv2d_input_grad: grad " + shape_str(grad.shape()) +
                     " does not match output of input " + shape_str(x_shape));
  }
  const RowMat gm = to_channel_major(grad, d.n, d.o, d.ho * d.wo);
  const ConstMatMap wm(w.ptr(), d.o, d.c * d.k * d.k);
  const RowMat cols = wm.transpose() * gm;
  return col2im(cols, x_shape, d, g);
}

Tensor conv_weight_grad(const Tensor& x, const Tensor& grad,
                        const Shape& w_shape, const ConvGeometry& g) {
  const auto d = conv_dims(x.shape(), w_shape, g);
  if (grad.shape() != Shape{d.n, d.o, d.ho, d.wo}) {
    throw ShapeError("conv2d_weight_grad: grad " + shape_str(grad.shape()) +
                     " does not match conv output for " + shape_str(x.shape()));
  }
  const RowMat cols = im2col(x, d, g);
  const RowMat gm = to_channel_major(grad, d.n, d.o, d.ho * d.wo);
  Tensor out(w_shape);
  MatMap(out.ptr(), d.o, d.c * d.k * d.k).noalias() = gm * cols.transpose();
  return out;
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return Var::make(map_binary(a.value(), b.value(), std::plus<>()), {a, b},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{g, g};
                   });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return Var::make(map_binary(a.value(), b.value(), std::minus<>()), {a, b},
                   [](const Var&, const Var& g, const std::vector<bool>& needs) {
                     auto r = grads(2);
                     r[0] = g;
                     if (needs[1]) r[1] = neg(g);
                     return r;
                   });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return Var::make(map_binary(a.value(), b.value(), std::multiplies<>()),
                   {a, b},
                   [a, b](const Var&, const Var& g,
                          const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = mul(g, b);
                     if (needs[1]) r[1] = mul(g, a);
                     return r;
                   });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return Var::make(map_binary(a.value(), b.value(), std::divides<>()), {a, b},
                   [b](const Var& self, const Var& g,
                       const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = div(g, b);
                     if (needs[1]) r[1] = neg(div(mul(g, self), b));
                     return r;
                   });
}

Var neg(const Var& a) {
  return Var::make(map_unary(a.value(), std::negate<>()), {a},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{neg(g)};
                   });
}

Var scale(const Var& a, double c) {
  return Var::make(map_unary(a.value(), [c](double v) { return c * v; }), {a},
                   [c](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{scale(g, c)};
                   });
}

Var add_scalar(const Var& a, double c) {
  return Var::make(map_unary(a.value(), [c](double v) { return v + c; }), {a},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{g};
                   });
}

Var mul_const(const Var& a, const Tensor& c) {
  if (a.shape() != c.shape()) {
    throw ShapeError("mul_const: shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(c.shape()));
  }
  return Var::make(map_binary(a.value(), c, std::multiplies<>()), {a},
                   [c](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{mul_const(g, c)};
                   });
}

Var exp(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return std::exp(v); }),
                   {a},
                   [](const Var& self, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{mul(g, self)};
                   });
}

Var log(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return std::log(v); }),
                   {a},
                   [a](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{div(g, a)};
                   });
}

namespace {
// 1/x with 0 mapped to 0; derivative -1/x^2 with the same convention.
Var reciprocal_nz(const Var& a) {
  return Var::make(
      map_unary(a.value(), [](double v) { return v == 0.0 ? 0.0 : 1.0 / v; }),
      {a}, [](const Var& self, const Var& g, const std::vector<bool>&) {
        return std::vector<Var>{neg(mul(g, mul(self, self)))};
      });
}
}  // namespace

Var sqrt(const Var& a) {
  return Var::make(map_unary(a.value(), [](double v) { return std::sqrt(v); }),
                   {a},
                   [](const Var& self, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{
                         mul(g, scale(reciprocal_nz(self), 0.5))};
                   });
}

Var sigmoid(const Var& a) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return Var::make(map_unary(a.value(), f), {a},
                   [](const Var& self, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{
                         mul(g, mul(self, add_scalar(neg(self), 1.0)))};
                   });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor mask = map_unary(a.value(),
                          [slope](double v) { return v > 0 ? 1.0 : slope; });
  Tensor out = map_binary(a.value(), mask, std::multiplies<>());
  return Var::make(std::move(out), {a},
                   [mask = std::move(mask)](const Var&, const Var& g,
                                            const std::vector<bool>&) {
                     return std::vector<Var>{mul_const(g, mask)};
                   });
}

Var clamp_min(const Var& a, double lo) {
  Tensor mask =
      map_unary(a.value(), [lo](double v) { return v > lo ? 1.0 : 0.0; });
  Tensor out = map_unary(a.value(), [lo](double v) { return std::max(v, lo); });
  return Var::make(std::move(out), {a},
                   [mask = std::move(mask)](const Var&, const Var& g,
                                            const std::vector<bool>&) {
                     return std::vector<Var>{mul_const(g, mask)};
                   });
}

// ---- reductions and shape -------------------------------------------------

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Shape in_shape = a.shape();
  return Var::make(Tensor::scalar(total), {a},
                   [in_shape](const Var&, const Var& g,
                              const std::vector<bool>&) {
                     return std::vector<Var>{expand(g, in_shape)};
                   });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var expand(const Var& scalar, const Shape& shape) {
  if (scalar.size() != 1) {
    throw ShapeError("expand needs a single-element tensor, got " +
                     shape_str(scalar.shape()));
  }
  const Shape src = scalar.shape();
  return Var::make(Tensor(shape, scalar.value()[0]), {scalar},
                   [src](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{reshape(sum(g), src)};
                   });
}

Var reshape(const Var& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const Shape src = a.shape();
  return Var::make(a.value().reshaped(shape), {a},
                   [src](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{reshape(g, src)};
                   });
}

Var flatten(const Var& a) {
  if (a.shape().empty()) throw ShapeError("flatten of a rank-0 tensor");
  const std::size_t n = a.shape()[0];
  return reshape(a, {n, n == 0 ? 0 : a.size() / n});
}

Var transpose(const Var& a) {
  if (a.shape().size() != 2) {
    throw ShapeError("transpose expects rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  MatMap(out.ptr(), c, r) = ConstMatMap(a.value().ptr(), r, c).transpose();
  return Var::make(std::move(out), {a},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{transpose(g)};
                   });
}

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  MatMap(out.ptr(), m, n).noalias() =
      ConstMatMap(a.value().ptr(), m, k) * ConstMatMap(b.value().ptr(), k, n);
  return Var::make(std::move(out), {a, b},
                   [a, b](const Var&, const Var& g,
                          const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = matmul(g, transpose(b));
                     if (needs[1]) r[1] = matmul(transpose(a), g);
                     return r;
                   });
}

Var row_sum(const Var& a) {
  if (a.shape().size() != 2) {
    throw ShapeError("row_sum expects rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += a.value()[i * cols + j];
    out[i] = s;
  }
  return Var::make(std::move(out), {a},
                   [cols](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{expand_cols(g, cols)};
                   });
}

Var expand_cols(const Var& v, std::size_t cols) {
  if (v.shape().size() != 1) {
    throw ShapeError("expand_cols expects rank 1, got " + shape_str(v.shape()));
  }
  const std::size_t rows = v.shape()[0];
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    std::fill_n(out.ptr() + i * cols, cols, v.value()[i]);
  }
  return Var::make(std::move(out), {v},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{row_sum(g)};
                   });
}

Var broadcast_axis1(const Var& b, const Shape& shape) {
  if (b.shape().size() != 1 || shape.size() < 2 || shape[1] != b.shape()[0]) {
    throw ShapeError("cannot broadcast " + shape_str(b.shape()) +
                     " along axis 1 of " + shape_str(shape));
  }
  const std::size_t n = shape[0], c = shape[1], s = numel(shape) / (n * c);
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      std::fill_n(out.ptr() + (i * c + j) * s, s, b.value()[j]);
    }
  }
  return Var::make(std::move(out), {b},
                   [](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{sum_to_axis1(g)};
                   });
}

Var sum_to_axis1(const Var& a) {
  if (a.shape().size() < 2) {
    throw ShapeError("sum_to_axis1 expects rank >= 2, got " +
                     shape_str(a.shape()));
  }
  const Shape shape = a.shape();
  const std::size_t n = shape[0], c = shape[1];
  const std::size_t s = n * c == 0 ? 0 : a.size() / (n * c);
  Tensor out({c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double* p = a.value().ptr() + (i * c + j) * s;
      double acc = 0.0;
      for (std::size_t t = 0; t < s; ++t) acc += p[t];
      out[j] += acc;
    }
  }
  return Var::make(std::move(out), {a},
                   [shape](const Var&, const Var& g, const std::vector<bool>&) {
                     return std::vector<Var>{broadcast_axis1(g, shape)};
                   });
}

Var add_bias(const Var& a, const Var& b) {
  return add(a, broadcast_axis1(b, a.shape()));
}

Var log_softmax(const Var& a) {
  if (a.shape().size() != 2) {
    throw ShapeError("log_softmax expects rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor out(a.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a.value().ptr() + i * cols;
    const double m = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[j] - lse;
  }
  return Var::make(std::move(out), {a},
                   [cols](const Var& self, const Var& g,
                          const std::vector<bool>&) {
                     return std::vector<Var>{
                         sub(g, mul(exp(self), expand_cols(row_sum(g), cols)))};
                   });
}

Var softmax(const Var& a) { return exp(log_softmax(a)); }

// ---- convolution ----------------------------------------------------------

std::size_t conv_out_size(std::size_t in, std::size_t kernel,
                          const ConvGeometry& g) {
  if (g.stride == 0 || in + 2 * g.pad < kernel) {
    throw ShapeError("convolution kernel " + std::to_string(kernel) +
                     " does not fit input extent " + std::to_string(in));
  }
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

Var conv2d(const Var& x, const Var& w, const ConvGeometry& g) {
  return Var::make(conv_forward(x.value(), w.value(), g), {x, w},
                   [x, w, g](const Var&, const Var& grad,
                             const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = conv2d_input_grad(grad, w, x.shape(), g);
                     if (needs[1])
                       r[1] = conv2d_weight_grad(x, grad, w.shape(), g);
                     return r;
                   });
}

Var conv2d_input_grad(const Var& grad, const Var& w, const Shape& input_shape,
                      const ConvGeometry& g) {
  return Var::make(conv_input_grad(grad.value(), w.value(), input_shape, g),
                   {grad, w},
                   [grad, w, g](const Var&, const Var& gy,
                                const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = conv2d(gy, w, g);
                     if (needs[1])
                       r[1] = conv2d_weight_grad(gy, grad, w.shape(), g);
                     return r;
                   });
}

Var conv2d_weight_grad(const Var& x, const Var& grad, const Shape& weight_shape,
                       const ConvGeometry& g) {
  return Var::make(conv_weight_grad(x.value(), grad.value(), weight_shape, g),
                   {x, grad},
                   [x, grad, g](const Var&, const Var& gw,
                                const std::vector<bool>& needs) {
                     auto r = grads(2);
                     if (needs[0]) r[0] = conv2d_input_grad(grad, gw, x.shape(), g);
                     if (needs[1]) r[1] = conv2d(x, gw, g);
                     return r;
                   });
}

}  // namespace imbgan::ops
