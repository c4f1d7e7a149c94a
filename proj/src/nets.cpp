#include "imbgan/nets.hpp"

#include <algorithm>
#include <cmath>

#include "imbgan/ops.hpp"

namespace imbgan {

namespace {

struct MapShape {
  std::size_t c = 0, h = 0, w = 0;
  bool flat = false;
  std::size_t width() const { return flat ? c : c * h * w; }
};

std::string layer_name(std::size_t i, const char* leaf) {
  return std::to_string(i) + "." + leaf;
}

// Shapes after each encoder layer; also reports the last spatial map shape.
struct EncoderPlan {
  std::vector<std::pair<std::string, Shape>> params;
  MapShape last_map;
  bool has_map = false;
};

EncoderPlan plan_encoder(const ArchitectureSpec& arch) {
  EncoderPlan plan;
  MapShape s{arch.channels, arch.height, arch.width, false};
  plan.last_map = s;
  for (std::size_t i = 0; i < arch.encoder_layers.size(); ++i) {
    const auto& l = arch.encoder_layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        if (s.flat) {
          throw ShapeError("encoder layer " + std::to_string(i) +
                           ": convolution after a dense layer");
        }
        const ops::ConvGeometry g{l.stride, l.pad};
        plan.params.emplace_back(layer_name(i, "w"),
                                 Shape{l.out, s.c, l.kernel, l.kernel});
        plan.params.emplace_back(layer_name(i, "b"), Shape{l.out});
        s = {l.out, ops::conv_out_size(s.h, l.kernel, g),
             ops::conv_out_size(s.w, l.kernel, g), false};
        plan.last_map = s;
        plan.has_map = true;
        break;
      }
      case LayerKind::dense:
        plan.params.emplace_back(layer_name(i, "w"), Shape{s.width(), l.out});
        plan.params.emplace_back(layer_name(i, "b"), Shape{l.out});
        s = {l.out, 0, 0, true};
        break;
      case LayerKind::deconv:
        throw ShapeError("encoder layer " + std::to_string(i) +
                         ": transposed convolution not allowed in an encoder");
    }
  }
  if (!s.flat || s.c != arch.latent_dim) {
    throw ShapeError("encoder must end in a dense layer of width " +
                     std::to_string(arch.latent_dim));
  }
  return plan;
}

std::vector<std::pair<std::string, Shape>> plan_decoder(
    const ArchitectureSpec& arch, const EncoderPlan& enc) {
  std::vector<std::pair<std::string, Shape>> params;
  MapShape s{arch.latent_dim, 0, 0, true};
  const auto& layers = arch.decoder_layers;
  if (layers.empty()) throw ShapeError("decoder has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::dense: {
        if (!s.flat) {
          throw ShapeError("decoder layer " + std::to_string(i) +
                           ": dense layer after a feature map");
        }
        params.emplace_back(layer_name(i, "w"), Shape{s.c, l.out});
        params.emplace_back(layer_name(i, "b"), Shape{l.out});
        s = {l.out, 0, 0, true};
        const bool next_is_map =
            i + 1 < layers.size() && layers[i + 1].kind == LayerKind::deconv;
        if (next_is_map) {
          if (!enc.has_map || enc.last_map.width() != l.out) {
            throw ShapeError("decoder dense layer " + std::to_string(i) +
                             " width " + std::to_string(l.out) +
                             " does not match the encoder feature map");
          }
          s = enc.last_map;
        }
        break;
      }
      case LayerKind::deconv: {
        if (s.flat) {
          throw ShapeError("decoder layer " + std::to_string(i) +
                           ": transposed convolution needs a feature map");
        }
        const ops::ConvGeometry g{l.stride, l.pad};
        const std::size_t span_h = (s.h - 1) * l.stride + l.kernel;
        const std::size_t span_w = (s.w - 1) * l.stride + l.kernel;
        if (span_h < 2 * l.pad || span_w < 2 * l.pad) {
          throw ShapeError("decoder layer " + std::to_string(i) +
                           ": padding exceeds output extent");
        }
        const MapShape out{l.out, span_h - 2 * l.pad, span_w - 2 * l.pad, false};
        if (ops::conv_out_size(out.h, l.kernel, g) != s.h ||
            ops::conv_out_size(out.w, l.kernel, g) != s.w) {
          throw ShapeError("decoder layer " + std::to_string(i) +
                           " is not the adjoint of a convolution");
        }
        params.emplace_back(layer_name(i, "w"),
                            Shape{s.c, l.out, l.kernel, l.kernel});
        params.emplace_back(layer_name(i, "b"), Shape{l.out});
        s = out;
        break;
      }
      case LayerKind::conv:
        throw ShapeError("decoder layer " + std::to_string(i) +
                         ": plain convolution not allowed in a decoder");
    }
  }
  const std::size_t image = arch.channels * arch.height * arch.width;
  const bool matches = s.flat ? s.c == image
                              : (s.c == arch.channels && s.h == arch.height &&
                                 s.w == arch.width);
  if (!matches) {
    throw ShapeError("decoder output does not reconstruct the " +
                     std::to_string(arch.channels) + "x" +
                     std::to_string(arch.height) + "x" +
                     std::to_string(arch.width) + " input");
  }
  if (layers.back().activation != Activation::sigmoid) {
    throw ShapeError("decoder must end in a sigmoid so outputs lie in [0, 1]");
  }
  return params;
}

double init_std(const LayerSpec& l, const Shape& w, double slope) {
  double fan_in = 1.0;
  switch (l.kind) {
    case LayerKind::dense:
      fan_in = static_cast<double>(w[0]);
      break;
    case LayerKind::conv:
      fan_in = static_cast<double>(w[1] * w[2] * w[3]);
      break;
    case LayerKind::deconv:
      fan_in = std::max(1.0, static_cast<double>(w[0] * w[2] * w[3]) /
                                 static_cast<double>(l.stride * l.stride));
      break;
  }
  const double gain = l.activation == Activation::leaky_relu
                          ? 2.0 / (1.0 + slope * slope)
                          : 1.0;
  return std::sqrt(gain / fan_in);
}

void init_layers(ParamSet& set, const std::vector<LayerSpec>& layers,
                 const std::vector<std::pair<std::string, Shape>>& shapes,
                 double slope, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& ws = shapes[2 * i].second;
    const double sd = init_std(layers[i], ws, slope);
    Tensor w(ws);
    for (auto& v : w.data()) v = sd * normal(rng);
    set.add(shapes[2 * i].first, std::move(w));
    set.add(shapes[2 * i + 1].first, Tensor(shapes[2 * i + 1].second, 0.0));
  }
}

void init_head(ParamSet& set, std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(1.0 / static_cast<double>(in));
  Tensor w({in, out});
  for (auto& v : w.data()) v = sd * normal(rng);
  set.add("head.w", std::move(w));
  set.add("head.b", Tensor({out}, 0.0));
}

Var activate(const Var& h, Activation a, double slope) {
  switch (a) {
    case Activation::leaky_relu:
      return ops::leaky_relu(h, slope);
    case Activation::sigmoid:
      return ops::sigmoid(h);
    case Activation::none:
      break;
  }
  return h;
}

Var dropout(const Var& h, double rate, Rng& rng) {
  if (rate <= 0.0) return h;
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(h.shape());
  const double scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.data()) m = keep(rng) ? scale : 0.0;
  return ops::mul_const(h, mask);
}

void check_image_batch(const ArchitectureSpec& arch, const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != arch.channels || s[2] != arch.height ||
      s[3] != arch.width) {
    throw ShapeError("expected image batch (B," + std::to_string(arch.channels) +
                     "," + std::to_string(arch.height) + "," +
                     std::to_string(arch.width) + "), got " + shape_str(s));
  }
}

// Runs the encoder layers (the shared trunk) and returns the latent, before
// any activation on it.
Var run_trunk(const ArchitectureSpec& arch, const ParamSet& p, const Var& x,
              Rng* rng) {
  check_image_batch(arch, x);
  Var h = x;
  for (std::size_t i = 0; i < arch.encoder_layers.size(); ++i) {
    const auto& l = arch.encoder_layers[i];
    const Var& w = p.at(layer_name(i, "w"));
    const Var& b = p.at(layer_name(i, "b"));
    if (l.kind == LayerKind::conv) {
      h = ops::add_bias(ops::conv2d(h, w, {l.stride, l.pad}), b);
    } else {
      h = ops::add_bias(ops::matmul(ops::flatten(h), w), b);
    }
    h = activate(h, l.activation, arch.leaky_slope);
    if (rng && l.activation != Activation::none) {
      h = dropout(h, arch.classifier_dropout, *rng);
    }
  }
  return h;
}

Var run_decoder(const ArchitectureSpec& arch, const ParamSet& p, const Var& z) {
  if (z.shape().size() != 2 || z.shape()[1] != arch.latent_dim) {
    throw ShapeError("expected latent batch (B," +
                     std::to_string(arch.latent_dim) + "), got " +
                     shape_str(z.shape()));
  }
  const std::size_t batch = z.shape()[0];
  const auto enc = plan_encoder(arch);
  Var h = z;
  const auto& layers = arch.decoder_layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const Var& w = p.at(layer_name(i, "w"));
    const Var& b = p.at(layer_name(i, "b"));
    if (l.kind == LayerKind::dense) {
      h = ops::add_bias(ops::matmul(h, w), b);
      if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::deconv) {
        h = ops::reshape(h, {batch, enc.last_map.c, enc.last_map.h,
                             enc.last_map.w});
      }
    } else {
      const Shape& in = h.shape();
      const Shape out{batch, l.out, (in[2] - 1) * l.stride + l.kernel - 2 * l.pad,
                      (in[3] - 1) * l.stride + l.kernel - 2 * l.pad};
      h = ops::add_bias(ops::conv2d_input_grad(h, w, out, {l.stride, l.pad}), b);
    }
    h = activate(h, l.activation, arch.leaky_slope);
  }
  return ops::reshape(h, {batch, arch.channels, arch.height, arch.width});
}

Var head(const ParamSet& p, const Var& features) {
  return ops::add_bias(ops::matmul(features, p.at("head.w")), p.at("head.b"));
}

void copy_matching(const ParamSet& donor, ParamSet& recipient,
                   const std::string& donor_tag, const std::string& recipient_tag,
                   bool skip_head) {
  for (const auto& [name, var] : donor) {
    if (skip_head && name.rfind("head.", 0) == 0) continue;
    if (!recipient.contains(name)) {
      throw TransferError("transfer " + donor_tag + " -> " + recipient_tag +
                          ": recipient has no parameter " + name);
    }
    const Var& target = recipient.at(name);
    if (target.shape() != var.shape()) {
      throw TransferError("transfer " + donor_tag + " -> " + recipient_tag +
                          ": parameter " + name + " has shape " +
                          shape_str(target.shape()) + ", donor has " +
                          shape_str(var.shape()));
    }
    recipient.assign(name, var.value());
  }
}

}  // namespace

ArchitectureSpec ArchitectureSpec::mnist(std::size_t latent_dim) {
  ArchitectureSpec a;
  a.height = 28;
  a.width = 28;
  a.channels = 1;
  a.latent_dim = latent_dim;
  a.encoder_layers = {
      {LayerKind::conv, 32, 4, 2, 1, Activation::leaky_relu},
      {LayerKind::conv, 64, 4, 2, 1, Activation::leaky_relu},
      {LayerKind::dense, latent_dim, 0, 1, 0, Activation::none},
  };
  a.decoder_layers = {
      {LayerKind::dense, 64 * 7 * 7, 0, 1, 0, Activation::leaky_relu},
      {LayerKind::deconv, 32, 4, 2, 1, Activation::leaky_relu},
      {LayerKind::deconv, 1, 4, 2, 1, Activation::sigmoid},
  };
  return a;
}

ArchitectureSpec ArchitectureSpec::small_image(std::size_t size,
                                               std::size_t latent_dim) {
  ArchitectureSpec a;
  a.height = size;
  a.width = size;
  a.channels = 1;
  a.latent_dim = latent_dim;
  const std::size_t half = size / 2;
  a.encoder_layers = {
      {LayerKind::conv, 8, 4, 2, 1, Activation::leaky_relu},
      {LayerKind::dense, latent_dim, 0, 1, 0, Activation::none},
  };
  a.decoder_layers = {
      {LayerKind::dense, 8 * half * half, 0, 1, 0, Activation::leaky_relu},
      {LayerKind::deconv, 1, 4, 2, 1, Activation::sigmoid},
  };
  return a;
}

ArchitectureSpec ArchitectureSpec::tiny(std::size_t size,
                                        std::size_t latent_dim) {
  ArchitectureSpec a;
  a.height = size;
  a.width = size;
  a.channels = 1;
  a.latent_dim = latent_dim;
  a.encoder_layers = {
      {LayerKind::dense, 4, 0, 1, 0, Activation::leaky_relu},
      {LayerKind::dense, latent_dim, 0, 1, 0, Activation::none},
  };
  a.decoder_layers = {
      {LayerKind::dense, 4, 0, 1, 0, Activation::leaky_relu},
      {LayerKind::dense, size * size, 0, 1, 0, Activation::sigmoid},
  };
  return a;
}

void ArchitectureSpec::validate() const {
  if (latent_dim == 0) throw ShapeError("latent dimension must be positive");
  if (!(classifier_dropout >= 0.0 && classifier_dropout < 1.0)) {
    throw ShapeError("classifier dropout must lie in [0, 1)");
  }
  const auto enc = plan_encoder(*this);
  plan_decoder(*this, enc);
}

ExpectedShapes expected_shapes(const ArchitectureSpec& arch,
                               std::size_t num_classes) {
  const auto enc = plan_encoder(arch);
  ExpectedShapes out;
  out.enc = enc.params;
  out.dec = plan_decoder(arch, enc);
  out.dis = enc.params;
  out.clf = enc.params;
  out.enc.emplace_back("head.w", Shape{arch.latent_dim, num_classes});
  out.enc.emplace_back("head.b", Shape{num_classes});
  out.dis.emplace_back("head.w", Shape{arch.latent_dim, 1});
  out.dis.emplace_back("head.b", Shape{1});
  out.clf.emplace_back("head.w", Shape{arch.latent_dim, num_classes});
  out.clf.emplace_back("head.b", Shape{num_classes});
  return out;
}

NetworkBundle build_networks(const ArchitectureSpec& arch,
                             std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ShapeError("need at least one class");
  arch.validate();
  const auto shapes = expected_shapes(arch, num_classes);
  const auto dec_shapes = shapes.dec;
  auto trunk_shapes = shapes.enc;
  trunk_shapes.resize(trunk_shapes.size() - 2);

  NetworkBundle b;
  b.arch = arch;
  b.num_classes = num_classes;
  const double slope = arch.leaky_slope;

  Rng enc_rng = make_rng(seed, {10});
  init_layers(b.enc, arch.encoder_layers, trunk_shapes, slope, enc_rng);
  init_head(b.enc, arch.latent_dim, num_classes, enc_rng);

  Rng dec_rng = make_rng(seed, {11});
  init_layers(b.dec, arch.decoder_layers, dec_shapes, slope, dec_rng);

  Rng gen_rng = make_rng(seed, {12});
  init_layers(b.gen, arch.decoder_layers, dec_shapes, slope, gen_rng);

  Rng dis_rng = make_rng(seed, {13});
  init_layers(b.dis, arch.encoder_layers, trunk_shapes, slope, dis_rng);
  init_head(b.dis, arch.latent_dim, 1, dis_rng);

  Rng clf_rng = make_rng(seed, {14});
  init_layers(b.clf, arch.encoder_layers, trunk_shapes, slope, clf_rng);
  init_head(b.clf, arch.latent_dim, num_classes, clf_rng);

  // Dry run on a zero image through all five networks.
  NoGradGuard no_grad;
  const Var x(Tensor({1, arch.channels, arch.height, arch.width}, 0.0));
  const auto e = encode(b, x);
  const Var z(Tensor({1, arch.latent_dim}, 0.0));
  const Var outs[] = {e.latent, e.log_probs, decode(b, z), generate(b, z),
                      discriminate(b, x, GanFunctional::vanilla),
                      classify_log_probs(b, x)};
  for (const auto& o : outs) {
    if (!o.value().all_finite()) {
      throw ShapeError("dry run produced non-finite outputs");
    }
  }
  return b;
}

NetworkBundle transfer_init(const NetworkBundle& bundle) {
  NetworkBundle out = bundle;
  copy_matching(bundle.dec, out.gen, "dec", "gen", false);
  copy_matching(bundle.enc, out.dis, "enc", "dis", true);
  copy_matching(bundle.enc, out.clf, "enc", "clf", true);
  return out;
}

Encoding encode(const NetworkBundle& bundle, const Var& x) {
  Var z = run_trunk(bundle.arch, bundle.enc, x, nullptr);
  Var logits = head(bundle.enc, z);
  return {z, ops::log_softmax(logits)};
}

Var decode(const NetworkBundle& bundle, const Var& z) {
  return run_decoder(bundle.arch, bundle.dec, z);
}

Var generate(const NetworkBundle& bundle, const Var& z) {
  return run_decoder(bundle.arch, bundle.gen, z);
}

Var dis_features(const NetworkBundle& bundle, const Var& x) {
  return ops::leaky_relu(run_trunk(bundle.arch, bundle.dis, x, nullptr),
                         bundle.arch.leaky_slope);
}

Var clf_features(const NetworkBundle& bundle, const Var& x) {
  return ops::leaky_relu(run_trunk(bundle.arch, bundle.clf, x, nullptr),
                         bundle.arch.leaky_slope);
}

Var discriminate(const NetworkBundle& bundle, const Var& x,
                 GanFunctional functional) {
  Var score = head(bundle.dis, dis_features(bundle, x));
  score = ops::reshape(score, {score.shape()[0]});
  return functional == GanFunctional::vanilla ? ops::sigmoid(score) : score;
}

Var classify_log_probs(const NetworkBundle& bundle, const Var& x, Rng* rng) {
  Var h = ops::leaky_relu(run_trunk(bundle.arch, bundle.clf, x, rng),
                          bundle.arch.leaky_slope);
  if (rng) h = dropout(h, bundle.arch.classifier_dropout, *rng);
  return ops::log_softmax(head(bundle.clf, h));
}

Var classify(const NetworkBundle& bundle, const Var& x, Rng* rng) {
  return ops::exp(classify_log_probs(bundle, x, rng));
}

std::vector<int> predict(const NetworkBundle& bundle, const Tensor& images,
                         std::size_t batch_size) {
  NoGradGuard no_grad;
  const Shape& s = images.shape();
  if (s.size() != 4) {
    throw ShapeError("predict expects (N,C,H,W), got " + shape_str(s));
  }
  const std::size_t n = s[0];
  const std::size_t per = n == 0 ? 0 : images.size() / n;
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    Tensor chunk({end - start, s[1], s[2], s[3]});
    std::copy_n(images.ptr() + start * per, (end - start) * per, chunk.ptr());
    const Var lp = classify_log_probs(bundle, Var(std::move(chunk)));
    const std::size_t c = lp.shape()[1];
    for (std::size_t i = 0; i < end - start; ++i) {
      const double* row = lp.value().ptr() + i * c;
      out.push_back(static_cast<int>(std::max_element(row, row + c) - row));
    }
  }
  return out;
}

}  // namespace imbgan
