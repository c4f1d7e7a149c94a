#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imbgan/autograd.hpp"
#include "imbgan/error.hpp"
#include "imbgan/params.hpp"
#include "imbgan/random.hpp"

namespace imbgan {

class TransferError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

enum class LayerKind { conv, deconv, dense };
enum class Activation { none, leaky_relu, sigmoid };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t out = 0;  // channels for conv/deconv, width for dense
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Activation activation = Activation::none;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Encoder: conv blocks then a dense layer to the latent width. Decoder: a
// dense layer back to the encoder's last feature-map size, then transposed
// convolutions ending in a sigmoid so images land in [0, 1].
struct ArchitectureSpec {
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t channels = 1;
  std::size_t latent_dim = 64;
  std::vector<LayerSpec> encoder_layers;
  std::vector<LayerSpec> decoder_layers;
  double classifier_dropout = 0.3;
  double leaky_slope = 0.2;

  // 28x28x1 presets (MNIST, Fashion-MNIST).
  static ArchitectureSpec mnist(std::size_t latent_dim = 64);
  // Small-image preset for the synthetic blob data.
  static ArchitectureSpec small_image(std::size_t size = 8,
                                      std::size_t latent_dim = 8);
  // Fully dense network with only a handful of parameters, for gradient checks.
  static ArchitectureSpec tiny(std::size_t size = 3, std::size_t latent_dim = 2);

  // Throws ShapeError when the decoder does not invert the encoder's shapes.
  void validate() const;

  friend bool operator==(const ArchitectureSpec&,
                         const ArchitectureSpec&) = default;
};

// Parameters of the five players. Names inside each set are local
// ("0.w", "1.b", "head.w", ...); dis and clf reuse the encoder's trunk names.
struct NetworkBundle {
  ArchitectureSpec arch;
  std::size_t num_classes = 0;
  ParamSet enc;
  ParamSet dec;
  ParamSet gen;
  ParamSet dis;
  ParamSet clf;
};

NetworkBundle build_networks(const ArchitectureSpec& arch,
                             std::size_t num_classes, std::uint64_t seed);

// Copies decoder weights into the generator and encoder trunk weights into
// the discriminator and classifier; their heads keep their own init.
NetworkBundle transfer_init(const NetworkBundle& bundle);

enum class GanFunctional { vanilla, wgan };

struct Encoding {
  Var latent;     // (B, q)
  Var log_probs;  // (B, C)
};

Encoding encode(const NetworkBundle& bundle, const Var& x);
Var decode(const NetworkBundle& bundle, const Var& z);
Var generate(const NetworkBundle& bundle, const Var& z);

// Post-activation latent features of the dis/clf trunk (no dropout).
Var dis_features(const NetworkBundle& bundle, const Var& x);
Var clf_features(const NetworkBundle& bundle, const Var& x);

// One score per sample, shape (B): sigmoid head for vanilla, linear for wgan.
Var discriminate(const NetworkBundle& bundle, const Var& x,
                 GanFunctional functional);

// Class log-probabilities (B, C). Dropout is applied after every activation
// only when `rng` is given (training mode).
Var classify_log_probs(const NetworkBundle& bundle, const Var& x,
                       Rng* rng = nullptr);
Var classify(const NetworkBundle& bundle, const Var& x, Rng* rng = nullptr);

// Predicted labels (argmax of the classifier) in inference mode, batched
// internally. `images` is (N, channels, H, W).
std::vector<int> predict(const NetworkBundle& bundle, const Tensor& images,
                         std::size_t batch_size = 256);

// Shapes every parameter set must have for `arch` and `num_classes`.
struct ExpectedShapes {
  std::vector<std::pair<std::string, Shape>> enc, dec, dis, clf;
};
ExpectedShapes expected_shapes(const ArchitectureSpec& arch,
                               std::size_t num_classes);

}  // namespace imbgan
