#include "imbgan/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "imbgan/error.hpp"

namespace imbgan {

void emit_sample_grid(const NetworkBundle& bundle, const ClassPriors& priors,
                      std::size_t per_class, const std::filesystem::path& path,
                      std::uint64_t seed) {
  const auto& a = bundle.arch;
  const std::size_t C = bundle.num_classes;
  if (priors.num_classes() != C) {
    throw ShapeError("grid: priors cover " +
                     std::to_string(priors.num_classes()) + " classes, bundle " +
                     std::to_string(C));
  }
  if (per_class == 0) throw ConfigError("grid: need at least one tile per class");

  const std::size_t H = a.height, W = a.width, ch = a.channels;
  const std::size_t width = W * per_class, height = H * C;
  std::vector<unsigned char> pixels(width * height, 0);

  NoGradGuard no_grad;
  for (std::size_t c = 0; c < C; ++c) {
    Tensor z = sample_prior(priors, static_cast<int>(c), per_class, seed);
    Tensor img = generate(bundle, Var(z, false)).value();  // (n, ch, H, W)
    for (std::size_t n = 0; n < per_class; ++n) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double v = 0.0;
          for (std::size_t k = 0; k < ch; ++k) {
            v += img[((n * ch + k) * H + y) * W + x];
          }
          v = std::clamp(v / static_cast<double>(ch), 0.0, 1.0);
          pixels[(c * H + y) * width + n * W + x] =
              static_cast<unsigned char>(std::lround(v * 255.0));
        }
      }
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace imbgan
