#pragma once

#include <cstdint>
#include <filesystem>

#include "imbgan/nets.hpp"
#include "imbgan/slppl.hpp"

namespace imbgan {

// Writes a binary PGM (P5) of generator samples: one row per class,
// `per_class` tiles per row, drawn from that class's prior.
// Multi-channel images are averaged to grey.
void emit_sample_grid(const NetworkBundle& bundle, const ClassPriors& priors,
                      std::size_t per_class, const std::filesystem::path& path,
                      std::uint64_t seed);

}  // namespace imbgan
