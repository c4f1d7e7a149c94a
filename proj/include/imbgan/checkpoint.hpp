#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "imbgan/nets.hpp"
#include "imbgan/tensor.hpp"

// NBND1 container: the 5-byte tag "NBND1", a u64 record count, then per
// record a u64 name length, the UTF-8 name, a u64 rank, rank u64 dims and
// the float32 payload. All integers and floats are little-endian.
namespace imbgan {

inline constexpr char kCheckpointTag[] = "NBND1";

struct NamedTensor {
  std::string name;
  Tensor value;
};

void write_container(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

// Bundle parameters as records named "<net>.<param>" (enc, dec, gen, dis, clf).
std::vector<NamedTensor> bundle_records(const NetworkBundle& bundle);

// Rebuild a bundle from records, checking every expected name and shape.
// Records with other prefixes (e.g. "prior.") are ignored.
NetworkBundle bundle_from_records(const ArchitectureSpec& arch,
                                  std::size_t num_classes,
                                  const std::vector<NamedTensor>& records);

}  // namespace imbgan
