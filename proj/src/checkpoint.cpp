#include "imbgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "imbgan/error.hpp"

namespace imbgan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("checkpoint " + path.string() + " is truncated");
  }
  return v;
}

constexpr std::uint64_t kMaxNameLength = 4096;
constexpr std::uint64_t kMaxRank = 8;

const char* const kNets[] = {"enc", "dec", "gen", "dis", "clf"};

}  // namespace

void write_container(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointTag, 5);
  put_u64(out, records.size());
  for (const auto& r : records) {
    put_u64(out, r.name.size());
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u64(out, r.value.rank());
    for (auto d : r.value.shape()) put_u64(out, d);
    std::vector<float> payload(r.value.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
      payload[i] = static_cast<float>(r.value[i]);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char tag[5] = {};
  if (!in.read(tag, 5) || std::memcmp(tag, kCheckpointTag, 5) != 0) {
    throw FormatError(path.string() + " is not an NBND1 checkpoint");
  }
  const std::uint64_t count = get_u64(in, path);
  std::vector<NamedTensor> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u64(in, path);
    if (len > kMaxNameLength) {
      throw FormatError("checkpoint record name too long in " + path.string());
    }
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw FormatError("checkpoint " + path.string() + " is truncated");
    }
    const std::uint64_t rank = get_u64(in, path);
    if (rank > kMaxRank) {
      throw FormatError("checkpoint record " + name + " has rank " +
                        std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& d : shape) d = get_u64(in, path);
    std::vector<float> payload(numel(shape));
    if (!in.read(reinterpret_cast<char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size() * sizeof(float)))) {
      throw FormatError("checkpoint " + path.string() + " is truncated in " +
                        name);
    }
    Tensor t(std::move(shape));
    for (std::size_t j = 0; j < payload.size(); ++j) t[j] = payload[j];
    records.push_back({std::move(name), std::move(t)});
  }
  return records;
}

std::vector<NamedTensor> bundle_records(const NetworkBundle& bundle) {
  std::vector<NamedTensor> out;
  const ParamSet* sets[] = {&bundle.enc, &bundle.dec, &bundle.gen, &bundle.dis,
                            &bundle.clf};
  for (std::size_t k = 0; k < 5; ++k) {
    for (const auto& [name, var] : *sets[k]) {
      out.push_back({std::string(kNets[k]) + "." + name, var.value()});
    }
  }
  return out;
}

NetworkBundle bundle_from_records(const ArchitectureSpec& arch,
                                  std::size_t num_classes,
                                  const std::vector<NamedTensor>& records) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.value;

  const auto shapes = expected_shapes(arch, num_classes);
  const std::vector<std::pair<std::string, Shape>>* plans[] = {
      &shapes.enc, &shapes.dec, &shapes.dec, &shapes.dis, &shapes.clf};

  NetworkBundle b;
  b.arch = arch;
  b.num_classes = num_classes;
  ParamSet* sets[] = {&b.enc, &b.dec, &b.gen, &b.dis, &b.clf};
  for (std::size_t k = 0; k < 5; ++k) {
    for (const auto& [name, shape] : *plans[k]) {
      const std::string full = std::string(kNets[k]) + "." + name;
      auto it = by_name.find(full);
      if (it == by_name.end()) {
        throw FormatError("checkpoint lacks parameter " + full);
      }
      if (it->second->shape() != shape) {
        throw ShapeError("checkpoint parameter " + full + " has shape " +
                         shape_str(it->second->shape()) +
                         ", architecture expects " + shape_str(shape));
      }
      sets[k]->add(name, *it->second);
    }
  }
  return b;
}

}  // namespace imbgan
