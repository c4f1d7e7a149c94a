#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "imbgan/checkpoint.hpp"
#include "imbgan/nets.hpp"
#include "imbgan/ops.hpp"
#include "oracles.hpp"

using namespace imbgan;
namespace fs = std::filesystem;

namespace {

Var random_images(const ArchitectureSpec& a, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  return Var(oracle::random_tensor({n, a.channels, a.height, a.width}, rng, 0, 1));
}

bool shapes_match(const ParamSet& p, const std::vector<std::pair<std::string, Shape>>& e) {
  if (p.size() != e.size()) return false;
  for (const auto& [name, shape] : e) {
    if (!p.contains(name) || p.at(name).shape() != shape) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("mnist preset encodes to 64 latents and a class simplex") {
  const auto arch = ArchitectureSpec::mnist();
  const NetworkBundle b = build_networks(arch, 10, 1);
  const Encoding e = encode(b, random_images(arch, 3, 2));
  CHECK(e.latent.shape() == Shape{3, 64});
  CHECK(e.log_probs.shape() == Shape{3, 10});
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 10; ++c) s += std::exp(e.log_probs.value()[r * 10 + c]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("build_networks is deterministic per seed") {
  const auto arch = ArchitectureSpec::small_image(8, 8);
  const NetworkBundle a = build_networks(arch, 2, 5), b = build_networks(arch, 2, 5);
  const NetworkBundle c = build_networks(arch, 2, 6);
  CHECK(a.enc == b.enc);
  CHECK(a.dec == b.dec);
  CHECK(a.dis == b.dis);
  CHECK(a.clf == b.clf);
  CHECK_FALSE(a.enc == c.enc);
}

TEST_CASE("zero input through all five networks is finite with declared shapes") {
  for (const auto& arch : {ArchitectureSpec::mnist(), ArchitectureSpec::small_image(8, 8),
                           ArchitectureSpec::tiny(3, 2)}) {
    const std::size_t C = 3;
    const NetworkBundle b = build_networks(arch, C, 0);
    const Var x(Tensor({2, arch.channels, arch.height, arch.width}));
    const Var z(Tensor({2, arch.latent_dim}));
    const Encoding e = encode(b, x);
    CHECK(e.latent.value().all_finite());
    const Tensor d = decode(b, z).value(), g = generate(b, z).value();
    CHECK(d.shape() == Shape{2, arch.channels, arch.height, arch.width});
    CHECK(g.shape() == d.shape());
    for (double v : d.data()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(discriminate(b, x, GanFunctional::vanilla).shape() == Shape{2});
    CHECK(classify(b, x).shape() == Shape{2, C});
    const auto exp = expected_shapes(arch, C);
    CHECK(shapes_match(b.enc, exp.enc));
    CHECK(shapes_match(b.dec, exp.dec));
    CHECK(shapes_match(b.gen, exp.dec));
    CHECK(shapes_match(b.dis, exp.dis));
    CHECK(shapes_match(b.clf, exp.clf));
  }
}

TEST_CASE("tiny preset stays within 100 parameters per network") {
  const NetworkBundle b = build_networks(ArchitectureSpec::tiny(3, 2), 2, 0);
  for (const ParamSet* p : {&b.enc, &b.dec, &b.gen, &b.dis, &b.clf}) {
    CHECK(p->total_elements() <= 100);
  }
}

TEST_CASE("inconsistent architectures are shape errors") {
  auto arch = ArchitectureSpec::small_image(8, 8);
  arch.decoder_layers.back().out = 2;
  CHECK_THROWS_AS(build_networks(arch, 2, 0), ShapeError);
  auto arch2 = ArchitectureSpec::small_image(8, 8);
  arch2.decoder_layers.back().activation = Activation::none;
  CHECK_THROWS_AS(arch2.validate(), ShapeError);
}

TEST_CASE("transfer_init copies decoder and trunk, with fresh heads") {
  const auto arch = ArchitectureSpec::small_image(8, 8);
  const NetworkBundle b = transfer_init(build_networks(arch, 2, 3));
  std::mt19937_64 rng(4);
  const Var z(oracle::random_tensor({5, 8}, rng, -2, 2));
  CHECK(generate(b, z).value() == decode(b, z).value());
  const Var x = random_images(arch, 4, 9);
  CHECK(dis_features(b, x).value() == clf_features(b, x).value());
  CHECK(b.gen == b.dec);

  NetworkBundle m = b;
  Var w = m.gen.at("0.w");
  w.mutable_value()[0] += 1.0;
  CHECK(m.dec == b.dec);
  CHECK_FALSE(m.gen == m.dec);
}

TEST_CASE("transfer_init rejects mismatched donors") {
  NetworkBundle b = build_networks(ArchitectureSpec::small_image(8, 8), 2, 3);
  ParamSet broken;
  for (const auto& [name, v] : b.dec) {
    broken.add(name, name == "0.w" ? Tensor({1, 1}) : v.value());
  }
  b.dec = broken;
  try {
    transfer_init(b);
    FAIL("no error");
  } catch (const TransferError& e) {
    CHECK(std::string(e.what()).find("0.w") != std::string::npos);
  }
}

TEST_CASE("heads: vanilla in (0,1), wgan unbounded, dropout only in train mode") {
  const auto arch = ArchitectureSpec::small_image(8, 8);
  const NetworkBundle b = transfer_init(build_networks(arch, 2, 7));
  const Var x = random_images(arch, 16, 1);
  for (double v : discriminate(b, x, GanFunctional::vanilla).value().data()) {
    CHECK((v > 0.0 && v < 1.0));
  }
  const Tensor s = discriminate(b, ops::scale(x, 50.0), GanFunctional::wgan).value();
  bool outside = false;
  for (double v : s.data()) outside = outside || v < 0.0 || v > 1.0;
  CHECK(outside);

  CHECK(classify(b, x).value() == classify(b, x).value());
  Rng r1 = make_rng(1, {}), r2 = make_rng(2, {});
  CHECK_FALSE(classify(b, x, &r1).value() == classify(b, x, &r2).value());
}

TEST_CASE("predict agrees with the classifier argmax") {
  const auto arch = ArchitectureSpec::small_image(8, 8);
  const NetworkBundle b = build_networks(arch, 2, 2);
  const Var x = random_images(arch, 7, 3);
  const auto pred = predict(b, x.value(), 3);
  const Tensor p = classify(b, x).value();
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(pred[i] == (p[i * 2 + 1] > p[i * 2] ? 1 : 0));
  }
}

TEST_CASE("checkpoint container round trips and validates") {
  const auto arch = ArchitectureSpec::small_image(8, 8);
  const NetworkBundle b = transfer_init(build_networks(arch, 2, 11));
  const fs::path path = fs::temp_directory_path() / "imbgan_test_nets.nbnd";
  write_container(path, bundle_records(b));
  const NetworkBundle back = bundle_from_records(arch, 2, read_container(path));
  // float32 payload: compare within single precision
  auto close = [](const ParamSet& a, const ParamSet& c) {
    for (const auto& [name, v] : a) {
      const Tensor& t = c.at(name).value();
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(t[i] - v.value()[i]) > 1e-6 * (1 + std::abs(v.value()[i]))) return false;
      }
    }
    return a.size() == c.size();
  };
  CHECK(close(b.enc, back.enc));
  CHECK(close(b.gen, back.gen));
  CHECK(close(b.dis, back.dis));
  CHECK(close(b.clf, back.clf));
  write_container(path, bundle_records(back));
  CHECK(bundle_from_records(arch, 2, read_container(path)).clf == back.clf);

  auto records = bundle_records(b);
  records[0].value = Tensor({1});
  CHECK_THROWS_AS(bundle_from_records(arch, 2, records), ShapeError);
  CHECK_THROWS_AS(bundle_from_records(arch, 3, bundle_records(b)), ShapeError);

  fs::resize_file(path, fs::file_size(path) - 3);
  CHECK_THROWS_AS(read_container(path), FormatError);
  fs::remove(path);
}
