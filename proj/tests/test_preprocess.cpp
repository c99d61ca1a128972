// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "muscle/errors.hpp"
#include "muscle/manifest_io.hpp"
#include "muscle/preprocess.hpp"
#include "support.hpp"

using namespace muscle;
using namespace muscle::testing;
namespace fs = std::filesystem;

namespace {

// Independent bilinear reference: every output pixel is a sum over ALL
// source pixels weighted by separable tent functions centred on the
// half-pixel source coordinate (clamped to the sample grid).
Tensor reference_bilinear(const Tensor& img, std::size_t oh, std::size_t ow) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  auto src = [](std::size_t i, std::size_t n, std::size_t m) {
    const double s = (i + 0.5) * double(n) / double(m) - 0.5;
    return std::min(std::max(s, 0.0), double(n - 1));
  };
  auto tent = [](double d) { return std::max(0.0, 1.0 - std::abs(d)); };
  Tensor out({1, oh, ow});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      const double sy = src(y, h, oh), sx = src(x, w, ow);
      double acc = 0.0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) acc += tent(sy - double(r)) * tent(sx - double(c)) * img[r * w + c];
      out[y * ow + x] = acc;
    }
  return out;
}

DatasetManifest make_manifest(const std::string& id, std::size_t n, double mean, double std, std::uint64_t seed,
                              std::size_t h = 12, std::size_t w = 10) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> nd(mean, std);
  DatasetManifest m;
  m.dataset_id = id;
  m.gray_mean = mean;
  m.gray_std = std;
  for (std::size_t i = 0; i < n; ++i) {
    ImageRecord r;
    r.dataset_id = id;
    r.pixels = Tensor({1, h, w});
    for (auto& v : r.pixels.data()) v = std::clamp(nd(rng), 0.0, 255.0);
    m.records.push_back(r);
    m.splits.train.push_back(i);
  }
  return m;
}

}  // namespace

TEST_CASE("zscore with the reference constants") {
  const Tensor px({1, 1, 2}, std::vector<double>{122.786, 141.176});
  const auto z = zscore_normalize(px, 122.786, 18.390);
  CHECK(std::abs(z[0]) < 1e-12);
  CHECK(std::abs(z[1] - 1.0) < 1e-12);
  CHECK(zscore_normalize(px, 0.0, 1.0) == px);
  CHECK_THROWS_AS(zscore_normalize(px, 0.0, 0.0), ContractError);
  CHECK_THROWS_AS(zscore_normalize(px, 0.0, -1.0), ContractError);
}

TEST_CASE("zscore inverse recovers the input") {
  auto rng = make_rng(3);
  const auto img = random_tensor({1, 9, 7}, rng, 0.0, 255.0);
  const auto z = zscore_normalize(img, 122.786, 18.390);
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(std::abs(z[i] * 18.390 + 122.786 - img[i]) < 1e-12);
}

TEST_CASE("bilinear resize") {
  auto rng = make_rng(4);
  const auto img = random_tensor({1, 5, 6}, rng);
  CHECK(resize_bilinear(img, 5, 6) == img);
  const Tensor flat({1, 4, 7}, 3.25);
  const auto resized = resize_bilinear(flat, 9, 2);
  for (double v : resized.data()) CHECK(v == doctest::Approx(3.25).epsilon(1e-15));
  CHECK_THROWS_AS(resize_bilinear(img, 0, 3), ContractError);

  Tensor ramp({1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = double(i);
  const auto got = resize_bilinear(ramp, 2, 2);
  const auto want = reference_bilinear(ramp, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);

  for (int inst = 0; inst < 20; ++inst) {
    std::uniform_int_distribution<std::size_t> d(1, 20);
    const auto src = random_tensor({1, d(rng), d(rng)}, rng);
    const std::size_t oh = d(rng), ow = d(rng);
    const auto a = resize_bilinear(src, oh, ow);
    const auto b = reference_bilinear(src, oh, ow);
    CHECK(relative_error(a.data(), b.data()) < 1e-12);
    const auto [lo, hi] = std::minmax_element(src.data().begin(), src.data().end());
    for (double v : a.data()) {
      CHECK(v >= *lo - 1e-12);
      CHECK(v <= *hi + 1e-12);
    }
  }
}

TEST_CASE("augment policy cannot express forbidden operations") {
  AugmentFlags f;
  f.random_crop = true;
  CHECK_THROWS_AS(AugmentPolicy{f}, ContractError);
  f = {};
  f.gaussian_blur = true;
  CHECK_THROWS_AS(AugmentPolicy{f}, ContractError);
  f = {};
  f.color_jitter = true;
  CHECK_THROWS_AS(AugmentPolicy{f}, ContractError);
  const AugmentPolicy ok{AugmentFlags{}};
  CHECK_FALSE(ok.random_crop());
  CHECK_FALSE(ok.gaussian_blur());
  CHECK_FALSE(ok.color_jitter());
}

TEST_CASE("augment_view") {
  auto rng = make_rng(5);
  const auto img = random_tensor({1, 16, 16}, rng);
  auto r = make_rng(6);
  CHECK(augment_view(img, AugmentPolicy::identity(), r) == img);
  CHECK(horizontal_flip(horizontal_flip(img)) == img);
  const AugmentPolicy policy{AugmentFlags{}};
  auto r1 = make_rng(7), r2 = make_rng(7);
  CHECK(augment_view(img, policy, r1) == augment_view(img, policy, r2));
  for (int i = 0; i < 20; ++i) CHECK(augment_view(img, policy, r1).shape() == img.shape());

  // Pure translation by the drawn offset, zero fill.
  AugmentFlags t;
  t.horizontal_flip = false;
  t.rotation_deg = 0.0;
  t.translate_px = 3;
  auto rt = make_rng(8);
  const auto v = augment_view(img, AugmentPolicy{t}, rt);
  std::size_t zeros = 0;
  for (double x : v.data()) zeros += x == 0.0;
  std::size_t same = 0;
  for (double x : v.data())
    for (double y : img.data()) same += (x == y && x != 0.0);
  CHECK(same == v.numel() - zeros);
}

TEST_CASE("aggregate: size, normalization, determinism, provenance") {
  std::vector<DatasetManifest> ms{make_manifest("a", 10, 122.786, 18.390, 1),
                                  make_manifest("b", 10, 122.786, 18.390, 2, 8, 14)};
  const auto pool = aggregate(ms, 8, 8, 122.786, 18.390, 42);
  CHECK(pool.size() == 20);
  double mean = 0.0;
  std::size_t n = 0;
  for (const auto& s : pool) {
    CHECK(s.image.shape() == Shape{1, 8, 8});
    for (double v : s.image.data()) mean += v, ++n;
  }
  CHECK(std::abs(mean / double(n)) < 0.1);
  const auto again = aggregate(ms, 8, 8, 122.786, 18.390, 42);
  for (std::size_t i = 0; i < pool.size(); ++i) CHECK(pool[i].image == again[i].image);
  std::size_t from_a = 0;
  for (const auto& s : pool) from_a += s.dataset_id == "a";
  CHECK(from_a == 10);

  std::vector<DatasetManifest> none{make_manifest("c", 3, 100, 10, 3)};
  none[0].splits.train.clear();
  CHECK_THROWS_AS(aggregate(none, 8, 8, 0, 1, 1), ContractError);
}

TEST_CASE("per-dataset normalization harmonizes heterogeneous statistics") {
  std::vector<DatasetManifest> ms{make_manifest("dark", 30, 80, 10, 1), make_manifest("bright", 30, 170, 25, 2)};
  PreprocessConfig cfg;
  cfg.target_h = cfg.target_w = 8;
  const auto pool = aggregate(ms, cfg, 1);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& s : pool)
    for (double v : s.image.data()) acc[s.dataset_id].first += v, acc[s.dataset_id].second++;
  const double a = acc["dark"].first / double(acc["dark"].second);
  const double b = acc["bright"].first / double(acc["bright"].second);
  CHECK(std::abs(a - b) < 0.2);
}

TEST_CASE("manifest validation") {
  auto m = make_manifest("v", 4, 100, 10, 1);
  m.validate();
  auto bad = m;
  bad.splits.test.push_back(0);
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = m;
  bad.gray_std = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = m;
  bad.records[0].pixels[0] = 300.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = m;
  bad.task = HeadConfig{HeadKind::classification, 2};
  CHECK_THROWS_AS(bad.validate(), ContractError);  // no labels
}

TEST_CASE("manifest JSON round trip and PGM input") {
  const fs::path dir = fs::temp_directory_path() / "muscle_test_manifest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto m = make_manifest("rt", 3, 120, 20, 9, 5, 4);
  for (auto& r : m.records)
    for (auto& v : r.pixels.data()) v = std::round(v);
  m.task = HeadConfig{HeadKind::segmentation, 2};
  for (auto& r : m.records) r.mask = std::vector<int>(20, 0), r.label = 0;
  m.records[1].mask->at(7) = 1;
  write_manifest(m, dir / "rt.json");
  const auto back = read_manifest(dir / "rt.json");
  CHECK(back.dataset_id == "rt");
  CHECK(back.records.size() == 3);
  CHECK(back.records[1].mask == m.records[1].mask);
  CHECK(back.records[2].pixels == m.records[2].pixels);
  CHECK(back.task->kind == HeadKind::segmentation);

  write_pgm(dir / "img.pgm", m.records[0].pixels);
  CHECK(read_pgm(dir / "img.pgm") == m.records[0].pixels);
  {
    std::ofstream f(dir / "ext.json");
    f << R"({"dataset_id":"ext","gray_mean":120,"gray_std":20,"task":null,
             "records":[{"path":"img.pgm"}],"splits":{"train":[0],"val":[],"test":[]}})";
  }
  const auto ext = read_manifest(dir / "ext.json");
  CHECK(ext.records[0].pixels == m.records[0].pixels);

  {
    std::ofstream f(dir / "trunc.pgm", std::ios::binary);
    f << "P5\n4 5\n255\nabc";
  }
  CHECK_THROWS_AS(read_pgm(dir / "trunc.pgm"), FormatError);
  {
    std::ofstream f(dir / "broken.json");
    f << "{ not json";
  }
  CHECK_THROWS_AS(read_manifest(dir / "broken.json"), FormatError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}
