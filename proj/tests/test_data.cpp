#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "benet/data.hpp"
#include "benet/png_io.hpp"
#include "benet/rng.hpp"

using namespace benet;

namespace {

real mean_abs_diff(const Tensor& a, const Tensor& b) {
  real acc = 0;
  for (size_t i = 0; i < a.values().size(); ++i) acc += std::abs(a.values()[i] - b.values()[i]);
  return acc / static_cast<real>(a.numel());
}

int count_diff_pixels(const Tensor& a, const Tensor& b) {
  const int h = a.extent(1), w = a.extent(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  int n = 0;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      if (a.values()[static_cast<size_t>(c * plane + i)] !=
          b.values()[static_cast<size_t>(c * plane + i)]) {
        ++n;
        break;
      }
    }
  }
  return n;
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("benet_test_") + tag);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("generate_real is deterministic and bounded") {
  const auto a = generate_real(42, 5, 32);
  const auto b = generate_real(42, 5, 32);
  REQUIRE(a.size() == 5);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.values() == b[i].image.values());
    CHECK(a[i].label == 0);
    CHECK(a[i].domain == Domain::real);
    for (real v : a[i].image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("different seeds give visibly different portraits") {
  const auto a = generate_real(1, 100, 32);
  const auto b = generate_real(2, 100, 32);
  for (size_t i = 0; i < a.size(); ++i) {
    const int differing = count_diff_pixels(a[i].image, b[i].image);
    CHECK(differing >= 32 * 32 / 100);  // at least 1% of pixels
  }
}

TEST_CASE("forge keeps pixels outside the tampered region and changes them inside") {
  const auto reals = generate_real(7, 100, 32);
  for (Domain d : {Domain::spliceA, Domain::blurB, Domain::colorD, Domain::noiseC}) {
    real sum_inside = 0;
    int total_diff = 0;
    for (size_t i = 0; i < reals.size(); ++i) {
      const LabeledSample fake = forge(reals[i], d, 1000 + static_cast<std::uint64_t>(i));
      CHECK(fake.label == 1);
      CHECK(fake.domain == d);
      const int diff = count_diff_pixels(reals[i].image, fake.image);
      total_diff += diff;
      CHECK(diff < 32 * 32);  // some pixels are untouched: tampering is local
      // mean |difference| restricted to changed pixels
      real acc = 0;
      int cnt = 0;
      const std::int64_t plane = 32 * 32;
      for (std::int64_t px = 0; px < plane; ++px) {
        real dsum = 0;
        bool changed = false;
        for (int c = 0; c < 3; ++c) {
          const real delta = std::abs(fake.image.values()[static_cast<size_t>(c * plane + px)] -
                                      reals[i].image.values()[static_cast<size_t>(c * plane + px)]);
          dsum += delta;
          changed = changed || delta != 0;
        }
        if (changed) {
          acc += dsum / 3;
          ++cnt;
        }
      }
      if (cnt > 0) sum_inside += acc / cnt;
    }
    CHECK(total_diff > 0);
    CHECK(sum_inside / static_cast<real>(reals.size()) > 0.02);
  }
}

TEST_CASE("noiseC with zero amplitude is the identity") {
  const auto reals = generate_real(9, 3, 32);
  ForgeStrengths strengths;
  strengths.noise_amplitude = 0;
  for (const auto& r : reals) {
    const LabeledSample fake = forge(r, Domain::noiseC, 5, strengths);
    CHECK(fake.image.values() == r.image.values());
  }
}

TEST_CASE("forge is deterministic under its seed and rejects bad input") {
  const auto reals = generate_real(11, 2, 32);
  const LabeledSample a = forge(reals[0], Domain::spliceA, 77);
  const LabeledSample b = forge(reals[0], Domain::spliceA, 77);
  CHECK(a.image.values() == b.image.values());
  CHECK_THROWS_AS(forge(a, Domain::blurB, 1), std::invalid_argument);
}

TEST_CASE("generate_dataset respects the known/unknown domain split") {
  DatasetConfig cfg;
  cfg.size = 16;
  cfg.train_real = 6;
  cfg.train_per_known_fake = 3;
  cfg.val_real = 2;
  cfg.val_per_known_fake = 1;
  cfg.test_real = 4;
  cfg.test_per_domain = 2;
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() == 12);
  CHECK(ds.val.size() == 4);
  CHECK(ds.test.size() == 12);
  for (const auto& s : ds.train) {
    CHECK(s.domain != Domain::noiseC);
    CHECK(s.domain != Domain::colorD);
  }
  for (const auto& s : ds.val) {
    CHECK(s.domain != Domain::noiseC);
    CHECK(s.domain != Domain::colorD);
  }
  int held_out = 0;
  for (const auto& s : ds.test) held_out += (s.domain == Domain::noiseC || s.domain == Domain::colorD);
  CHECK(held_out == 4);
  for (const auto& s : ds.train) CHECK((s.label == 0) == (s.domain == Domain::real));
}

TEST_CASE("perturb severity schedules are monotone in distortion energy") {
  const auto images = generate_real(13, 20, 32);
  for (int k = 0; k < kPerturbationKinds; ++k) {
    const auto kind = static_cast<PerturbationKind>(k);
    real prev = -1;
    for (int sev = 1; sev <= kPerturbationSeverities; ++sev) {
      real energy = 0;
      for (const auto& s : images) {
        const Tensor p = perturb(s.image, {kind, sev});
        CHECK(p.shape() == s.image.shape());
        for (real v : p.values()) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
        energy += mean_abs_diff(p, s.image);
      }
      energy /= static_cast<real>(images.size());
      CHECK(energy >= prev);
      prev = energy;
    }
  }
}

TEST_CASE("pixelate block one is the identity") {
  const auto images = generate_real(15, 2, 32);
  for (const auto& s : images) {
    const Tensor p = pixelate(s.image, 1);
    CHECK(p.values() == s.image.values());
  }
}

TEST_CASE("contrast perturbation inverts exactly away from the clamp") {
  const auto images = generate_real(17, 3, 32);
  const real factors[] = {0.85, 0.70, 0.55, 0.40, 0.25};
  for (const auto& s : images) {
    for (int sev = 1; sev <= 5; ++sev) {
      const Tensor p = perturb(s.image, {PerturbationKind::contrast, sev});
      real worst = 0;
      for (size_t i = 0; i < p.values().size(); ++i) {
        const real recovered = 0.5 + (p.values()[i] - 0.5) / factors[sev - 1];
        worst = std::max(worst, std::abs(recovered - s.image.values()[i]));
      }
      CHECK(worst < 1e-9);
    }
  }
}

TEST_CASE("perturb rejects bad severities") {
  const auto images = generate_real(19, 1, 16);
  CHECK_THROWS_AS(perturb(images[0].image, {PerturbationKind::blur, 0}), std::invalid_argument);
  CHECK_THROWS_AS(perturb(images[0].image, {PerturbationKind::blur, 6}), std::invalid_argument);
}

TEST_CASE("perturb is pure in image and spec") {
  const auto images = generate_real(21, 2, 32);
  for (int k = 0; k < kPerturbationKinds; ++k) {
    const PerturbationSpec spec{static_cast<PerturbationKind>(k), 3};
    const Tensor a = perturb(images[0].image, spec);
    const Tensor b = perturb(images[0].image, spec);
    CHECK(a.values() == b.values());
  }
}

TEST_CASE("png round trip is exact at 8-bit resolution") {
  const auto images = generate_real(23, 2, 32);
  const auto dir = temp_dir("png");
  const std::string path = (dir / "roundtrip.png").string();
  for (const auto& s : images) {
    save_png(path, s.image);
    const Tensor back = load_png(path);
    REQUIRE(back.shape() == s.image.shape());
    real worst = 0;
    for (size_t i = 0; i < back.values().size(); ++i) {
      worst = std::max(worst, std::abs(back.values()[i] - s.image.values()[i]));
    }
    CHECK(worst <= 0.5 / 255.0 + 1e-12);

    // a second trip through quantized values is bit-exact
    save_png(path, back);
    const Tensor again = load_png(path);
    CHECK(again.values() == back.values());
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_png rejects garbage") {
  const auto dir = temp_dir("badpng");
  const std::string path = (dir / "junk.png").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("definitely not a png", f);
  std::fclose(f);
  CHECK_THROWS_WITH_AS(load_png(path), doctest::Contains("bad signature"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round trip preserves rows and enforces invariants") {
  const auto dir = temp_dir("manifest");
  Manifest m;
  m.rows.push_back({"a.png", 0, "real", "train"});
  m.rows.push_back({"b.png", 1, "spliceA", "train"});
  m.rows.push_back({"c.png", 1, "noiseC", "test"});
  const std::string path = (dir / "manifest.csv").string();
  write_manifest(path, m);
  const Manifest back = read_manifest(path);
  REQUIRE(back.rows.size() == m.rows.size());
  for (size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(back.rows[i].path == m.rows[i].path);
    CHECK(back.rows[i].label == m.rows[i].label);
    CHECK(back.rows[i].domain == m.rows[i].domain);
    CHECK(back.rows[i].split == m.rows[i].split);
  }

  Manifest dup = m;
  dup.rows.push_back({"a.png", 0, "real", "val"});
  CHECK_THROWS_WITH_AS(write_manifest(path, dup), doctest::Contains("duplicate"),
                       std::invalid_argument);

  Manifest inconsistent = m;
  inconsistent.rows.push_back({"d.png", 0, "spliceA", "train"});  // label says real
  CHECK_THROWS_AS(write_manifest(path, inconsistent), std::invalid_argument);

  // malformed rows are reported with their line number
  std::ofstream f(path, std::ios::trunc);
  f << "path,label,domain,split\nok.png,0,real,train\nbroken line without commas\n";
  f.close();
  CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains(":3"), std::runtime_error);

  std::ofstream g(path, std::ios::trunc);
  g << "wrong,header,row,here\n";
  g.close();
  CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("header"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset write and load round trip") {
  DatasetConfig cfg;
  cfg.size = 16;
  cfg.train_real = 2;
  cfg.train_per_known_fake = 1;
  cfg.val_real = 1;
  cfg.val_per_known_fake = 1;
  cfg.test_real = 1;
  cfg.test_per_domain = 1;
  const Dataset ds = generate_dataset(cfg);
  const auto dir = temp_dir("dataset");
  const Manifest m = write_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string(), m);
  REQUIRE(back.train.size() == ds.train.size());
  REQUIRE(back.val.size() == ds.val.size());
  REQUIRE(back.test.size() == ds.test.size());
  // pixel equality within 8-bit quantization
  for (size_t i = 0; i < ds.train.size(); ++i) {
    real worst = 0;
    for (size_t j = 0; j < ds.train[i].image.values().size(); ++j) {
      worst = std::max(worst, std::abs(ds.train[i].image.values()[j] -
                                       back.train[i].image.values()[j]));
    }
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
    CHECK(back.train[i].label == ds.train[i].label);
    CHECK(back.train[i].domain == ds.train[i].domain);
  }
  std::filesystem::remove_all(dir);
}
