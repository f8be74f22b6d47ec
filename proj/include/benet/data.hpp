#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "benet/tensor.hpp"

namespace benet {

enum class Domain { real, spliceA, blurB, noiseC, colorD };

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& name);  // throws on unknown tag

struct LabeledSample {
  Tensor image;  // (3,H,W) in [0,1]
  int label = 0;
  Domain domain = Domain::real;
  std::string id;
};

struct ManifestRow {
  std::string path;
  int label = 0;
  std::string domain;
  std::string split;  // train | val | test
};

struct Manifest {
  std::vector<ManifestRow> rows;
  void validate() const;  // unique paths, known tags, label/domain consistency
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// ---- synthetic face-like data -------------------------------------------------

struct ForgeStrengths {
  real splice_patch_frac = 0.40;  // patch edge as a fraction of image extent
  real blur_sigma = 2.0;
  real noise_amplitude = 0.25;
  real color_shift = 0.35;
};

// Procedural portraits: gradient background, elliptical face, eyes, mouth,
// randomized geometry and palette. Deterministic under seed.
std::vector<LabeledSample> generate_real(std::uint64_t seed, int count, int size);

// Produces a fake from a real sample. spliceA pastes a face patch from a
// donor portrait synthesized from the seed; blurB / noiseC / colorD tamper a
// random facial subregion in place.
LabeledSample forge(const LabeledSample& sample, Domain domain, std::uint64_t seed,
                    const ForgeStrengths& strengths = {});

struct DatasetConfig {
  int size = 32;
  std::uint64_t seed = 1;
  // train/val draw only from the known domains (real, spliceA, blurB)
  int train_real = 500;
  int train_per_known_fake = 250;
  int val_real = 100;
  int val_per_known_fake = 50;
  int test_real = 160;
  int test_per_domain = 60;  // each of spliceA, blurB, noiseC, colorD
  ForgeStrengths strengths;
};

struct Dataset {
  std::vector<LabeledSample> train, val, test;
};

// Known/unknown protocol: noiseC and colorD never appear in train or val.
Dataset generate_dataset(const DatasetConfig& cfg);

// Writes PNGs plus manifest.csv under dir; returns the manifest.
Manifest write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir, const Manifest& manifest);

// ---- perturbation suite --------------------------------------------------------

enum class PerturbationKind { saturation, contrast, blockwise, gaussian_noise, blur, pixelation };

constexpr int kPerturbationKinds = 6;
constexpr int kPerturbationSeverities = 5;

std::string perturbation_name(PerturbationKind k);
PerturbationKind perturbation_from_name(const std::string& name);

struct PerturbationSpec {
  PerturbationKind kind;
  int severity;  // 1..5
};

// Severity schedules (severity 1..5):
//   saturation factor   0.80 0.60 0.45 0.30 0.15   (toward grayscale)
//   contrast factor     0.85 0.70 0.55 0.40 0.25   (toward mid-gray, pivot 0.5)
//   blockwise count     1 2 4 6 8                  (nested gray blocks)
//   gaussian noise std  0.02 0.04 0.06 0.08 0.10   (shared noise field)
//   blur sigma          0.5 0.8 1.2 1.7 2.3
//   pixelation block    2 3 4 6 8
// Pure in (image, spec): stochastic kinds derive their stream from a hash of
// the pixel data. Output is clamped to [0,1] and keeps the input shape.
Tensor perturb(const Tensor& image, const PerturbationSpec& spec);

// Exposed building block: block-average downsample + nearest upsample.
// block == 1 is the identity.
Tensor pixelate(const Tensor& image, int block);

// Exposed for blur-based forgeries and tests.
Tensor gaussian_blur(const Tensor& image, real sigma);

}  // namespace benet
