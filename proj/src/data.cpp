#include "benet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "benet/png_io.hpp"
#include "benet/rng.hpp"

namespace benet {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix(seed ^ splitmix(stream));
}

std::uint64_t hash_values(const std::vector<real>& v) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  const size_t n = v.size() * sizeof(real);
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

real smoothstep(real hi, real lo, real x) {
  // 1 below lo, 0 above hi
  if (x <= lo) return 1;
  if (x >= hi) return 0;
  const real t = (hi - x) / (hi - lo);
  return t * t * (3 - 2 * t);
}

struct Pix {
  std::vector<real>* v;
  int h, w;
  real& operator()(int c, int y, int x) {
    return (*v)[static_cast<size_t>((static_cast<std::int64_t>(c) * h + y) * w + x)];
  }
};

void blend(Pix& img, int y, int x, real alpha, real r, real g, real b) {
  img(0, y, x) += alpha * (r - img(0, y, x));
  img(1, y, x) += alpha * (g - img(1, y, x));
  img(2, y, x) += alpha * (b - img(2, y, x));
}

Tensor clamp01_copy(std::vector<int> shape, std::vector<real> vals) {
  for (auto& x : vals) x = std::min(real(1), std::max(real(0), x));
  return Tensor::from(std::move(shape), std::move(vals));
}

struct Region {
  int y0, y1, x0, x1;  // half-open
};

Region random_face_region(Rng& rng, int size) {
  const int cx = static_cast<int>(rng.uniform(real(0.32) * size, real(0.68) * size));
  const int cy = static_cast<int>(rng.uniform(real(0.32) * size, real(0.68) * size));
  const int hw = static_cast<int>(rng.uniform(real(0.12) * size, real(0.20) * size));
  const int hh = static_cast<int>(rng.uniform(real(0.12) * size, real(0.20) * size));
  Region r;
  r.y0 = std::max(0, cy - hh);
  r.y1 = std::min(size, cy + hh + 1);
  r.x0 = std::max(0, cx - hw);
  r.x1 = std::min(size, cx + hw + 1);
  return r;
}

LabeledSample synth_face(std::uint64_t sample_seed, int size) {
  Rng rng(sample_seed);
  std::vector<real> vals(static_cast<size_t>(3) * size * size, real(0));
  Pix img{&vals, size, size};

  // background gradient between two palettes
  real c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(real(0.10), real(0.90));
    c1[c] = rng.uniform(real(0.10), real(0.90));
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const real t = (static_cast<real>(x) + static_cast<real>(y)) / (2 * (size - 1));
      for (int c = 0; c < 3; ++c) img(c, y, x) = c0[c] + (c1[c] - c0[c]) * t;
    }
  }

  // face ellipse
  const real cx = size * rng.uniform(real(0.44), real(0.56));
  const real cy = size * rng.uniform(real(0.44), real(0.56));
  const real ax = size * rng.uniform(real(0.28), real(0.40));
  const real ay = size * rng.uniform(real(0.34), real(0.46));
  const real skin_r = rng.uniform(real(0.62), real(0.92));
  const real skin_g = skin_r * rng.uniform(real(0.70), real(0.85));
  const real skin_b = skin_g * rng.uniform(real(0.70), real(0.90));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const real dx = (x - cx) / ax, dy = (y - cy) / ay;
      const real d = dx * dx + dy * dy;
      const real a = smoothstep(real(1.15), real(0.85), d);
      if (a <= 0) continue;
      const real shade = 1 - real(0.18) * d;  // mild radial shading
      blend(img, y, x, a, skin_r * shade, skin_g * shade, skin_b * shade);
    }
  }

  // eyes
  const real eye_dx = ax * rng.uniform(real(0.38), real(0.52));
  const real eye_dy = ay * rng.uniform(real(0.18), real(0.32));
  const real eye_r = size * rng.uniform(real(0.045), real(0.085));
  const real er = rng.uniform(real(0.02), real(0.25));
  const real eg = rng.uniform(real(0.02), real(0.25));
  const real eb = rng.uniform(real(0.05), real(0.45));
  for (int side = -1; side <= 1; side += 2) {
    const real ex = cx + side * eye_dx;
    const real ey = cy - eye_dy;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const real d = ((x - ex) * (x - ex) + (y - ey) * (y - ey)) / (eye_r * eye_r);
        const real a = smoothstep(real(1.4), real(0.6), d);
        if (a > 0) blend(img, y, x, a, er, eg, eb);
      }
    }
  }

  // mouth: flat ellipse below center
  const real my = cy + ay * rng.uniform(real(0.38), real(0.52));
  const real mw = ax * rng.uniform(real(0.35), real(0.55));
  const real mh = size * rng.uniform(real(0.025), real(0.055));
  const real mr = rng.uniform(real(0.45), real(0.80));
  const real mg = rng.uniform(real(0.05), real(0.25));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const real dx = (x - cx) / mw, dy = (y - my) / mh;
      const real d = dx * dx + dy * dy;
      const real a = smoothstep(real(1.4), real(0.7), d);
      if (a > 0) blend(img, y, x, a, mr, mg, mg * real(0.9));
    }
  }

  LabeledSample s;
  s.image = clamp01_copy({3, size, size}, std::move(vals));
  s.label = 0;
  s.domain = Domain::real;
  return s;
}

}  // namespace

std::string domain_name(Domain d) {
  switch (d) {
    case Domain::real: return "real";
    case Domain::spliceA: return "spliceA";
    case Domain::blurB: return "blurB";
    case Domain::noiseC: return "noiseC";
    case Domain::colorD: return "colorD";
  }
  throw std::logic_error("domain_name: bad enum");
}

Domain domain_from_name(const std::string& name) {
  if (name == "real") return Domain::real;
  if (name == "spliceA") return Domain::spliceA;
  if (name == "blurB") return Domain::blurB;
  if (name == "noiseC") return Domain::noiseC;
  if (name == "colorD") return Domain::colorD;
  throw std::invalid_argument("unknown domain tag '" + name + "'");
}

std::vector<LabeledSample> generate_real(std::uint64_t seed, int count, int size) {
  if (count < 0 || size < 8) throw std::invalid_argument("generate_real: bad count/size");
  std::vector<LabeledSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    LabeledSample s = synth_face(mix_seed(seed, static_cast<std::uint64_t>(i)), size);
    s.id = "real_" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

LabeledSample forge(const LabeledSample& sample, Domain domain, std::uint64_t seed,
                    const ForgeStrengths& strengths) {
  if (sample.label != 0 || sample.domain != Domain::real) {
    throw std::invalid_argument("forge: input must be a real sample");
  }
  if (domain == Domain::real) throw std::invalid_argument("forge: target domain must be a fake domain");
  const int size = sample.image.extent(1);
  Rng rng(mix_seed(seed, 0xF0ull + static_cast<std::uint64_t>(domain)));

  std::vector<real> vals = sample.image.values();
  Pix img{&vals, size, size};

  switch (domain) {
    case Domain::spliceA: {
      // paste a face patch from a donor portrait
      LabeledSample donor = synth_face(mix_seed(seed, 0xD00D), size);
      std::vector<real> dvals = donor.image.values();
      Pix dst_donor{&dvals, size, size};
      const int ps = std::max(4, static_cast<int>(strengths.splice_patch_frac * size *
                                                  rng.uniform(real(0.7), real(1.1))));
      const int sy = std::clamp(static_cast<int>(rng.uniform(real(0.30) * size, real(0.65) * size)) - ps / 2, 0, size - ps);
      const int sx = std::clamp(static_cast<int>(rng.uniform(real(0.30) * size, real(0.65) * size)) - ps / 2, 0, size - ps);
      const int dy = std::clamp(static_cast<int>(rng.uniform(real(0.30) * size, real(0.65) * size)) - ps / 2, 0, size - ps);
      const int dx = std::clamp(static_cast<int>(rng.uniform(real(0.30) * size, real(0.65) * size)) - ps / 2, 0, size - ps);
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x)
          for (int c = 0; c < 3; ++c) img(c, dy + y, dx + x) = dst_donor(c, sy + y, sx + x);
      break;
    }
    case Domain::blurB: {
      const Region r = random_face_region(rng, size);
      const Tensor blurred = gaussian_blur(sample.image, strengths.blur_sigma);
      const auto& bv = blurred.values();
      const std::int64_t plane = static_cast<std::int64_t>(size) * size;
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
          for (int c = 0; c < 3; ++c)
            img(c, y, x) = bv[static_cast<size_t>(c * plane + static_cast<std::int64_t>(y) * size + x)];
      break;
    }
    case Domain::noiseC: {
      const Region r = random_face_region(rng, size);
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
          for (int c = 0; c < 3; ++c)
            img(c, y, x) += strengths.noise_amplitude * (2 * rng.uniform() - 1);
      break;
    }
    case Domain::colorD: {
      const Region r = random_face_region(rng, size);
      real scale[3], offset[3];
      for (int c = 0; c < 3; ++c) {
        const real dir = rng.uniform() < real(0.5) ? real(-1) : real(1);
        scale[c] = 1 + dir * strengths.color_shift * rng.uniform(real(0.6), real(1.0));
        offset[c] = strengths.color_shift * real(0.5) * (2 * rng.uniform() - 1);
      }
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
          for (int c = 0; c < 3; ++c) img(c, y, x) = img(c, y, x) * scale[c] + offset[c];
      break;
    }
    case Domain::real: break;  // unreachable
  }

  LabeledSample out;
  out.image = clamp01_copy({3, size, size}, std::move(vals));
  out.label = 1;
  out.domain = domain;
  out.id = sample.id + ":" + domain_name(domain);
  return out;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  Dataset ds;
  std::uint64_t stream = 0;
  auto next_real = [&](int size) { return synth_face(mix_seed(cfg.seed, stream++), size); };
  auto add = [&](std::vector<LabeledSample>& split, const char* split_name, Domain d, int count) {
    for (int i = 0; i < count; ++i) {
      LabeledSample s = next_real(cfg.size);
      if (d != Domain::real) {
        s = forge(s, d, mix_seed(cfg.seed, 0xABCD0000ull + stream++), cfg.strengths);
      }
      s.id = std::string(split_name) + "_" + domain_name(d) + "_" + std::to_string(i);
      split.push_back(std::move(s));
    }
  };

  add(ds.train, "train", Domain::real, cfg.train_real);
  add(ds.train, "train", Domain::spliceA, cfg.train_per_known_fake);
  add(ds.train, "train", Domain::blurB, cfg.train_per_known_fake);
  add(ds.val, "val", Domain::real, cfg.val_real);
  add(ds.val, "val", Domain::spliceA, cfg.val_per_known_fake);
  add(ds.val, "val", Domain::blurB, cfg.val_per_known_fake);
  add(ds.test, "test", Domain::real, cfg.test_real);
  add(ds.test, "test", Domain::spliceA, cfg.test_per_domain);
  add(ds.test, "test", Domain::blurB, cfg.test_per_domain);
  add(ds.test, "test", Domain::noiseC, cfg.test_per_domain);
  add(ds.test, "test", Domain::colorD, cfg.test_per_domain);
  return ds;
}

// ---- manifest -------------------------------------------------------------------

void Manifest::validate() const {
  std::set<std::string> paths;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!paths.insert(r.path).second) {
      throw std::invalid_argument("manifest: duplicate path '" + r.path + "' at row " +
                                  std::to_string(i + 1));
    }
    if (r.label != 0 && r.label != 1) {
      throw std::invalid_argument("manifest: bad label at row " + std::to_string(i + 1));
    }
    const Domain d = domain_from_name(r.domain);
    if ((r.label == 0) != (d == Domain::real)) {
      throw std::invalid_argument("manifest: label/domain mismatch at row " +
                                  std::to_string(i + 1) + " (" + r.domain + ")");
    }
    if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw std::invalid_argument("manifest: unknown split '" + r.split + "' at row " +
                                  std::to_string(i + 1));
    }
  }
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  manifest.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
  f << "path,label,domain,split\n";
  for (const auto& r : manifest.rows) {
    f << r.path << "," << r.label << "," << r.domain << "," << r.split << "\n";
  }
  if (!f) throw std::runtime_error("write_manifest: write failed for " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (lineno == 1) {
      if (line != "path,label,domain,split") {
        throw std::runtime_error("read_manifest: " + path + ":1: bad header '" + line + "'");
      }
      continue;
    }
    if (cols.size() != 4) {
      throw std::runtime_error("read_manifest: " + path + ":" + std::to_string(lineno) +
                               ": expected 4 columns, got " + std::to_string(cols.size()));
    }
    ManifestRow r;
    r.path = cols[0];
    try {
      r.label = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw std::runtime_error("read_manifest: " + path + ":" + std::to_string(lineno) +
                               ": bad label '" + cols[1] + "'");
    }
    r.domain = cols[2];
    r.split = cols[3];
    m.rows.push_back(std::move(r));
  }
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error("read_manifest: " + path + ": " + e.what());
  }
  return m;
}

Manifest write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  auto emit = [&](const std::vector<LabeledSample>& split, const char* split_name) {
    for (const auto& s : split) {
      const std::string file = s.id + ".png";
      save_png(dir + "/" + file, s.image);
      m.rows.push_back({file, s.label, domain_name(s.domain), split_name});
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");
  write_manifest(dir + "/manifest.csv", m);
  return m;
}

Dataset load_dataset(const std::string& dir, const Manifest& manifest) {
  manifest.validate();
  Dataset ds;
  for (const auto& r : manifest.rows) {
    LabeledSample s;
    s.image = load_png(dir + "/" + r.path);
    s.label = r.label;
    s.domain = domain_from_name(r.domain);
    s.id = r.path.size() > 4 ? r.path.substr(0, r.path.size() - 4) : r.path;
    if (r.split == "train") ds.train.push_back(std::move(s));
    else if (r.split == "val") ds.val.push_back(std::move(s));
    else ds.test.push_back(std::move(s));
  }
  return ds;
}

// ---- perturbations ---------------------------------------------------------------

std::string perturbation_name(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::saturation: return "saturation";
    case PerturbationKind::contrast: return "contrast";
    case PerturbationKind::blockwise: return "blockwise";
    case PerturbationKind::gaussian_noise: return "gaussian_noise";
    case PerturbationKind::blur: return "blur";
    case PerturbationKind::pixelation: return "pixelation";
  }
  throw std::logic_error("perturbation_name: bad enum");
}

PerturbationKind perturbation_from_name(const std::string& name) {
  for (int i = 0; i < kPerturbationKinds; ++i) {
    const auto k = static_cast<PerturbationKind>(i);
    if (perturbation_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown perturbation kind '" + name + "'");
}

Tensor gaussian_blur(const Tensor& image, real sigma) {
  if (image.dim() != 3) throw std::invalid_argument("gaussian_blur: expects (C,H,W)");
  if (sigma <= 0) return image;
  const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<real> kernel(static_cast<size_t>(2 * radius + 1));
  real ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const real v = std::exp(-real(0.5) * i * i / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = v;
    ksum += v;
  }
  for (auto& v : kernel) v /= ksum;

  const auto& src = image.values();
  std::vector<real> tmp(src.size()), out(src.size());
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  // horizontal pass (clamp-to-edge)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        real acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += kernel[static_cast<size_t>(i + radius)] *
                 src[static_cast<size_t>(ch * plane + static_cast<std::int64_t>(y) * w + xx)];
        }
        tmp[static_cast<size_t>(ch * plane + static_cast<std::int64_t>(y) * w + x)] = acc;
      }
    }
  }
  // vertical pass
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        real acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += kernel[static_cast<size_t>(i + radius)] *
                 tmp[static_cast<size_t>(ch * plane + static_cast<std::int64_t>(yy) * w + x)];
        }
        out[static_cast<size_t>(ch * plane + static_cast<std::int64_t>(y) * w + x)] = acc;
      }
    }
  }
  return Tensor::from(image.shape(), std::move(out));
}

Tensor pixelate(const Tensor& image, int block) {
  if (image.dim() != 3) throw std::invalid_argument("pixelate: expects (C,H,W)");
  if (block < 1) throw std::invalid_argument("pixelate: block must be >= 1");
  if (block == 1) return image;
  const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::vector<real> out = image.values();
  Pix img{&out, h, w};
  for (int ch = 0; ch < c; ++ch) {
    for (int y0 = 0; y0 < h; y0 += block) {
      for (int x0 = 0; x0 < w; x0 += block) {
        const int y1 = std::min(h, y0 + block), x1 = std::min(w, x0 + block);
        real acc = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += img(ch, y, x);
        const real avg = acc / (static_cast<real>(y1 - y0) * static_cast<real>(x1 - x0));
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) img(ch, y, x) = avg;
      }
    }
  }
  return Tensor::from(image.shape(), std::move(out));
}

Tensor perturb(const Tensor& image, const PerturbationSpec& spec) {
  if (image.dim() != 3) throw std::invalid_argument("perturb: expects (C,H,W)");
  if (spec.severity < 1 || spec.severity > kPerturbationSeverities) {
    throw std::invalid_argument("perturb: severity must be in 1..5, got " +
                                std::to_string(spec.severity));
  }
  const int idx = spec.severity - 1;
  const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  switch (spec.kind) {
    case PerturbationKind::saturation: {
      static constexpr real f[] = {0.80, 0.60, 0.45, 0.30, 0.15};
      std::vector<real> out(image.values().size());
      const auto& src = image.values();
      for (std::int64_t i = 0; i < plane; ++i) {
        const real r = src[static_cast<size_t>(i)];
        const real g = src[static_cast<size_t>(plane + i)];
        const real b = src[static_cast<size_t>(2 * plane + i)];
        const real gray = real(0.299) * r + real(0.587) * g + real(0.114) * b;
        out[static_cast<size_t>(i)] = gray + f[idx] * (r - gray);
        out[static_cast<size_t>(plane + i)] = gray + f[idx] * (g - gray);
        out[static_cast<size_t>(2 * plane + i)] = gray + f[idx] * (b - gray);
      }
      return clamp01_copy(image.shape(), std::move(out));
    }
    case PerturbationKind::contrast: {
      static constexpr real f[] = {0.85, 0.70, 0.55, 0.40, 0.25};
      std::vector<real> out(image.values().size());
      const auto& src = image.values();
      for (size_t i = 0; i < src.size(); ++i) out[i] = real(0.5) + f[idx] * (src[i] - real(0.5));
      return clamp01_copy(image.shape(), std::move(out));
    }
    case PerturbationKind::blockwise: {
      static constexpr int counts[] = {1, 2, 4, 6, 8};
      const int bs = std::max(2, std::min(h, w) / 8);
      Rng rng(mix_seed(hash_values(image.values()), 0xB10C));
      std::vector<real> out = image.values();
      Pix img{&out, h, w};
      // nested placements: higher severities extend the lower ones
      for (int b = 0; b < counts[idx]; ++b) {
        const int y0 = rng.uniform_int(0, h - bs);
        const int x0 = rng.uniform_int(0, w - bs);
        for (int y = y0; y < y0 + bs; ++y)
          for (int x = x0; x < x0 + bs; ++x)
            for (int ch = 0; ch < c; ++ch) img(ch, y, x) = real(0.5);
      }
      return clamp01_copy(image.shape(), std::move(out));
    }
    case PerturbationKind::gaussian_noise: {
      static constexpr real sigma[] = {0.02, 0.04, 0.06, 0.08, 0.10};
      Rng rng(mix_seed(hash_values(image.values()), 0x9015E));
      std::vector<real> out = image.values();
      // shared unit field scaled by sigma keeps severity monotone pointwise
      for (auto& x : out) x += sigma[idx] * rng.normal();
      return clamp01_copy(image.shape(), std::move(out));
    }
    case PerturbationKind::blur: {
      static constexpr real sigma[] = {0.5, 0.8, 1.2, 1.7, 2.3};
      return clamp01_copy(image.shape(), gaussian_blur(image, sigma[idx]).values());
    }
    case PerturbationKind::pixelation: {
      static constexpr int blocks[] = {2, 3, 4, 6, 8};
      return pixelate(image, blocks[idx]);
    }
  }
  throw std::logic_error("perturb: bad kind");
}

}  // namespace benet
