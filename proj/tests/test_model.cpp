#include <doctest.h>

#include <cmath>
#include <vector>

#include "benet/losses.hpp"
#include "benet/model.hpp"
#include "benet/rng.hpp"

using namespace benet;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, real lo = -1, real hi = 1) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  std::vector<real> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// explicit loops over channels, positions, and patch entries
std::vector<real> lsa_oracle(const Tensor& q, const Tensor& kv, int patch) {
  const int c = q.extent(0), h = q.extent(1), w = q.extent(2);
  std::vector<real> out(q.values().size());
  auto at = [&](const Tensor& t, int ch, int y, int x) {
    return t.values()[static_cast<size_t>((ch * h + y) * w + x)];
  };
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const real alpha = at(q, ch, y, x);
        const int py = (y / patch) * patch, px = (x / patch) * patch;
        std::vector<real> logits, zs;
        for (int dy = 0; dy < patch; ++dy) {
          for (int dx = 0; dx < patch; ++dx) {
            const real z = at(kv, ch, py + dy, px + dx);
            zs.push_back(z);
            logits.push_back(alpha * z);
          }
        }
        real mx = logits[0];
        for (real l : logits) mx = std::max(mx, l);
        real den = 0;
        for (real l : logits) den += std::exp(l - mx);
        real beta = 0;
        for (size_t i = 0; i < zs.size(); ++i) beta += std::exp(logits[i] - mx) / den * zs[i];
        out[static_cast<size_t>((ch * h + y) * w + x)] = beta;
      }
    }
  }
  return out;
}

BENetModel tiny_model(std::uint64_t seed = 5, bool use_lsa = true) {
  EncoderDecoderConfig cfg;
  cfg.input_extent = 16;
  cfg.stage_channels = {4, 8};
  cfg.patch = 2;
  cfg.classifier_hidden = 16;
  cfg.use_lsa = use_lsa;
  return BENetModel(cfg, seed);
}

}  // namespace

TEST_CASE("lsa_attention_map matches the brute-force oracle") {
  Rng rng(211);
  for (int trial = 0; trial < 50; ++trial) {
    const int patch = (trial % 2 == 0) ? 2 : 4;
    const Tensor q = random_tensor(rng, {2, 8, 8});
    const Tensor kv = random_tensor(rng, {2, 8, 8});
    const Tensor got = lsa_attention_map(q, kv, patch);
    const auto expect = lsa_oracle(q, kv, patch);
    REQUIRE(got.values().size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(got.values()[i] - expect[i]) < 1e-6);
    }
  }
}

TEST_CASE("lsa_attention_map zero query gives the patch mean") {
  const Tensor q = Tensor::zeros({1, 2, 2});
  const Tensor kv = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  const Tensor out = lsa_attention_map(q, kv, 2);
  for (real v : out.values()) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("lsa_attention_map constant key/value collapses to that constant") {
  Rng rng(223);
  const Tensor q = random_tensor(rng, {2, 4, 4});
  const Tensor kv = Tensor::full({2, 4, 4}, 0.7);
  const Tensor out = lsa_attention_map(q, kv, 2);
  for (real v : out.values()) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("lsa_attention_map worked softmax case") {
  const Tensor q = Tensor::full({1, 2, 2}, 1.0);
  const Tensor kv = Tensor::from({1, 2, 2}, {0, std::log(2.0), 0, 0});
  const Tensor out = lsa_attention_map(q, kv, 2);
  for (real v : out.values()) CHECK(v == doctest::Approx(0.4 * std::log(2.0)));
}

TEST_CASE("lsa_attention_map rejects patch that does not divide the extent") {
  const Tensor q = Tensor::zeros({1, 6, 6});
  CHECK_THROWS_AS(lsa_attention_map(q, q, 4), std::invalid_argument);
}

TEST_CASE("attention is local to its patch") {
  Rng rng(227);
  const Tensor q = random_tensor(rng, {1, 4, 4});
  Tensor kv = random_tensor(rng, {1, 4, 4});
  const Tensor base = lsa_attention_map(q, kv, 2);
  // poke an entry in the top-left patch; other patches must be untouched
  Tensor poked = Tensor::from(kv.shape(), kv.values());
  poked.values_mut()[0] += 0.5;
  const Tensor after = lsa_attention_map(q, poked, 2);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const size_t i = static_cast<size_t>(y * 4 + x);
      if (y < 2 && x < 2) continue;  // the modified patch
      CHECK(after.values()[i] == base.values()[i]);
    }
  }
}

TEST_CASE("attention is channel-permutation equivariant") {
  Rng rng(229);
  const Tensor q = random_tensor(rng, {3, 4, 4});
  const Tensor kv = random_tensor(rng, {3, 4, 4});
  const Tensor out = lsa_attention_map(q, kv, 2);

  const std::vector<int> perm = {2, 0, 1};
  auto permute = [&perm](const Tensor& t) {
    std::vector<real> v(t.values().size());
    const size_t plane = 16;
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < plane; ++i) {
        v[static_cast<size_t>(c) * plane + i] =
            t.values()[static_cast<size_t>(perm[static_cast<size_t>(c)]) * plane + i];
      }
    }
    return Tensor::from(t.shape(), std::move(v));
  };
  const Tensor out_perm = lsa_attention_map(permute(q), permute(kv), 2);
  const Tensor expect = permute(out);
  for (size_t i = 0; i < expect.values().size(); ++i) {
    CHECK(out_perm.values()[i] == expect.values()[i]);
  }
}

TEST_CASE("bias_image basics") {
  const Tensor x = Tensor::from({1, 1, 1, 2}, {1, 0});
  const Tensor xo = Tensor::from({1, 1, 1, 2}, {0, 1});
  const Tensor b = bias_image(x, xo);
  CHECK(b.values()[0] == 1.0);
  CHECK(b.values()[1] == 1.0);

  CHECK_THROWS_AS(bias_image(x, Tensor::zeros({1, 1, 2, 2})), std::invalid_argument);

  Rng rng(233);
  const Tensor a = random_tensor(rng, {1, 2, 3, 3});
  const Tensor c = random_tensor(rng, {1, 2, 3, 3});
  const Tensor d = bias_image(a, c);
  for (size_t i = 0; i < d.values().size(); ++i) {
    CHECK(d.values()[i] == std::abs(a.values()[i] - c.values()[i]));
  }
}

TEST_CASE("reconstruct shape contract and zeroed-final-stage midpoint") {
  BENetModel model = tiny_model();
  Rng rng(239);
  const Tensor x = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  ReconstructResult r = model.reconstruct(x);
  CHECK(r.x_o.shape() == x.shape());
  REQUIRE(r.taps.size() == 2);
  REQUIRE(r.decoder_taps.size() == 2);
  for (size_t k = 0; k < r.taps.size(); ++k) {
    CHECK(r.taps[k].shape() == r.decoder_taps[k].shape());
  }
  CHECK(r.z.shape() == std::vector<int>{2, 8, 4, 4});

  // zero the final decoder stage: sigmoid(0) = 0.5 everywhere
  BENetModel zeroed = tiny_model();
  for (auto& [name, t] : zeroed.parameters()) {
    if (name == "decoder.1.weight" || name == "decoder.1.bias") {
      for (auto& v : t.values_mut()) v = 0;
    }
  }
  ReconstructResult rz = zeroed.reconstruct(x);
  for (real v : rz.x_o.values()) CHECK(v == 0.5);
}

TEST_CASE("reconstruct rejects inputs that do not match the config") {
  BENetModel model = tiny_model();
  CHECK_THROWS_AS(model.reconstruct(Tensor::zeros({1, 3, 8, 8})), std::invalid_argument);
  CHECK_THROWS_AS(model.reconstruct(Tensor::zeros({1, 1, 16, 16})), std::invalid_argument);
}

TEST_CASE("lsa_aggregate keeps the bottleneck shape and honours zero projections") {
  BENetModel model = tiny_model();
  Rng rng(241);
  const Tensor x = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  ReconstructResult r = model.reconstruct(x);
  auto [maps, s] = model.lsa_aggregate(r.taps, r.decoder_taps, r.z);
  CHECK(s.shape() == r.z.shape());
  CHECK(maps.size() == 2);

  // zero projections make every attention map the mean of a zero patch
  BENetModel zeroed = tiny_model();
  for (auto& [name, t] : zeroed.parameters()) {
    if (name.rfind("lsa_proj.", 0) == 0) {
      for (auto& v : t.values_mut()) v = 0;
    }
  }
  ReconstructResult rz = zeroed.reconstruct(x);
  auto [mz, sz] = zeroed.lsa_aggregate(rz.taps, rz.decoder_taps, rz.z);
  for (size_t i = 0; i < sz.values().size(); ++i) {
    CHECK(sz.values()[i] == rz.z.values()[i]);
  }

  std::vector<Tensor> short_taps(r.taps.begin(), r.taps.begin() + 1);
  CHECK_THROWS_AS(model.lsa_aggregate(short_taps, r.decoder_taps, r.z), std::invalid_argument);
}

TEST_CASE("single-scale aggregate equals attention of projected taps plus z") {
  EncoderDecoderConfig cfg;
  cfg.input_extent = 8;
  cfg.stage_channels = {6};
  cfg.patch = 2;
  cfg.classifier_hidden = 8;
  BENetModel model(cfg, 17);
  // identity 1x1 projection (6 -> 6)
  for (auto& [name, t] : model.parameters()) {
    if (name == "lsa_proj.0.weight") {
      auto& v = t.values_mut();
      std::fill(v.begin(), v.end(), real(0));
      for (int c = 0; c < 6; ++c) v[static_cast<size_t>(c * 6 + c)] = 1;
    }
  }
  Rng rng(251);
  const Tensor x = random_tensor(rng, {1, 3, 8, 8}, 0, 1);
  ReconstructResult r = model.reconstruct(x);
  auto [maps, s] = model.lsa_aggregate(r.taps, r.decoder_taps, r.z);
  // taps are already at z extent and channel count, so s = attn(z_0, z_0') + z
  const Tensor expect = add(lsa_attention_map(r.taps[0], r.decoder_taps[0], 2), r.z);
  for (size_t i = 0; i < s.values().size(); ++i) {
    CHECK(s.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("fuse annihilates on zero bias and zero kernels") {
  BENetModel model = tiny_model();
  Rng rng(257);
  const Tensor s = random_tensor(rng, {2, 8, 4, 4});
  const Tensor zero_bias = Tensor::zeros({2, 3, 16, 16});
  const Tensor v = model.fuse(s, zero_bias);
  CHECK(v.shape() == zero_bias.shape());
  for (real x : v.values()) CHECK(x == 0.0);

  BENetModel zeroed = tiny_model();
  for (auto& [name, t] : zeroed.parameters()) {
    if (name == "fuse.weight") {
      for (auto& x : t.values_mut()) x = 0;
    }
  }
  const Tensor bias = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  const Tensor v2 = zeroed.fuse(s, bias);
  for (real x : v2.values()) CHECK(x == 0.0);
}

TEST_CASE("fuse matches the project-upsample-multiply composition") {
  BENetModel model = tiny_model();
  Rng rng(263);
  const Tensor s = random_tensor(rng, {2, 8, 4, 4});
  const Tensor x_hat = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  Tensor fuse_w;
  for (auto& [name, t] : model.parameters()) {
    if (name == "fuse.weight") fuse_w = t;
  }
  const Tensor expect = mul(upsample_bilinear(conv2d(s, fuse_w, 1, 0), 16, 16), x_hat);
  const Tensor got = model.fuse(s, x_hat);
  for (size_t i = 0; i < got.values().size(); ++i) {
    CHECK(got.values()[i] == expect.values()[i]);
  }
}

TEST_CASE("classify sits at one half for zeroed parameters and stays in (0,1)") {
  BENetModel model = tiny_model();
  for (auto& [name, t] : model.parameters()) {
    if (name.rfind("classifier.", 0) == 0) {
      for (auto& v : t.values_mut()) v = 0;
    }
  }
  Rng rng(269);
  const Tensor v = random_tensor(rng, {3, 3, 16, 16});
  const Tensor p = model.classify(v);
  REQUIRE(p.shape() == std::vector<int>{3});
  for (real x : p.values()) CHECK(x == 0.5);

  BENetModel live = tiny_model(29);
  const Tensor p2 = live.classify(random_tensor(rng, {4, 3, 16, 16}, -30, 30));
  for (real x : p2.values()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("forward trace satisfies its invariants and is deterministic") {
  BENetModel model = tiny_model(31);
  Rng rng(271);
  const Tensor x = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  const ForwardTrace t1 = model.forward(x);
  const ForwardTrace t2 = model.forward(x);

  CHECK(t1.x_o.shape() == x.shape());
  CHECK(t1.x_hat.shape() == x.shape());
  CHECK(t1.v.shape() == x.shape());
  CHECK(t1.s.shape() == t1.z.shape());
  for (const auto& sk : t1.attention) CHECK(sk.shape() == t1.z.shape());
  for (real v : t1.x_hat.values()) CHECK(v >= 0.0);
  for (real v : t1.p.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // bitwise repeatability
  for (size_t i = 0; i < t1.p.values().size(); ++i) CHECK(t1.p.values()[i] == t2.p.values()[i]);
  for (size_t i = 0; i < t1.v.values().size(); ++i) CHECK(t1.v.values()[i] == t2.v.values()[i]);
}

TEST_CASE("gradient of cross-entropy through classify matches finite differences") {
  BENetModel model = tiny_model(37);
  std::vector<int> labels = {1, 0};
  Rng rng(277);
  const Tensor point = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  auto f = [&](const Tensor& v) { return loss_ce(model.classify(v), labels); };
  CHECK(grad_check(f, point, 1e-4) < 1e-4);
}

TEST_CASE("end-to-end parameter gradient matches finite differences") {
  BENetModel model = tiny_model(41);
  Rng rng(281);
  const Tensor x = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
  const std::vector<int> labels = {0, 1};
  LossConfig lcfg;

  auto total_loss = [&]() {
    const ForwardTrace t = model.forward(x);
    const BatchBias bias(reshape(t.x_hat, {2, 3 * 16 * 16}), labels);
    return loss_total(loss_ce(t.p, labels), loss_bias_expansion(bias, lcfg), lcfg.lambda);
  };

  Tensor kernel;
  for (auto& [name, t] : model.parameters()) {
    if (name == "encoder.1.weight") kernel = t;
  }
  model.zero_grad();
  backward(total_loss());
  const std::vector<real> analytic = kernel.grad();

  Rng pick(283);
  const real eps = 1e-5;
  for (int probe = 0; probe < 24; ++probe) {
    const size_t i = static_cast<size_t>(pick.next_u64() % analytic.size());
    const real orig = kernel.values_mut()[i];
    NoGradGuard ng;
    kernel.values_mut()[i] = orig + eps;
    const real fp = total_loss().item();
    kernel.values_mut()[i] = orig - eps;
    const real fm = total_loss().item();
    kernel.values_mut()[i] = orig;
    const real fd = (fp - fm) / (2 * eps);
    const real rel = std::abs(fd - analytic[i]) /
                     std::max({std::abs(fd), std::abs(analytic[i]), real(1e-8)});
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("forward honours the shape contract across valid configs") {
  Rng rng(347);
  struct Probe {
    int extent;
    std::vector<int> channels;
    int patch;
  };
  const std::vector<Probe> probes = {
      {16, {4, 8}, 2}, {16, {4, 8}, 4}, {32, {4, 6, 10}, 2}, {8, {5}, 4}, {32, {3, 3}, 8},
  };
  for (const auto& probe : probes) {
    EncoderDecoderConfig cfg;
    cfg.input_extent = probe.extent;
    cfg.stage_channels = probe.channels;
    cfg.patch = probe.patch;
    cfg.classifier_hidden = 8;
    cfg.validate();
    BENetModel model(cfg, 53);
    const Tensor x = random_tensor(rng, {2, 3, probe.extent, probe.extent}, 0, 1);
    const ForwardTrace t = model.forward(x);
    CHECK(t.x_o.shape() == x.shape());
    CHECK(t.x_hat.shape() == x.shape());
    CHECK(t.v.shape() == x.shape());
    CHECK(t.s.shape() == t.z.shape());
    for (const auto& sk : t.attention) CHECK(sk.shape() == t.z.shape());
  }

  // configs that violate their invariants are rejected up front
  EncoderDecoderConfig bad;
  bad.input_extent = 20;  // not divisible by 2^stages
  bad.stage_channels = {4, 8, 16};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  EncoderDecoderConfig bad_patch;
  bad_patch.input_extent = 32;
  bad_patch.stage_channels = {4, 8, 16};
  bad_patch.patch = 3;  // does not divide the 4x4 bottleneck
  CHECK_THROWS_AS(bad_patch.validate(), std::invalid_argument);
}

TEST_CASE("overfitting one real image drives the bias down") {
  EncoderDecoderConfig cfg;
  cfg.input_extent = 16;
  cfg.stage_channels = {8, 12};
  cfg.patch = 2;
  cfg.classifier_hidden = 8;
  BENetModel model(cfg, 43);

  Rng rng(293);
  // smooth image: the kind the autoencoder is meant to fit
  std::vector<real> vals(static_cast<size_t>(3 * 16 * 16));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        vals[static_cast<size_t>((c * 16 + y) * 16 + x)] =
            0.5 + 0.4 * std::sin(0.3 * (x + 2 * c)) * std::cos(0.25 * y);
      }
    }
  }
  const Tensor x = Tensor::from({1, 3, 16, 16}, std::move(vals));

  std::vector<Tensor> params;
  std::vector<std::vector<real>> m, v;
  for (auto& [name, t] : model.parameters()) {
    params.push_back(t);
    m.emplace_back(t.values().size(), real(0));
    v.emplace_back(t.values().size(), real(0));
  }
  const real lr = 5e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 1; step <= 500; ++step) {
    for (auto& p : params) p.zero_grad();
    const ReconstructResult r = model.reconstruct(x);
    backward(sum(mul(sub(x, r.x_o), sub(x, r.x_o))));
    const real bc1 = 1 - std::pow(b1, static_cast<real>(step));
    const real bc2 = 1 - std::pow(b2, static_cast<real>(step));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& pv = params[i].values_mut();
      const auto& g = params[i].grad();
      for (size_t j = 0; j < pv.size(); ++j) {
        m[i][j] = b1 * m[i][j] + (1 - b1) * g[j];
        v[i][j] = b2 * v[i][j] + (1 - b2) * g[j] * g[j];
        pv[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
      }
    }
  }
  NoGradGuard ng;
  const ReconstructResult r = model.reconstruct(x);
  const Tensor diff = bias_image(x, r.x_o);
  real mean_abs = 0;
  for (real d : diff.values()) mean_abs += d;
  mean_abs /= static_cast<real>(diff.numel());
  CHECK(mean_abs < 0.05);
}
