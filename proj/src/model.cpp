#include "benet/model.hpp"

#include <cmath>
#include <stdexcept>

#include "benet/rng.hpp"

namespace benet {

void EncoderDecoderConfig::validate() const {
  if (in_channels < 1 || input_extent < 1) {
    throw std::invalid_argument("EncoderDecoderConfig: bad input dimensions");
  }
  if (stage_channels.empty()) {
    throw std::invalid_argument("EncoderDecoderConfig: need at least one stage");
  }
  for (int c : stage_channels) {
    if (c < 1) throw std::invalid_argument("EncoderDecoderConfig: stage channels must be positive");
  }
  if (input_extent % (1 << stages()) != 0) {
    throw std::invalid_argument("EncoderDecoderConfig: input extent " +
                                std::to_string(input_extent) + " not divisible by 2^" +
                                std::to_string(stages()));
  }
  if (patch < 1 || bottleneck_extent() % patch != 0) {
    throw std::invalid_argument("EncoderDecoderConfig: patch " + std::to_string(patch) +
                                " does not divide bottleneck extent " +
                                std::to_string(bottleneck_extent()));
  }
  if (classifier_hidden < 1) {
    throw std::invalid_argument("EncoderDecoderConfig: classifier hidden width must be positive");
  }
}

namespace {

Tensor glorot(Rng& rng, std::vector<int> shape, int fan_in, int fan_out) {
  const real bound = std::sqrt(real(6) / static_cast<real>(fan_in + fan_out));
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  std::vector<real> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

BENetModel::BENetModel(EncoderDecoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const int n = cfg_.stages();
  const int cz = cfg_.bottleneck_channels();

  // encoder: stride-2 3x3 convs
  int cin = cfg_.in_channels;
  for (int k = 0; k < n; ++k) {
    const int cout = cfg_.stage_channels[static_cast<size_t>(k)];
    enc_w_.push_back(glorot(rng, {cout, cin, 3, 3}, cin * 9, cout * 9));
    enc_b_.push_back(Tensor::zeros({cout}, true));
    cin = cout;
  }
  // decoder mirrors: nearest x2 upsample + 3x3 conv; last stage maps to image channels
  for (int k = 0; k < n; ++k) {
    const int from = cfg_.stage_channels[static_cast<size_t>(n - 1 - k)];
    const int to = (k == n - 1) ? cfg_.in_channels : cfg_.stage_channels[static_cast<size_t>(n - 2 - k)];
    dec_w_.push_back(glorot(rng, {to, from, 3, 3}, from * 9, to * 9));
    dec_b_.push_back(Tensor::zeros({to}, true));
  }
  // per-scale 1x1 projections to the bottleneck channel count
  for (int k = 0; k < n; ++k) {
    const int ck = cfg_.stage_channels[static_cast<size_t>(k)];
    proj_w_.push_back(glorot(rng, {cz, ck, 1, 1}, ck, cz));
  }
  fuse_w_ = glorot(rng, {cfg_.in_channels, cz, 1, 1}, cz, cfg_.in_channels);

  const int v_dim = cfg_.in_channels * cfg_.input_extent * cfg_.input_extent;
  cls1_w_ = glorot(rng, {cfg_.classifier_hidden, v_dim}, v_dim, cfg_.classifier_hidden);
  cls1_b_ = Tensor::zeros({cfg_.classifier_hidden}, true);
  cls2_w_ = glorot(rng, {1, cfg_.classifier_hidden}, cfg_.classifier_hidden, 1);
  cls2_b_ = Tensor::zeros({1}, true);
}

std::vector<std::pair<std::string, Tensor>> BENetModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t k = 0; k < enc_w_.size(); ++k) {
    out.emplace_back("encoder." + std::to_string(k) + ".weight", enc_w_[k]);
    out.emplace_back("encoder." + std::to_string(k) + ".bias", enc_b_[k]);
  }
  for (size_t k = 0; k < dec_w_.size(); ++k) {
    out.emplace_back("decoder." + std::to_string(k) + ".weight", dec_w_[k]);
    out.emplace_back("decoder." + std::to_string(k) + ".bias", dec_b_[k]);
  }
  for (size_t k = 0; k < proj_w_.size(); ++k) {
    out.emplace_back("lsa_proj." + std::to_string(k) + ".weight", proj_w_[k]);
  }
  out.emplace_back("fuse.weight", fuse_w_);
  out.emplace_back("classifier.fc1.weight", cls1_w_);
  out.emplace_back("classifier.fc1.bias", cls1_b_);
  out.emplace_back("classifier.fc2.weight", cls2_w_);
  out.emplace_back("classifier.fc2.bias", cls2_b_);
  return out;
}

void BENetModel::zero_grad() {
  for (auto& [name, t] : parameters()) {
    (void)name;
    t.zero_grad();
  }
}

void BENetModel::load_parameter(const std::string& name, const std::vector<int>& shape,
                                const std::vector<real>& values) {
  for (auto& [pname, t] : parameters()) {
    if (pname != name) continue;
    Tensor param = t;
    if (param.shape() != shape) {
      throw std::invalid_argument("load_parameter: shape mismatch for '" + name + "': expected " +
                                  shape_str(param.shape()) + ", got " + shape_str(shape));
    }
    param.values_mut() = values;
    return;
  }
  throw std::invalid_argument("load_parameter: unknown parameter '" + name + "'");
}

void BENetModel::check_input(const Tensor& x) const {
  if (x.dim() != 4 || x.extent(1) != cfg_.in_channels || x.extent(2) != cfg_.input_extent ||
      x.extent(3) != cfg_.input_extent) {
    throw std::invalid_argument("model: input " + shape_str(x.shape()) +
                                " does not match configured (N," +
                                std::to_string(cfg_.in_channels) + "," +
                                std::to_string(cfg_.input_extent) + "," +
                                std::to_string(cfg_.input_extent) + ")");
  }
}

ReconstructResult BENetModel::reconstruct(const Tensor& x) const {
  check_input(x);
  ReconstructResult r;
  const int n = cfg_.stages();

  Tensor h = x;
  for (int k = 0; k < n; ++k) {
    h = relu(add_channel_bias(
        conv2d(h, enc_w_[static_cast<size_t>(k)], /*stride=*/2, /*padding=*/1),
        enc_b_[static_cast<size_t>(k)]));
    r.taps.push_back(h);
  }
  r.z = h;

  // Decoder tap for scale k is the input of the stage that mirrors encoder
  // stage k, so shapes line up by construction (tap n-1 is z itself).
  std::vector<Tensor> dec_taps_rev;
  for (int k = 0; k < n; ++k) {
    dec_taps_rev.push_back(h);
    Tensor pre = add_channel_bias(
        conv2d(upsample_nearest(h, 2), dec_w_[static_cast<size_t>(k)], 1, 1),
        dec_b_[static_cast<size_t>(k)]);
    h = (k == n - 1) ? sigmoid(pre) : relu(pre);
  }
  r.x_o = h;
  r.decoder_taps.assign(dec_taps_rev.rbegin(), dec_taps_rev.rend());
  return r;
}

Tensor bias_image(const Tensor& x, const Tensor& x_o) {
  if (x.shape() != x_o.shape()) {
    throw std::invalid_argument("bias_image: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(x_o.shape()));
  }
  return abs(sub(x, x_o));
}

Tensor lsa_attention_map(const Tensor& query, const Tensor& key_value, int patch) {
  if (query.dim() == 3) {
    const auto& s = query.shape();
    const Tensor q4 = reshape(query, {1, s[0], s[1], s[2]});
    const Tensor k4 = reshape(key_value, {1, s[0], s[1], s[2]});
    return reshape(lsa_attention(q4, k4, patch), {s[0], s[1], s[2]});
  }
  return lsa_attention(query, key_value, patch);
}

std::pair<std::vector<Tensor>, Tensor> BENetModel::lsa_aggregate(
    const std::vector<Tensor>& taps, const std::vector<Tensor>& decoder_taps,
    const Tensor& z) const {
  const int n = cfg_.stages();
  if (static_cast<int>(taps.size()) != n || static_cast<int>(decoder_taps.size()) != n) {
    throw std::invalid_argument("lsa_aggregate: expected " + std::to_string(n) +
                                " taps per side, got " + std::to_string(taps.size()) + "/" +
                                std::to_string(decoder_taps.size()));
  }
  std::vector<Tensor> maps;
  if (!cfg_.use_lsa) return {maps, z};

  const int ze = cfg_.bottleneck_extent();
  Tensor s = z;
  for (int k = 0; k < n; ++k) {
    const Tensor q = conv2d(adaptive_avg_pool(taps[static_cast<size_t>(k)], ze, ze),
                            proj_w_[static_cast<size_t>(k)], 1, 0);
    const Tensor kv = conv2d(adaptive_avg_pool(decoder_taps[static_cast<size_t>(k)], ze, ze),
                             proj_w_[static_cast<size_t>(k)], 1, 0);
    const Tensor sk = lsa_attention(q, kv, cfg_.patch);
    maps.push_back(sk);
    s = add(s, sk);
  }
  return {maps, s};
}

Tensor BENetModel::fuse(const Tensor& s, const Tensor& x_hat) const {
  const Tensor projected = conv2d(s, fuse_w_, 1, 0);
  const Tensor up = upsample_bilinear(projected, cfg_.input_extent, cfg_.input_extent);
  return mul(up, x_hat);
}

Tensor BENetModel::classifier_logit(const Tensor& v) const {
  const int n = v.extent(0);
  const int v_dim = static_cast<int>(v.numel() / n);
  const Tensor flat = reshape(v, {n, v_dim});
  const Tensor h = relu(add_row_vector(matmul(flat, transpose(cls1_w_)), cls1_b_));
  return add_row_vector(matmul(h, transpose(cls2_w_)), cls2_b_);  // (N,1)
}

Tensor BENetModel::classify(const Tensor& v) const {
  return reshape(sigmoid(classifier_logit(v)), {v.extent(0)});
}

ForwardTrace BENetModel::forward(const Tensor& x) const {
  ForwardTrace t;
  ReconstructResult r = reconstruct(x);
  t.x_o = r.x_o;
  t.taps = r.taps;
  t.decoder_taps = r.decoder_taps;
  t.z = r.z;
  t.x_hat = bias_image(x, t.x_o);
  auto [maps, s] = lsa_aggregate(t.taps, t.decoder_taps, t.z);
  t.attention = std::move(maps);
  t.s = s;
  t.v = fuse(t.s, t.x_hat);
  t.logit = classifier_logit(t.v);
  t.p = reshape(sigmoid(t.logit), {x.extent(0)});
  return t;
}

}  // namespace benet
