#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "benet/tensor.hpp"

namespace benet {

struct EncoderDecoderConfig {
  int in_channels = 3;
  int input_extent = 32;  // height == width
  std::vector<int> stage_channels = {16, 32, 64};
  int patch = 4;  // P, attention patch edge
  int classifier_hidden = 128;
  bool use_lsa = true;  // ablation switch; disabled makes s = z

  int stages() const { return static_cast<int>(stage_channels.size()); }
  int bottleneck_extent() const { return input_extent >> stages(); }
  int bottleneck_channels() const { return stage_channels.back(); }
  void validate() const;  // throws on inconsistent settings
};

struct ReconstructResult {
  Tensor x_o;                       // reconstruction, sigmoid-bounded to (0,1)
  std::vector<Tensor> taps;         // encoder stage outputs z_1..z_n (last == z)
  Tensor z;                         // bottleneck
  std::vector<Tensor> decoder_taps; // aligned with taps, identical shapes
};

struct ForwardTrace {
  Tensor x_o;
  Tensor x_hat;                    // |x - x_o|
  std::vector<Tensor> taps;
  std::vector<Tensor> decoder_taps;
  Tensor z;
  std::vector<Tensor> attention;   // per-scale maps s_k
  Tensor s;                        // aggregated attention, bottleneck shape
  Tensor v;                        // fused features, image shape
  Tensor logit;                    // (N,1)
  Tensor p;                        // (N), sigmoid(logit)
};

// Convolutional autoencoder with per-stage taps, patch attention over the
// pooled encoder/decoder taps, a 1x1 fusion projection, and a small MLP head.
class BENetModel {
 public:
  BENetModel(EncoderDecoderConfig cfg, std::uint64_t seed);

  const EncoderDecoderConfig& config() const { return cfg_; }

  // Stable (name, tensor) pairs; order defines the checkpoint layout.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  void zero_grad();
  // Replaces parameter values by name; throws on unknown name/shape mismatch.
  void load_parameter(const std::string& name, const std::vector<int>& shape,
                      const std::vector<real>& values);

  ReconstructResult reconstruct(const Tensor& x) const;
  // s_k per scale plus s = sum_k s_k + z (or s = z when LSA is disabled)
  std::pair<std::vector<Tensor>, Tensor> lsa_aggregate(const std::vector<Tensor>& taps,
                                                       const std::vector<Tensor>& decoder_taps,
                                                       const Tensor& z) const;
  Tensor fuse(const Tensor& s, const Tensor& x_hat) const;
  Tensor classify(const Tensor& v) const;  // (N) probabilities in (0,1)
  ForwardTrace forward(const Tensor& x) const;

 private:
  void check_input(const Tensor& x) const;
  Tensor classifier_logit(const Tensor& v) const;

  EncoderDecoderConfig cfg_;
  std::vector<Tensor> enc_w_, enc_b_;
  std::vector<Tensor> dec_w_, dec_b_;
  std::vector<Tensor> proj_w_;  // per-scale 1x1, tap channels -> bottleneck channels
  Tensor fuse_w_;               // 1x1, bottleneck channels -> image channels
  Tensor cls1_w_, cls1_b_, cls2_w_, cls2_b_;
};

// x_hat = |x - x_o| elementwise; subgradient 0 at ties.
Tensor bias_image(const Tensor& x, const Tensor& x_o);

// Patch attention between a query map and a key/value map of equal shape.
// Accepts CHW or NCHW; P must divide both spatial extents. Per channel and
// position: beta = softmax(alpha * Z) . Z over the aligned P x P patch.
Tensor lsa_attention_map(const Tensor& query, const Tensor& key_value, int patch);

}  // namespace benet
