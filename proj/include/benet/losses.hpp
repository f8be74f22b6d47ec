#pragma once

#include <vector>

#include "benet/tensor.hpp"

namespace benet {

// Sign convention for the fake-bias hinge term. `stated_intent` is the
// standard contrastive hinge (minimizing it pushes fake bias norms past the
// margin); `verbatim` negates it.
enum class L2SignMode { stated_intent, verbatim };

struct LossConfig {
  real margin = 5.0;   // on the L2 norm of the flattened per-sample bias
  real lambda = 0.5;   // weight of the classification term in the total loss
  bool l3_normalize = true;
  L2SignMode l2_sign_mode = L2SignMode::stated_intent;

  void validate() const;
};

// Per-sample flattened bias vectors with their labels (0 real, 1 fake).
struct BatchBias {
  Tensor bias;              // (N, D), elementwise nonnegative
  std::vector<int> labels;  // size N

  BatchBias(Tensor b, std::vector<int> y);
  int size() const { return static_cast<int>(labels.size()); }
  int count(int label) const;
};

// Reconstruction-fidelity term for real samples: (1/N) sum (1-y) ||b_i||^2.
Tensor loss_l1(const BatchBias& batch);

// Margin hinge for fake samples: (1/N) sum y * max(m - ||b_i||, 0)^2,
// negated under L2SignMode::verbatim.
Tensor loss_l2(const BatchBias& batch, real margin, L2SignMode mode);

// Supervised contrastive term over bias vectors (optionally unit-normalized).
// Samples with no same-label partner contribute zero. Requires N >= 2.
Tensor loss_l3(const BatchBias& batch, bool normalize);

// L1 + L2 + L3 under the given config.
Tensor loss_bias_expansion(const BatchBias& batch, const LossConfig& cfg);

// Binary cross entropy with probabilities clamped to [1e-7, 1-1e-7].
Tensor loss_ce(const Tensor& p, const std::vector<int>& labels);

// lambda * l_c + (1 - lambda) * l_be
Tensor loss_total(const Tensor& l_c, const Tensor& l_be, real lambda);

}  // namespace benet
