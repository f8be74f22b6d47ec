#include "benet/losses.hpp"

#include <stdexcept>
#include <string>

namespace benet {

void LossConfig::validate() const {
  if (margin <= 0) throw std::invalid_argument("LossConfig: margin must be positive");
  if (lambda < 0 || lambda > 1) throw std::invalid_argument("LossConfig: lambda must be in [0,1]");
}

BatchBias::BatchBias(Tensor b, std::vector<int> y) : bias(std::move(b)), labels(std::move(y)) {
  if (bias.dim() != 2) {
    throw std::invalid_argument("BatchBias: bias must be (N,D), got " + shape_str(bias.shape()));
  }
  if (bias.extent(0) != static_cast<int>(labels.size())) {
    throw std::invalid_argument("BatchBias: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(bias.extent(0)) + " bias rows");
  }
  for (int v : labels) {
    if (v != 0 && v != 1) throw std::invalid_argument("BatchBias: labels must be 0 or 1");
  }
}

int BatchBias::count(int label) const {
  int c = 0;
  for (int v : labels) c += (v == label);
  return c;
}

namespace {

Tensor label_mask(const std::vector<int>& labels, int which) {
  std::vector<real> m(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) m[i] = (labels[i] == which) ? real(1) : real(0);
  return Tensor::from({static_cast<int>(labels.size())}, std::move(m));
}

}  // namespace

Tensor loss_l1(const BatchBias& batch) {
  if (batch.size() < 1) throw std::invalid_argument("loss_l1: empty batch");
  const Tensor ssq = sum_axis(mul(batch.bias, batch.bias), 1);  // (N) squared norms
  const Tensor masked = mul(ssq, label_mask(batch.labels, 0));
  return mul_scalar(sum(masked), real(1) / static_cast<real>(batch.size()));
}

Tensor loss_l2(const BatchBias& batch, real margin, L2SignMode mode) {
  if (batch.size() < 1) throw std::invalid_argument("loss_l2: empty batch");
  if (margin <= 0) throw std::invalid_argument("loss_l2: margin must be positive");
  const Tensor norms = row_l2_norms(batch.bias);                    // (N)
  const Tensor hinge = relu(add_scalar(neg(norms), margin));        // max(m - ||b||, 0)
  const Tensor masked = mul(mul(hinge, hinge), label_mask(batch.labels, 1));
  const real sign = (mode == L2SignMode::verbatim) ? real(-1) : real(1);
  return mul_scalar(sum(masked), sign / static_cast<real>(batch.size()));
}

Tensor loss_l3(const BatchBias& batch, bool normalize) {
  const int n = batch.size();
  if (n < 2) throw std::invalid_argument("loss_l3: needs at least 2 samples");

  Tensor u = batch.bias;
  if (normalize) {
    const Tensor norms = row_l2_norms(u);
    u = scale_rows(u, reciprocal(clamp_min(norms, real(1e-12))));
  }

  const Tensor gram = matmul(u, transpose(u));  // (N,N) pairwise dots
  const Tensor expg = exp(gram);

  // off-diagonal mask for the denominator, positive-pair mask for the numerator
  std::vector<real> off(static_cast<size_t>(n) * n, real(1));
  std::vector<real> pos(static_cast<size_t>(n) * n, real(0));
  std::vector<real> row_weight(static_cast<size_t>(n), real(0));
  for (int i = 0; i < n; ++i) {
    off[static_cast<size_t>(i) * n + i] = 0;
    int m_i = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i && batch.labels[static_cast<size_t>(j)] == batch.labels[static_cast<size_t>(i)]) {
        pos[static_cast<size_t>(i) * n + j] = 1;
        ++m_i;
      }
    }
    if (m_i > 0) row_weight[static_cast<size_t>(i)] = real(1) / static_cast<real>(m_i);
  }
  const Tensor off_mask = Tensor::from({n, n}, std::move(off));
  const Tensor pos_mask = Tensor::from({n, n}, std::move(pos));
  const Tensor weights = Tensor::from({n}, std::move(row_weight));

  const Tensor denom = sum_axis(mul(expg, off_mask), 1);        // (N)
  const Tensor log_terms = sub_col(gram, log(denom));           // log(exp(g_ij)/den_i)
  const Tensor row_sums = sum_axis(mul(log_terms, pos_mask), 1);
  return mul_scalar(sum(mul(row_sums, weights)), real(-1) / static_cast<real>(n));
}

Tensor loss_bias_expansion(const BatchBias& batch, const LossConfig& cfg) {
  cfg.validate();
  return add(add(loss_l1(batch), loss_l2(batch, cfg.margin, cfg.l2_sign_mode)),
             loss_l3(batch, cfg.l3_normalize));
}

Tensor loss_ce(const Tensor& p, const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  if (n < 1) throw std::invalid_argument("loss_ce: empty batch");
  if (p.numel() != n) {
    throw std::invalid_argument("loss_ce: " + std::to_string(labels.size()) +
                                " labels for p of shape " + shape_str(p.shape()));
  }
  const Tensor probs = reshape(p, {n});
  const Tensor pc = clamp(probs, real(1e-7), real(1) - real(1e-7));
  const Tensor y = label_mask(labels, 1);
  const Tensor one_minus_y = label_mask(labels, 0);
  const Tensor term = add(mul(y, log(pc)), mul(one_minus_y, log(add_scalar(neg(pc), real(1)))));
  return mul_scalar(sum(term), real(-1) / static_cast<real>(n));
}

Tensor loss_total(const Tensor& l_c, const Tensor& l_be, real lambda) {
  if (lambda < 0 || lambda > 1) throw std::invalid_argument("loss_total: lambda must be in [0,1]");
  return add(mul_scalar(l_c, lambda), mul_scalar(l_be, real(1) - lambda));
}

}  // namespace benet
