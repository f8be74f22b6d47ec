#include "benet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "benet/model.hpp"

namespace benet {

real mean_bias_discrepancy(const Tensor& x_hat) {
  if (!x_hat.defined() || x_hat.numel() == 0) {
    throw std::invalid_argument("mean_bias_discrepancy: empty tensor");
  }
  real acc = 0;
  for (real v : x_hat.values()) acc += v;
  return acc / static_cast<real>(x_hat.numel());
}

real calibrate_threshold(std::vector<real> values, real percentile) {
  if (values.empty()) throw std::invalid_argument("calibrate_threshold: no calibration values");
  if (percentile <= 0 || percentile > 1) {
    throw std::invalid_argument("calibrate_threshold: percentile must be in (0,1]");
  }
  std::sort(values.begin(), values.end());
  const auto n = static_cast<std::int64_t>(values.size());
  std::int64_t k = static_cast<std::int64_t>(
      std::ceil(percentile * static_cast<double>(n) - 1e-9));  // 1-indexed order statistic
  k = std::max<std::int64_t>(1, std::min(k, n));
  return values[static_cast<size_t>(k - 1)];
}

DetectorState make_detector(std::vector<real> discrepancies, real percentile) {
  DetectorState d;
  d.theta = calibrate_threshold(discrepancies, percentile);
  d.percentile = percentile;
  std::sort(discrepancies.begin(), discrepancies.end());
  d.calibration_values = std::move(discrepancies);
  d.calibrated = true;
  return d;
}

Prediction predict(const BENetModel& model, const DetectorState& detector, const Tensor& image) {
  if (!detector.calibrated) {
    throw std::invalid_argument("predict: detector has not been calibrated");
  }
  NoGradGuard ng;
  Tensor batch = image;
  if (image.dim() == 3) {
    const auto& s = image.shape();
    batch = reshape(image, {1, s[0], s[1], s[2]});
  }
  if (batch.dim() != 4 || batch.extent(0) != 1) {
    throw std::invalid_argument("predict: expects a single CHW or 1CHW image, got " +
                                shape_str(image.shape()));
  }
  const ForwardTrace trace = model.forward(batch);
  Prediction out;
  out.p = trace.p.values()[0];
  out.discrepancy = mean_bias_discrepancy(trace.x_hat);
  const int y_pred = out.p > real(0.5) ? 1 : 0;
  if (out.discrepancy > detector.theta) {
    out.label = 1;
    out.unknown = true;
  } else {
    out.label = y_pred;
    out.unknown = false;
  }
  return out;
}

}  // namespace benet
