#pragma once

#include <vector>

#include "benet/tensor.hpp"

namespace benet {

class BENetModel;

// Open-set gate calibrated on training-set bias discrepancies. Immutable
// after calibration.
struct DetectorState {
  real theta = 0;
  real percentile = 0.95;
  std::vector<real> calibration_values;  // sorted ascending
  bool calibrated = false;
};

struct Prediction {
  int label = 0;        // 0 real, 1 fake
  real p = 0;           // classifier probability of fake
  real discrepancy = 0; // D(x_hat)
  bool unknown = false; // true when the threshold overrode the classifier
};

// Mean over all elements of the bias image (channels included).
real mean_bias_discrepancy(const Tensor& x_hat);

// k-th smallest with k = ceil(percentile * n); deterministic under ties.
real calibrate_threshold(std::vector<real> values, real percentile = 0.95);

DetectorState make_detector(std::vector<real> discrepancies, real percentile = 0.95);

// Algorithm: classifier decides at p > 0.5; a discrepancy strictly above
// theta overrides the label to fake and sets the unknown flag.
Prediction predict(const BENetModel& model, const DetectorState& detector, const Tensor& image);

}  // namespace benet
