#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "benet/data.hpp"
#include "benet/detector.hpp"
#include "benet/losses.hpp"
#include "benet/model.hpp"
#include "benet/rng.hpp"
#include "benet/tensor.hpp"

namespace benet {

struct TrainConfig {
  real lr = 2e-4;
  real weight_decay = 1e-5;
  int batch_size = 8;
  int epochs = 20;
  std::uint64_t seed = 0;
  LossConfig loss;
  real detector_percentile = 0.95;
  bool calibrate_on_all = true;      // false restricts calibration to real samples
  std::string checkpoint_path;       // when set, train() saves the model here

  void validate() const;  // batch size >= 2 (the contrastive term needs pairs)
};

// Coupled L2 decay: g' = g + wd * param, then the bias-corrected update.
struct AdamState {
  std::vector<std::vector<real>> m, v;
  std::int64_t t = 0;
};

void adam_step(std::vector<Tensor>& params, AdamState& state, real lr, real weight_decay,
               real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8);

struct TrainResult {
  std::vector<real> epoch_total, epoch_ce, epoch_be;
};

// Index batches over one epoch. Every batch contains both classes whenever
// both pools still hold samples; a trailing singleton is folded into the
// previous batch so each batch can feed the pairwise loss.
std::vector<std::vector<size_t>> stratified_batches(const std::vector<LabeledSample>& samples,
                                                    int batch_size, Rng& rng);

// Stratified batches (each batch carries both classes while both remain in
// the epoch pool), forward, total loss, backward, Adam. Deterministic under
// config.seed, single-threaded.
TrainResult train(BENetModel& model, const std::vector<LabeledSample>& train_split,
                  const TrainConfig& config);

// D(x_hat) per sample, reconstruction pass only.
std::vector<real> bias_discrepancies(const BENetModel& model,
                                     const std::vector<LabeledSample>& samples,
                                     int batch_size = 32);

DetectorState calibrate(const BENetModel& model, const std::vector<LabeledSample>& train_split,
                        real percentile = 0.95, bool on_all = true);

// ---- metrics --------------------------------------------------------------------

// Fraction of correct hard decisions; scores strictly above threshold are fake.
real accuracy(const std::vector<real>& scores, const std::vector<int>& labels,
              real threshold = 0.5);

// Mann-Whitney pair statistic, ties count 0.5. Requires both classes.
real auc(const std::vector<real>& scores, const std::vector<int>& labels);

// ---- evaluation -------------------------------------------------------------------

struct ScoredSample {
  real p = 0;
  real discrepancy = 0;
  int label = 0;
  Domain domain = Domain::real;
};

std::vector<ScoredSample> score_samples(const BENetModel& model,
                                        const std::vector<LabeledSample>& samples,
                                        int batch_size = 32);

struct DomainStats {
  int count = 0;
  int correct = 0;
  int fakes = 0;
  int fakes_labelled_fake = 0;  // recall numerator for fake domains
};

struct EvalReport {
  int total = 0;
  real accuracy = 0;
  real auc = 0;  // always from raw probabilities
  int tp = 0, fp = 0, tn = 0, fn = 0;
  real unknown_rate = 0;
  std::map<std::string, DomainStats> per_domain;

  real fake_recall() const;
};

EvalReport report_from_scores(const std::vector<ScoredSample>& scores,
                              const DetectorState* detector, bool with_detector);

EvalReport evaluate(const BENetModel& model, const DetectorState* detector,
                    const std::vector<LabeledSample>& split, bool with_detector);

std::string eval_report_text(const EvalReport& report);
std::string eval_report_kv(const EvalReport& report);

// ---- perturbation robustness -------------------------------------------------------

struct RobustnessTable {
  real baseline_auc = 0;                 // severity-0 column, unperturbed
  std::vector<std::vector<real>> auc_by_kind;  // [kind][severity-1]
  std::vector<real> decay;               // mean over severities minus baseline
  std::vector<real> average_by_severity; // mean across kinds per severity

  std::string to_text() const;
  std::string to_csv() const;
};

RobustnessTable robustness_report(const BENetModel& model,
                                  const std::vector<LabeledSample>& split,
                                  int batch_size = 32);

std::string format_real(real v);

}  // namespace benet
