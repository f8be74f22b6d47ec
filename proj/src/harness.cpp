#include "benet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "benet/checkpoint.hpp"
#include "benet/rng.hpp"

namespace benet {

void TrainConfig::validate() const {
  if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch size must be >= 2");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (detector_percentile <= 0 || detector_percentile > 1) {
    throw std::invalid_argument("TrainConfig: detector percentile must be in (0,1]");
  }
  loss.validate();
}

void adam_step(std::vector<Tensor>& params, AdamState& state, real lr, real weight_decay,
               real beta1, real beta2, real eps) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].values().size(), real(0));
      state.v[i].assign(params[i].values().size(), real(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  state.t += 1;
  const real bc1 = real(1) - std::pow(beta1, static_cast<real>(state.t));
  const real bc2 = real(1) - std::pow(beta2, static_cast<real>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& vals = params[i].values_mut();
    const auto& grad = params[i].grad();
    if (grad.size() != vals.size()) {
      throw std::invalid_argument("adam_step: grad/param size mismatch at parameter " +
                                  std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      const real g = grad[j] + weight_decay * vals[j];
      m[j] = beta1 * m[j] + (real(1) - beta1) * g;
      v[j] = beta2 * v[j] + (real(1) - beta2) * g * g;
      const real mhat = m[j] / bc1;
      const real vhat = v[j] / bc2;
      vals[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::vector<std::vector<size_t>> stratified_batches(const std::vector<LabeledSample>& samples,
                                                    int batch_size, Rng& rng) {
  std::vector<size_t> reals, fakes;
  for (size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label == 0 ? reals : fakes).push_back(i);
  }
  rng.shuffle(reals);
  rng.shuffle(fakes);

  std::vector<std::vector<size_t>> batches;
  size_t ir = 0, jf = 0;
  while (ir < reals.size() || jf < fakes.size()) {
    const size_t rem_r = reals.size() - ir;
    const size_t rem_f = fakes.size() - jf;
    const size_t rem = rem_r + rem_f;
    size_t bs = std::min<size_t>(static_cast<size_t>(batch_size), rem);
    if (rem == static_cast<size_t>(batch_size) + 1) bs = rem;  // avoid a trailing singleton
    size_t take_r;
    if (rem_r == 0) {
      take_r = 0;
    } else if (rem_f == 0) {
      take_r = bs;
    } else {
      take_r = (bs * rem_r + rem / 2) / rem;  // proportional, rounded
      take_r = std::max<size_t>(1, std::min(take_r, bs - 1));
      take_r = std::min(take_r, rem_r);
      if (bs - take_r > rem_f) take_r = bs - rem_f;
    }
    std::vector<size_t> batch;
    for (size_t k = 0; k < take_r; ++k) batch.push_back(reals[ir++]);
    for (size_t k = 0; k < bs - take_r; ++k) batch.push_back(fakes[jf++]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

Tensor batch_images(const std::vector<LabeledSample>& samples, const std::vector<size_t>& idx) {
  const auto& first = samples[idx[0]].image;
  const int c = first.extent(0), h = first.extent(1), w = first.extent(2);
  const std::int64_t per = static_cast<std::int64_t>(c) * h * w;
  std::vector<real> vals(static_cast<size_t>(per) * idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    const auto& img = samples[idx[i]].image.values();
    std::copy(img.begin(), img.end(), vals.begin() + static_cast<std::int64_t>(i) * per);
  }
  return Tensor::from({static_cast<int>(idx.size()), c, h, w}, std::move(vals));
}

std::vector<real> per_sample_means(const Tensor& batch) {
  const int n = batch.extent(0);
  const std::int64_t per = batch.numel() / n;
  std::vector<real> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    real acc = 0;
    const real* p = batch.values().data() + static_cast<std::int64_t>(i) * per;
    for (std::int64_t k = 0; k < per; ++k) acc += p[k];
    out[static_cast<size_t>(i)] = acc / static_cast<real>(per);
  }
  return out;
}

}  // namespace

TrainResult train(BENetModel& model, const std::vector<LabeledSample>& train_split,
                  const TrainConfig& config) {
  config.validate();
  if (train_split.empty()) throw std::invalid_argument("train: empty training split");

  std::vector<Tensor> params;
  for (auto& [name, t] : model.parameters()) {
    (void)name;
    params.push_back(t);
  }
  AdamState adam;
  Rng rng(config.seed);
  TrainResult result;

  const int n_img = model.config().in_channels * model.config().input_extent *
                    model.config().input_extent;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = stratified_batches(train_split, config.batch_size, rng);
    real sum_total = 0, sum_ce = 0, sum_be = 0;
    for (const auto& batch : batches) {
      const Tensor x = batch_images(train_split, batch);
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (size_t i : batch) labels.push_back(train_split[i].label);

      model.zero_grad();
      const ForwardTrace trace = model.forward(x);
      const BatchBias bias(reshape(trace.x_hat, {static_cast<int>(batch.size()), n_img}), labels);
      const Tensor lc = loss_ce(trace.p, labels);
      const Tensor lbe = loss_bias_expansion(bias, config.loss);
      const Tensor total = loss_total(lc, lbe, config.loss.lambda);
      backward(total);
      adam_step(params, adam, config.lr, config.weight_decay);

      sum_total += total.item();
      sum_ce += lc.item();
      sum_be += lbe.item();
    }
    const real nb = static_cast<real>(batches.size());
    result.epoch_total.push_back(sum_total / nb);
    result.epoch_ce.push_back(sum_ce / nb);
    result.epoch_be.push_back(sum_be / nb);
  }
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model);
  return result;
}

std::vector<real> bias_discrepancies(const BENetModel& model,
                                     const std::vector<LabeledSample>& samples, int batch_size) {
  if (samples.empty()) throw std::invalid_argument("bias_discrepancies: empty sample list");
  NoGradGuard ng;
  std::vector<real> out;
  out.reserve(samples.size());
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(samples.size(), start + static_cast<size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Tensor x = batch_images(samples, idx);
    const ReconstructResult r = model.reconstruct(x);
    const Tensor x_hat = bias_image(x, r.x_o);
    for (real d : per_sample_means(x_hat)) out.push_back(d);
  }
  return out;
}

DetectorState calibrate(const BENetModel& model, const std::vector<LabeledSample>& train_split,
                        real percentile, bool on_all) {
  std::vector<LabeledSample> pool;
  if (on_all) {
    pool = train_split;
  } else {
    for (const auto& s : train_split) {
      if (s.label == 0) pool.push_back(s);
    }
  }
  if (pool.empty()) throw std::invalid_argument("calibrate: no calibration samples");
  return make_detector(bias_discrepancies(model, pool), percentile);
}

// ---- metrics ----------------------------------------------------------------------

real accuracy(const std::vector<real>& scores, const std::vector<int>& labels, real threshold) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  }
  int correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] > threshold ? 1 : 0;
    correct += (pred == labels[i]);
  }
  return static_cast<real>(correct) / static_cast<real>(scores.size());
}

real auc(const std::vector<real>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw std::invalid_argument("auc: empty or mismatched inputs");
  }
  std::int64_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auc: needs at least one positive and one negative");
  }
  // midrank formulation of the pair statistic; exact for ties
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(),
            [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });
  real rank_sum_pos = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const real midrank = (static_cast<real>(i + 1) + static_cast<real>(j)) / 2;
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j;
  }
  const real u = rank_sum_pos - static_cast<real>(pos) * (static_cast<real>(pos) + 1) / 2;
  return u / (static_cast<real>(pos) * static_cast<real>(neg));
}

// ---- evaluation ---------------------------------------------------------------------

std::vector<ScoredSample> score_samples(const BENetModel& model,
                                        const std::vector<LabeledSample>& samples,
                                        int batch_size) {
  if (samples.empty()) throw std::invalid_argument("score_samples: empty split");
  NoGradGuard ng;
  std::vector<ScoredSample> out;
  out.reserve(samples.size());
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(samples.size(), start + static_cast<size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Tensor x = batch_images(samples, idx);
    const ForwardTrace trace = model.forward(x);
    const int n = static_cast<int>(idx.size());
    const std::int64_t per = trace.x_hat.numel() / n;
    for (int k = 0; k < n; ++k) {
      ScoredSample s;
      s.p = trace.p.values()[static_cast<size_t>(k)];
      real acc = 0;
      const real* ph = trace.x_hat.values().data() + static_cast<std::int64_t>(k) * per;
      for (std::int64_t t = 0; t < per; ++t) acc += ph[t];
      s.discrepancy = acc / static_cast<real>(per);
      s.label = samples[idx[static_cast<size_t>(k)]].label;
      s.domain = samples[idx[static_cast<size_t>(k)]].domain;
      out.push_back(s);
    }
  }
  return out;
}

real EvalReport::fake_recall() const {
  const int fakes = tp + fn;
  return fakes > 0 ? static_cast<real>(tp) / static_cast<real>(fakes) : real(0);
}

EvalReport report_from_scores(const std::vector<ScoredSample>& scores,
                              const DetectorState* detector, bool with_detector) {
  if (scores.empty()) throw std::invalid_argument("report_from_scores: empty score list");
  if (with_detector && (!detector || !detector->calibrated)) {
    throw std::invalid_argument("report_from_scores: detector required but not calibrated");
  }
  EvalReport r;
  r.total = static_cast<int>(scores.size());
  std::vector<real> probs;
  std::vector<int> labels;
  int correct = 0, unknown = 0;
  for (const auto& s : scores) {
    probs.push_back(s.p);
    labels.push_back(s.label);
    int pred = s.p > real(0.5) ? 1 : 0;
    bool flagged = false;
    if (with_detector && s.discrepancy > detector->theta) {
      pred = 1;
      flagged = true;
      ++unknown;
    }
    if (pred == 1 && s.label == 1) ++r.tp;
    if (pred == 1 && s.label == 0) ++r.fp;
    if (pred == 0 && s.label == 0) ++r.tn;
    if (pred == 0 && s.label == 1) ++r.fn;
    correct += (pred == s.label);

    auto& d = r.per_domain[domain_name(s.domain)];
    d.count += 1;
    d.correct += (pred == s.label);
    if (s.label == 1) {
      d.fakes += 1;
      if (pred == 1) d.fakes_labelled_fake += 1;
    }
    (void)flagged;
  }
  r.accuracy = static_cast<real>(correct) / static_cast<real>(r.total);
  r.unknown_rate = static_cast<real>(unknown) / static_cast<real>(r.total);
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y == 1 ? has_pos : has_neg) = true;
  r.auc = (has_pos && has_neg) ? auc(probs, labels) : real(0);
  return r;
}

EvalReport evaluate(const BENetModel& model, const DetectorState* detector,
                    const std::vector<LabeledSample>& split, bool with_detector) {
  return report_from_scores(score_samples(model, split), detector, with_detector);
}

std::string format_real(real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", static_cast<double>(v));
  return buf;
}

std::string eval_report_kv(const EvalReport& r) {
  std::ostringstream os;
  os << "total=" << r.total << "\n";
  os << "accuracy=" << format_real(r.accuracy) << "\n";
  os << "auc=" << format_real(r.auc) << "\n";
  os << "tp=" << r.tp << "\nfp=" << r.fp << "\ntn=" << r.tn << "\nfn=" << r.fn << "\n";
  os << "fake_recall=" << format_real(r.fake_recall()) << "\n";
  os << "unknown_rate=" << format_real(r.unknown_rate) << "\n";
  for (const auto& [name, d] : r.per_domain) {
    os << "domain." << name << ".count=" << d.count << "\n";
    os << "domain." << name << ".accuracy="
       << format_real(d.count ? static_cast<real>(d.correct) / d.count : real(0)) << "\n";
    if (d.fakes > 0) {
      os << "domain." << name << ".recall="
         << format_real(static_cast<real>(d.fakes_labelled_fake) / d.fakes) << "\n";
    }
  }
  return os.str();
}

std::string eval_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "samples:        " << r.total << "\n";
  os << "accuracy:       " << format_real(r.accuracy) << "\n";
  os << "auc:            " << format_real(r.auc) << "\n";
  os << "confusion:      tp=" << r.tp << " fp=" << r.fp << " tn=" << r.tn << " fn=" << r.fn
     << "\n";
  os << "fake recall:    " << format_real(r.fake_recall()) << "\n";
  os << "unknown rate:   " << format_real(r.unknown_rate) << "\n";
  os << "per-domain:\n";
  for (const auto& [name, d] : r.per_domain) {
    os << "  " << name << ": n=" << d.count << " acc="
       << format_real(d.count ? static_cast<real>(d.correct) / d.count : real(0));
    if (d.fakes > 0) {
      os << " recall=" << format_real(static_cast<real>(d.fakes_labelled_fake) / d.fakes);
    }
    os << "\n";
  }
  return os.str();
}

// ---- robustness -------------------------------------------------------------------------

RobustnessTable robustness_report(const BENetModel& model,
                                  const std::vector<LabeledSample>& split, int batch_size) {
  if (split.empty()) throw std::invalid_argument("robustness_report: empty split");
  RobustnessTable table;

  {
    const auto scores = score_samples(model, split, batch_size);
    std::vector<real> probs;
    std::vector<int> labels;
    for (const auto& s : scores) {
      probs.push_back(s.p);
      labels.push_back(s.label);
    }
    table.baseline_auc = auc(probs, labels);
  }

  table.auc_by_kind.assign(kPerturbationKinds,
                           std::vector<real>(kPerturbationSeverities, real(0)));
  for (int k = 0; k < kPerturbationKinds; ++k) {
    for (int sev = 1; sev <= kPerturbationSeverities; ++sev) {
      std::vector<LabeledSample> perturbed = split;
      for (auto& s : perturbed) {
        s.image = perturb(s.image, {static_cast<PerturbationKind>(k), sev});
      }
      const auto scores = score_samples(model, perturbed, batch_size);
      std::vector<real> probs;
      std::vector<int> labels;
      for (const auto& s : scores) {
        probs.push_back(s.p);
        labels.push_back(s.label);
      }
      table.auc_by_kind[static_cast<size_t>(k)][static_cast<size_t>(sev - 1)] =
          auc(probs, labels);
    }
  }

  table.decay.assign(kPerturbationKinds, real(0));
  for (int k = 0; k < kPerturbationKinds; ++k) {
    real m = 0;
    for (real a : table.auc_by_kind[static_cast<size_t>(k)]) m += a;
    m /= kPerturbationSeverities;
    // negative values mean degradation
    table.decay[static_cast<size_t>(k)] = m - table.baseline_auc;
  }
  table.average_by_severity.assign(kPerturbationSeverities, real(0));
  for (int sev = 0; sev < kPerturbationSeverities; ++sev) {
    real m = 0;
    for (int k = 0; k < kPerturbationKinds; ++k) {
      m += table.auc_by_kind[static_cast<size_t>(k)][static_cast<size_t>(sev)];
    }
    table.average_by_severity[static_cast<size_t>(sev)] = m / kPerturbationKinds;
  }
  return table;
}

std::string RobustnessTable::to_csv() const {
  std::ostringstream os;
  os << "kind,severity0,severity1,severity2,severity3,severity4,severity5,decay\n";
  for (int k = 0; k < kPerturbationKinds; ++k) {
    os << perturbation_name(static_cast<PerturbationKind>(k)) << "," << format_real(baseline_auc);
    for (int sev = 0; sev < kPerturbationSeverities; ++sev) {
      os << "," << format_real(auc_by_kind[static_cast<size_t>(k)][static_cast<size_t>(sev)]);
    }
    os << "," << format_real(decay[static_cast<size_t>(k)]) << "\n";
  }
  os << "average," << format_real(baseline_auc);
  real avg_decay = 0;
  for (int sev = 0; sev < kPerturbationSeverities; ++sev) {
    os << "," << format_real(average_by_severity[static_cast<size_t>(sev)]);
  }
  for (real d : decay) avg_decay += d;
  os << "," << format_real(avg_decay / kPerturbationKinds) << "\n";
  return os.str();
}

std::string RobustnessTable::to_text() const {
  std::ostringstream os;
  os << "AUC by perturbation (severity 0 = unperturbed):\n";
  for (int k = 0; k < kPerturbationKinds; ++k) {
    os << "  " << perturbation_name(static_cast<PerturbationKind>(k)) << ":";
    os << " " << format_real(baseline_auc);
    for (int sev = 0; sev < kPerturbationSeverities; ++sev) {
      os << " " << format_real(auc_by_kind[static_cast<size_t>(k)][static_cast<size_t>(sev)]);
    }
    os << "  decay=" << format_real(decay[static_cast<size_t>(k)]) << "\n";
  }
  os << "  average:";
  os << " " << format_real(baseline_auc);
  for (int sev = 0; sev < kPerturbationSeverities; ++sev) {
    os << " " << format_real(average_by_severity[static_cast<size_t>(sev)]);
  }
  os << "\n";
  return os.str();
}

}  // namespace benet
