#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "benet/checkpoint.hpp"
#include "benet/data.hpp"
#include "benet/detector.hpp"
#include "benet/harness.hpp"
#include "benet/losses.hpp"
#include "benet/model.hpp"
#include "benet/png_io.hpp"
#include "benet/tensor.hpp"

namespace py = pybind11;
using namespace benet;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  std::vector<real> values(static_cast<size_t>(a.size()));
  const double* src = a.data();
  for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<real>(src[i]);
  return Tensor::from(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int e : t.shape()) shape.push_back(e);
  py::array_t<double> out(shape);
  double* dst = out.mutable_data();
  for (size_t i = 0; i < t.values().size(); ++i) dst[i] = static_cast<double>(t.values()[i]);
  return out;
}

using InputArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

BatchBias batch_from(const InputArray& bias, const std::vector<int>& labels) {
  Tensor t = tensor_from_array(bias);
  if (t.dim() != 2) throw std::invalid_argument("bias must be a (N,D) array");
  return BatchBias(std::move(t), labels);
}

L2SignMode sign_mode(const std::string& name) {
  if (name == "stated_intent") return L2SignMode::stated_intent;
  if (name == "verbatim") return L2SignMode::verbatim;
  throw std::invalid_argument("l2_sign_mode must be 'stated_intent' or 'verbatim'");
}

std::vector<LabeledSample> samples_from(const InputArray& images,
                                        const std::vector<int>& labels) {
  Tensor t = tensor_from_array(images);
  if (t.dim() != 4) throw std::invalid_argument("images must be a (N,3,H,W) array");
  const int n = t.extent(0);
  if (n != static_cast<int>(labels.size())) {
    throw std::invalid_argument("labels length must match the leading image dimension");
  }
  const std::int64_t per = t.numel() / n;
  std::vector<LabeledSample> out;
  for (int i = 0; i < n; ++i) {
    LabeledSample s;
    std::vector<real> vals(t.values().begin() + i * per, t.values().begin() + (i + 1) * per);
    s.image = Tensor::from({t.extent(1), t.extent(2), t.extent(3)}, std::move(vals));
    s.label = labels[static_cast<size_t>(i)];
    s.domain = labels[static_cast<size_t>(i)] == 0 ? Domain::real : Domain::spliceA;
    s.id = "sample_" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_benet, m) {
  m.doc() = "Bias-expansion face forgery detection: tensor ops, losses, detector, harness";

  // ---- numerics ----
  m.def("conv2d",
        [](const InputArray& x, const InputArray& k, int stride, int padding) {
          return array_from_tensor(conv2d(tensor_from_array(x), tensor_from_array(k), stride, padding));
        },
        py::arg("input"), py::arg("kernel"), py::arg("stride") = 1, py::arg("padding") = 0);
  m.def("adaptive_avg_pool",
        [](const InputArray& x, int out_h, int out_w) {
          return array_from_tensor(adaptive_avg_pool(tensor_from_array(x), out_h, out_w));
        },
        py::arg("input"), py::arg("out_h"), py::arg("out_w"));
  m.def("upsample_bilinear",
        [](const InputArray& x, int out_h, int out_w) {
          return array_from_tensor(upsample_bilinear(tensor_from_array(x), out_h, out_w));
        },
        py::arg("input"), py::arg("out_h"), py::arg("out_w"));
  m.def("softmax",
        [](const InputArray& x, int axis) {
          return array_from_tensor(softmax(tensor_from_array(x), axis));
        },
        py::arg("input"), py::arg("axis"));
  m.def("lsa_attention_map",
        [](const InputArray& q, const InputArray& kv, int patch) {
          return array_from_tensor(
              lsa_attention_map(tensor_from_array(q), tensor_from_array(kv), patch));
        },
        py::arg("query"), py::arg("key_value"), py::arg("patch"));

  // ---- losses ----
  m.def("loss_l1",
        [](const InputArray& bias, const std::vector<int>& labels) {
          return loss_l1(batch_from(bias, labels)).item();
        },
        py::arg("bias"), py::arg("labels"));
  m.def("loss_l2",
        [](const InputArray& bias, const std::vector<int>& labels, double margin,
           const std::string& mode) {
          return loss_l2(batch_from(bias, labels), margin, sign_mode(mode)).item();
        },
        py::arg("bias"), py::arg("labels"), py::arg("margin") = 5.0,
        py::arg("mode") = "stated_intent");
  m.def("loss_l3",
        [](const InputArray& bias, const std::vector<int>& labels, bool normalize) {
          return loss_l3(batch_from(bias, labels), normalize).item();
        },
        py::arg("bias"), py::arg("labels"), py::arg("normalize") = true);
  m.def("loss_bias_expansion",
        [](const InputArray& bias, const std::vector<int>& labels, double margin, double lambda,
           bool normalize, const std::string& mode) {
          LossConfig cfg;
          cfg.margin = margin;
          cfg.lambda = lambda;
          cfg.l3_normalize = normalize;
          cfg.l2_sign_mode = sign_mode(mode);
          return loss_bias_expansion(batch_from(bias, labels), cfg).item();
        },
        py::arg("bias"), py::arg("labels"), py::arg("margin") = 5.0, py::arg("lambda_") = 0.5,
        py::arg("normalize") = true, py::arg("mode") = "stated_intent");
  m.def("loss_ce",
        [](const std::vector<double>& p, const std::vector<int>& labels) {
          std::vector<real> pv(p.begin(), p.end());
          const int n = static_cast<int>(pv.size());
          return loss_ce(Tensor::from({n}, std::move(pv)), labels).item();
        },
        py::arg("p"), py::arg("labels"));
  m.def("loss_total", [](double lc, double lbe, double lambda) {
    return loss_total(Tensor::scalar(lc), Tensor::scalar(lbe), lambda).item();
  });

  // ---- detector ----
  py::class_<DetectorState>(m, "DetectorState")
      .def_readonly("theta", &DetectorState::theta)
      .def_readonly("percentile", &DetectorState::percentile)
      .def_readonly("calibration_values", &DetectorState::calibration_values)
      .def_readonly("calibrated", &DetectorState::calibrated);
  m.def("mean_bias_discrepancy", [](const InputArray& x) {
    return mean_bias_discrepancy(tensor_from_array(x));
  });
  m.def("calibrate_threshold",
        [](std::vector<double> values, double percentile) {
          std::vector<real> v(values.begin(), values.end());
          return calibrate_threshold(std::move(v), percentile);
        },
        py::arg("values"), py::arg("percentile") = 0.95);
  m.def("make_detector",
        [](std::vector<double> values, double percentile) {
          std::vector<real> v(values.begin(), values.end());
          return make_detector(std::move(v), percentile);
        },
        py::arg("values"), py::arg("percentile") = 0.95);

  // ---- metrics ----
  m.def("accuracy",
        [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
          std::vector<real> s(scores.begin(), scores.end());
          return accuracy(s, labels, threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
  m.def("auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<real> s(scores.begin(), scores.end());
    return auc(s, labels);
  });

  // ---- data ----
  m.def("generate_real",
        [](std::uint64_t seed, int count, int size) {
          py::list out;
          for (const auto& s : generate_real(seed, count, size)) {
            out.append(array_from_tensor(s.image));
          }
          return out;
        },
        py::arg("seed"), py::arg("count"), py::arg("size") = 32);
  m.def("forge",
        [](const InputArray& image, const std::string& domain, std::uint64_t seed) {
          LabeledSample s;
          s.image = tensor_from_array(image);
          s.label = 0;
          s.domain = Domain::real;
          s.id = "py";
          return array_from_tensor(forge(s, domain_from_name(domain), seed).image);
        },
        py::arg("image"), py::arg("domain"), py::arg("seed"));
  m.def("perturb",
        [](const InputArray& image, const std::string& kind, int severity) {
          return array_from_tensor(
              perturb(tensor_from_array(image), {perturbation_from_name(kind), severity}));
        },
        py::arg("image"), py::arg("kind"), py::arg("severity"));
  m.def("pixelate", [](const InputArray& image, int block) {
    return array_from_tensor(pixelate(tensor_from_array(image), block));
  });
  m.def("save_png", [](const std::string& path, const InputArray& image) {
    save_png(path, tensor_from_array(image));
  });
  m.def("load_png", [](const std::string& path) { return array_from_tensor(load_png(path)); });

  // ---- model ----
  py::class_<BENetModel>(m, "BENetModel")
      .def(py::init([](int input_extent, const std::vector<int>& stage_channels, int patch,
                       int classifier_hidden, bool use_lsa, std::uint64_t seed) {
             EncoderDecoderConfig cfg;
             cfg.input_extent = input_extent;
             cfg.stage_channels = stage_channels;
             cfg.patch = patch;
             cfg.classifier_hidden = classifier_hidden;
             cfg.use_lsa = use_lsa;
             return BENetModel(cfg, seed);
           }),
           py::arg("input_extent") = 32, py::arg("stage_channels") = std::vector<int>{16, 32, 64},
           py::arg("patch") = 4, py::arg("classifier_hidden") = 128, py::arg("use_lsa") = true,
           py::arg("seed") = 0)
      .def("forward",
           [](const BENetModel& model, const InputArray& x) {
             NoGradGuard ng;
             const ForwardTrace t = model.forward(tensor_from_array(x));
             py::dict out;
             out["x_o"] = array_from_tensor(t.x_o);
             out["x_hat"] = array_from_tensor(t.x_hat);
             out["z"] = array_from_tensor(t.z);
             out["s"] = array_from_tensor(t.s);
             out["v"] = array_from_tensor(t.v);
             out["p"] = array_from_tensor(t.p);
             return out;
           })
      .def("reconstruct",
           [](const BENetModel& model, const InputArray& x) {
             NoGradGuard ng;
             return array_from_tensor(model.reconstruct(tensor_from_array(x)).x_o);
           })
      .def("classify",
           [](const BENetModel& model, const InputArray& v) {
             NoGradGuard ng;
             return array_from_tensor(model.classify(tensor_from_array(v)));
           })
      .def("parameters",
           [](const BENetModel& model) {
             py::dict out;
             for (const auto& [name, t] : model.parameters()) {
               out[py::str(name)] = array_from_tensor(t);
             }
             return out;
           })
      .def("save", [](const BENetModel& model, const std::string& path) {
        save_checkpoint(path, model);
      });
  m.def("load_checkpoint", [](const std::string& path) {
    LoadedCheckpoint lc = load_checkpoint(path);
    return py::make_tuple(std::move(lc.model), lc.detector);
  });
  m.def("predict",
        [](const BENetModel& model, const DetectorState& det, const InputArray& image) {
          const Prediction p = predict(model, det, tensor_from_array(image));
          py::dict out;
          out["label"] = p.label;
          out["p"] = p.p;
          out["D"] = p.discrepancy;
          out["unknown"] = p.unknown;
          return out;
        },
        py::arg("model"), py::arg("detector"), py::arg("image"));

  // ---- harness ----
  m.def("train",
        [](BENetModel& model, const InputArray& images, const std::vector<int>& labels,
           int epochs, int batch_size, double lr, double weight_decay, double lambda,
           double margin, std::uint64_t seed) {
          TrainConfig cfg;
          cfg.epochs = epochs;
          cfg.batch_size = batch_size;
          cfg.lr = lr;
          cfg.weight_decay = weight_decay;
          cfg.loss.lambda = lambda;
          cfg.loss.margin = margin;
          cfg.seed = seed;
          const TrainResult r = train(model, samples_from(images, labels), cfg);
          py::dict out;
          out["epoch_total"] = r.epoch_total;
          out["epoch_ce"] = r.epoch_ce;
          out["epoch_be"] = r.epoch_be;
          return out;
        },
        py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 1,
        py::arg("batch_size") = 8, py::arg("lr") = 2e-4, py::arg("weight_decay") = 1e-5,
        py::arg("lambda_") = 0.5, py::arg("margin") = 5.0, py::arg("seed") = 0);
  m.def("bias_discrepancies",
        [](const BENetModel& model, const InputArray& images, const std::vector<int>& labels) {
          return bias_discrepancies(model, samples_from(images, labels));
        });
}
