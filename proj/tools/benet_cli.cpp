#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "benet/checkpoint.hpp"
#include "benet/config.hpp"
#include "benet/data.hpp"
#include "benet/detector.hpp"
#include "benet/harness.hpp"
#include "benet/model.hpp"
#include "benet/png_io.hpp"

namespace {

using namespace benet;

KeyValueConfig load_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  KeyValueConfig cfg;
  if (!config_path.empty()) cfg = KeyValueConfig::parse_file(config_path);
  for (const auto& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << body;
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::vector<LabeledSample> pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw std::runtime_error("unknown split '" + split + "' (use train, val, or test)");
}

Dataset load_from_dir(const std::string& dir) {
  const Manifest m = read_manifest(dir + "/manifest.csv");
  return load_dataset(dir, m);
}

int cmd_generate_data(const std::string& config_path, const std::vector<std::string>& overrides,
                      const std::string& out_dir) {
  const KeyValueConfig cfg = load_config(config_path, overrides);
  const DatasetConfig dcfg = dataset_config_from(cfg);
  const Dataset ds = generate_dataset(dcfg);
  write_dataset(ds, out_dir);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val / "
            << ds.test.size() << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& data_dir, const std::string& out_ckpt,
              const std::string& report_prefix) {
  const KeyValueConfig cfg = load_config(config_path, overrides);
  const EncoderDecoderConfig mcfg = model_config_from(cfg);
  const TrainConfig tcfg = train_config_from(cfg);

  const Dataset ds = load_from_dir(data_dir);
  BENetModel model(mcfg, tcfg.seed);
  TrainConfig run_cfg = tcfg;
  run_cfg.checkpoint_path = out_ckpt;
  const TrainResult result = train(model, ds.train, run_cfg);

  std::ostringstream kv, text;
  text << "epoch  total      ce         be\n";
  for (size_t e = 0; e < result.epoch_total.size(); ++e) {
    kv << "epoch." << e << ".total=" << format_real(result.epoch_total[e]) << "\n";
    kv << "epoch." << e << ".ce=" << format_real(result.epoch_ce[e]) << "\n";
    kv << "epoch." << e << ".be=" << format_real(result.epoch_be[e]) << "\n";
    text << e << "  " << format_real(result.epoch_total[e]) << "  "
         << format_real(result.epoch_ce[e]) << "  " << format_real(result.epoch_be[e]) << "\n";
  }
  if (!report_prefix.empty()) {
    write_text(report_prefix + ".kv", kv.str());
    write_text(report_prefix + ".txt", text.str());
  }
  std::cout << "trained " << tcfg.epochs << " epochs; final mean loss "
            << format_real(result.epoch_total.back()) << "; checkpoint " << out_ckpt << "\n";
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::vector<std::string>& overrides,
                  const std::string& ckpt_path, const std::string& data_dir) {
  const KeyValueConfig cfg = load_config(config_path, overrides);
  const real percentile = cfg.get_real("detector.percentile", 0.95);
  const std::string on = cfg.get_string("detector.calibrate_on", "all");
  if (on != "all" && on != "real") {
    throw std::runtime_error("detector.calibrate_on must be all or real");
  }

  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  const Dataset ds = load_from_dir(data_dir);
  const DetectorState det = calibrate(loaded.model, ds.train, percentile, on == "all");
  save_checkpoint(ckpt_path, loaded.model, &det);
  std::cout << "calibrated theta=" << format_real(det.theta) << " at percentile "
            << format_real(percentile) << " over " << det.calibration_values.size()
            << " samples\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             bool with_detector, const std::string& report_prefix) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  if (with_detector && !loaded.detector.calibrated) {
    throw std::runtime_error("checkpoint has no calibrated detector; run `benet calibrate` first");
  }
  const Dataset ds = load_from_dir(data_dir);
  const EvalReport report =
      evaluate(loaded.model, &loaded.detector, pick_split(ds, split), with_detector);
  std::cout << eval_report_text(report);
  if (!report_prefix.empty()) {
    write_text(report_prefix + ".txt", eval_report_text(report));
    write_text(report_prefix + ".kv", eval_report_kv(report));
  }
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& image_path) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  if (!loaded.detector.calibrated) {
    throw std::runtime_error("checkpoint has no calibrated detector; run `benet calibrate` first");
  }
  const Tensor image = load_png(image_path);
  const Prediction pred = predict(loaded.model, loaded.detector, image);
  std::cout << "label=" << (pred.label == 1 ? "fake" : "real") << " p=" << format_real(pred.p)
            << " D=" << format_real(pred.discrepancy)
            << " unknown=" << (pred.unknown ? "true" : "false") << "\n";
  return 0;
}

int cmd_robustness(const std::string& ckpt_path, const std::string& data_dir,
                   const std::string& split, const std::string& report_prefix) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  const Dataset ds = load_from_dir(data_dir);
  const RobustnessTable table = robustness_report(loaded.model, pick_split(ds, split));
  std::cout << table.to_text();
  if (!report_prefix.empty()) {
    write_text(report_prefix + ".csv", table.to_csv());
    write_text(report_prefix + ".txt", table.to_text());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BENet face-forgery detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, ckpt_path, image_path, report_prefix;
  std::string split = "test";
  std::vector<std::string> overrides;
  bool with_detector = false;

  auto* gen = app.add_subcommand("generate-data", "Generate the synthetic multi-domain dataset");
  gen->add_option("--config", config_path, "key = value config file");
  gen->add_option("--set", overrides, "override config entries (key=value)");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--set", overrides, "override config entries (key=value)");
  tr->add_option("--data", data_dir, "dataset directory (with manifest.csv)")->required();
  tr->add_option("--out", ckpt_path, "checkpoint output path")->required();
  tr->add_option("--report", report_prefix, "write <prefix>.txt and <prefix>.kv loss curves");

  auto* cal = app.add_subcommand("calibrate", "Calibrate the cross-domain threshold");
  cal->add_option("--config", config_path, "key = value config file");
  cal->add_option("--set", overrides, "override config entries (key=value)");
  cal->add_option("--checkpoint", ckpt_path, "checkpoint to update")->required();
  cal->add_option("--data", data_dir, "dataset directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--split", split, "train | val | test (default test)");
  ev->add_flag("--cross-domain-detector", with_detector,
               "apply the calibrated threshold override");
  ev->add_option("--report", report_prefix, "write <prefix>.txt and <prefix>.kv");

  auto* pr = app.add_subcommand("predict", "Classify one PNG image");
  pr->add_option("--checkpoint", ckpt_path, "trained, calibrated checkpoint")->required();
  pr->add_option("--image", image_path, "input PNG")->required();

  auto* rb = app.add_subcommand("robustness", "Perturbation decay table");
  rb->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  rb->add_option("--data", data_dir, "dataset directory")->required();
  rb->add_option("--split", split, "split to perturb (default test)");
  rb->add_option("--report", report_prefix, "write <prefix>.csv and <prefix>.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(config_path, overrides, out_dir);
    if (tr->parsed()) return cmd_train(config_path, overrides, data_dir, ckpt_path, report_prefix);
    if (cal->parsed()) return cmd_calibrate(config_path, overrides, ckpt_path, data_dir);
    if (ev->parsed()) return cmd_eval(ckpt_path, data_dir, split, with_detector, report_prefix);
    if (pr->parsed()) return cmd_predict(ckpt_path, image_path);
    if (rb->parsed()) return cmd_robustness(ckpt_path, data_dir, split, report_prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
