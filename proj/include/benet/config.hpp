#pragma once

#include <map>
#include <string>
#include <vector>

#include "benet/data.hpp"
#include "benet/harness.hpp"
#include "benet/model.hpp"
#include "benet/tensor.hpp"

namespace benet {

// `key = value` lines with '#' comments. Later assignments win.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text, const std::string& origin = "<text>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  real get_real(const std::string& key, real fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Config keys, all optional (defaults in the structs):
//   model.in_channels  model.input_extent  model.stage_channels (comma list)
//   model.patch  model.classifier_hidden  model.use_lsa
//   train.lr  train.weight_decay  train.batch_size  train.epochs  train.seed
//   loss.lambda  loss.margin  loss.l3_normalize
//   loss.l2_sign_mode (stated_intent | verbatim)
//   detector.percentile  detector.calibrate_on (all | real)
//   data.size  data.seed  data.train_real  data.train_per_known_fake
//   data.val_real  data.val_per_known_fake  data.test_real  data.test_per_domain
//   data.splice_patch_frac  data.blur_sigma  data.noise_amplitude  data.color_shift
EncoderDecoderConfig model_config_from(const KeyValueConfig& cfg);
TrainConfig train_config_from(const KeyValueConfig& cfg);
DatasetConfig dataset_config_from(const KeyValueConfig& cfg);

}  // namespace benet
