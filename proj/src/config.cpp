#include "benet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace benet {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: " + origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config: " + origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': bad integer '" + it->second + "'");
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': bad integer '" + it->second + "'");
  }
}

real KeyValueConfig::get_real(const std::string& key, real fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return static_cast<real>(std::stod(it->second));
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': bad number '" + it->second + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config: key '" + key + "': bad boolean '" + v + "'");
}

EncoderDecoderConfig model_config_from(const KeyValueConfig& cfg) {
  EncoderDecoderConfig m;
  m.in_channels = cfg.get_int("model.in_channels", m.in_channels);
  m.input_extent = cfg.get_int("model.input_extent", m.input_extent);
  m.stage_channels = cfg.get_int_list("model.stage_channels", m.stage_channels);
  m.patch = cfg.get_int("model.patch", m.patch);
  m.classifier_hidden = cfg.get_int("model.classifier_hidden", m.classifier_hidden);
  m.use_lsa = cfg.get_bool("model.use_lsa", m.use_lsa);
  m.validate();
  return m;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.get_real("train.lr", t.lr);
  t.weight_decay = cfg.get_real("train.weight_decay", t.weight_decay);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.seed = cfg.get_u64("train.seed", t.seed);
  t.loss.lambda = cfg.get_real("loss.lambda", t.loss.lambda);
  t.loss.margin = cfg.get_real("loss.margin", t.loss.margin);
  t.loss.l3_normalize = cfg.get_bool("loss.l3_normalize", t.loss.l3_normalize);
  const std::string mode = cfg.get_string("loss.l2_sign_mode", "stated_intent");
  if (mode == "stated_intent") t.loss.l2_sign_mode = L2SignMode::stated_intent;
  else if (mode == "verbatim") t.loss.l2_sign_mode = L2SignMode::verbatim;
  else throw std::runtime_error("config: loss.l2_sign_mode must be stated_intent or verbatim");
  t.detector_percentile = cfg.get_real("detector.percentile", t.detector_percentile);
  t.checkpoint_path = cfg.get_string("train.checkpoint", t.checkpoint_path);
  const std::string on = cfg.get_string("detector.calibrate_on", "all");
  if (on == "all") t.calibrate_on_all = true;
  else if (on == "real") t.calibrate_on_all = false;
  else throw std::runtime_error("config: detector.calibrate_on must be all or real");
  t.validate();
  return t;
}

DatasetConfig dataset_config_from(const KeyValueConfig& cfg) {
  DatasetConfig d;
  d.size = cfg.get_int("data.size", d.size);
  d.seed = cfg.get_u64("data.seed", d.seed);
  d.train_real = cfg.get_int("data.train_real", d.train_real);
  d.train_per_known_fake = cfg.get_int("data.train_per_known_fake", d.train_per_known_fake);
  d.val_real = cfg.get_int("data.val_real", d.val_real);
  d.val_per_known_fake = cfg.get_int("data.val_per_known_fake", d.val_per_known_fake);
  d.test_real = cfg.get_int("data.test_real", d.test_real);
  d.test_per_domain = cfg.get_int("data.test_per_domain", d.test_per_domain);
  d.strengths.splice_patch_frac = cfg.get_real("data.splice_patch_frac", d.strengths.splice_patch_frac);
  d.strengths.blur_sigma = cfg.get_real("data.blur_sigma", d.strengths.blur_sigma);
  d.strengths.noise_amplitude = cfg.get_real("data.noise_amplitude", d.strengths.noise_amplitude);
  d.strengths.color_shift = cfg.get_real("data.color_shift", d.strengths.color_shift);
  return d;
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              std::vector<int> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<int> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "': bad list entry '" + tok + "'");
    }
  }
  if (out.empty()) {
    throw std::runtime_error("config: key '" + key + "': empty list");
  }
  return out;
}

}  // namespace benet
