#include "benet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace benet {

namespace {

constexpr char kMagic[6] = {'B', 'E', 'N', 'E', 'T', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(f, bits);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& f) {
  const std::uint64_t bits = get_u64(f);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_records(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_records: cannot open " + path);
  f.write(kMagic, 6);
  put_u32(f, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32(f, static_cast<std::uint32_t>(r.name.size()));
    f.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(f, static_cast<std::uint32_t>(r.shape.size()));
    std::uint64_t n = 1;
    for (int e : r.shape) {
      put_u64(f, static_cast<std::uint64_t>(e));
      n *= static_cast<std::uint64_t>(e);
    }
    if (n != r.values.size()) {
      throw std::invalid_argument("write_records: '" + r.name + "' has " +
                                  std::to_string(r.values.size()) + " values for shape product " +
                                  std::to_string(n));
    }
    for (double v : r.values) put_f64(f, v);
  }
  if (!f) throw std::runtime_error("write_records: write failed for " + path);
}

std::vector<CheckpointRecord> read_records(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_records: cannot open " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, kMagic, 6) != 0) {
    throw std::runtime_error("read_records: " + path + " is not a BENET1 checkpoint");
  }
  const std::uint32_t count = get_u32(f);
  std::vector<CheckpointRecord> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const std::uint32_t name_len = get_u32(f);
    r.name.resize(name_len);
    f.read(r.name.data(), name_len);
    const std::uint32_t rank = get_u32(f);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t e = get_u64(f);
      r.shape.push_back(static_cast<int>(e));
      n *= e;
    }
    r.values.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) r.values[k] = get_f64(f);
    if (!f) {
      throw std::runtime_error("read_records: " + path + ": truncated at record " +
                               std::to_string(i) + " ('" + r.name + "')");
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

CheckpointRecord scalar_record(const std::string& name, double v) {
  return {name, {1}, {v}};
}

}  // namespace

void save_checkpoint(const std::string& path, const BENetModel& model,
                     const DetectorState* detector) {
  std::vector<CheckpointRecord> records;
  const auto& cfg = model.config();
  records.push_back(scalar_record("config.in_channels", cfg.in_channels));
  records.push_back(scalar_record("config.input_extent", cfg.input_extent));
  {
    CheckpointRecord r;
    r.name = "config.stage_channels";
    r.shape = {static_cast<int>(cfg.stage_channels.size())};
    for (int c : cfg.stage_channels) r.values.push_back(c);
    records.push_back(std::move(r));
  }
  records.push_back(scalar_record("config.patch", cfg.patch));
  records.push_back(scalar_record("config.classifier_hidden", cfg.classifier_hidden));
  records.push_back(scalar_record("config.use_lsa", cfg.use_lsa ? 1 : 0));

  for (const auto& [name, t] : model.parameters()) {
    CheckpointRecord r;
    r.name = name;
    r.shape = t.shape();
    r.values.assign(t.values().begin(), t.values().end());
    records.push_back(std::move(r));
  }

  if (detector && detector->calibrated) {
    records.push_back(scalar_record("detector.theta", detector->theta));
    records.push_back(scalar_record("detector.percentile", detector->percentile));
    CheckpointRecord r;
    r.name = "detector.calibration";
    r.shape = {static_cast<int>(detector->calibration_values.size())};
    r.values.assign(detector->calibration_values.begin(), detector->calibration_values.end());
    records.push_back(std::move(r));
  }
  write_records(path, records);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto records = read_records(path);
  auto find = [&](const std::string& name) -> const CheckpointRecord* {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  };
  auto require = [&](const std::string& name) -> const CheckpointRecord& {
    const auto* r = find(name);
    if (!r) throw std::runtime_error("load_checkpoint: " + path + " missing record '" + name + "'");
    return *r;
  };

  EncoderDecoderConfig cfg;
  cfg.in_channels = static_cast<int>(require("config.in_channels").values[0]);
  cfg.input_extent = static_cast<int>(require("config.input_extent").values[0]);
  cfg.stage_channels.clear();
  for (double v : require("config.stage_channels").values) {
    cfg.stage_channels.push_back(static_cast<int>(v));
  }
  cfg.patch = static_cast<int>(require("config.patch").values[0]);
  cfg.classifier_hidden = static_cast<int>(require("config.classifier_hidden").values[0]);
  cfg.use_lsa = require("config.use_lsa").values[0] != 0;

  LoadedCheckpoint out{BENetModel(cfg, /*seed=*/0), DetectorState{}};
  for (const auto& r : records) {
    if (r.name.rfind("config.", 0) == 0 || r.name.rfind("detector.", 0) == 0) continue;
    std::vector<real> vals(r.values.begin(), r.values.end());
    out.model.load_parameter(r.name, r.shape, vals);
  }

  if (find("detector.theta")) {
    out.detector.theta = static_cast<real>(require("detector.theta").values[0]);
    out.detector.percentile = static_cast<real>(require("detector.percentile").values[0]);
    const auto& cal = require("detector.calibration").values;
    out.detector.calibration_values.assign(cal.begin(), cal.end());
    out.detector.calibrated = true;
  }
  return out;
}

}  // namespace benet
