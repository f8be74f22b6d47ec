#pragma once

#include <string>
#include <vector>

#include "benet/detector.hpp"
#include "benet/model.hpp"
#include "benet/tensor.hpp"

namespace benet {

// "BENET1" container: magic, u32 record count, then per record
// u32 name length, name bytes, u32 rank, u64 extents, little-endian f64 values.
struct CheckpointRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

void write_records(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_records(const std::string& path);

// Model parameters plus config.* records needed to rebuild the architecture;
// detector.theta / detector.percentile / detector.calibration when calibrated.
void save_checkpoint(const std::string& path, const BENetModel& model,
                     const DetectorState* detector = nullptr);

struct LoadedCheckpoint {
  BENetModel model;
  DetectorState detector;  // calibrated == false when absent from the file
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace benet
