#pragma once

#include <map>
#include <string>
#include <vector>

#include "dancegen/tensor.hpp"

namespace dancegen {

/// One named float64 array in a checkpoint file.
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Flat binary container: an eight byte magic/version header, a record
/// count, then (name, shape, float64 data) records.  Everything is stored
/// little-endian; float64 payloads round-trip bit exactly.
void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);

/// Loads a checkpoint written by save_checkpoint, keyed by record name.
std::map<std::string, CheckpointRecord> load_checkpoint(const std::string& path);

}  // namespace dancegen
