// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint layout (all integers u32 little-endian):
//   "CSED" | version | records... | crc32
//   record = name length | name bytes | rank | dims... | values (f64 LE)
// The CRC32 covers every preceding byte. Model metadata travels as the
// record "meta.json", a rank-1 record holding the UTF-8 bytes of a JSON
// document, one byte per value.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/model.hpp"
#include "csed/types.hpp"

namespace csed {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<ThresholdVector> thresholds;
  std::string threshold_source;  // e.g. "calibrated on val (grid 0.05)"
  int best_epoch = -1;
  nlohmann::json config;  // echo of the training configuration
};

/// Serialized bytes of a checkpoint.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointChecksumError, CheckpointVersionError or
/// CheckpointTruncatedError on the corresponding defect.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Low-level record access, used by tests and tools.
using TensorRecords = std::vector<std::pair<std::string, Tensor>>;
std::vector<std::uint8_t> encode_records(const TensorRecords& records, std::uint32_t version);
TensorRecords decode_records(const std::vector<std::uint8_t>& bytes);

}  // namespace csed
