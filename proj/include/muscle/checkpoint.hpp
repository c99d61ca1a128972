// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout:
//
//   line 1   compact JSON header, terminated by '\n':
//            {"format_version":1,"names":[...],"shapes":[[...],...],
//             "byte_order":"little","dtype":"f64","created_by":"...",
//             "config_hash":"..."}
//   payload  raw little-endian float64 values, tensors in header order
//
// Names are stored in sorted order, matching ParamVector iteration.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "muscle/param_vector.hpp"

namespace muscle {

struct CheckpointInfo {
  int format_version = 1;
  std::string created_by;
  std::string config_hash;
};

struct LoadedCheckpoint {
  ParamVector params;
  CheckpointInfo info;
  std::vector<std::string> warnings;
};

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path, const CheckpointInfo& info);

/// Throws FormatError (field names the offending part) on a malformed header,
/// truncated or oversized payload, or names/shapes that are inconsistent.
/// A differing `expected_hash` only adds a warning.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<std::string>& expected_hash = std::nullopt);

/// As above, additionally requiring names and shapes to match `templ`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ParamVector& templ,
                                 const std::optional<std::string>& expected_hash = std::nullopt);

}  // namespace muscle
