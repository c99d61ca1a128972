// SPDX-License-Identifier: Apache-2.0
//
// Dataset manifest files: one JSON document per dataset.
//
//   {"dataset_id": "...", "gray_mean": m, "gray_std": s,
//    "task": "classification" | "segmentation" | null, "num_classes": n,
//    "records": [{"height": H, "width": W, "pixels": [...]} |
//                {"path": "img.pgm"}, optional "label", optional "mask"],
//    "splits": {"train": [...], "val": [...], "test": [...]}}
//
// Relative PGM paths resolve against the manifest's directory.

#pragma once

#include <filesystem>

#include "json.hpp"
#include "muscle/preprocess.hpp"

namespace muscle {

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = std::filesystem::path());

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Binary 8-bit PGM (P5, maxval ≤ 255) as a 1×H×W tensor of raw gray values.
Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& img);

}  // namespace muscle
