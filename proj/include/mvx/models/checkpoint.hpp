// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint layout (little-endian):
//   "MVTX" | u32 version | u32 tensor count |
//   per tensor: u32 name length, UTF-8 name, u32 ndim, u64 dims[ndim],
//               float32 data[prod(dims)]
// The model configuration travels as an extra tensor named "meta.config".

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvx/models/twostream.hpp"

namespace mvx::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RawTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

void write_tensors(const std::filesystem::path& path, const std::vector<RawTensor>& tensors);
/// Throws mvx::FormatError on bad magic, version mismatch or truncation.
std::vector<RawTensor> read_tensors(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const TwoStreamModel<float>& model);
/// Rebuilds the model from the stored configuration and copies every tensor.
/// Throws mvx::FormatError for unknown, missing or mis-shaped tensors.
TwoStreamModel<float> load_checkpoint(const std::filesystem::path& path);
/// Loads into an existing model of matching configuration.
void load_checkpoint_into(const std::filesystem::path& path, TwoStreamModel<float>& model);

}  // namespace mvx::models
