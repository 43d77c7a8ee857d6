// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Plain key=value run configuration. Blank lines and lines starting with '#'
// are ignored; unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvx/train.hpp"

namespace mvx {

struct RunConfig {
  int sample_rate = 48000;
  double window_s = 0.5;
  double train_shift_s = 0.15;
  double predict_shift_s = 0.05;
  double noise_keep = 0.2;
  std::string model = "transformer";
  std::size_t model_dim = 384;
  std::size_t blocks = 6;
  std::size_t heads = 6;
  std::size_t ffn_dim = 1536;
  std::size_t cnn_channels = 16;
  int epochs = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  double lr0 = 3e-4;
  double lr_decay = 0.97;

  /// Sets one key from its text value; throws mvx::Error for unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws mvx::Error when values are out of range.
  void validate() const;
  train::TrainConfig to_train_config() const;
};

std::vector<std::string> run_config_keys();

/// Errors name the 1-based line.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig read_run_config(const std::filesystem::path& path, RunConfig base = {});
/// Every key in run_config_keys() order; parse_run_config reads it back exactly.
std::string format_run_config(const RunConfig& cfg);

}  // namespace mvx
