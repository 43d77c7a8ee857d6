// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace mvx::testing {

// Fresh scratch directory under $MVX_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("MVX_TEST_TMP");
  const std::filesystem::path dir =
      (root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "mvx_tests") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mvx::testing
