// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Mono RIFF/WAVE I/O: 16-bit PCM and 32-bit IEEE float.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace mvx {

enum class WavEncoding { kPcm16, kFloat32 };

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  WavEncoding encoding = WavEncoding::kPcm16;
  std::uint64_t frames = 0;
  std::uint64_t data_offset = 0;
};

/// Random-access reader. Samples outside [0, frames) read as zero.
class WavReader {
 public:
  explicit WavReader(const std::filesystem::path& path);

  const WavInfo& info() const { return info_; }
  const std::filesystem::path& path() const { return path_; }

  /// Fills out[i] with sample first + i (converted to [-1, 1) floats).
  void read(std::int64_t first, std::span<float> out);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  WavInfo info_;
  std::vector<char> scratch_;
};

/// Streaming writer; the header sizes are patched on close().
class WavWriter {
 public:
  WavWriter(const std::filesystem::path& path, int sample_rate,
            WavEncoding encoding = WavEncoding::kPcm16);
  ~WavWriter();
  WavWriter(const WavWriter&) = delete;
  WavWriter& operator=(const WavWriter&) = delete;

  /// PCM16 samples are clipped to [-1, 1] and rounded.
  void append(std::span<const float> samples);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  WavEncoding encoding_;
  std::uint64_t frames_ = 0;
  bool closed_ = false;
  std::vector<char> scratch_;
};

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate, WavEncoding encoding = WavEncoding::kPcm16);

/// Throws mvx::FormatError for anything but mono PCM16 / float32.
WavInfo read_wav_info(const std::filesystem::path& path);

}  // namespace mvx
