// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "mvx/error.hpp"

namespace mvx {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV and cache I/O assume a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void put_le(std::string& s, T v) {
  char buf[sizeof v];
  std::memcpy(buf, &v, sizeof v);
  s.append(buf, sizeof v);
}

WavInfo parse_header(std::ifstream& in, const std::filesystem::path& path) {
  const auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(path.string() + ": " + why);
  };
  char riff[12];
  if (!in.read(riff, 12) || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  WavInfo info;
  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t bits = 0;
  for (;;) {
    char hdr[8];
    if (!in.read(hdr, 8)) throw fail("missing data chunk");
    const std::uint32_t size = load_le<std::uint32_t>(hdr + 4);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      std::vector<char> fmt(size);
      if (!in.read(fmt.data(), size)) throw fail("truncated fmt chunk");
      format = load_le<std::uint16_t>(fmt.data());
      info.channels = load_le<std::uint16_t>(fmt.data() + 2);
      info.sample_rate = static_cast<int>(load_le<std::uint32_t>(fmt.data() + 4));
      bits = load_le<std::uint16_t>(fmt.data() + 14);
      if (format == kFormatExtensible && size >= 26) format = load_le<std::uint16_t>(fmt.data() + 24);
      have_fmt = true;
      if (size % 2) in.ignore(1);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      info.data_offset = static_cast<std::uint64_t>(in.tellg());
      if (info.channels != 1) throw fail("expected mono audio, found " + std::to_string(info.channels) + " channels");
      if (info.sample_rate <= 0) throw fail("invalid sample rate");
      if (format == kFormatPcm && bits == 16) {
        info.encoding = WavEncoding::kPcm16;
      } else if (format == kFormatFloat && bits == 32) {
        info.encoding = WavEncoding::kFloat32;
      } else {
        throw fail("unsupported encoding (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits); need 16-bit PCM or 32-bit float");
      }
      const std::uint64_t bytes_per = info.encoding == WavEncoding::kPcm16 ? 2 : 4;
      // Writers that stream sometimes leave the size at 0 or 0xFFFFFFFF.
      in.seekg(0, std::ios::end);
      const std::uint64_t avail = static_cast<std::uint64_t>(in.tellg()) - info.data_offset;
      std::uint64_t bytes = size;
      if (bytes == 0 || bytes == 0xFFFFFFFFu || bytes > avail) bytes = avail;
      info.frames = bytes / bytes_per;
      return info;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
      if (!in) throw fail("truncated chunk");
    }
  }
}

}  // namespace

WavReader::WavReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open WAV file " + path.string());
  info_ = parse_header(in_, path);
}

void WavReader::read(std::int64_t first, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  const std::int64_t total = static_cast<std::int64_t>(info_.frames);
  const std::int64_t lo = std::max<std::int64_t>(first, 0);
  const std::int64_t hi = std::min<std::int64_t>(first + static_cast<std::int64_t>(out.size()), total);
  if (hi <= lo) return;
  const std::size_t count = static_cast<std::size_t>(hi - lo);
  const std::size_t bytes_per = info_.encoding == WavEncoding::kPcm16 ? 2 : 4;
  scratch_.resize(count * bytes_per);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(info_.data_offset + static_cast<std::uint64_t>(lo) * bytes_per));
  if (!in_.read(scratch_.data(), static_cast<std::streamsize>(scratch_.size()))) {
    throw FormatError(path_.string() + ": truncated sample data");
  }
  float* dst = out.data() + (lo - first);
  if (info_.encoding == WavEncoding::kPcm16) {
    for (std::size_t i = 0; i < count; ++i) {
      dst[i] = static_cast<float>(load_le<std::int16_t>(scratch_.data() + 2 * i)) / 32768.0f;
    }
  } else {
    std::memcpy(dst, scratch_.data(), count * sizeof(float));
  }
}

WavWriter::WavWriter(const std::filesystem::path& path, int sample_rate, WavEncoding encoding)
    : path_(path), out_(path, std::ios::binary), encoding_(encoding) {
  if (!out_) throw Error("cannot write WAV file " + path.string());
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  std::string h = "RIFF";
  put_le<std::uint32_t>(h, 0);
  h += "WAVEfmt ";
  put_le<std::uint32_t>(h, 16);
  put_le<std::uint16_t>(h, format);
  put_le<std::uint16_t>(h, 1);
  put_le<std::uint32_t>(h, static_cast<std::uint32_t>(sample_rate));
  put_le<std::uint32_t>(h, static_cast<std::uint32_t>(sample_rate) * bits / 8);
  put_le<std::uint16_t>(h, static_cast<std::uint16_t>(bits / 8));
  put_le<std::uint16_t>(h, bits);
  h += "data";
  put_le<std::uint32_t>(h, 0);
  out_.write(h.data(), static_cast<std::streamsize>(h.size()));
}

WavWriter::~WavWriter() {
  try {
    close();
  } catch (...) {
  }
}

void WavWriter::append(std::span<const float> samples) {
  if (closed_) throw Error("WAV writer already closed");
  if (encoding_ == WavEncoding::kPcm16) {
    scratch_.resize(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const float v = std::clamp(samples[i], -1.0f, 1.0f);
      const auto q = static_cast<std::int16_t>(
          std::clamp(std::lround(v * 32768.0f), -32768L, 32767L));
      std::memcpy(scratch_.data() + 2 * i, &q, 2);
    }
    out_.write(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
  } else {
    out_.write(reinterpret_cast<const char*>(samples.data()),
               static_cast<std::streamsize>(samples.size() * sizeof(float)));
  }
  frames_ += samples.size();
  if (!out_) throw Error("failed writing " + path_.string());
}

void WavWriter::close() {
  if (closed_) return;
  closed_ = true;
  const std::uint64_t data_bytes = frames_ * (encoding_ == WavEncoding::kPcm16 ? 2 : 4);
  if (data_bytes + 36 > 0xFFFFFFFFull) throw Error(path_.string() + ": WAV data exceeds 4 GiB");
  const auto riff_size = static_cast<std::uint32_t>(36 + data_bytes);
  const auto data_size = static_cast<std::uint32_t>(data_bytes);
  out_.seekp(4);
  out_.write(reinterpret_cast<const char*>(&riff_size), 4);
  out_.seekp(40);
  out_.write(reinterpret_cast<const char*>(&data_size), 4);
  out_.close();
  if (!out_) throw Error("failed finalizing " + path_.string());
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate, WavEncoding encoding) {
  WavWriter w(path, sample_rate, encoding);
  w.append(samples);
  w.close();
}

WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file " + path.string());
  return parse_header(in, path);
}

}  // namespace mvx
