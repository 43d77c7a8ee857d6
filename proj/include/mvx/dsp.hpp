// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Audio ingestion and spectral segments.
//
// A spectral segment covers 0.5 s of one channel at 48 kHz (24000 samples):
// 256 frames of a 512-point Hann-windowed FFT with hop 92, giving 257 linear
// magnitude bins per frame (255 * 92 + 512 = 23972 <= 24000). Values are
// stored frequency-major: values[bin * 256 + frame]. Each segment is divided
// by (max + 1e-8).

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mvx/wav.hpp"

namespace mvx::dsp {

inline constexpr int kSampleRate = 48000;
inline constexpr int kFftSize = 512;
inline constexpr int kFreqBins = kFftSize / 2 + 1;  // 257
inline constexpr int kHop = 92;
inline constexpr int kFrames = 256;
inline constexpr double kWindowSeconds = 0.5;
inline constexpr int kWindowSamples = 24000;
inline constexpr std::size_t kSegmentValues = static_cast<std::size_t>(kFreqBins) * kFrames;
inline constexpr float kNormEps = 1e-8f;
/// Largest tolerated length difference between the two channels.
inline constexpr double kMaxLengthMismatchSeconds = 0.1;

static_assert((kFrames - 1) * kHop + kFftSize <= kWindowSamples);
static_assert(kFrames * kHop + kFftSize > kWindowSamples, "hop is the largest giving 256 frames");

struct AudioChannel {
  std::vector<float> samples;
  int sample_rate_hz = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct SpectralSegment {
  std::vector<float> values = std::vector<float>(kSegmentValues, 0.0f);
  double origin_s = 0.0;
  int channel = 1;

  float at(int bin, int frame) const {
    return values[static_cast<std::size_t>(bin) * kFrames + frame];
  }
  float& at(int bin, int frame) {
    return values[static_cast<std::size_t>(bin) * kFrames + frame];
  }
};

/// Sample-addressable audio at the pipeline rate. Reads outside
/// [0, length()) yield zeros.
class AudioSource {
 public:
  virtual ~AudioSource() = default;
  virtual std::int64_t length() const = 0;
  virtual int sample_rate() const = 0;
  virtual void read(std::int64_t first, std::span<float> out) = 0;

  double duration_s() const {
    return static_cast<double>(length()) / sample_rate();
  }
};

/// Non-owning view over an in-memory channel.
class MemorySource final : public AudioSource {
 public:
  explicit MemorySource(const AudioChannel& channel) : channel_(channel) {}
  std::int64_t length() const override {
    return static_cast<std::int64_t>(channel_.samples.size());
  }
  int sample_rate() const override { return channel_.sample_rate_hz; }
  void read(std::int64_t first, std::span<float> out) override;

 private:
  const AudioChannel& channel_;
};

/// WAV file resampled on the fly (linear interpolation) to target_rate.
/// Memory use is independent of the file length.
class WavFileSource final : public AudioSource {
 public:
  WavFileSource(const std::filesystem::path& path, int target_rate);
  std::int64_t length() const override { return length_; }
  int sample_rate() const override { return target_rate_; }
  void read(std::int64_t first, std::span<float> out) override;

  /// Reported length; larger values pad with zeros.
  void set_length(std::int64_t length) { length_ = length; }
  std::int64_t native_length() const { return native_length_; }

 private:
  WavReader reader_;
  int target_rate_;
  std::int64_t native_length_;
  std::int64_t length_;
  std::vector<float> scratch_;
};

/// Output length of linear resampling from in_rate to out_rate.
std::int64_t resampled_length(std::int64_t in_length, int in_rate, int out_rate);

/// Linear-interpolation resampling of a whole buffer.
std::vector<float> resample_linear(std::span<const float> in, int in_rate, int out_rate);

/// Loads both recorders of a session at target_rate. The shorter channel is
/// zero-padded when the lengths differ by at most 100 ms; larger differences
/// throw mvx::Error.
std::pair<AudioChannel, AudioChannel> load_wav_pair(const std::filesystem::path& path1,
                                                    const std::filesystem::path& path2,
                                                    int target_rate = kSampleRate);

/// Streaming counterpart of load_wav_pair, with the same length policy.
std::pair<std::unique_ptr<WavFileSource>, std::unique_ptr<WavFileSource>> open_wav_pair(
    const std::filesystem::path& path1, const std::filesystem::path& path2,
    int target_rate = kSampleRate);

/// Raw (unnormalized) magnitude spectrogram of exactly kWindowSamples samples.
void stft_magnitude(std::span<const float> window, std::span<float> out);

/// values /= (max + 1e-8)
void normalize_max(std::span<float> values);

/// Spectrogram + normalization of exactly kWindowSamples samples.
void segment_from_samples(std::span<const float> window, std::span<float> out);

/// Window [start_s, start_s + 0.5) of `channel`, zero-padded past the end.
/// Throws mvx::Error when start_s is negative or at/after the audio end, or
/// when the channel is not at the pipeline rate.
SpectralSegment extract_segment(const AudioChannel& channel, double start_s, int channel_tag = 1);

/// start_s -> first sample index at the pipeline rate.
std::int64_t start_sample(double start_s, int sample_rate = kSampleRate);

/// Cyclic shift: out[(f + df) mod 257][(t + dt) mod 256] = in[f][t].
SpectralSegment roll(const SpectralSegment& seg, int freq_shift, int time_shift);

struct RollAmount {
  int freq = 0;
  int time = 0;
};

/// Draws magnitude uniformly from {1..5} and a uniform sign, per axis.
RollAmount draw_roll(std::mt19937_64& rng);

/// Training-time augmentation: roll() by draw_roll(rng).
SpectralSegment roll_shift(const SpectralSegment& seg, std::mt19937_64& rng);

/// Window starts 0, shift, 2*shift, ... strictly below duration_s.
std::vector<double> segment_grid(double duration_s, double shift_s,
                                 double window_s = kWindowSeconds);

/// Segment cache: raw float32 257x256 blocks in <dir>/segments.f32 and a
/// JSON-lines index <dir>/index.jsonl with {"offset", "start_s", "channel"}.
void write_segment_cache(const std::filesystem::path& dir,
                         const std::vector<SpectralSegment>& segments);
std::vector<SpectralSegment> read_segment_cache(const std::filesystem::path& dir);

/// Appends segments to an open cache (used by the streaming featurizer).
class SegmentCacheWriter {
 public:
  explicit SegmentCacheWriter(const std::filesystem::path& dir);
  void append(const SpectralSegment& seg);
  std::size_t count() const { return count_; }

 private:
  std::ofstream data_;
  std::ofstream index_;
  std::uint64_t offset_ = 0;
  std::size_t count_ = 0;
};

}  // namespace mvx::dsp
