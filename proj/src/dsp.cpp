// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

#include "json.hpp"
#include "mvx/error.hpp"
#include "mvx/kernels.hpp"

namespace mvx::dsp {
namespace {

const std::array<float, kFftSize>& hann_window() {
  static const auto table = [] {
    std::array<float, kFftSize> w{};
    for (int n = 0; n < kFftSize; ++n) {
      w[n] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFftSize));
    }
    return w;
  }();
  return table;
}

// FFTW planning is not thread-safe; executing a shared plan on per-thread
// buffers with the same alignment is.
struct FftPlan {
  fftwf_plan plan = nullptr;
  FftPlan() {
    float* in = fftwf_alloc_real(kFftSize);
    fftwf_complex* out = fftwf_alloc_complex(kFreqBins);
    plan = fftwf_plan_dft_r2c_1d(kFftSize, in, out, FFTW_ESTIMATE);
    fftwf_free(in);
    fftwf_free(out);
    if (!plan) throw Error("FFTW planning failed");
  }
  ~FftPlan() { fftwf_destroy_plan(plan); }
};

fftwf_plan shared_plan() {
  static std::mutex mu;
  std::lock_guard lock(mu);
  static FftPlan p;
  return p.plan;
}

struct FftBuffers {
  float* in = fftwf_alloc_real(kFftSize);
  fftwf_complex* out = fftwf_alloc_complex(kFreqBins);
  std::vector<float> mag = std::vector<float>(kFreqBins);
  ~FftBuffers() {
    fftwf_free(in);
    fftwf_free(out);
  }
};

// Linear interpolation at output index j; positions past the last input sample
// hold the last value. Shared by the in-memory and streaming paths so both
// produce identical floats.
inline float interpolate(double in_rate, double out_rate, std::int64_t j,
                         const float* in, std::int64_t in_first, std::int64_t in_len) {
  const double x = static_cast<double>(j) * in_rate / out_rate;
  auto i0 = static_cast<std::int64_t>(std::floor(x));
  const float frac = static_cast<float>(x - static_cast<double>(i0));
  i0 = std::min(i0, in_len - 1);
  const std::int64_t i1 = std::min(i0 + 1, in_len - 1);
  const float s0 = in[i0 - in_first];
  const float s1 = in[i1 - in_first];
  return s0 + (s1 - s0) * frac;
}

}  // namespace

void MemorySource::read(std::int64_t first, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  const auto n = static_cast<std::int64_t>(channel_.samples.size());
  const std::int64_t lo = std::max<std::int64_t>(first, 0);
  const std::int64_t hi = std::min<std::int64_t>(first + static_cast<std::int64_t>(out.size()), n);
  if (hi > lo) {
    std::copy(channel_.samples.begin() + lo, channel_.samples.begin() + hi, out.begin() + (lo - first));
  }
}

std::int64_t resampled_length(std::int64_t in_length, int in_rate, int out_rate) {
  if (in_rate == out_rate) return in_length;
  return std::llround(static_cast<double>(in_length) * out_rate / in_rate);
}

std::vector<float> resample_linear(std::span<const float> in, int in_rate, int out_rate) {
  if (in_rate <= 0 || out_rate <= 0) throw Error("sample rates must be positive");
  if (in_rate == out_rate) return {in.begin(), in.end()};
  const auto in_len = static_cast<std::int64_t>(in.size());
  const std::int64_t out_len = resampled_length(in_len, in_rate, out_rate);
  std::vector<float> out(static_cast<std::size_t>(out_len));
  for (std::int64_t j = 0; j < out_len; ++j) {
    out[static_cast<std::size_t>(j)] = interpolate(in_rate, out_rate, j, in.data(), 0, in_len);
  }
  return out;
}

WavFileSource::WavFileSource(const std::filesystem::path& path, int target_rate)
    : reader_(path), target_rate_(target_rate) {
  if (target_rate <= 0) throw Error("target sample rate must be positive");
  native_length_ = resampled_length(static_cast<std::int64_t>(reader_.info().frames),
                                    reader_.info().sample_rate, target_rate);
  length_ = native_length_;
}

void WavFileSource::read(std::int64_t first, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  const std::int64_t lo = std::max<std::int64_t>(first, 0);
  const std::int64_t hi = std::min<std::int64_t>(first + static_cast<std::int64_t>(out.size()), native_length_);
  if (hi <= lo) return;
  const int in_rate = reader_.info().sample_rate;
  if (in_rate == target_rate_) {
    reader_.read(lo, out.subspan(static_cast<std::size_t>(lo - first), static_cast<std::size_t>(hi - lo)));
    return;
  }
  const auto in_len = static_cast<std::int64_t>(reader_.info().frames);
  const auto in_first = static_cast<std::int64_t>(
      std::floor(static_cast<double>(lo) * in_rate / target_rate_));
  const std::int64_t in_last = std::min<std::int64_t>(
      static_cast<std::int64_t>(std::floor(static_cast<double>(hi - 1) * in_rate / target_rate_)) + 1,
      in_len - 1);
  const std::int64_t first_clamped = std::min(in_first, in_len - 1);
  scratch_.assign(static_cast<std::size_t>(in_last - first_clamped + 1), 0.0f);
  reader_.read(first_clamped, scratch_);
  for (std::int64_t j = lo; j < hi; ++j) {
    out[static_cast<std::size_t>(j - first)] =
        interpolate(in_rate, target_rate_, j, scratch_.data(), first_clamped, in_len);
  }
}

namespace {

void check_lengths(std::int64_t n1, std::int64_t n2, int rate,
                   const std::filesystem::path& p1, const std::filesystem::path& p2) {
  const std::int64_t diff = n1 > n2 ? n1 - n2 : n2 - n1;
  if (static_cast<double>(diff) > kMaxLengthMismatchSeconds * rate) {
    throw Error("channel lengths differ by " + std::to_string(static_cast<double>(diff) / rate) +
                "s (> 0.1s), recordings look unaligned: " + p1.string() + " vs " + p2.string());
  }
}

}  // namespace

std::pair<AudioChannel, AudioChannel> load_wav_pair(const std::filesystem::path& path1,
                                                    const std::filesystem::path& path2,
                                                    int target_rate) {
  AudioChannel ch[2];
  const std::filesystem::path* paths[2] = {&path1, &path2};
  for (int c = 0; c < 2; ++c) {
    WavReader reader(*paths[c]);
    std::vector<float> native(reader.info().frames);
    reader.read(0, native);
    for (float v : native) {
      if (!std::isfinite(v)) throw FormatError(paths[c]->string() + ": non-finite sample");
    }
    ch[c].samples = resample_linear(native, reader.info().sample_rate, target_rate);
    ch[c].sample_rate_hz = target_rate;
  }
  const auto n1 = static_cast<std::int64_t>(ch[0].samples.size());
  const auto n2 = static_cast<std::int64_t>(ch[1].samples.size());
  check_lengths(n1, n2, target_rate, path1, path2);
  const auto n = static_cast<std::size_t>(std::max(n1, n2));
  ch[0].samples.resize(n, 0.0f);
  ch[1].samples.resize(n, 0.0f);
  return {std::move(ch[0]), std::move(ch[1])};
}

std::pair<std::unique_ptr<WavFileSource>, std::unique_ptr<WavFileSource>> open_wav_pair(
    const std::filesystem::path& path1, const std::filesystem::path& path2, int target_rate) {
  auto s1 = std::make_unique<WavFileSource>(path1, target_rate);
  auto s2 = std::make_unique<WavFileSource>(path2, target_rate);
  check_lengths(s1->native_length(), s2->native_length(), target_rate, path1, path2);
  const std::int64_t n = std::max(s1->native_length(), s2->native_length());
  s1->set_length(n);
  s2->set_length(n);
  return {std::move(s1), std::move(s2)};
}

void stft_magnitude(std::span<const float> window, std::span<float> out) {
  if (window.size() != static_cast<std::size_t>(kWindowSamples) || out.size() != kSegmentValues) {
    throw ShapeError("stft_magnitude expects 24000 samples and a 257x256 output");
  }
  const fftwf_plan plan = shared_plan();
  thread_local FftBuffers buf;
  const auto& hann = hann_window();
  for (int t = 0; t < kFrames; ++t) {
    kernels::mul(window.subspan(static_cast<std::size_t>(t) * kHop, kFftSize), hann,
                 std::span<float>(buf.in, kFftSize));
    fftwf_execute_dft_r2c(plan, buf.in, buf.out);
    kernels::complex_magnitude(std::span<const float>(reinterpret_cast<const float*>(buf.out), 2 * kFreqBins),
                               buf.mag);
    for (int f = 0; f < kFreqBins; ++f) out[static_cast<std::size_t>(f) * kFrames + t] = buf.mag[f];
  }
}

void normalize_max(std::span<float> values) {
  const float peak = kernels::max_value(values);
  kernels::scale(values, 1.0f / (peak + kNormEps));
}

void segment_from_samples(std::span<const float> window, std::span<float> out) {
  stft_magnitude(window, out);
  normalize_max(out);
}

std::int64_t start_sample(double start_s, int sample_rate) {
  return std::llround(start_s * sample_rate);
}

SpectralSegment extract_segment(const AudioChannel& channel, double start_s, int channel_tag) {
  if (channel.sample_rate_hz != kSampleRate) {
    throw Error("channel sample rate " + std::to_string(channel.sample_rate_hz) +
                " differs from the pipeline rate 48000");
  }
  if (!(start_s >= 0.0)) throw Error("segment start must be >= 0");
  const std::int64_t first = start_sample(start_s);
  if (first >= static_cast<std::int64_t>(channel.samples.size())) {
    throw Error("segment start " + std::to_string(start_s) + "s is beyond the audio end (" +
                std::to_string(channel.duration_s()) + "s)");
  }
  thread_local std::vector<float> window(kWindowSamples);
  MemorySource(channel).read(first, window);
  SpectralSegment seg;
  seg.origin_s = start_s;
  seg.channel = channel_tag;
  segment_from_samples(window, seg.values);
  return seg;
}

SpectralSegment roll(const SpectralSegment& seg, int freq_shift, int time_shift) {
  SpectralSegment out;
  out.origin_s = seg.origin_s;
  out.channel = seg.channel;
  const int df = ((freq_shift % kFreqBins) + kFreqBins) % kFreqBins;
  const int dt = ((time_shift % kFrames) + kFrames) % kFrames;
  for (int f = 0; f < kFreqBins; ++f) {
    const int nf = (f + df) % kFreqBins;
    const float* src = seg.values.data() + static_cast<std::size_t>(f) * kFrames;
    float* dst = out.values.data() + static_cast<std::size_t>(nf) * kFrames;
    std::copy(src, src + (kFrames - dt), dst + dt);
    std::copy(src + (kFrames - dt), src + kFrames, dst);
  }
  return out;
}

RollAmount draw_roll(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> magnitude(1, 5);
  std::bernoulli_distribution negative(0.5);
  RollAmount r;
  r.freq = magnitude(rng);
  if (negative(rng)) r.freq = -r.freq;
  r.time = magnitude(rng);
  if (negative(rng)) r.time = -r.time;
  return r;
}

SpectralSegment roll_shift(const SpectralSegment& seg, std::mt19937_64& rng) {
  const RollAmount r = draw_roll(rng);
  return roll(seg, r.freq, r.time);
}

std::vector<double> segment_grid(double duration_s, double shift_s, double window_s) {
  if (!(duration_s > 0.0)) throw Error("segment_grid: duration must be positive");
  if (!(shift_s > 0.0)) throw Error("segment_grid: shift must be positive");
  if (!(window_s > 0.0)) throw Error("segment_grid: window must be positive");
  std::vector<double> starts;
  for (std::int64_t k = 0;; ++k) {
    const double s = static_cast<double>(k) * shift_s;
    if (!(s < duration_s - 1e-9)) break;
    starts.push_back(s);
  }
  return starts;
}

SegmentCacheWriter::SegmentCacheWriter(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data_.open(dir / "segments.f32", std::ios::binary);
  index_.open(dir / "index.jsonl", std::ios::binary);
  if (!data_ || !index_) throw Error("cannot create segment cache in " + dir.string());
}

void SegmentCacheWriter::append(const SpectralSegment& seg) {
  if (seg.values.size() != kSegmentValues) throw ShapeError("segment must be 257x256");
  data_.write(reinterpret_cast<const char*>(seg.values.data()),
              static_cast<std::streamsize>(seg.values.size() * sizeof(float)));
  nlohmann::json line{{"offset", offset_}, {"start_s", seg.origin_s}, {"channel", seg.channel}};
  index_ << line.dump() << '\n';
  if (!data_ || !index_) throw Error("failed writing segment cache");
  offset_ += seg.values.size() * sizeof(float);
  ++count_;
}

void write_segment_cache(const std::filesystem::path& dir,
                         const std::vector<SpectralSegment>& segments) {
  SegmentCacheWriter w(dir);
  for (const auto& s : segments) w.append(s);
}

std::vector<SpectralSegment> read_segment_cache(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.jsonl", std::ios::binary);
  std::ifstream data(dir / "segments.f32", std::ios::binary);
  if (!index || !data) throw Error("cannot open segment cache in " + dir.string());
  std::vector<SpectralSegment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("segment cache index line " + std::to_string(line_no) + ": " + e.what());
    }
    SpectralSegment seg;
    seg.origin_s = j.at("start_s").get<double>();
    seg.channel = j.at("channel").get<int>();
    data.seekg(static_cast<std::streamoff>(j.at("offset").get<std::uint64_t>()));
    if (!data.read(reinterpret_cast<char*>(seg.values.data()),
                   static_cast<std::streamsize>(kSegmentValues * sizeof(float)))) {
      throw FormatError("segment cache data truncated at index line " + std::to_string(line_no));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace mvx::dsp
