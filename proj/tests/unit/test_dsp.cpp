// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "../support/oracles.hpp"
#include "common.hpp"
#include "doctest.h"
#include "mvx/dsp.hpp"
#include "mvx/error.hpp"
#include "mvx/wav.hpp"

using namespace mvx;
using namespace mvx::dsp;

namespace {

AudioChannel sine(double hz, double seconds, double amp = 0.5, int rate = kSampleRate) {
  AudioChannel ch;
  ch.sample_rate_hz = rate;
  ch.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < ch.samples.size(); ++i) {
    ch.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return ch;
}

AudioChannel noise(double seconds, std::uint64_t seed) {
  AudioChannel ch;
  ch.samples.resize(static_cast<std::size_t>(seconds * kSampleRate));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 0.1f);
  for (auto& s : ch.samples) s = n(rng);
  return ch;
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int rate,
               WavEncoding enc = WavEncoding::kFloat32) {
  WavWriter w(path, rate, enc);
  w.append(samples);
  w.close();
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("stft matches a direct DFT frame by frame") {
  const auto ch = noise(0.5, 1);
  std::vector<float> mag(kSegmentValues);
  stft_magnitude(ch.samples, mag);
  for (int frame : {0, 1, 100, 255}) {
    const auto ref = mvx::testing::naive_dft_magnitude(ch.samples.data() + frame * kHop, kFftSize);
    for (int bin = 0; bin < kFreqBins; ++bin) {
      CHECK(mag[static_cast<std::size_t>(bin) * kFrames + frame] ==
            doctest::Approx(ref[static_cast<std::size_t>(bin)]).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("a 1 kHz sine peaks in bin 11 in every frame") {
  const auto seg = extract_segment(sine(1000.0, 1.0), 0.2);
  CHECK(std::lround(1000.0 / (48000.0 / 512)) == 11);
  for (int f = 0; f < kFrames; ++f) {
    int best = 0;
    for (int b = 0; b < kFreqBins; ++b) best = seg.at(b, f) > seg.at(best, f) ? b : best;
    CHECK(best == 11);
  }
}

TEST_CASE("segments have the fixed geometry and are normalized") {
  const auto seg = extract_segment(noise(1.0, 2), 0.3, 2);
  CHECK(seg.values.size() == 257u * 256u);
  CHECK(seg.channel == 2);
  CHECK(seg.origin_s == 0.3);
  const float mx = *std::max_element(seg.values.begin(), seg.values.end());
  const float mn = *std::min_element(seg.values.begin(), seg.values.end());
  CHECK(mx <= 1.0f);
  CHECK(mx > 0.99f);
  CHECK(mn >= 0.0f);

  AudioChannel silent;
  silent.samples.assign(48000, 0.0f);
  const auto z = extract_segment(silent, 0.0);
  CHECK(std::all_of(z.values.begin(), z.values.end(), [](float v) { return v == 0.0f; }));

  CHECK_THROWS_AS(extract_segment(silent, -0.1), Error);
  CHECK_THROWS_AS(extract_segment(silent, 1.0), Error);
  // Tail windows are zero-padded.
  CHECK_NOTHROW(extract_segment(silent, 0.8));
}

TEST_CASE("energy is zero only for a zero window") {
  auto ch = noise(0.5, 3);
  std::vector<float> mag(kSegmentValues);
  stft_magnitude(ch.samples, mag);
  double e = 0.0;
  for (float v : mag) e += v * v;
  CHECK(e > 0.0);
  std::fill(ch.samples.begin(), ch.samples.end(), 0.0f);
  ch.samples[12000] = 1e-3f;
  stft_magnitude(ch.samples, mag);
  e = 0.0;
  for (float v : mag) e += v * v;
  CHECK(e > 0.0);
}

TEST_CASE("shifting audio by whole hops shifts spectrogram columns") {
  const auto ch = noise(1.0, 4);
  const int k = 5;
  std::vector<float> a(kSegmentValues), b(kSegmentValues);
  stft_magnitude(std::span<const float>(ch.samples.data(), kWindowSamples), a);
  stft_magnitude(std::span<const float>(ch.samples.data() + k * kHop, kWindowSamples), b);
  for (int bin = 0; bin < kFreqBins; bin += 8) {
    for (int f = 0; f + k < kFrames; ++f) {
      const float x = a[static_cast<std::size_t>(bin) * kFrames + f + k];
      const float y = b[static_cast<std::size_t>(bin) * kFrames + f];
      CHECK(std::abs(x - y) <= 1e-6f * std::max(1.0f, std::abs(x)) + 1e-5f);
    }
  }
}

TEST_CASE("roll moves a one-hot pixel with wrap-around") {
  SpectralSegment seg;
  seg.at(10, 10) = 1.0f;
  const auto r = roll(seg, 2, -3);
  CHECK(r.at(12, 7) == 1.0f);
  float total = 0.0f;
  for (float v : r.values) total += v;
  CHECK(total == 1.0f);

  SpectralSegment edge;
  edge.at(256, 0) = 1.0f;
  CHECK(roll(edge, 1, -1).at(0, 255) == 1.0f);
}

TEST_CASE("roll_shift permutes values and is seeded") {
  SpectralSegment seg;
  std::mt19937_64 fill(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : seg.values) v = u(fill);
  std::mt19937_64 r1(11), r2(11);
  const auto a = roll_shift(seg, r1);
  const auto b = roll_shift(seg, r2);
  CHECK(a.values == b.values);
  auto s0 = seg.values, s1 = a.values;
  std::sort(s0.begin(), s0.end());
  std::sort(s1.begin(), s1.end());
  CHECK(s0 == s1);
  CHECK(a.values != seg.values);

  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const auto amt = draw_roll(rng);
    CHECK(std::abs(amt.freq) >= 1);
    CHECK(std::abs(amt.freq) <= 5);
    CHECK(std::abs(amt.time) >= 1);
    CHECK(std::abs(amt.time) <= 5);
  }
}

TEST_CASE("segment grid") {
  const auto g = segment_grid(1.0, 0.15);
  REQUIRE(g.size() == 7);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(0.90));
  const auto s = segment_grid(0.4, 0.15);
  REQUIRE(s.size() == 3);
  CHECK(s[2] == doctest::Approx(0.30));
  CHECK_THROWS_AS(segment_grid(0.0, 0.15), Error);
}

TEST_CASE("wav round trip in both encodings") {
  const auto dir = mvx::testing::scratch_dir("dsp_wav");
  const auto ch = sine(440.0, 0.25, 0.8);
  write_wav(dir / "f.wav", ch.samples, kSampleRate, WavEncoding::kFloat32);
  write_wav(dir / "p.wav", ch.samples, kSampleRate, WavEncoding::kPcm16);
  auto [f, p] = load_wav_pair(dir / "f.wav", dir / "p.wav");
  REQUIRE(f.samples.size() == ch.samples.size());
  CHECK(f.samples == ch.samples);
  for (std::size_t i = 0; i < ch.samples.size(); i += 97) CHECK(std::abs(p.samples[i] - ch.samples[i]) < 1.0f / 32767);
  const auto info = WavReader(dir / "p.wav").info();
  CHECK(info.sample_rate == 48000);
  CHECK(info.channels == 1);
  CHECK(info.frames == ch.samples.size());
}

TEST_CASE("recordings at other rates are resampled") {
  const auto dir = mvx::testing::scratch_dir("dsp_resample");
  const auto ch = sine(1000.0, 2.0, 0.5, 44100);
  write_wav(dir / "a.wav", ch.samples, 44100);
  write_wav(dir / "b.wav", ch.samples, 44100);
  auto [a, b] = load_wav_pair(dir / "a.wav", dir / "b.wav");
  const double want = 88200.0 * 48000.0 / 44100.0;
  CHECK(std::abs(static_cast<double>(a.samples.size()) - want) <= 1.0);
  CHECK(a.sample_rate_hz == 48000);
  CHECK(resampled_length(44100, 44100, 48000) == 48000);
  auto [s1, s2] = open_wav_pair(dir / "a.wav", dir / "b.wav");
  CHECK(s1->length() == static_cast<std::int64_t>(a.samples.size()));
  std::vector<float> buf(1000);
  s1->read(5000, buf);
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf[i] == doctest::Approx(a.samples[5000 + i]).epsilon(1e-6).scale(1e-6));
}

TEST_CASE("pairs differing in length") {
  const auto dir = mvx::testing::scratch_dir("dsp_pairs");
  const auto a = sine(500.0, 3.0), b = sine(500.0, 1.0), c = sine(500.0, 2.95);
  write_wav(dir / "a.wav", a.samples, kSampleRate);
  write_wav(dir / "b.wav", b.samples, kSampleRate);
  write_wav(dir / "c.wav", c.samples, kSampleRate);
  CHECK_THROWS_AS(load_wav_pair(dir / "a.wav", dir / "b.wav"), Error);
  auto [x, y] = load_wav_pair(dir / "a.wav", dir / "c.wav");
  CHECK(x.samples.size() == y.samples.size());
  CHECK(y.samples.back() == 0.0f);
  auto [s, t] = load_wav_pair(dir / "a.wav", dir / "a.wav");
  CHECK(s.samples == a.samples);
  CHECK_THROWS_AS(load_wav_pair(dir / "a.wav", dir / "missing.wav"), Error);
}

TEST_CASE("segment cache round trip") {
  const auto dir = mvx::testing::scratch_dir("dsp_cache");
  const auto ch = noise(1.0, 8);
  std::vector<SpectralSegment> segs = {extract_segment(ch, 0.0, 1), extract_segment(ch, 0.15, 2)};
  write_segment_cache(dir, segs);
  const auto back = read_segment_cache(dir);
  REQUIRE(back.size() == 2);
  CHECK(back[0].values == segs[0].values);
  CHECK(back[1].values == segs[1].values);
  CHECK(back[1].origin_s == 0.15);
  CHECK(back[1].channel == 2);
}

}  // TEST_SUITE
