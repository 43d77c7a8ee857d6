// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mvx/error.hpp"
#include "mvx/wav.hpp"

namespace mvx::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRamp = 0.01;
constexpr std::int64_t kChunk = 1 << 16;

double ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

// Phase of the call signal at time t (seconds since call onset).
double phase(CallKind kind, double t, double dur, double pitch) {
  switch (kind) {
    case CallKind::kTrill: {
      const double f0 = 7000.0 * pitch, dev = 1000.0, rate = 25.0;
      return kTwoPi * (f0 * t - dev / (kTwoPi * rate) * std::cos(kTwoPi * rate * t));
    }
    case CallKind::kPhee: {
      const double f0 = 8500.0 * pitch, slope = 1000.0 / std::max(dur, 1e-3);
      return kTwoPi * (f0 * t + 0.5 * slope * t * t);
    }
    case CallKind::kTwitter: {
      const double period = 0.1, sweep = 0.06;
      const double local = std::fmod(t, period);
      const double f0 = 5000.0 * pitch, k = 7000.0 * pitch / sweep;
      return kTwoPi * (f0 * local + 0.5 * k * local * local);
    }
    default: {
      const double f0 = 14000.0 * pitch, k = -10000.0 * pitch / std::max(dur, 1e-3);
      return kTwoPi * (f0 * t + 0.5 * k * t * t);
    }
  }
}

double envelope(CallKind kind, double t, double dur) {
  double e = 1.0;
  if (t < kRamp) e = 0.5 - 0.5 * std::cos(std::numbers::pi * t / kRamp);
  if (dur - t < kRamp) e = std::min(e, 0.5 - 0.5 * std::cos(std::numbers::pi * (dur - t) / kRamp));
  if (kind == CallKind::kTwitter) {
    const double local = std::fmod(t, 0.1);
    e *= local < 0.06 ? std::sin(std::numbers::pi * local / 0.06) : 0.0;
  }
  return e;
}

}  // namespace

std::vector<PlannedCall> plan_calls(const SynthOptions& o) {
  if (o.kinds.empty()) throw Error("synth: no call kinds");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> call_len(o.call_min_s, o.call_max_s);
  std::uniform_real_distribution<double> gap_len(o.gap_min_s, o.gap_max_s);
  std::uniform_int_distribution<std::size_t> kind(0, o.kinds.size() - 1);
  std::bernoulli_distribution animal2(0.5);
  std::uniform_real_distribution<double> pitch(0.95, 1.05);
  std::vector<PlannedCall> calls;
  double t = ms(gap_len(rng));
  while (true) {
    PlannedCall c;
    c.begin_s = t;
    c.end_s = ms(t + call_len(rng));
    c.kind = o.kinds[kind(rng)];
    c.caller = animal2(rng) ? Caller::kAnimal2 : Caller::kAnimal1;
    c.pitch = pitch(rng);
    if (c.end_s > o.duration_s) break;
    calls.push_back(c);
    t = ms(c.end_s + gap_len(rng));
  }
  return calls;
}

void render(const std::vector<PlannedCall>& calls, const SynthOptions& o, int channel, std::int64_t first,
            std::span<float> out) {
  const double rate = dsp::kSampleRate;
  // Independent noise stream per channel and chunk position.
  std::mt19937_64 rng(o.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(channel) * 0x632BE59BD9B4E019ull +
                      static_cast<std::uint64_t>(first));
  std::normal_distribution<float> noise(0.0f, static_cast<float>(o.noise_sigma));
  for (auto& v : out) v = noise(rng);
  const auto last = first + static_cast<std::int64_t>(out.size());
  auto it = std::lower_bound(calls.begin(), calls.end(), static_cast<double>(first) / rate,
                             [](const PlannedCall& c, double t) { return c.end_s < t; });
  for (; it != calls.end(); ++it) {
    const auto b = static_cast<std::int64_t>(std::llround(it->begin_s * rate));
    const auto e = static_cast<std::int64_t>(std::llround(it->end_s * rate));
    if (b >= last) break;
    const bool own = (channel == 1) == (it->caller == Caller::kAnimal1);
    const double amp = o.amplitude * (own ? 1.0 : o.other_ratio);
    const double dur = it->end_s - it->begin_s;
    for (std::int64_t s = std::max(b, first); s < std::min(e, last); ++s) {
      const double t = static_cast<double>(s - b) / rate;
      out[static_cast<std::size_t>(s - first)] +=
          static_cast<float>(amp * envelope(it->kind, t, dur) * std::sin(phase(it->kind, t, dur, it->pitch)));
    }
  }
}

std::pair<SegmentFile, SegmentFile> annotations_of(const std::vector<PlannedCall>& calls) {
  std::vector<CallAnnotation> a1, a2;
  for (const auto& c : calls) (c.caller == Caller::kAnimal1 ? a1 : a2).push_back({c.kind, c.begin_s, c.end_s});
  return {SegmentFile(1, std::move(a1)), SegmentFile(2, std::move(a2))};
}

SynthSession synth_session(const SynthOptions& o) {
  const auto calls = plan_calls(o);
  SynthSession s;
  const auto n = static_cast<std::size_t>(std::llround(o.duration_s * dsp::kSampleRate));
  s.ch1.samples.resize(n);
  s.ch2.samples.resize(n);
  for (std::size_t i = 0; i < n; i += kChunk) {
    const std::size_t len = std::min<std::size_t>(kChunk, n - i);
    render(calls, o, 1, static_cast<std::int64_t>(i), std::span<float>(s.ch1.samples).subspan(i, len));
    render(calls, o, 2, static_cast<std::int64_t>(i), std::span<float>(s.ch2.samples).subspan(i, len));
  }
  std::tie(s.ann1, s.ann2) = annotations_of(calls);
  return s;
}

train::Session write_session(const std::filesystem::path& dir, const std::string& id, const SynthOptions& o) {
  std::filesystem::create_directories(dir);
  train::Session sess;
  sess.id = id;
  sess.wav1 = dir / (id + "_ch1.wav");
  sess.wav2 = dir / (id + "_ch2.wav");
  sess.ann1 = dir / (id + "_ann1.csv");
  sess.ann2 = dir / (id + "_ann2.csv");
  const auto calls = plan_calls(o);
  const auto n = static_cast<std::int64_t>(std::llround(o.duration_s * dsp::kSampleRate));
  std::vector<float> buf;
  for (int ch = 1; ch <= 2; ++ch) {
    WavWriter w(ch == 1 ? sess.wav1 : sess.wav2, dsp::kSampleRate);
    for (std::int64_t i = 0; i < n; i += kChunk) {
      buf.resize(static_cast<std::size_t>(std::min(kChunk, n - i)));
      render(calls, o, ch, i, buf);
      w.append(buf);
    }
    w.close();
  }
  const auto [a1, a2] = annotations_of(calls);
  write_segment_file(sess.ann1, a1);
  write_segment_file(sess.ann2, a2);
  return sess;
}

}  // namespace mvx::synth
