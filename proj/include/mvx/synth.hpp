// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic two-recorder sessions with programmatic annotations.
//
// Calls alternate with silent gaps on one shared timeline and are attributed
// to a random animal. The caller's recorder gets the call at full amplitude,
// the other recorder at 1/3 of it; both carry independent white noise. Call
// kinds have distinct signatures:
//   trill   - tone with 25 Hz sinusoidal frequency modulation around 7 kHz
//   phee    - slowly rising steady tone near 9 kHz
//   twitter - train of short rising sweeps (5 -> 12 kHz)
//   chirp   - one falling sweep (14 -> 4 kHz) over the whole call

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvx/dsp.hpp"
#include "mvx/taxonomy.hpp"
#include "mvx/train.hpp"

namespace mvx::synth {

struct SynthOptions {
  double duration_s = 60.0;
  std::uint64_t seed = 1;
  std::vector<CallKind> kinds = {CallKind::kTrill, CallKind::kPhee, CallKind::kTwitter,
                                 CallKind::kChirp};
  double call_min_s = 0.4;
  double call_max_s = 1.2;
  double gap_min_s = 0.5;
  double gap_max_s = 2.5;
  double amplitude = 0.25;        // caller channel peak
  double other_ratio = 1.0 / 3.0;  // non-caller amplitude / caller amplitude
  double noise_sigma = 0.075;
};

struct PlannedCall {
  double begin_s = 0.0;
  double end_s = 0.0;
  CallKind kind = CallKind::kTrill;
  Caller caller = Caller::kAnimal1;
  double pitch = 1.0;  // per-call frequency scale
};

/// Call timeline; boundaries are whole milliseconds.
std::vector<PlannedCall> plan_calls(const SynthOptions& options);

struct SynthSession {
  dsp::AudioChannel ch1, ch2;
  SegmentFile ann1{1, {}}, ann2{2, {}};
};

SynthSession synth_session(const SynthOptions& options);

/// Renders samples [first, first + out.size()) of one channel.
void render(const std::vector<PlannedCall>& calls, const SynthOptions& options, int channel,
            std::int64_t first, std::span<float> out);

std::pair<SegmentFile, SegmentFile> annotations_of(const std::vector<PlannedCall>& calls);

/// Writes <dir>/<id>_ch{1,2}.wav and <id>_ann{1,2}.csv chunk by chunk
/// (memory independent of duration) and returns the manifest entry.
train::Session write_session(const std::filesystem::path& dir, const std::string& id,
                             const SynthOptions& options);

}  // namespace mvx::synth
