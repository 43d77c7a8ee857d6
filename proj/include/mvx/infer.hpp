// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Long-recording prediction.
//
// Audio is cut into 2.5 s macro-segments; macro-segment k holds the 50 window
// starts k*2.5 + i*0.05 (i = 0..49), of which the first 41 lie entirely
// inside it and the rest read into the next one (zeros past the recording
// end). Output frame j covers [0.05 j, 0.05 (j+1)) clipped to the recording
// and takes the label of window j - 4, whose 150 ms middle contains it.
// Frames 0..3 default to noise.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvx/dsp.hpp"
#include "mvx/models/twostream.hpp"
#include "mvx/taxonomy.hpp"

namespace mvx::infer {

inline constexpr double kFrameSeconds = 0.05;
inline constexpr double kMacroSeconds = 2.5;
inline constexpr std::size_t kWindowsPerMacro = 50;
inline constexpr std::size_t kInteriorWindows = 41;
/// Frame j is predicted by window j - kFrameLag.
inline constexpr std::size_t kFrameLag = 4;

struct FramePrediction {
  double begin_s = 0.0;
  double end_s = 0.0;
  TargetLabel label;
  float confidence = 1.0f;

  friend bool operator==(const FramePrediction&, const FramePrediction&) = default;
};

struct MacroSegment {
  std::size_t index = 0;
  double origin_s = 0.0;
  std::vector<double> starts;  // kWindowsPerMacro entries

  /// Windows with start + 0.5 <= origin + 2.5.
  std::size_t interior_count() const;
};

std::vector<MacroSegment> stream_plan(double duration_s);

/// ceil(duration / 0.05)
std::size_t frame_count(double duration_s);

struct PredictOptions {
  /// Worker threads; 0 reads MVX_THREADS and falls back to the CPU count.
  std::size_t threads = 0;
  /// Windows per forward pass (at most one macro-segment).
  std::size_t window_batch = kWindowsPerMacro;
};

/// Resolved worker count for `requested` (see PredictOptions::threads).
std::size_t resolve_threads(std::size_t requested);

using FrameSink = std::function<void(const FramePrediction&)>;

/// Streams both sources macro-segment by macro-segment and emits frames in
/// time order. Memory use is bounded by the batch, not the recording length.
/// Throws mvx::Error when the sources differ in rate or length.
void predict_stream(const models::TwoStreamModel<float>& model, dsp::AudioSource& ch1,
                    dsp::AudioSource& ch2, const PredictOptions& options, const FrameSink& sink);

std::vector<FramePrediction> predict_stream(const models::TwoStreamModel<float>& model,
                                            dsp::AudioSource& ch1, dsp::AudioSource& ch2,
                                            const PredictOptions& options = {});

/// Reference loop: one window at a time from fully loaded audio.
std::vector<FramePrediction> predict_offline(const models::TwoStreamModel<float>& model,
                                             const dsp::AudioChannel& ch1,
                                             const dsp::AudioChannel& ch2);

/// Label and max softmax probability for each row of logits[B, 17].
std::vector<std::pair<TargetLabel, float>> decode_logits(const nn::TensorF& logits);

struct TrackCall {
  double begin_s = 0.0;
  double end_s = 0.0;
  TargetLabel label;

  friend bool operator==(const TrackCall&, const TrackCall&) = default;
};

/// Incremental form of merge_labels for frame streams.
class LabelMerger {
 public:
  void push(const FramePrediction& frame);
  std::vector<TrackCall> take() { return std::move(calls_); }

 private:
  std::vector<TrackCall> calls_;
  TargetLabel last_label_;
  double last_end_ = 0.0;
  std::size_t count_ = 0;
};

/// Maximal runs of one non-noise label become calls; noise runs are dropped.
/// Throws mvx::Error when a frame does not start where the previous ended.
std::vector<TrackCall> merge_labels(const std::vector<FramePrediction>& frames);

/// Animal-2 labels lose their suffix and go to the second file.
std::pair<SegmentFile, SegmentFile> split_by_caller(const std::vector<TrackCall>& track);

inline constexpr const char* kFramesCsvHeader = "t_begin,t_end,label,confidence\n";
/// One LF-terminated frames CSV row.
std::string format_frame_line(const FramePrediction& frame);
std::string format_frames_csv(const std::vector<FramePrediction>& frames);

}  // namespace mvx::infer
