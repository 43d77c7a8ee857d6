// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <thread>

#include "mvx/error.hpp"
#include "mvx/evalkit.hpp"
#include "mvx/nn/tensor.hpp"

namespace mvx::infer {
namespace {

constexpr double kTol = 1e-9;

double window_start(std::size_t macro, std::size_t i) {
  return static_cast<double>(macro) * kMacroSeconds + static_cast<double>(i) * kFrameSeconds;
}

double frame_begin(std::size_t j) { return static_cast<double>(j) * kFrameSeconds; }

// Predicted labels for a run of windows given their spectra.
std::vector<std::pair<TargetLabel, float>> classify(const models::TwoStreamModel<float>& model,
                                                    const std::vector<dsp::SpectralSegment>& seg1,
                                                    const std::vector<dsp::SpectralSegment>& seg2) {
  std::vector<const dsp::SpectralSegment*> p1, p2;
  for (const auto& s : seg1) p1.push_back(&s);
  for (const auto& s : seg2) p2.push_back(&s);
  nn::NoGradGuard no_grad;
  const auto in1 = models::make_stream_input(p1, 1);
  const auto in2 = models::make_stream_input(p2, 2);
  return decode_logits(model.forward(in1, in2));
}

struct Block {
  std::size_t macro = 0;
  std::size_t windows = 0;  // windows of this macro-segment that feed a frame
  std::int64_t first_sample = 0;
  std::vector<float> samples1, samples2;
};

std::vector<std::pair<TargetLabel, float>> run_block(const models::TwoStreamModel<float>& model, const Block& block,
                                                     std::size_t window_batch) {
  std::vector<std::pair<TargetLabel, float>> out;
  out.reserve(block.windows);
  std::vector<dsp::SpectralSegment> s1, s2;
  for (std::size_t i0 = 0; i0 < block.windows; i0 += window_batch) {
    const std::size_t n = std::min(window_batch, block.windows - i0);
    s1.assign(n, {});
    s2.assign(n, {});
    for (std::size_t w = 0; w < n; ++w) {
      const double start = window_start(block.macro, i0 + w);
      const auto offset = static_cast<std::size_t>(dsp::start_sample(start) - block.first_sample);
      dsp::segment_from_samples(std::span<const float>(block.samples1).subspan(offset, dsp::kWindowSamples),
                                s1[w].values);
      dsp::segment_from_samples(std::span<const float>(block.samples2).subspan(offset, dsp::kWindowSamples),
                                s2[w].values);
      s1[w].origin_s = s2[w].origin_s = start;
      s1[w].channel = 1;
      s2[w].channel = 2;
    }
    auto labels = classify(model, s1, s2);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

class FrameEmitter {
 public:
  FrameEmitter(double duration_s, FrameSink sink)
      : duration_(duration_s), frames_(frame_count(duration_s)), sink_(std::move(sink)) {
    for (std::size_t j = 0; j < std::min(kFrameLag, frames_); ++j) emit(TargetLabel::noise(), 1.0f);
  }

  void emit(TargetLabel label, float confidence) {
    if (next_ >= frames_) return;
    FramePrediction f;
    f.begin_s = frame_begin(next_);
    f.end_s = std::min(frame_begin(next_ + 1), duration_);
    f.label = label;
    f.confidence = confidence;
    ++next_;
    sink_(f);
  }

  std::size_t emitted() const { return next_; }
  std::size_t total() const { return frames_; }

 private:
  double duration_;
  std::size_t frames_;
  std::size_t next_ = 0;
  FrameSink sink_;
};

// Windows of macro-segment k that some frame depends on.
std::size_t needed_windows(std::size_t macro, std::size_t frames) {
  const std::size_t windows_total = frames > kFrameLag ? frames - kFrameLag : 0;
  const std::size_t first = macro * kWindowsPerMacro;
  if (first >= windows_total) return 0;
  return std::min(kWindowsPerMacro, windows_total - first);
}

}  // namespace

std::size_t MacroSegment::interior_count() const {
  const double end = origin_s + kMacroSeconds;
  return static_cast<std::size_t>(std::count_if(starts.begin(), starts.end(), [end](double s) {
    return s + dsp::kWindowSeconds <= end + kTol;
  }));
}

std::vector<MacroSegment> stream_plan(double duration_s) {
  if (!(duration_s > 0.0)) throw Error("stream_plan: duration must be positive");
  const auto count = static_cast<std::size_t>(std::ceil(duration_s / kMacroSeconds - kTol));
  std::vector<MacroSegment> plan(count);
  for (std::size_t k = 0; k < count; ++k) {
    plan[k].index = k;
    plan[k].origin_s = static_cast<double>(k) * kMacroSeconds;
    for (std::size_t i = 0; i < kWindowsPerMacro; ++i) plan[k].starts.push_back(window_start(k, i));
  }
  return plan;
}

std::size_t frame_count(double duration_s) { return eval::unit_count(duration_s); }

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MVX_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::pair<TargetLabel, float>> decode_logits(const nn::TensorF& logits) {
  if (logits.rank() != 2 || logits.dim(1) != static_cast<std::size_t>(kNumTargetLabels)) {
    throw ShapeError("decode_logits: logits " + nn::shape_str(logits.shape()));
  }
  const std::size_t classes = logits.dim(1);
  std::vector<std::pair<TargetLabel, float>> out;
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    const float* row = logits.data().data() + b * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(row[c]) - row[best]);
    out.emplace_back(TargetLabel::from_id(static_cast<int>(best)), static_cast<float>(1.0 / total));
  }
  return out;
}

void predict_stream(const models::TwoStreamModel<float>& model, dsp::AudioSource& ch1, dsp::AudioSource& ch2,
                    const PredictOptions& options, const FrameSink& sink) {
  if (ch1.sample_rate() != dsp::kSampleRate || ch2.sample_rate() != dsp::kSampleRate) {
    throw Error("predict_stream: sources must deliver " + std::to_string(dsp::kSampleRate) + " Hz audio");
  }
  if (ch1.length() != ch2.length()) {
    throw Error("predict_stream: channel lengths differ (" + std::to_string(ch1.length()) + " vs " +
                std::to_string(ch2.length()) + " samples)");
  }
  const double duration = ch1.duration_s();
  if (!(duration > 0.0)) return;
  if (options.window_batch == 0 || options.window_batch > kWindowsPerMacro) {
    throw Error("predict_stream: window_batch must be in [1, 50]");
  }
  const auto plan = stream_plan(duration);
  const std::size_t threads = resolve_threads(options.threads);
  FrameEmitter emitter(duration, sink);

  auto load = [&](std::size_t k) {
    Block b;
    b.macro = k;
    b.windows = needed_windows(k, emitter.total());
    if (b.windows == 0) return b;
    b.first_sample = dsp::start_sample(window_start(k, 0));
    const std::int64_t last = dsp::start_sample(window_start(k, b.windows - 1));
    const auto n = static_cast<std::size_t>(last - b.first_sample + dsp::kWindowSamples);
    b.samples1.resize(n);
    b.samples2.resize(n);
    ch1.read(b.first_sample, b.samples1);
    ch2.read(b.first_sample, b.samples2);
    return b;
  };

  for (std::size_t k0 = 0; k0 < plan.size(); k0 += threads) {
    const std::size_t round = std::min(threads, plan.size() - k0);
    std::vector<Block> blocks;
    for (std::size_t r = 0; r < round; ++r) blocks.push_back(load(k0 + r));
    std::vector<std::vector<std::pair<TargetLabel, float>>> results(round);
    if (round == 1) {
      results[0] = run_block(model, blocks[0], options.window_batch);
    } else {
      std::vector<std::future<std::vector<std::pair<TargetLabel, float>>>> jobs;
      for (std::size_t r = 0; r < round; ++r) {
        jobs.push_back(std::async(std::launch::async, [&, r] { return run_block(model, blocks[r], options.window_batch); }));
      }
      for (std::size_t r = 0; r < round; ++r) results[r] = jobs[r].get();
    }
    for (const auto& res : results) {
      for (const auto& [label, conf] : res) emitter.emit(label, conf);
    }
  }
  while (emitter.emitted() < emitter.total()) emitter.emit(TargetLabel::noise(), 1.0f);
}

std::vector<FramePrediction> predict_stream(const models::TwoStreamModel<float>& model, dsp::AudioSource& ch1,
                                            dsp::AudioSource& ch2, const PredictOptions& options) {
  std::vector<FramePrediction> out;
  predict_stream(model, ch1, ch2, options, [&out](const FramePrediction& f) { out.push_back(f); });
  return out;
}

std::vector<FramePrediction> predict_offline(const models::TwoStreamModel<float>& model, const dsp::AudioChannel& ch1,
                                             const dsp::AudioChannel& ch2) {
  if (ch1.samples.size() != ch2.samples.size()) throw Error("predict_offline: channel lengths differ");
  const double duration = ch1.duration_s();
  std::vector<FramePrediction> out;
  if (!(duration > 0.0)) return out;
  FrameEmitter emitter(duration, [&out](const FramePrediction& f) { out.push_back(f); });
  for (const auto& macro : stream_plan(duration)) {
    for (std::size_t i = 0; i < needed_windows(macro.index, emitter.total()); ++i) {
      const double start = macro.starts[i];
      std::vector<dsp::SpectralSegment> s1{dsp::extract_segment(ch1, start, 1)};
      std::vector<dsp::SpectralSegment> s2{dsp::extract_segment(ch2, start, 2)};
      const auto label = classify(model, s1, s2).front();
      emitter.emit(label.first, label.second);
    }
  }
  while (emitter.emitted() < emitter.total()) emitter.emit(TargetLabel::noise(), 1.0f);
  return out;
}

void LabelMerger::push(const FramePrediction& f) {
  if (count_ > 0 && std::abs(f.begin_s - last_end_) > kTol) {
    throw Error("merge_labels: frame " + std::to_string(count_) + " starts at " + std::to_string(f.begin_s) +
                " but the previous frame ends at " + std::to_string(last_end_));
  }
  if (!f.label.is_noise()) {
    if (count_ > 0 && last_label_ == f.label) {
      calls_.back().end_s = f.end_s;
    } else {
      calls_.push_back({f.begin_s, f.end_s, f.label});
    }
  }
  last_label_ = f.label;
  last_end_ = f.end_s;
  ++count_;
}

std::vector<TrackCall> merge_labels(const std::vector<FramePrediction>& frames) {
  LabelMerger merger;
  for (const auto& f : frames) merger.push(f);
  return merger.take();
}

std::pair<SegmentFile, SegmentFile> split_by_caller(const std::vector<TrackCall>& track) {
  std::vector<CallAnnotation> a1, a2;
  for (const auto& c : track) {
    if (c.label.is_noise()) continue;
    const CallLabel cl = c.label.call_label();
    (cl.caller == Caller::kAnimal1 ? a1 : a2).push_back({cl.kind, c.begin_s, c.end_s});
  }
  return {SegmentFile(1, std::move(a1)), SegmentFile(2, std::move(a2))};
}

std::string format_frame_line(const FramePrediction& f) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.3f,%.3f,", f.begin_s, f.end_s);
  std::string out = buf;
  out += format_target_label(f.label);
  std::snprintf(buf, sizeof(buf), ",%.6f\n", static_cast<double>(f.confidence));
  return out + buf;
}

std::string format_frames_csv(const std::vector<FramePrediction>& frames) {
  std::string out = kFramesCsvHeader;
  for (const auto& f : frames) out += format_frame_line(f);
  return out;
}

}  // namespace mvx::infer
