// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Frame-level evaluation of predicted against annotated segment files.
//
// Both files are filled with noise between calls, discretized into 50 ms
// units (each unit takes the label covering its midpoint) and compared
// position by position:
//
//   noise_acc = c_noise / n_noise        call_acc  = c_call / n_call
//   total_acc = c_all / n_all            precision = c_call / (c_call + e_noise)
//   recall    = c_call / n_call          f         = 2 * p * r / (p + r)
//
// c_call counts units whose reference is a call and whose hypothesis is the
// same call kind; e_noise counts units annotated noise but predicted as any
// call. A 0/0 ratio is reported as 0 and flagged.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvx/taxonomy.hpp"

namespace mvx::eval {

inline constexpr double kUnitSeconds = 0.05;

/// Per-unit symbols: CallKind values 0-7, noise = 8.
using Symbol = std::uint8_t;
inline constexpr Symbol kNoiseSymbol = 8;
inline constexpr std::size_t kNumSymbols = 9;

inline Symbol symbol_of(CallKind kind) { return static_cast<Symbol>(kind); }

/// Units needed to cover duration_s: ceil(duration / 0.05).
std::size_t unit_count(double duration_s);

struct TrackInterval {
  double begin_s = 0.0;
  double end_s = 0.0;
  Symbol symbol = kNoiseSymbol;

  friend bool operator==(const TrackInterval&, const TrackInterval&) = default;
};

/// Gap-free cover of [0, duration) by calls and noise.
using Track = std::vector<TrackInterval>;

struct LabelSequence {
  double unit_s = kUnitSeconds;
  std::vector<Symbol> labels;

  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

/// Inserts noise intervals between (and around) the calls of `file`.
/// Throws mvx::Error when an entry ends after duration_s.
Track fill_noise(const SegmentFile& file, double duration_s);

/// Unit u gets the symbol of the interval covering (u + 0.5) * 0.05 s; units
/// not covered by the track are noise.
LabelSequence discretize(const Track& track, double duration_s);

struct MetricCounts {
  std::uint64_t c_noise = 0;
  std::uint64_t c_call = 0;
  std::uint64_t e_noise = 0;
  std::uint64_t n_noise = 0;
  std::uint64_t n_call = 0;

  std::uint64_t c_all() const { return c_noise + c_call; }
  std::uint64_t n_all() const { return n_noise + n_call; }

  MetricCounts& operator+=(const MetricCounts& o);
  friend bool operator==(const MetricCounts&, const MetricCounts&) = default;
};

/// Which ratios had a zero denominator.
struct DegenerateFlags {
  bool noise_acc = false;
  bool call_acc = false;
  bool total_acc = false;
  bool precision = false;
  bool recall = false;
  bool fscore = false;

  bool any() const {
    return noise_acc || call_acc || total_acc || precision || recall || fscore;
  }
};

struct MetricReport {
  MetricCounts counts;
  double noise_acc = 0.0;
  double call_acc = 0.0;
  double total_acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  DegenerateFlags degenerate;
  std::size_t truncated_units = 0;  // hyp/ref length difference absorbed
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double fscore(double precision, double recall);

/// Counts only; requires equal lengths.
MetricCounts count_labels(const LabelSequence& hyp, const LabelSequence& ref);

/// Applies the six ratios to raw counts.
MetricReport report_from_counts(const MetricCounts& counts);

/// Sequences whose lengths differ by at most 2 units are truncated to the
/// shorter one (recorded in truncated_units); larger differences throw.
MetricReport compute_metrics(const LabelSequence& hyp, const LabelSequence& ref);

struct PairReport {
  MetricReport pair;  // ratios over the summed counts of both animals
  std::array<MetricReport, 2> animals;
};

/// Per animal: fill, discretize, count; then sums the counts across animals.
PairReport evaluate_pair(const SegmentFile& pred1, const SegmentFile& pred2,
                         const SegmentFile& ref1, const SegmentFile& ref2,
                         double duration_s);

/// JSON object with the six metrics, every count and the degenerate flags.
std::string report_to_json(const PairReport& report, int indent = 2);

struct TableRow {
  std::string name;
  MetricReport report;
};

/// Aligned text table with columns F-score, Recall, Prec., Noise Acc.,
/// Call Acc., Total Acc. (4 decimals).
std::string format_table(const std::vector<TableRow>& rows);

}  // namespace mvx::eval
