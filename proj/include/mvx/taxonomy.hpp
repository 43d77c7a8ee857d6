// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Label universe and the per-animal segment-file model.
//
// Target classes: the eight modeled call kinds from animal 1 (ids 0-7), the
// same kinds from animal 2 (ids 8-15), and noise (id 16). Animal-2 labels are
// written with a "2" suffix ("trill2").

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mvx {

enum class CallKind : std::uint8_t {
  kTrill,
  kPhee,
  kTrillphee,
  kTwitter,
  kChirp,
  kTsik,
  kEk,
  kChatter,
};

inline constexpr std::size_t kNumCallKinds = 8;

inline constexpr std::array<CallKind, kNumCallKinds> kAllCallKinds = {
    CallKind::kTrill, CallKind::kPhee, CallKind::kTrillphee, CallKind::kTwitter,
    CallKind::kChirp, CallKind::kTsik, CallKind::kEk,        CallKind::kChatter};

enum class Caller : std::uint8_t { kAnimal1, kAnimal2 };

std::string_view call_kind_name(CallKind kind);
std::optional<CallKind> parse_call_kind(std::string_view name);

struct CallLabel {
  CallKind kind = CallKind::kTrill;
  Caller caller = Caller::kAnimal1;

  friend auto operator<=>(const CallLabel&, const CallLabel&) = default;
};

inline constexpr int kNumTargetLabels = 17;
inline constexpr int kNoiseId = 16;

/// A call label or the noise class, with a stable integer id in [0, 16].
class TargetLabel {
 public:
  constexpr TargetLabel() = default;  // noise

  static constexpr TargetLabel noise() { return TargetLabel{}; }
  static constexpr TargetLabel call(CallKind kind, Caller caller) {
    return TargetLabel(static_cast<std::uint8_t>(
        static_cast<int>(kind) +
        (caller == Caller::kAnimal2 ? static_cast<int>(kNumCallKinds) : 0)));
  }
  static constexpr TargetLabel call(CallLabel label) {
    return call(label.kind, label.caller);
  }
  /// Throws mvx::Error for ids outside [0, 16].
  static TargetLabel from_id(int id);

  constexpr int id() const { return id_; }
  constexpr bool is_noise() const { return id_ == kNoiseId; }
  /// Precondition: !is_noise().
  CallLabel call_label() const;

  friend constexpr bool operator==(TargetLabel, TargetLabel) = default;

 private:
  constexpr explicit TargetLabel(std::uint8_t id) : id_(id) {}
  std::uint8_t id_ = kNoiseId;
};

/// "trill", "trill2", ..., "noise".
std::string format_target_label(TargetLabel label);
/// Inverse of format_target_label; throws mvx::FormatError otherwise.
TargetLabel parse_target_label(std::string_view text);

/// Maps a raw annotation type onto the modeled label set. The eight modeled
/// kinds map to themselves (caller animal 1; the caller comes from which file
/// the annotation sits in); "other", "peep" and "infant cry" map to noise.
/// Matching is case-insensitive and ignores surrounding whitespace.
/// Throws mvx::FormatError listing the accepted vocabulary otherwise.
TargetLabel map_rare_label(std::string_view raw);

/// The raw annotation vocabulary accepted by map_rare_label.
std::vector<std::string> accepted_annotation_labels();

struct CallAnnotation {
  CallKind kind = CallKind::kTrill;
  double begin_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const CallAnnotation&, const CallAnnotation&) = default;
};

/// Calls of one animal, sorted by begin time and pairwise non-overlapping.
/// Intervals are half-open [begin_s, end_s); touching entries are allowed.
class SegmentFile {
 public:
  SegmentFile() = default;
  /// Sorts the entries and validates them; throws mvx::FormatError on
  /// begin >= end, negative times, or overlaps.
  SegmentFile(int animal_id, std::vector<CallAnnotation> entries);

  int animal_id() const { return animal_id_; }
  const std::vector<CallAnnotation>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  double last_end() const { return entries_.empty() ? 0.0 : entries_.back().end_s; }

  friend bool operator==(const SegmentFile&, const SegmentFile&) = default;

 private:
  int animal_id_ = 1;
  std::vector<CallAnnotation> entries_;
};

enum class LabelMode {
  kStrict,   // only the eight modeled kinds are accepted
  kLenient,  // raw dataset types go through map_rare_label; noise is dropped
};

struct SegmentParseOptions {
  int animal_id = 1;
  LabelMode mode = LabelMode::kStrict;
};

struct SegmentParseResult {
  SegmentFile file;
  std::size_t mapped_to_noise = 0;  // lenient mode: entries dropped as noise
};

/// Parses `begin_seconds,end_seconds,label` lines (LF or CRLF). A first line
/// whose first field is not a number is treated as a header; blank lines are
/// skipped. Errors name the 1-based line number.
SegmentParseResult parse_segment_file(std::string_view text,
                                      const SegmentParseOptions& options = {});

/// Header plus one LF-terminated line per entry, seconds with 3 decimals.
std::string format_segment_file(const SegmentFile& file);

SegmentParseResult read_segment_file(const std::filesystem::path& path,
                                     const SegmentParseOptions& options = {});
void write_segment_file(const std::filesystem::path& path,
                        const SegmentFile& file);

}  // namespace mvx
