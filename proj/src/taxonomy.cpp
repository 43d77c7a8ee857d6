// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvx/error.hpp"

namespace mvx {
namespace {

constexpr std::array<std::string_view, kNumCallKinds> kKindNames = {
    "trill", "phee", "trillphee", "twitter", "chirp", "tsik", "ek", "chatter"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Raw annotation types that are folded into noise, plus spelling variants.
constexpr std::array<std::string_view, 6> kNoiseAliases = {
    "other", "peep", "infant cry", "infant_cry", "infantcry", "noise"};

}  // namespace

std::string_view call_kind_name(CallKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<CallKind> parse_call_kind(std::string_view name) {
  for (std::size_t i = 0; i < kNumCallKinds; ++i) {
    if (kKindNames[i] == name) return static_cast<CallKind>(i);
  }
  return std::nullopt;
}

TargetLabel TargetLabel::from_id(int id) {
  if (id < 0 || id >= kNumTargetLabels) {
    throw Error("target label id out of range: " + std::to_string(id));
  }
  return TargetLabel(static_cast<std::uint8_t>(id));
}

CallLabel TargetLabel::call_label() const {
  const int kinds = static_cast<int>(kNumCallKinds);
  return CallLabel{static_cast<CallKind>(id_ % kinds),
                   id_ >= kinds ? Caller::kAnimal2 : Caller::kAnimal1};
}

std::string format_target_label(TargetLabel label) {
  if (label.is_noise()) return "noise";
  const CallLabel call = label.call_label();
  std::string out(call_kind_name(call.kind));
  if (call.caller == Caller::kAnimal2) out += '2';
  return out;
}

TargetLabel parse_target_label(std::string_view text) {
  if (text == "noise") return TargetLabel::noise();
  Caller caller = Caller::kAnimal1;
  std::string_view base = text;
  if (!base.empty() && base.back() == '2') {
    caller = Caller::kAnimal2;
    base.remove_suffix(1);
  }
  if (auto kind = parse_call_kind(base)) return TargetLabel::call(*kind, caller);
  throw FormatError("unknown target label '" + std::string(text) + "'");
}

std::vector<std::string> accepted_annotation_labels() {
  std::vector<std::string> out;
  for (auto name : kKindNames) out.emplace_back(name);
  out.emplace_back("tr");
  for (auto name : kNoiseAliases) out.emplace_back(name);
  return out;
}

TargetLabel map_rare_label(std::string_view raw) {
  const std::string key = lower(trim(raw));
  if (auto kind = parse_call_kind(key)) return TargetLabel::call(*kind, Caller::kAnimal1);
  if (key == "tr") return TargetLabel::call(CallKind::kTrill, Caller::kAnimal1);
  for (auto alias : kNoiseAliases) {
    if (key == alias) return TargetLabel::noise();
  }
  std::string msg = "unknown annotation label '" + std::string(raw) + "'; accepted: ";
  const auto vocab = accepted_annotation_labels();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i) msg += ", ";
    msg += vocab[i];
  }
  throw FormatError(msg);
}

SegmentFile::SegmentFile(int animal_id, std::vector<CallAnnotation> entries)
    : animal_id_(animal_id), entries_(std::move(entries)) {
  if (animal_id_ != 1 && animal_id_ != 2) {
    throw FormatError("animal id must be 1 or 2, got " + std::to_string(animal_id_));
  }
  for (const auto& e : entries_) {
    if (!(e.begin_s >= 0.0) || !std::isfinite(e.end_s)) {
      throw FormatError("segment times must be finite and non-negative");
    }
    if (!(e.begin_s < e.end_s)) {
      throw FormatError("segment begin must be < end (" + std::to_string(e.begin_s) +
                        " >= " + std::to_string(e.end_s) + ")");
    }
  }
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const CallAnnotation& a, const CallAnnotation& b) {
                     return a.begin_s < b.begin_s;
                   });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].begin_s < entries_[i - 1].end_s) {
      throw FormatError("overlapping segments at " + std::to_string(entries_[i].begin_s) +
                        "s in segment file of animal " + std::to_string(animal_id_));
    }
  }
}

SegmentParseResult parse_segment_file(std::string_view text,
                                      const SegmentParseOptions& options) {
  std::vector<CallAnnotation> entries;
  SegmentParseResult result;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    const auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    const bool first = !seen_content;
    seen_content = true;
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      if (first && !parse_double(line.substr(0, c1))) continue;  // header
      throw FormatError(where() + "expected 'begin_seconds,end_seconds,label'");
    }
    const auto begin = parse_double(line.substr(0, c1));
    if (!begin && first) continue;  // header
    const auto end = parse_double(line.substr(c1 + 1, c2 - c1 - 1));
    if (!begin || !end) throw FormatError(where() + "malformed time value");
    if (*begin < 0.0) throw FormatError(where() + "negative begin time");
    if (!(*begin < *end)) throw FormatError(where() + "begin must be < end");

    const std::string_view label = trim(line.substr(c2 + 1));
    CallKind kind{};
    if (options.mode == LabelMode::kStrict) {
      auto parsed = parse_call_kind(label);
      if (!parsed) throw FormatError(where() + "unknown call label '" + std::string(label) + "'");
      kind = *parsed;
    } else {
      TargetLabel mapped;
      try {
        mapped = map_rare_label(label);
      } catch (const FormatError& e) {
        throw FormatError(where() + e.what());
      }
      if (mapped.is_noise()) {
        ++result.mapped_to_noise;
        continue;
      }
      kind = mapped.call_label().kind;
    }
    entries.push_back(CallAnnotation{kind, *begin, *end});
  }
  result.file = SegmentFile(options.animal_id, std::move(entries));
  return result;
}

std::string format_segment_file(const SegmentFile& file) {
  std::string out = "begin_seconds,end_seconds,label\n";
  char buf[96];
  for (const auto& e : file.entries()) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,", e.begin_s, e.end_s);
    out += buf;
    out += call_kind_name(e.kind);
    out += '\n';
  }
  return out;
}

SegmentParseResult read_segment_file(const std::filesystem::path& path,
                                     const SegmentParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open segment file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_segment_file(ss.str(), options);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_segment_file(const std::filesystem::path& path, const SegmentFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write segment file " + path.string());
  out << format_segment_file(file);
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace mvx
