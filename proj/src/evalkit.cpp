// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mvx/error.hpp"

namespace mvx::eval {
namespace {

constexpr double kTimeEps = 1e-9;

double ratio(std::uint64_t num, std::uint64_t den, bool& flag) {
  if (den == 0) {
    flag = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json report_json(const MetricReport& r) {
  const auto& c = r.counts;
  return nlohmann::json{
      {"fscore", r.f},
      {"recall", r.recall},
      {"precision", r.precision},
      {"noise_acc", r.noise_acc},
      {"call_acc", r.call_acc},
      {"total_acc", r.total_acc},
      {"counts",
       {{"c_noise", c.c_noise},
        {"c_call", c.c_call},
        {"c_all", c.c_all()},
        {"e_noise", c.e_noise},
        {"n_noise", c.n_noise},
        {"n_call", c.n_call},
        {"n_all", c.n_all()}}},
      {"degenerate",
       {{"noise_acc", r.degenerate.noise_acc},
        {"call_acc", r.degenerate.call_acc},
        {"total_acc", r.degenerate.total_acc},
        {"precision", r.degenerate.precision},
        {"recall", r.degenerate.recall},
        {"fscore", r.degenerate.fscore}}},
      {"truncated_units", r.truncated_units},
  };
}

}  // namespace

std::size_t unit_count(double duration_s) {
  if (!(duration_s > 0.0)) return 0;
  return static_cast<std::size_t>(std::ceil(duration_s / kUnitSeconds - kTimeEps));
}

Track fill_noise(const SegmentFile& file, double duration_s) {
  Track track;
  double cursor = 0.0;
  for (const auto& e : file.entries()) {
    if (e.end_s > duration_s + kTimeEps) {
      throw Error("segment [" + std::to_string(e.begin_s) + ", " + std::to_string(e.end_s) +
                  ") exceeds recording duration " + std::to_string(duration_s));
    }
    if (e.begin_s > cursor) track.push_back({cursor, e.begin_s, kNoiseSymbol});
    track.push_back({e.begin_s, e.end_s, symbol_of(e.kind)});
    cursor = e.end_s;
  }
  if (cursor < duration_s) track.push_back({cursor, duration_s, kNoiseSymbol});
  return track;
}

LabelSequence discretize(const Track& track, double duration_s) {
  LabelSequence seq;
  const std::size_t n = unit_count(duration_s);
  seq.labels.assign(n, kNoiseSymbol);
  std::size_t k = 0;
  for (std::size_t u = 0; u < n; ++u) {
    const double mid = (static_cast<double>(u) + 0.5) * kUnitSeconds;
    while (k < track.size() && track[k].end_s <= mid) ++k;
    if (k < track.size() && track[k].begin_s <= mid) seq.labels[u] = track[k].symbol;
  }
  return seq;
}

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  c_noise += o.c_noise;
  c_call += o.c_call;
  e_noise += o.e_noise;
  n_noise += o.n_noise;
  n_call += o.n_call;
  return *this;
}

double fscore(double precision, double recall) {
  const double den = precision + recall;
  if (den <= 0.0) return 0.0;
  return 2.0 * recall * precision / den;
}

MetricCounts count_labels(const LabelSequence& hyp, const LabelSequence& ref) {
  if (hyp.labels.size() != ref.labels.size()) {
    throw Error("label sequences differ in length");
  }
  MetricCounts c;
  for (std::size_t i = 0; i < ref.labels.size(); ++i) {
    const Symbol h = hyp.labels[i];
    const Symbol r = ref.labels[i];
    if (r == kNoiseSymbol) {
      ++c.n_noise;
      if (h == kNoiseSymbol) {
        ++c.c_noise;
      } else {
        ++c.e_noise;
      }
    } else {
      ++c.n_call;
      if (h == r) ++c.c_call;
    }
  }
  return c;
}

MetricReport report_from_counts(const MetricCounts& counts) {
  MetricReport r;
  r.counts = counts;
  r.noise_acc = ratio(counts.c_noise, counts.n_noise, r.degenerate.noise_acc);
  r.call_acc = ratio(counts.c_call, counts.n_call, r.degenerate.call_acc);
  r.total_acc = ratio(counts.c_all(), counts.n_all(), r.degenerate.total_acc);
  r.precision = ratio(counts.c_call, counts.c_call + counts.e_noise, r.degenerate.precision);
  r.recall = ratio(counts.c_call, counts.n_call, r.degenerate.recall);
  r.degenerate.fscore = r.precision + r.recall <= 0.0;
  r.f = fscore(r.precision, r.recall);
  return r;
}

MetricReport compute_metrics(const LabelSequence& hyp, const LabelSequence& ref) {
  const std::size_t nh = hyp.labels.size();
  const std::size_t nr = ref.labels.size();
  const std::size_t diff = nh > nr ? nh - nr : nr - nh;
  if (diff > 2) {
    throw Error("hypothesis and reference lengths differ by " + std::to_string(diff) +
                " units (" + std::to_string(nh) + " vs " + std::to_string(nr) + ")");
  }
  MetricReport r;
  if (diff == 0) {
    r = report_from_counts(count_labels(hyp, ref));
  } else {
    const std::size_t n = std::min(nh, nr);
    LabelSequence h{hyp.unit_s, {hyp.labels.begin(), hyp.labels.begin() + n}};
    LabelSequence f{ref.unit_s, {ref.labels.begin(), ref.labels.begin() + n}};
    r = report_from_counts(count_labels(h, f));
  }
  r.truncated_units = diff;
  return r;
}

PairReport evaluate_pair(const SegmentFile& pred1, const SegmentFile& pred2,
                         const SegmentFile& ref1, const SegmentFile& ref2,
                         double duration_s) {
  PairReport out;
  MetricCounts total;
  const SegmentFile* preds[2] = {&pred1, &pred2};
  const SegmentFile* refs[2] = {&ref1, &ref2};
  std::size_t truncated = 0;
  for (int a = 0; a < 2; ++a) {
    const LabelSequence hyp = discretize(fill_noise(*preds[a], duration_s), duration_s);
    const LabelSequence ref = discretize(fill_noise(*refs[a], duration_s), duration_s);
    out.animals[a] = compute_metrics(hyp, ref);
    total += out.animals[a].counts;
    truncated += out.animals[a].truncated_units;
  }
  out.pair = report_from_counts(total);
  out.pair.truncated_units = truncated;
  return out;
}

std::string report_to_json(const PairReport& report, int indent) {
  nlohmann::json j = report_json(report.pair);
  j["aggregation"] = "count_sum";
  j["animals"] = nlohmann::json::array({report_json(report.animals[0]), report_json(report.animals[1])});
  return j.dump(indent);
}

std::string format_table(const std::vector<TableRow>& rows) {
  static constexpr const char* kHeaders[] = {"F-score",    "Recall",    "Prec.",
                                             "Noise Acc.", "Call Acc.", "Total Acc."};
  std::size_t name_width = 6;
  for (const auto& row : rows) name_width = std::max(name_width, row.name.size());
  std::string out;
  char buf[64];
  out += std::string(name_width, ' ');
  for (const char* h : kHeaders) {
    std::snprintf(buf, sizeof buf, "  %10s", h);
    out += buf;
  }
  out += '\n';
  for (const auto& row : rows) {
    out += row.name + std::string(name_width - row.name.size(), ' ');
    const MetricReport& r = row.report;
    for (double v : {r.f, r.recall, r.precision, r.noise_acc, r.call_acc, r.total_acc}) {
      std::snprintf(buf, sizeof buf, "  %10.4f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace mvx::eval
