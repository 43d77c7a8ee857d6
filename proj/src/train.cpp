// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "mvx/error.hpp"
#include "mvx/evalkit.hpp"
#include "mvx/infer.hpp"
#include "mvx/models/checkpoint.hpp"
#include "mvx/nn/ops.hpp"

namespace mvx::train {
namespace {

constexpr double kTol = 1e-9;

// Largest single-call overlap of one animal's calls with [lo, hi).
struct Overlap {
  double length = 0.0;
  CallKind kind = CallKind::kTrill;
};

Overlap best_overlap(const SegmentFile& file, double lo, double hi) {
  Overlap best;
  for (const auto& e : file.entries()) {
    if (e.begin_s >= hi) break;
    const double len = std::min(e.end_s, hi) - std::max(e.begin_s, lo);
    if (len > best.length + kTol) best = {len, e.kind};
  }
  return best;
}

SegmentFile read_annotations(const std::filesystem::path& path, int animal, std::size_t& mapped) {
  SegmentParseOptions opts;
  opts.animal_id = animal;
  opts.mode = LabelMode::kLenient;
  auto r = read_segment_file(path, opts);
  mapped += r.mapped_to_noise;
  return std::move(r.file);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<Session> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<Session> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Session s;
      s.id = j.at("id").get<std::string>();
      s.wav1 = resolve(base, j.at("wav1").get<std::string>());
      s.wav2 = resolve(base, j.at("wav2").get<std::string>());
      s.ann1 = resolve(base, j.at("ann1").get<std::string>());
      s.ann2 = resolve(base, j.at("ann2").get<std::string>());
      s.dev = j.value("split", std::string("train")) == "dev";
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Session>& sessions) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& s : sessions) {
    nlohmann::json j = {{"id", s.id},
                        {"wav1", s.wav1.string()},
                        {"wav2", s.wav2.string()},
                        {"ann1", s.ann1.string()},
                        {"ann2", s.ann2.string()}};
    if (s.dev) j["split"] = "dev";
    out << j.dump() << '\n';
  }
}

std::pair<std::vector<Session>, std::vector<Session>> split_sessions(std::vector<Session> sessions) {
  std::vector<Session> train, dev;
  const bool marked = std::any_of(sessions.begin(), sessions.end(), [](const Session& s) { return s.dev; });
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const bool is_dev = marked ? sessions[i].dev : (sessions.size() > 1 && i + 1 == sessions.size());
    (is_dev ? dev : train).push_back(std::move(sessions[i]));
  }
  return {std::move(train), std::move(dev)};
}

TargetLabel assign_target_label(double start_s, const SegmentFile& ann1, const SegmentFile& ann2,
                                std::size_t* conflicts) {
  const double lo = start_s + kMiddleBegin, hi = start_s + kMiddleEnd;
  const Overlap o1 = best_overlap(ann1, lo, hi);
  const Overlap o2 = best_overlap(ann2, lo, hi);
  const bool has1 = o1.length > kTol, has2 = o2.length > kTol;
  if (has1 && has2) {
    if (conflicts) ++*conflicts;
    return o2.length > o1.length + kTol ? TargetLabel::call(o2.kind, Caller::kAnimal2)
                                        : TargetLabel::call(o1.kind, Caller::kAnimal1);
  }
  if (has1) return TargetLabel::call(o1.kind, Caller::kAnimal1);
  if (has2) return TargetLabel::call(o2.kind, Caller::kAnimal2);
  return TargetLabel::noise();
}

std::vector<std::size_t> noise_keep_indices(std::span<const TargetLabel> labels, double keep, std::uint64_t seed) {
  if (!(keep > 0.0 && keep <= 1.0)) throw Error("noise_keep must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(keep);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_noise() || coin(rng)) out.push_back(i);
  }
  return out;
}

std::vector<TrainExample> subsample_noise(std::vector<TrainExample> examples, double keep, std::uint64_t seed) {
  std::vector<TargetLabel> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) labels.push_back(e.target);
  std::vector<TrainExample> out;
  for (std::size_t i : noise_keep_indices(labels, keep, seed)) out.push_back(std::move(examples[i]));
  return out;
}

void TrainConfig::validate() const {
  if (!(noise_keep > 0.0 && noise_keep <= 1.0)) throw Error("noise_keep must be in (0, 1]");
  if (!(shift_s > 0.0)) throw Error("train_shift_s must be positive");
  if (std::abs(window_s - dsp::kWindowSeconds) > kTol) throw Error("window_s must be 0.5 (fixed segment geometry)");
  if (std::abs(predict_shift_s - infer::kFrameSeconds) > kTol) {
    throw Error("predict_shift_s must be 0.05 (fixed frame unit)");
  }
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (batch == 0) throw Error("batch must be positive");
  if (!(lr0 > 0.0) || !(lr_decay > 0.0)) throw Error("lr0 and lr_decay must be positive");
  model.validate();
}

Dataset build_dataset(const std::vector<Session>& sessions, const TrainConfig& cfg) {
  if (sessions.empty()) throw Error("training corpus is empty");
  Dataset ds;
  ds.stats.sessions = sessions.size();
  struct Candidate {
    std::size_t session;
    double start;
  };
  std::vector<Candidate> cands;
  std::vector<TargetLabel> labels;
  std::vector<std::pair<dsp::AudioChannel, dsp::AudioChannel>> audio;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto& sess = sessions[s];
    for (const auto& p : {sess.wav1, sess.wav2, sess.ann1, sess.ann2}) {
      if (!std::filesystem::exists(p)) throw Error("session " + sess.id + ": missing file " + p.string());
    }
    audio.push_back(dsp::load_wav_pair(sess.wav1, sess.wav2));
    const SegmentFile a1 = read_annotations(sess.ann1, 1, ds.stats.mapped_to_noise);
    const SegmentFile a2 = read_annotations(sess.ann2, 2, ds.stats.mapped_to_noise);
    for (double start : dsp::segment_grid(audio.back().first.duration_s(), cfg.shift_s, cfg.window_s)) {
      cands.push_back({s, start});
      labels.push_back(assign_target_label(start, a1, a2, &ds.stats.conflicts));
    }
  }
  ds.stats.windows = labels.size();
  for (const auto& l : labels) (l.is_noise() ? ds.stats.noise_total : ds.stats.calls) += 1;
  const auto keep = noise_keep_indices(labels, cfg.noise_keep, cfg.seed);
  for (std::size_t i : keep) {
    const auto& [ch1, ch2] = audio[cands[i].session];
    TrainExample ex;
    ex.start_s = cands[i].start;
    ex.ch1 = dsp::extract_segment(ch1, ex.start_s, 1);
    ex.ch2 = dsp::extract_segment(ch2, ex.start_s, 2);
    ex.target = labels[i];
    if (ex.target.is_noise()) ++ds.stats.noise_kept;
    ds.examples.push_back(std::move(ex));
  }
  if (ds.stats.calls == 0) ds.stats.warnings.push_back("degenerate corpus: every window is noise");
  if (ds.stats.conflicts > 0) {
    ds.stats.warnings.push_back(std::to_string(ds.stats.conflicts) +
                                " windows had calls from both animals; the larger overlap was used");
  }
  return ds;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

struct Batch {
  models::StreamInput<float> ch1, ch2;
  std::vector<int> targets;
};

Batch make_batch(const std::vector<const TrainExample*>& examples, std::mt19937_64* rng) {
  std::vector<dsp::SpectralSegment> rolled1, rolled2;
  std::vector<const dsp::SpectralSegment*> p1, p2;
  Batch b;
  if (rng) {
    rolled1.reserve(examples.size());
    rolled2.reserve(examples.size());
    for (const auto* e : examples) {
      rolled1.push_back(dsp::roll_shift(e->ch1, *rng));
      rolled2.push_back(dsp::roll_shift(e->ch2, *rng));
    }
    for (std::size_t i = 0; i < examples.size(); ++i) {
      p1.push_back(&rolled1[i]);
      p2.push_back(&rolled2[i]);
    }
  } else {
    for (const auto* e : examples) {
      p1.push_back(&e->ch1);
      p2.push_back(&e->ch2);
    }
  }
  for (const auto* e : examples) b.targets.push_back(e->target.id());
  b.ch1 = models::make_stream_input(p1, 1);
  b.ch2 = models::make_stream_input(p2, 2);
  return b;
}

std::size_t count_correct(const nn::TensorF& logits, const std::vector<int>& targets) {
  std::size_t hits = 0;
  const std::size_t c = logits.dim(1);
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const float* row = logits.data().data() + b * c;
    const auto best = static_cast<int>(std::max_element(row, row + c) - row);
    hits += best == targets[b];
  }
  return hits;
}

}  // namespace

StepResult train_step(models::TwoStreamModel<float>& model, nn::AdamState& opt,
                      const std::vector<const TrainExample*>& batch, double lr, std::mt19937_64* augment_rng) {
  auto params = model.tensors();
  for (auto& p : params) p.zero_grad();
  const Batch b = make_batch(batch, augment_rng);
  nn::TensorF logits = model.forward(b.ch1, b.ch2);
  nn::TensorF loss = nn::cross_entropy(logits, std::span<const int>(b.targets));
  StepResult r;
  r.loss = loss.item();
  r.correct = count_correct(logits, b.targets);
  loss.backward();
  opt.options().lr = lr;
  opt.step(params);
  return r;
}

LossAccuracy evaluate_examples(const models::TwoStreamModel<float>& model, const std::vector<TrainExample>& examples,
                               std::size_t batch) {
  nn::NoGradGuard no_grad;
  LossAccuracy out;
  if (examples.empty()) return out;
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i0 = 0; i0 < examples.size(); i0 += batch) {
    std::vector<const TrainExample*> ptrs;
    for (std::size_t i = i0; i < std::min(examples.size(), i0 + batch); ++i) ptrs.push_back(&examples[i]);
    const Batch b = make_batch(ptrs, nullptr);
    const nn::TensorF logits = model.forward(b.ch1, b.ch2);
    loss += nn::cross_entropy(logits, std::span<const int>(b.targets)).item() * static_cast<double>(ptrs.size());
    hits += count_correct(logits, b.targets);
  }
  out.loss = loss / static_cast<double>(examples.size());
  out.accuracy = static_cast<double>(hits) / static_cast<double>(examples.size());
  return out;
}

DevScore evaluate_sessions(const models::TwoStreamModel<float>& model, const std::vector<Session>& sessions) {
  eval::MetricCounts counts;
  for (const auto& s : sessions) {
    auto [src1, src2] = dsp::open_wav_pair(s.wav1, s.wav2);
    const double duration = src1->duration_s();
    infer::LabelMerger merger;
    infer::predict_stream(model, *src1, *src2, {}, [&merger](const infer::FramePrediction& f) { merger.push(f); });
    const auto [pred1, pred2] = infer::split_by_caller(merger.take());
    std::size_t mapped = 0;
    const SegmentFile ref1 = read_annotations(s.ann1, 1, mapped);
    const SegmentFile ref2 = read_annotations(s.ann2, 2, mapped);
    counts += eval::evaluate_pair(pred1, pred2, ref1, ref2, duration).pair.counts;
  }
  const auto report = eval::report_from_counts(counts);
  return {report.f, report.total_acc};
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,loss,dev_fscore,train_acc,dev_total_acc\n";
  char buf[192];
  auto num = [](double v, const char* fmt) {
    if (std::isnan(v)) return std::string("nan");
    char b[48];
    std::snprintf(b, sizeof(b), fmt, v);
    return std::string(b);
  };
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%s,%s,%s\n", e.epoch, num(e.lr, "%.8g").c_str(),
                  num(e.loss, "%.6f").c_str(), num(e.dev_fscore, "%.6f").c_str(), num(e.train_acc, "%.6f").c_str(),
                  num(e.dev_total_acc, "%.6f").c_str());
    out += buf;
  }
  return out;
}

TrainResult train(const Dataset& dataset, const std::vector<Session>& dev_sessions, const TrainConfig& cfg,
                  const TrainOutputs& outputs, const std::function<void(const EpochLog&)>& progress) {
  cfg.validate();
  if (dataset.examples.empty()) throw Error("training corpus produced no examples");
  TrainResult result;
  result.stats = dataset.stats;
  result.model = models::TwoStreamModel<float>(cfg.model, cfg.seed);
  auto& model = result.model;
  nn::AdamState opt(model.tensors(), {cfg.lr0, 0.9, 0.999, 1e-8});
  std::mt19937_64 augment_rng(cfg.seed + 0x5bd1e995ull);
  std::vector<std::vector<float>> best;
  double best_f = -std::numeric_limits<double>::infinity();
  const std::size_t n = dataset.examples.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = nn::scheduled_lr(cfg.lr0, cfg.lr_decay, epoch);
    const auto order = epoch_order(n, cfg.seed, epoch);
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t i0 = 0; i0 < n; i0 += cfg.batch) {
      std::vector<const TrainExample*> batch;
      for (std::size_t i = i0; i < std::min(n, i0 + cfg.batch); ++i) batch.push_back(&dataset.examples[order[i]]);
      const auto r = train_step(model, opt, batch, log.lr, cfg.augment ? &augment_rng : nullptr);
      loss += r.loss * static_cast<double>(batch.size());
      hits += r.correct;
    }
    log.loss = loss / static_cast<double>(n);
    log.train_acc = static_cast<double>(hits) / static_cast<double>(n);
    const bool has_dev = !dev_sessions.empty();
    log.dev_fscore = log.dev_total_acc = std::numeric_limits<double>::quiet_NaN();
    if (has_dev) {
      const auto score = evaluate_sessions(model, dev_sessions);
      log.dev_fscore = score.fscore;
      log.dev_total_acc = score.total_acc;
    }
    if (!has_dev || log.dev_fscore > best_f) {
      best_f = has_dev ? log.dev_fscore : best_f;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.params()) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      if (!outputs.checkpoint.empty()) models::save_checkpoint(outputs.checkpoint, model);
    }
    result.log.push_back(log);
    if (!outputs.log_csv.empty()) {
      std::ofstream out(outputs.log_csv, std::ios::trunc);
      out << format_log_csv(result.log);
    }
    if (progress) progress(log);
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      nn::TensorF t = model.params()[i].tensor;
      std::copy(best[i].begin(), best[i].end(), t.mutable_data().begin());
    }
  } else if (!outputs.checkpoint.empty()) {
    models::save_checkpoint(outputs.checkpoint, model);
  }
  for (auto& t : model.tensors()) {
    nn::TensorF h = t;
    h.zero_grad();
  }
  return result;
}

}  // namespace mvx::train
