// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// mvx: featurize | train | predict | evaluate | synth

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvx/config.hpp"
#include "mvx/dsp.hpp"
#include "mvx/error.hpp"
#include "mvx/evalkit.hpp"
#include "mvx/infer.hpp"
#include "mvx/models/checkpoint.hpp"
#include "mvx/synth.hpp"
#include "mvx/train.hpp"

namespace fs = std::filesystem;
using namespace mvx;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : read_run_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--config", c.config, "key=value run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "overrides the seed key");
  app->add_option("--set", c.overrides, "overrides one config key (key=value), repeatable");
  auto* out = app->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw Error("cannot write " + path.string());
}

int cmd_featurize(const Common& c, const std::string& wav1, const std::string& wav2) {
  const RunConfig cfg = resolve_config(c);
  auto [s1, s2] = dsp::open_wav_pair(wav1, wav2, cfg.sample_rate);
  const auto starts = dsp::segment_grid(s1->duration_s(), cfg.train_shift_s, cfg.window_s);
  fs::create_directories(c.out);
  dsp::SegmentCacheWriter w1(fs::path(c.out) / "ch1"), w2(fs::path(c.out) / "ch2");
  std::vector<float> buf(dsp::kWindowSamples);
  dsp::SpectralSegment seg;
  for (double start : starts) {
    for (int ch = 1; ch <= 2; ++ch) {
      (ch == 1 ? *s1 : *s2).read(dsp::start_sample(start), buf);
      dsp::segment_from_samples(buf, seg.values);
      seg.origin_s = start;
      seg.channel = ch;
      (ch == 1 ? w1 : w2).append(seg);
    }
  }
  std::printf("wrote %zu segment pairs to %s\n", starts.size(), c.out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::string& manifest) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_text(out / "config.resolved", format_run_config(cfg));
  auto [train_sessions, dev_sessions] = train::split_sessions(train::read_manifest(manifest));
  const auto tcfg = cfg.to_train_config();
  const auto dataset = train::build_dataset(train_sessions, tcfg);
  for (const auto& w : dataset.stats.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto& st = dataset.stats;
  std::printf("dataset: %zu sessions, %zu windows, %zu calls, %zu/%zu noise kept\n", st.sessions, st.windows,
              st.calls, st.noise_kept, st.noise_total);
  const auto result = train::train(dataset, dev_sessions, tcfg, {out / "model.ckpt", out / "train_log.csv"},
                                   [](const train::EpochLog& e) {
                                     std::printf("epoch %d lr %.6g loss %.4f train_acc %.4f dev_f %.4f\n", e.epoch,
                                                 e.lr, e.loss, e.train_acc, e.dev_fscore);
                                     std::fflush(stdout);
                                   });
  nlohmann::json j = {{"sessions", st.sessions},
                      {"dev_sessions", dev_sessions.size()},
                      {"windows", st.windows},
                      {"calls", st.calls},
                      {"noise_total", st.noise_total},
                      {"noise_kept", st.noise_kept},
                      {"noise_selection", "fixed once per run (seeded)"},
                      {"conflicts", st.conflicts},
                      {"mapped_to_noise", st.mapped_to_noise},
                      {"best_epoch", result.best_epoch},
                      {"parameters", result.model.parameter_count()}};
  write_text(out / "train_stats.json", j.dump(2) + "\n");
  if (!fs::exists(out / "model.ckpt")) models::save_checkpoint(out / "model.ckpt", result.model);
  return 0;
}

int cmd_predict(const Common& c, const std::string& wav1, const std::string& wav2, const std::string& ckpt,
                bool no_stream, std::size_t threads) {
  const RunConfig cfg = resolve_config(c);
  const auto model = models::load_checkpoint(ckpt);
  const fs::path out(c.out);
  fs::create_directories(out);
  std::ofstream frames(out / "frames.csv", std::ios::binary | std::ios::trunc);
  if (!frames) throw Error("cannot write " + (out / "frames.csv").string());
  infer::LabelMerger merger;
  double duration = 0.0;
  auto sink = [&](const infer::FramePrediction& f) {
    frames << infer::format_frame_line(f);
    merger.push(f);
  };
  frames << infer::kFramesCsvHeader;
  if (no_stream) {
    const auto [a1, a2] = dsp::load_wav_pair(wav1, wav2, cfg.sample_rate);
    duration = a1.duration_s();
    for (const auto& f : infer::predict_offline(model, a1, a2)) sink(f);
  } else {
    auto [s1, s2] = dsp::open_wav_pair(wav1, wav2, cfg.sample_rate);
    duration = s1->duration_s();
    infer::PredictOptions opts;
    opts.threads = threads;
    infer::predict_stream(model, *s1, *s2, opts, sink);
  }
  frames.flush();
  if (!frames) throw Error("write failed for " + (out / "frames.csv").string());
  const auto [p1, p2] = infer::split_by_caller(merger.take());
  write_segment_file(out / "animal1.csv", p1);
  write_segment_file(out / "animal2.csv", p2);
  nlohmann::json meta = {{"duration_s", duration},
                         {"frames", infer::frame_count(duration)},
                         {"mode", no_stream ? "offline" : "stream"},
                         {"tail", "last macro-segment zero-padded past the recording end"},
                         {"leading_noise_frames", infer::kFrameLag}};
  write_text(out / "predict_meta.json", meta.dump(2) + "\n");
  std::printf("%zu + %zu calls, %.3f s\n", p1.size(), p2.size(), duration);
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& pred, const std::string& ref, std::optional<double> duration,
                 const std::vector<double>& from_pr) {
  if (!from_pr.empty()) {
    if (from_pr.size() != 2) throw Error("--from-pr expects PRECISION RECALL");
    std::printf("%.4f\n", eval::fscore(from_pr[0], from_pr[1]));
    return 0;
  }
  if (pred.empty() || ref.empty() || !duration) throw Error("evaluate needs --pred, --ref and --duration");
  auto load = [](const fs::path& dir, int animal) {
    const fs::path p = dir / ("animal" + std::to_string(animal) + ".csv");
    if (!fs::exists(p)) throw Error("missing segment file " + p.string());
    SegmentParseOptions o;
    o.animal_id = animal;
    o.mode = LabelMode::kLenient;
    return read_segment_file(p, o).file;
  };
  const auto report = eval::evaluate_pair(load(pred, 1), load(pred, 2), load(ref, 1), load(ref, 2), *duration);
  const std::string json = eval::report_to_json(report);
  std::printf("%s", eval::format_table({{"pair", report.pair},
                                        {"animal1", report.animals[0]},
                                        {"animal2", report.animals[1]}})
                        .c_str());
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "report.json", json + "\n");
  } else {
    std::printf("%s\n", json.c_str());
  }
  return 0;
}

int cmd_synth(const Common& c, int sessions, double duration, int dev) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  std::vector<train::Session> list;
  for (int i = 0; i < sessions; ++i) {
    synth::SynthOptions o;
    o.duration_s = duration;
    o.seed = cfg.seed * 1000 + static_cast<std::uint64_t>(i);
    auto s = synth::write_session(out, "s" + std::to_string(i), o);
    s.dev = i >= sessions - dev;
    list.push_back(std::move(s));
  }
  train::write_manifest(out / "manifest.jsonl", list);
  std::printf("wrote %d sessions to %s\n", sessions, (out / "manifest.jsonl").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvx: two-recorder call segmentation and caller identification"};
  app.require_subcommand(1);
  Common common;

  std::string wav1, wav2, manifest, ckpt, pred, ref;
  bool no_stream = false;
  std::size_t threads = 0;
  std::optional<double> duration;
  std::vector<double> from_pr;
  int sessions = 4, dev = 1;
  double synth_duration = 60.0;

  auto* featurize = app.add_subcommand("featurize", "write spectral segment caches for a recording pair");
  add_common(featurize, common, true);
  featurize->add_option("--wav1", wav1)->required()->check(CLI::ExistingFile);
  featurize->add_option("--wav2", wav2)->required()->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "train a two-stream model from a corpus manifest");
  add_common(train_cmd, common, true);
  train_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "segment a recording pair");
  add_common(predict, common, true);
  predict->add_option("--wav1", wav1)->required();
  predict->add_option("--wav2", wav2)->required();
  predict->add_option("--checkpoint", ckpt)->required();
  predict->add_flag("--no-stream", no_stream, "load both recordings and run the window-by-window reference loop");
  predict->add_option("--threads", threads, "worker threads (default: MVX_THREADS or CPU count)");

  auto* evaluate = app.add_subcommand("evaluate", "score predicted segment files against references");
  add_common(evaluate, common, false);
  evaluate->add_option("--pred", pred, "directory with animal1.csv and animal2.csv");
  evaluate->add_option("--ref", ref, "directory with animal1.csv and animal2.csv");
  evaluate->add_option("--duration", duration, "recording length in seconds");
  evaluate->add_option("--from-pr", from_pr, "print the F-score of PRECISION RECALL")->expected(2);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic two-recorder corpus");
  add_common(synth_cmd, common, true);
  synth_cmd->add_option("--sessions", sessions)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--duration", synth_duration)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dev", dev, "trailing sessions marked as dev");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*featurize) return cmd_featurize(common, wav1, wav2);
    if (*train_cmd) return cmd_train(common, manifest);
    if (*predict) return cmd_predict(common, wav1, wav2, ckpt, no_stream, threads);
    if (*evaluate) return cmd_evaluate(common, pred, ref, duration, from_pr);
    if (*synth_cmd) return cmd_synth(common, sessions, synth_duration, dev);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mvx: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
