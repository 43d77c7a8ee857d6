// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Supervised dataset assembly and the training loop.
//
// Windows of 0.5 s are taken every `shift_s` seconds. A window's target is
// decided by the calls overlapping its middle 150 ms, [start + 0.175,
// start + 0.325). Noise windows are thinned once per run (seeded); every call
// window is kept.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mvx/dsp.hpp"
#include "mvx/models/twostream.hpp"
#include "mvx/nn/adam.hpp"
#include "mvx/taxonomy.hpp"

namespace mvx::train {

inline constexpr double kMiddleBegin = 0.175;
inline constexpr double kMiddleEnd = 0.325;

struct Session {
  std::string id;
  std::filesystem::path wav1, wav2, ann1, ann2;
  bool dev = false;  // "split": "dev" in the manifest
};

/// JSON-lines manifest {id, wav1, wav2, ann1, ann2[, split]}; relative paths
/// resolve against the manifest's directory. Errors name the line.
std::vector<Session> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<Session>& sessions);

/// Sessions marked dev, or the last session when none is marked and there is
/// more than one.
std::pair<std::vector<Session>, std::vector<Session>> split_sessions(std::vector<Session> sessions);

/// Target label for the window starting at start_s. When both animals have a
/// call in the middle interval the larger overlap wins (ties go to animal 1)
/// and *conflicts is incremented.
TargetLabel assign_target_label(double start_s, const SegmentFile& ann1, const SegmentFile& ann2,
                                std::size_t* conflicts = nullptr);

struct TrainExample {
  double start_s = 0.0;
  dsp::SpectralSegment ch1;
  dsp::SpectralSegment ch2;
  TargetLabel target;
};

/// Indices kept by noise thinning: all calls, each noise entry independently
/// with probability `keep`. Deterministic in `seed`.
std::vector<std::size_t> noise_keep_indices(std::span<const TargetLabel> labels, double keep,
                                            std::uint64_t seed);

std::vector<TrainExample> subsample_noise(std::vector<TrainExample> examples, double keep,
                                          std::uint64_t seed);

struct TrainConfig {
  double window_s = 0.5;
  double shift_s = 0.15;
  double predict_shift_s = 0.05;
  double noise_keep = 0.2;
  double lr0 = 3e-4;
  double lr_decay = 0.97;
  int epochs = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  models::TwoStreamConfig model;
  bool augment = true;

  /// Throws mvx::Error on out-of-range values.
  void validate() const;
};

struct DatasetStats {
  std::size_t sessions = 0;
  std::size_t windows = 0;
  std::size_t calls = 0;
  std::size_t noise_total = 0;
  std::size_t noise_kept = 0;
  std::size_t conflicts = 0;
  std::size_t mapped_to_noise = 0;  // annotation entries of unmodeled types
  std::vector<std::string> warnings;
};

struct Dataset {
  std::vector<TrainExample> examples;
  DatasetStats stats;
};

/// Throws mvx::Error for an empty corpus or unreadable inputs.
Dataset build_dataset(const std::vector<Session>& sessions, const TrainConfig& cfg);

/// Shuffled example order of one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Mean cross-entropy and accuracy without gradient recording.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy evaluate_examples(const models::TwoStreamModel<float>& model,
                               const std::vector<TrainExample>& examples, std::size_t batch);

/// Pair F-score etc. of streaming prediction on a held-out session.
struct DevScore {
  double fscore = 0.0;
  double total_acc = 0.0;
};
/// Counts are summed over all sessions before the ratios are taken.
DevScore evaluate_sessions(const models::TwoStreamModel<float>& model, const std::vector<Session>& sessions);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  double dev_fscore = 0.0;  // NaN without a dev split
  double dev_total_acc = 0.0;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;  // best-dev model; empty = not written
  std::filesystem::path log_csv;     // empty = not written
};

struct TrainResult {
  models::TwoStreamModel<float> model;  // best-dev parameters
  std::vector<EpochLog> log;
  int best_epoch = -1;
  DatasetStats stats;
};

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;  // argmax hits in the batch
};

/// One Adam step on a batch (rolled by augment_rng when non-null).
/// Gradients are zeroed first and left in place afterwards.
StepResult train_step(models::TwoStreamModel<float>& model, nn::AdamState& opt,
                  const std::vector<const TrainExample*>& batch, double lr, std::mt19937_64* augment_rng);

TrainResult train(const Dataset& dataset, const std::vector<Session>& dev_sessions, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {},
                  const std::function<void(const EpochLog&)>& progress = {});

std::string format_log_csv(const std::vector<EpochLog>& log);

}  // namespace mvx::train
