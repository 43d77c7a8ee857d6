// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "common.hpp"
#include "doctest.h"
#include "mvx/error.hpp"
#include "mvx/synth.hpp"
#include "mvx/train.hpp"

using namespace mvx;
using namespace mvx::train;

namespace {

std::vector<TrainExample> labeled(std::size_t calls, std::size_t noise) {
  std::vector<TrainExample> v(calls + noise);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].start_s = 0.15 * static_cast<double>(i);
    v[i].target = i < calls ? TargetLabel::call(CallKind::kPhee, Caller::kAnimal2) : TargetLabel::noise();
  }
  std::mt19937 rng(1);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.vit.dim = 16;
  cfg.model.vit.blocks = 1;
  cfg.model.vit.heads = 2;
  cfg.model.vit.ffn_dim = 32;
  cfg.model.proj_dim = 16;
  cfg.model.fusion_dim = 32;
  cfg.noise_keep = 0.5;
  cfg.batch = 8;
  cfg.lr0 = 1e-3;
  return cfg;
}

Session toy_session(const std::filesystem::path& dir, std::uint64_t seed, double seconds) {
  synth::SynthOptions o;
  o.duration_s = seconds;
  o.seed = seed;
  return synth::write_session(dir, "s" + std::to_string(seed), o);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("middle-interval label assignment") {
  const SegmentFile none1(1, {}), none2(2, {});
  const SegmentFile a2(2, {{CallKind::kTrill, 1.2, 1.3}});
  CHECK(assign_target_label(1.0, none1, a2) == TargetLabel::call(CallKind::kTrill, Caller::kAnimal2));
  CHECK(assign_target_label(1.0, none1, none2).is_noise());
  // Calls outside [start + 0.175, start + 0.325) do not count.
  const SegmentFile edge(1, {{CallKind::kTrill, 0.0, 1.175}, {CallKind::kEk, 1.325, 2.0}});
  CHECK(assign_target_label(1.0, edge, none2).is_noise());

  std::size_t conflicts = 0;
  const SegmentFile phee(1, {{CallKind::kPhee, 1.0, 1.275}});   // 100 ms of the middle
  const SegmentFile trill(2, {{CallKind::kTrill, 1.285, 2.0}});  // 40 ms
  CHECK(assign_target_label(1.0, phee, trill, &conflicts) == TargetLabel::call(CallKind::kPhee, Caller::kAnimal1));
  CHECK(conflicts == 1);
  const SegmentFile t1(1, {{CallKind::kTsik, 1.0, 1.25}}), t2(2, {{CallKind::kEk, 1.25, 2.0}});
  CHECK(assign_target_label(1.0, t1, t2, &conflicts) == TargetLabel::call(CallKind::kTsik, Caller::kAnimal1));
  CHECK(conflicts == 2);
}

TEST_CASE("label assignment agrees with the 1 ms raster oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> gap(0, 300), len(5, 400), kind(0, 7);
  using mvx::testing::MsCall;
  for (int layout = 0; layout < 100; ++layout) {
    std::vector<MsCall> c[2];
    std::vector<CallAnnotation> e[2];
    for (int a = 0; a < 2; ++a) {
      for (int t = gap(rng); t < 3000;) {
        const int d = len(rng);
        const auto k = static_cast<CallKind>(kind(rng));
        c[a].push_back({t, t + d, k});
        e[a].push_back({k, t / 1000.0, (t + d) / 1000.0});
        t += d + gap(rng);
      }
    }
    const SegmentFile f1(1, e[0]), f2(2, e[1]);
    for (int s = 0; s + 500 <= 3000; s += 13) {
      CHECK(assign_target_label(s / 1000.0, f1, f2) == mvx::testing::raster_label(s, c[0], c[1]));
    }
  }
}

TEST_CASE("noise thinning keeps every call and about keep of the noise") {
  std::vector<TargetLabel> labels(10300, TargetLabel::noise());
  for (std::size_t i = 0; i < 300; ++i) labels[i * 34] = TargetLabel::call(CallKind::kPhee, Caller::kAnimal2);
  const auto kept = noise_keep_indices(labels, 0.2, 5);
  std::size_t calls = 0, noise = 0;
  for (std::size_t i : kept) (labels[i].is_noise() ? noise : calls) += 1;
  CHECK(calls == 300);
  CHECK(std::abs(static_cast<double>(noise) - 2000.0) <= 3.0 * 40.0);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  CHECK(noise_keep_indices(labels, 0.2, 5) == kept);
  CHECK(noise_keep_indices(labels, 0.2, 6) != kept);
  CHECK(noise_keep_indices(labels, 1.0, 1).size() == labels.size());

  const auto ex = labeled(20, 60);
  const auto a = subsample_noise(ex, 0.2, 5), b = subsample_noise(ex, 0.2, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].start_s == b[i].start_s);
  CHECK(subsample_noise(labeled(7, 0), 0.2, 1).size() == 7);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::size_t c = 0;
    for (const auto& e : subsample_noise(labeled(13, 50), 0.2, seed)) c += e.target.is_noise() ? 0 : 1;
    CHECK(c == 13);
  }
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(100, 3, 0), b = epoch_order(100, 3, 0), c = epoch_order(100, 3, 1);
  CHECK(a == b);
  CHECK(a != c);
  auto s = a;
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(s == iota);
}

TEST_CASE("manifest parsing and errors") {
  const auto dir = mvx::testing::scratch_dir("train_manifest");
  {
    std::ofstream m(dir / "m.jsonl");
    m << R"({"id":"a","wav1":"a1.wav","wav2":"a2.wav","ann1":"a1.csv","ann2":"a2.csv"})" << "\n\n";
    m << R"({"id":"b","wav1":"/abs/b1.wav","wav2":"b2.wav","ann1":"b1.csv","ann2":"b2.csv","split":"dev"})" << "\n";
  }
  const auto s = read_manifest(dir / "m.jsonl");
  REQUIRE(s.size() == 2);
  CHECK(s[0].wav1 == dir / "a1.wav");
  CHECK(s[1].wav1 == std::filesystem::path("/abs/b1.wav"));
  CHECK(s[1].dev);
  const auto [tr, dev] = split_sessions(s);
  CHECK(tr.size() == 1);
  CHECK(dev.size() == 1);
  CHECK(dev[0].id == "b");

  write_manifest(dir / "w.jsonl", s);
  const auto back = read_manifest(dir / "w.jsonl");
  CHECK(back[1].ann2 == s[1].ann2);

  std::ofstream(dir / "bad.jsonl") << R"({"id":"a","wav1":"a.wav","wav2":"b.wav","ann1":"c.csv","ann2":"d.csv"})"
                                   << "\n{\"id\":\"b\"}\n";
  try {
    read_manifest(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.noise_keep = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.shift_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("identical seeds give identical first steps") {
  const auto dir = mvx::testing::scratch_dir("train_repro");
  const auto cfg = tiny_config();
  const auto ds = build_dataset({toy_session(dir, 31, 4.0)}, cfg);
  REQUIRE(ds.examples.size() >= 4);
  auto first_grads = [&] {
    models::TwoStreamModel<float> m(cfg.model, cfg.seed);
    nn::AdamState opt(m.tensors());
    const auto order = epoch_order(ds.examples.size(), cfg.seed, 0);
    std::vector<const TrainExample*> batch;
    for (std::size_t i = 0; i < 4; ++i) batch.push_back(&ds.examples[order[i]]);
    std::mt19937_64 aug(cfg.seed);
    train_step(m, opt, batch, cfg.lr0, &aug);
    std::vector<float> g;
    for (const auto& p : m.params()) g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    return g;
  };
  CHECK(first_grads() == first_grads());
}

TEST_CASE("dataset assembly and a short training run") {
  const auto dir = mvx::testing::scratch_dir("train_toy");
  auto cfg = tiny_config();
  cfg.epochs = 3;
  const auto ds = build_dataset({toy_session(dir, 41, 6.0), toy_session(dir, 42, 6.0)}, cfg);
  CHECK(ds.stats.sessions == 2);
  CHECK(ds.stats.calls > 0);
  CHECK(ds.stats.noise_kept <= ds.stats.noise_total);
  CHECK(ds.examples.size() == ds.stats.calls + ds.stats.noise_kept);
  for (const auto& e : ds.examples) {
    CHECK(e.ch1.channel == 1);
    CHECK(e.ch2.channel == 2);
  }

  const models::TwoStreamModel<float> init(cfg.model, cfg.seed);
  const double before = evaluate_examples(init, ds.examples, 16).loss;
  std::vector<EpochLog> seen;
  const auto res = mvx::train::train(ds, {}, cfg, {.checkpoint = dir / "m.mvtx", .log_csv = dir / "log.csv"},
                         [&](const EpochLog& l) { seen.push_back(l); });
  REQUIRE(res.log.size() == 3);
  CHECK(seen.size() == 3);
  CHECK(std::isnan(res.log[0].dev_fscore));
  CHECK(res.log[2].lr == doctest::Approx(cfg.lr0 * 0.97 * 0.97));
  CHECK(evaluate_examples(res.model, ds.examples, 16).loss < before);
  CHECK(std::filesystem::exists(dir / "m.mvtx"));
  std::ifstream log(dir / "log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header.find("epoch") == 0);
  CHECK(header.find("dev_fscore") != std::string::npos);
}

TEST_CASE("empty or unreadable corpora are errors") {
  const auto cfg = tiny_config();
  CHECK_THROWS_AS(build_dataset({}, cfg), Error);
  Session s;
  s.id = "x";
  s.wav1 = "/nonexistent/a.wav";
  s.wav2 = "/nonexistent/b.wav";
  s.ann1 = "/nonexistent/a.csv";
  s.ann2 = "/nonexistent/b.csv";
  try {
    build_dataset({s}, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/") != std::string::npos);
  }
}

}  // TEST_SUITE
