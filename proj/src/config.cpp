// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvx/error.hpp"

namespace mvx {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(const std::string& key, const std::string& text) {
  U v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error("config key " + key + ": cannot parse '" + text + "'");
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> run_config_keys() {
  return {"sample_rate", "window_s", "train_shift_s", "predict_shift_s", "noise_keep", "model",
          "model_dim",   "blocks",   "heads",         "ffn_dim",         "cnn_channels", "epochs",
          "batch",       "seed",     "lr0",           "lr_decay"};
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "sample_rate") sample_rate = parse_number<int>(key, v);
  else if (key == "window_s") window_s = parse_number<double>(key, v);
  else if (key == "train_shift_s") train_shift_s = parse_number<double>(key, v);
  else if (key == "predict_shift_s") predict_shift_s = parse_number<double>(key, v);
  else if (key == "noise_keep") noise_keep = parse_number<double>(key, v);
  else if (key == "model") model = v;
  else if (key == "model_dim") model_dim = parse_number<std::size_t>(key, v);
  else if (key == "blocks") blocks = parse_number<std::size_t>(key, v);
  else if (key == "heads") heads = parse_number<std::size_t>(key, v);
  else if (key == "ffn_dim") ffn_dim = parse_number<std::size_t>(key, v);
  else if (key == "cnn_channels") cnn_channels = parse_number<std::size_t>(key, v);
  else if (key == "epochs") epochs = parse_number<int>(key, v);
  else if (key == "batch") batch = parse_number<std::size_t>(key, v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "lr0") lr0 = parse_number<double>(key, v);
  else if (key == "lr_decay") lr_decay = parse_number<double>(key, v);
  else throw Error("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (sample_rate != dsp::kSampleRate) {
    throw Error("sample_rate must be " + std::to_string(dsp::kSampleRate) + " (inputs are resampled to it)");
  }
  to_train_config().validate();
}

train::TrainConfig RunConfig::to_train_config() const {
  train::TrainConfig t;
  t.window_s = window_s;
  t.shift_s = train_shift_s;
  t.predict_shift_s = predict_shift_s;
  t.noise_keep = noise_keep;
  t.lr0 = lr0;
  t.lr_decay = lr_decay;
  t.epochs = epochs;
  t.batch = batch;
  t.seed = seed;
  t.model.kind = models::parse_model_kind(model);
  t.model.vit.dim = model_dim;
  t.model.vit.blocks = blocks;
  t.model.vit.heads = heads;
  t.model.vit.ffn_dim = ffn_dim;
  t.model.cnn.base_channels = cnn_channels;
  t.model.cnn.embed_dim = model_dim;
  return t;
}

RunConfig parse_run_config(const std::string& text, RunConfig cfg) {
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& c) {
  std::string out;
  auto line = [&out](const char* k, const std::string& v) { out += std::string(k) + "=" + v + "\n"; };
  line("sample_rate", std::to_string(c.sample_rate));
  line("window_s", fmt_double(c.window_s));
  line("train_shift_s", fmt_double(c.train_shift_s));
  line("predict_shift_s", fmt_double(c.predict_shift_s));
  line("noise_keep", fmt_double(c.noise_keep));
  line("model", c.model);
  line("model_dim", std::to_string(c.model_dim));
  line("blocks", std::to_string(c.blocks));
  line("heads", std::to_string(c.heads));
  line("ffn_dim", std::to_string(c.ffn_dim));
  line("cnn_channels", std::to_string(c.cnn_channels));
  line("epochs", std::to_string(c.epochs));
  line("batch", std::to_string(c.batch));
  line("seed", std::to_string(c.seed));
  line("lr0", fmt_double(c.lr0));
  line("lr_decay", fmt_double(c.lr_decay));
  return out;
}

}  // namespace mvx
