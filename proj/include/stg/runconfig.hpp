// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration for the command-line tool: a flat registry of
// section.key settings with per-preset defaults, overlaid in ascending
// precedence by a config file, STGNET_* environment variables, and flags.
// The resolved table is fixed before any work starts and is echoed verbatim
// into every output artifact.

#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stg/common.hpp"
#include "stg/dataset.hpp"
#include "stg/model.hpp"
#include "stg/train.hpp"

extern "C" char** environ;  // POSIX leaves this undeclared by any header

namespace stg {

// ---------------------------------------------------------------------------
// Setting registry

struct SettingDef {
  const char* key;     // "section.name"
  const char* desk;    // default under the desk preset
  const char* parity;  // default under the parity preset
};

// The full setting vocabulary. Every configurable knob appears here; a key
// outside this table is a config error no matter where it comes from.
inline const std::vector<SettingDef>& setting_defs() {
  static const std::vector<SettingDef> defs = {
      {"run.seed", "7", "7"},
      {"run.out", "runs", "runs"},
      // Empty path settings derive from run.out at resolve time.
      {"paths.dataset", "", ""},
      {"paths.checkpoints", "", ""},
      {"paths.reports", "", ""},
      {"scene.scenes", "2000", "2000"},
      {"scene.duration_segments", "10", "10"},
      {"scene.grid_h", "4", "7"},
      {"scene.grid_w", "4", "7"},
      {"scene.audio_dim", "32", "128"},
      {"scene.visual_dim", "64", "512"},
      {"scene.noise_sigma", "0.05", "0.05"},
      {"scene.qa_per_scene", "5", "5"},
      {"model.d_model", "64", "512"},
      {"train.batch_size", "32", "64"},
      {"train.stage1_epochs", "40", "30"},
      {"train.stage2_epochs", "15", "30"},
      {"train.lr0", "0.001", "0.0001"},
      {"train.lr_decay", "0.1", "0.1"},
      {"train.lr_decay_every", "5", "10"},
      {"train.stage1_lr_decay_every", "30", "10"},
      {"train.lambda_match", "0.5", "0.5"},
      {"train.grad_clip", "5", "5"},
      {"train.ablation", "av+q+tg+sg", "av+q+tg+sg"},
      {"eval.split", "test", "test"},
  };
  return defs;
}

inline const std::vector<std::string>& setting_sections() {
  static const std::vector<std::string> v = {"run",   "paths", "scene",
                                             "model", "train", "eval"};
  return v;
}

inline std::map<std::string, std::string> preset_defaults(const std::string& preset) {
  STG_CONFIG_CHECK(preset == "desk" || preset == "parity",
                   "unknown preset: " + preset + " (want desk or parity)");
  std::map<std::string, std::string> out;
  for (const auto& d : setting_defs())
    out[d.key] = preset == "desk" ? d.desk : d.parity;
  return out;
}

// ---------------------------------------------------------------------------
// Sources: config file, environment, flags

namespace detail_runconfig {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool known_key(const std::string& key) {
  for (const auto& d : setting_defs())
    if (key == d.key) return true;
  return false;
}

inline void check_keys(const std::map<std::string, std::string>& entries,
                       const std::string& source) {
  for (const auto& [key, value] : entries)
    STG_CONFIG_CHECK(known_key(key), "unknown setting '" + key + "' (from " +
                                         source + ")");
}

}  // namespace detail_runconfig

// Parses the structured text config format: [section] headers, key = value
// lines, '#' or ';' comments. Returns section.key entries.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  using detail_runconfig::trim;
  std::map<std::string, std::string> out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      STG_CONFIG_CHECK(line.back() == ']' && line.size() > 2,
                       "config line " + std::to_string(line_no) +
                           ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    STG_CONFIG_CHECK(eq != std::string::npos,
                     "config line " + std::to_string(line_no) +
                         ": expected key = value");
    STG_CONFIG_CHECK(!section.empty(),
                     "config line " + std::to_string(line_no) +
                         ": key before any [section] header");
    const auto key = trim(line.substr(0, eq));
    STG_CONFIG_CHECK(!key.empty(), "config line " + std::to_string(line_no) +
                                       ": empty key");
    out[section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

// Extracts settings from "STGNET_<SECTION>_<KEY>=value" entries; `raw` holds
// environment strings in "NAME=value" form (callers pass a snapshot of the
// process environment; tests pass literals).
inline std::map<std::string, std::string> env_settings(
    const std::vector<std::string>& raw) {
  std::map<std::string, std::string> out;
  const std::string prefix = "STGNET_";
  for (const auto& entry : raw) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    STG_CONFIG_CHECK(eq != std::string::npos,
                     "malformed environment entry: " + entry);
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    for (auto& c : name) c = static_cast<char>(std::tolower(c));
    const std::string value = entry.substr(eq + 1);
    std::string key;
    for (const auto& section : setting_sections()) {
      if (name.rfind(section + "_", 0) == 0) {
        key = section + "." + name.substr(section.size() + 1);
        break;
      }
    }
    STG_CONFIG_CHECK(!key.empty() && detail_runconfig::known_key(key),
                     "unknown environment override: " +
                         entry.substr(0, eq));
    out[key] = value;
  }
  return out;
}

// Snapshot of the process environment, for env_settings.
inline std::vector<std::string> process_environment() {
  std::vector<std::string> out;
  for (char** e = ::environ; e != nullptr && *e != nullptr; ++e)
    out.push_back(*e);
  return out;
}

// ---------------------------------------------------------------------------
// Resolution

struct RunConfig {
  std::string preset = "desk";
  std::string config_path;  // empty when no file was given
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& key) const {
    const auto it = values.find(key);
    STG_CHECK(it != values.end(), "unresolved setting: " + key);
    return it->second;
  }

  std::int64_t integer(const std::string& key) const {
    const auto& v = str(key);
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    STG_CONFIG_CHECK(end != v.c_str() && *end == '\0',
                     "setting " + key + ": cannot parse '" + v + "' as integer");
    return x;
  }

  std::uint64_t u64(const std::string& key) const {
    const auto x = integer(key);
    STG_CONFIG_CHECK(x >= 0, "setting " + key + " must be nonnegative");
    return static_cast<std::uint64_t>(x);
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    STG_CONFIG_CHECK(end != v.c_str() && *end == '\0',
                     "setting " + key + ": cannot parse '" + v + "' as number");
    return x;
  }

  std::uint64_t seed() const { return u64("run.seed"); }

  std::string dataset_dir() const {
    const auto& v = str("paths.dataset");
    if (!v.empty()) return v;
    return (std::filesystem::path(str("run.out")) / "dataset").string();
  }
  std::string checkpoint_dir() const {
    const auto& v = str("paths.checkpoints");
    if (!v.empty()) return v;
    return (std::filesystem::path(str("run.out")) / "checkpoints").string();
  }
  std::string report_dir() const {
    const auto& v = str("paths.reports");
    if (!v.empty()) return v;
    return (std::filesystem::path(str("run.out")) / "reports").string();
  }
};

// Merges preset defaults < config file < environment < flags. Each overlay
// is validated against the registry with its source named in the error.
inline RunConfig resolve_run_config(
    const std::string& preset,
    const std::map<std::string, std::string>& file_entries,
    const std::map<std::string, std::string>& env_entries,
    const std::map<std::string, std::string>& flag_entries) {
  using detail_runconfig::check_keys;
  check_keys(file_entries, "config file");
  check_keys(env_entries, "environment");
  check_keys(flag_entries, "flags");
  RunConfig rc;
  rc.preset = preset;
  rc.values = preset_defaults(preset);
  for (const auto& [k, v] : file_entries) rc.values[k] = v;
  for (const auto& [k, v] : env_entries) rc.values[k] = v;
  for (const auto& [k, v] : flag_entries) rc.values[k] = v;
  return rc;
}

// ---------------------------------------------------------------------------
// Typed builders

inline SceneConfig scene_config(const RunConfig& rc) {
  SceneConfig c;
  c.duration_segments = static_cast<int>(rc.integer("scene.duration_segments"));
  c.grid_h = static_cast<int>(rc.integer("scene.grid_h"));
  c.grid_w = static_cast<int>(rc.integer("scene.grid_w"));
  c.audio_dim = static_cast<int>(rc.integer("scene.audio_dim"));
  c.visual_dim = static_cast<int>(rc.integer("scene.visual_dim"));
  c.noise_sigma = rc.real("scene.noise_sigma");
  c.validate();
  return c;
}

inline TrainConfig train_config(const RunConfig& rc) {
  TrainConfig c;
  c.batch_size = static_cast<int>(rc.integer("train.batch_size"));
  c.stage1_epochs = static_cast<int>(rc.integer("train.stage1_epochs"));
  c.stage2_epochs = static_cast<int>(rc.integer("train.stage2_epochs"));
  c.lr0 = rc.real("train.lr0");
  c.lr_decay = rc.real("train.lr_decay");
  c.lr_decay_every = static_cast<int>(rc.integer("train.lr_decay_every"));
  c.stage1_lr_decay_every =
      static_cast<int>(rc.integer("train.stage1_lr_decay_every"));
  c.lambda_match = rc.real("train.lambda_match");
  c.grad_clip = rc.real("train.grad_clip");
  c.seed = rc.seed();
  c.validate();
  return c;
}

// Model shape follows the dataset (feature dims, segment count, vocabulary);
// the run config contributes the hidden width and the ablation row.
inline ModelConfig model_config(const RunConfig& rc, const Dataset& ds) {
  ModelConfig base;
  base.d_model = static_cast<int>(rc.integer("model.d_model"));
  base.d_audio = ds.scene_config.audio_dim;
  base.d_visual = ds.scene_config.visual_dim;
  base.t_segments = ds.scene_config.duration_segments;
  base.n_answers = static_cast<int>(ds.answers.size());
  base.vocab_size = static_cast<int>(ds.words.size());
  ModelConfig c = ablation_config(base, rc.str("train.ablation"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Provenance echo

inline nlohmann::ordered_json run_config_json(const RunConfig& rc) {
  nlohmann::ordered_json sections = nlohmann::ordered_json::object();
  for (const auto& section : setting_sections()) {
    nlohmann::ordered_json body = nlohmann::ordered_json::object();
    for (const auto& d : setting_defs()) {
      const std::string key = d.key;
      if (key.rfind(section + ".", 0) == 0)
        body[key.substr(section.size() + 1)] = rc.values.at(key);
    }
    sections[section] = body;
  }
  return sections;
}

// The block embedded in every output artifact: command line, resolved
// config, seed, dataset hash (empty string before a dataset exists).
inline nlohmann::ordered_json provenance_json(const RunConfig& rc,
                                              const std::vector<std::string>& argv,
                                              const std::string& dataset_hash) {
  nlohmann::ordered_json j;
  j["version"] = kVersionString;
  std::string cmd;
  for (const auto& a : argv) {
    if (!cmd.empty()) cmd += ' ';
    cmd += a;
  }
  j["command"] = cmd;
  j["preset"] = rc.preset;
  j["config_file"] = rc.config_path;
  j["seed"] = rc.seed();
  j["dataset_hash"] = dataset_hash;
  j["settings"] = run_config_json(rc);
  return j;
}

}  // namespace stg
