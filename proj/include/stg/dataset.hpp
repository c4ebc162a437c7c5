// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus generation and on-disk layout. A dataset directory holds:
//   scenes.jsonl        one scene per line, canonical key order
//   qa.jsonl            one question per line, canonical key order
//   features/           scene_<id>_{audio,visual}.stgt, float32 payloads
//   vocab_words.txt     word vocabulary, one entry per line
//   vocab_answers.txt   answer vocabulary, one entry per line
//   stats.json          corpus statistics
//   manifest.json       seed, config, counts, content hash
// Bytes are a pure function of (config, seed): same inputs, identical files.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stg/question.hpp"
#include "stg/scene.hpp"
#include "stg/tensor_io.hpp"
#include "stg/thread_pool.hpp"

namespace stg {

inline std::string split_for_scene(std::uint64_t master_seed, std::uint64_t scene_id) {
  const double u = stream_rng(master_seed, "split", scene_id).next_double();
  if (u < 0.7) return "train";
  if (u < 0.8) return "val";
  return "test";
}

struct Dataset {
  SceneConfig scene_config;
  std::uint64_t seed = 0;
  std::size_t qa_per_scene_cap = 5;
  std::vector<SceneSpec> scenes;
  std::vector<QAItem> items;           // qa_id == index, ordered by scene
  std::vector<RenderedScene> features; // parallel to scenes; empty until rendered
  WordVocab words;
  AnswerVocab answers;
  std::string hash_hex;  // FNV-1a64 over scenes.jsonl then qa.jsonl bytes

  std::unordered_map<std::uint64_t, std::size_t> scene_index;

  const SceneSpec& scene_of(const QAItem& item) const {
    return scenes[scene_index.at(item.scene_id)];
  }
  const RenderedScene& features_of(const QAItem& item) const {
    STG_CHECK(!features.empty(), "features not rendered");
    return features[scene_index.at(item.scene_id)];
  }
  std::vector<std::size_t> item_ids_for_split(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].split == split) out.push_back(i);
    return out;
  }
};

namespace detail_dataset {

inline nlohmann::ordered_json qa_to_json(const QAItem& q) {
  nlohmann::ordered_json j;
  j["qa_id"] = q.qa_id;
  j["scene_id"] = q.scene_id;
  j["template_id"] = q.template_id;
  j["qtype"] = q.qtype;
  j["modality"] = q.modality;
  j["question"] = q.question;
  j["answer"] = q.answer;
  j["split"] = q.split;
  return j;
}

inline QAItem qa_from_json(const nlohmann::ordered_json& j) {
  QAItem q;
  q.qa_id = j.at("qa_id").get<std::uint64_t>();
  q.scene_id = j.at("scene_id").get<std::uint64_t>();
  q.template_id = j.at("template_id").get<int>();
  q.qtype = j.at("qtype").get<std::string>();
  q.modality = j.at("modality").get<std::string>();
  q.question = j.at("question").get<std::string>();
  q.answer = j.at("answer").get<std::string>();
  q.split = j.at("split").get<std::string>();
  return q;
}

inline std::string scenes_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& s : ds.scenes) {
    out += scene_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline std::string qa_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& q : ds.items) {
    out += qa_to_json(q).dump();
    out += '\n';
  }
  return out;
}

// Features are persisted in float32; rounding at render time keeps the
// in-memory corpus bit-identical to one reloaded from disk.
inline void round_to_f32(Tensor& t) {
  for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  STG_CONFIG_CHECK(out.good(), "cannot write file: " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  STG_CHECK(out.good(), "short write: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  STG_CONFIG_CHECK(in.good(), "cannot read file: " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return body;
}

inline nlohmann::ordered_json scene_config_to_json(const SceneConfig& c) {
  nlohmann::ordered_json j;
  j["duration_segments"] = c.duration_segments;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["audio_dim"] = c.audio_dim;
  j["visual_dim"] = c.visual_dim;
  j["noise_sigma"] = c.noise_sigma;
  j["min_proto_angle_deg"] = c.min_proto_angle_deg;
  j["mode_mix"] = c.mode_mix;
  j["loudness_lo"] = c.loudness_lo;
  j["loudness_hi"] = c.loudness_hi;
  j["rhythmicity_lo"] = c.rhythmicity_lo;
  j["rhythmicity_hi"] = c.rhythmicity_hi;
  j["extra_silent_prob"] = c.extra_silent_prob;
  return j;
}

inline SceneConfig scene_config_from_json(const nlohmann::ordered_json& j) {
  SceneConfig c;
  c.duration_segments = j.at("duration_segments").get<int>();
  c.grid_h = j.at("grid_h").get<int>();
  c.grid_w = j.at("grid_w").get<int>();
  c.audio_dim = j.at("audio_dim").get<int>();
  c.visual_dim = j.at("visual_dim").get<int>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.min_proto_angle_deg = j.at("min_proto_angle_deg").get<double>();
  const auto mix = j.at("mode_mix").get<std::vector<double>>();
  STG_CONFIG_CHECK(mix.size() == c.mode_mix.size(), "mode_mix must have 6 entries");
  std::copy(mix.begin(), mix.end(), c.mode_mix.begin());
  c.loudness_lo = j.at("loudness_lo").get<double>();
  c.loudness_hi = j.at("loudness_hi").get<double>();
  c.rhythmicity_lo = j.at("rhythmicity_lo").get<double>();
  c.rhythmicity_hi = j.at("rhythmicity_hi").get<double>();
  c.extra_silent_prob = j.at("extra_silent_prob").get<double>();
  return c;
}

}  // namespace detail_dataset

// Builds scenes and questions in memory. Features are rendered separately
// (render_features) because not every consumer needs them.
inline Dataset generate_dataset(const SceneConfig& cfg, std::uint64_t master_seed,
                                std::size_t n_scenes, std::size_t qa_cap = 5) {
  STG_CONFIG_CHECK(n_scenes > 0, "scene count must be positive");
  cfg.validate();
  Dataset ds;
  ds.scene_config = cfg;
  ds.seed = master_seed;
  ds.qa_per_scene_cap = qa_cap;
  ds.scenes.reserve(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i)
    ds.scenes.push_back(sample_scene(cfg, master_seed, i));
  std::uint64_t qa_id = 0;
  for (const auto& s : ds.scenes) {
    const std::string split = split_for_scene(master_seed, s.scene_id);
    for (auto& q : make_scene_questions(s, master_seed, qa_cap)) {
      q.qa_id = qa_id++;
      q.split = split;
      ds.items.push_back(std::move(q));
    }
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i)
    ds.scene_index[ds.scenes[i].scene_id] = i;
  const std::string sj = detail_dataset::scenes_jsonl(ds);
  const std::string qj = detail_dataset::qa_jsonl(ds);
  ds.hash_hex = hex64(fnv1a64(qj, fnv1a64(sj)));
  return ds;
}

// Renders every scene's feature tensors. Scene streams are independent, so
// the result is identical at any thread count.
inline void render_features(Dataset& ds) {
  if (!ds.features.empty()) return;
  const ProtoBank bank = make_proto_bank(ds.scene_config, ds.seed);
  ds.features.assign(ds.scenes.size(), RenderedScene{});
  parallel_for(ds.scenes.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ds.features[i] = render_scene(ds.scenes[i], bank, ds.scene_config);
      detail_dataset::round_to_f32(ds.features[i].audio);
      detail_dataset::round_to_f32(ds.features[i].visual);
    }
  });
}

inline nlohmann::ordered_json dataset_stats(const Dataset& ds) {
  using nlohmann::ordered_json;
  std::map<std::string, int> by_modality, by_qtype, by_answer, by_split;
  std::map<std::string, int> by_mod_qtype;
  std::map<int, int> by_template;
  for (const auto& q : ds.items) {
    by_modality[q.modality]++;
    by_qtype[q.qtype]++;
    by_answer[q.answer]++;
    by_split[q.split]++;
    by_mod_qtype[q.modality + "/" + q.qtype]++;
    by_template[q.template_id]++;
  }
  std::map<std::string, int> scene_splits, scene_modes;
  for (const auto& s : ds.scenes) {
    scene_splits[split_for_scene(ds.seed, s.scene_id)]++;
    scene_modes[s.composition_mode]++;
  }
  ordered_json j;
  j["n_scenes"] = ds.scenes.size();
  j["n_items"] = ds.items.size();
  j["items_per_scene"] =
      static_cast<double>(ds.items.size()) / static_cast<double>(ds.scenes.size());
  j["scene_splits"] = scene_splits;
  j["scene_modes"] = scene_modes;
  j["item_splits"] = by_split;
  j["by_modality"] = by_modality;
  j["by_qtype"] = by_qtype;
  j["by_modality_qtype"] = by_mod_qtype;
  ordered_json tmpl = ordered_json::object();
  for (const auto& [tid, n] : by_template) tmpl[std::to_string(tid)] = n;
  j["by_template"] = tmpl;
  j["by_answer"] = by_answer;
  return j;
}

// Writes the full dataset directory. `provenance` (command line, resolved
// config, ...) is embedded verbatim in manifest.json.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                          const nlohmann::ordered_json& provenance = {}) {
  namespace fs = std::filesystem;
  using detail_dataset::write_text_file;
  fs::create_directories(dir / "features");

  write_text_file(dir / "scenes.jsonl", detail_dataset::scenes_jsonl(ds));
  write_text_file(dir / "qa.jsonl", detail_dataset::qa_jsonl(ds));

  std::string words_txt, answers_txt;
  for (const auto& w : ds.words.entries()) words_txt += w + "\n";
  for (const auto& a : ds.answers.entries()) answers_txt += a + "\n";
  write_text_file(dir / "vocab_words.txt", words_txt);
  write_text_file(dir / "vocab_answers.txt", answers_txt);

  STG_CHECK(!ds.features.empty(), "render features before writing the dataset");
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto sid = std::to_string(ds.scenes[i].scene_id);
    const auto& f = ds.features[i];
    write_tensor_file((dir / "features" / ("scene_" + sid + "_audio.stgt")).string(),
                      f.audio.shape(), f.audio.data(), kTensorFormatFloat32);
    write_tensor_file((dir / "features" / ("scene_" + sid + "_visual.stgt")).string(),
                      f.visual.shape(), f.visual.data(), kTensorFormatFloat32);
  }

  write_text_file(dir / "stats.json", dataset_stats(ds).dump(2) + "\n");

  nlohmann::ordered_json m;
  m["format_version"] = 1;
  m["seed"] = ds.seed;
  m["scene_config"] = detail_dataset::scene_config_to_json(ds.scene_config);
  m["qa_per_scene_cap"] = ds.qa_per_scene_cap;
  m["n_scenes"] = ds.scenes.size();
  m["n_items"] = ds.items.size();
  m["word_vocab_size"] = ds.words.size();
  m["answer_vocab_size"] = ds.answers.size();
  m["dataset_hash"] = ds.hash_hex;
  m["provenance"] = provenance;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

// Loads a dataset directory, verifying the manifest hash against the actual
// scenes.jsonl / qa.jsonl bytes. Features load when `with_features` is set.
inline Dataset load_dataset(const std::filesystem::path& dir,
                            bool with_features = true) {
  namespace fs = std::filesystem;
  using detail_dataset::read_text_file;
  STG_CONFIG_CHECK(fs::exists(dir / "manifest.json"),
                   "not a dataset directory (missing manifest.json): " + dir.string());
  const auto manifest =
      nlohmann::ordered_json::parse(read_text_file(dir / "manifest.json"));
  Dataset ds;
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.scene_config =
      detail_dataset::scene_config_from_json(manifest.at("scene_config"));
  ds.qa_per_scene_cap = manifest.at("qa_per_scene_cap").get<std::size_t>();

  const std::string sj = read_text_file(dir / "scenes.jsonl");
  const std::string qj = read_text_file(dir / "qa.jsonl");
  ds.hash_hex = hex64(fnv1a64(qj, fnv1a64(sj)));
  STG_CHECK(ds.hash_hex == manifest.at("dataset_hash").get<std::string>(),
            "dataset hash mismatch: files were modified after generation");

  for (std::size_t pos = 0; pos < sj.size();) {
    const auto nl = sj.find('\n', pos);
    const auto line = sj.substr(pos, nl - pos);
    if (!line.empty())
      ds.scenes.push_back(scene_from_json(nlohmann::ordered_json::parse(line)));
    pos = (nl == std::string::npos) ? sj.size() : nl + 1;
  }
  for (std::size_t pos = 0; pos < qj.size();) {
    const auto nl = qj.find('\n', pos);
    const auto line = qj.substr(pos, nl - pos);
    if (!line.empty())
      ds.items.push_back(
          detail_dataset::qa_from_json(nlohmann::ordered_json::parse(line)));
    pos = (nl == std::string::npos) ? qj.size() : nl + 1;
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i)
    ds.scene_index[ds.scenes[i].scene_id] = i;

  if (with_features) {
    ds.features.assign(ds.scenes.size(), RenderedScene{});
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
      const auto sid = std::to_string(ds.scenes[i].scene_id);
      auto a = read_tensor_file(
          (dir / "features" / ("scene_" + sid + "_audio.stgt")).string());
      auto v = read_tensor_file(
          (dir / "features" / ("scene_" + sid + "_visual.stgt")).string());
      ds.features[i].audio = Tensor::from_data(a.shape, std::move(a.data));
      ds.features[i].visual = Tensor::from_data(v.shape, std::move(v.data));
    }
  }
  return ds;
}

}  // namespace stg
