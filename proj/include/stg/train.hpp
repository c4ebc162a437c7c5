// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training.
//
// Stage 1 (only when spatial grounding is on) trains the matching head: does
// this audio track belong to this video? The question and answer paths carry
// no gradient, so only the audio projection, the grounding fusion, and the
// matching classifier move. Stage 2 trains everything on answer
// cross-entropy plus a weighted matching term.
//
// Every source of randomness is a counter-based stream keyed by
// (seed, purpose, epoch | batch), so training is a pure function of
// (dataset, configs, seed, starting state). Resuming from a checkpoint
// reproduces the uninterrupted run bit for bit.

#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stg/dataset.hpp"
#include "stg/model.hpp"
#include "stg/tensor_io.hpp"

namespace stg {

struct TrainConfig {
  int batch_size = 32;
  int stage1_epochs = 40;
  int stage2_epochs = 15;
  double lr0 = 1e-3;
  int lr_decay_every = 5;         // stage-2 schedule
  int stage1_lr_decay_every = 30; // the pretext task likes a longer plateau
  double lr_decay = 0.1;
  double lambda_match = 0.5;  // weight of the matching loss in stage 2
  double grad_clip = 5.0;     // global gradient norm ceiling
  std::uint64_t seed = 7;

  void validate() const {
    STG_CONFIG_CHECK(batch_size >= 1, "batch_size must be positive");
    STG_CONFIG_CHECK(stage1_epochs >= 0 && stage2_epochs >= 0, "epochs nonnegative");
    STG_CONFIG_CHECK(lr0 > 0, "lr0 must be positive");
    STG_CONFIG_CHECK(lr_decay_every >= 1 && stage1_lr_decay_every >= 1,
                     "lr_decay_every must be positive");
    STG_CONFIG_CHECK(lr_decay > 0 && lr_decay <= 1, "lr_decay in (0, 1]");
    STG_CONFIG_CHECK(lambda_match >= 0, "lambda_match nonnegative");
    STG_CONFIG_CHECK(grad_clip > 0, "grad_clip must be positive");
  }

  double lr_at(int epoch) const { return decayed(epoch, lr_decay_every); }
  double stage1_lr_at(int epoch) const {
    return decayed(epoch, stage1_lr_decay_every);
  }

 private:
  double decayed(int epoch, int every) const {
    double lr = lr0;
    for (int e = every; e <= epoch; e += every) lr *= lr_decay;
    return lr;
  }
};

// ---------------------------------------------------------------------------
// Adam with bias correction. State vectors follow ModelParams::all() order.

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void init(ModelParams& p) {
    t = 0;
    m.clear();
    v.clear();
    for (auto& [name, tensor] : p.all()) {
      m.emplace_back(tensor->numel(), 0.0);
      v.emplace_back(tensor->numel(), 0.0);
    }
  }

  void step(ModelParams& p, double lr) {
    auto params = p.all();
    STG_CHECK(params.size() == m.size(), "optimizer state out of sync");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& x = params[pi].second->data();
      const auto& g = params[pi].second->grad();
      STG_CHECK(g.size() == x.size(), "gradient missing for " + params[pi].first);
      auto& mi = m[pi];
      auto& vi = v[pi];
      for (std::size_t i = 0; i < x.size(); ++i) {
        mi[i] = beta1 * mi[i] + (1.0 - beta1) * g[i];
        vi[i] = beta2 * vi[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = mi[i] / bc1;
        const double vhat = vi[i] / bc2;
        x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm. Throws NumericError on non-finite gradients.
inline double clip_gradients(ModelParams& p, double max_norm) {
  double sq = 0;
  for (auto& [name, t] : p.all())
    for (double g : t->grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw NumericError("gradient norm is not finite; training diverged");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, t] : p.all())
      for (double& g : t->grad()) g *= s;
  }
  return norm;
}

// Global L2 norm of the parameter values; part of divergence diagnostics.
inline double param_norm(ModelParams& p) {
  double sq = 0;
  for (auto& [name, t] : p.all())
    for (double x : t->data()) sq += x * x;
  return std::sqrt(sq);
}

namespace detail_train {

inline NumericError divergence_error(const char* stage, int epoch,
                                     std::size_t batch_begin, double lr,
                                     ModelParams& p) {
  char msg[192];
  std::snprintf(msg, sizeof msg,
                "%s loss diverged (epoch %d, batch offset %zu, lr %.6g, "
                "param norm %.6g)",
                stage, epoch, batch_begin, lr, param_norm(p));
  return NumericError(msg);
}

}  // namespace detail_train

// ---------------------------------------------------------------------------
// Batch assembly

namespace detail_train {

inline Batch assemble_batch(const Dataset& ds, const std::vector<std::size_t>& item_ids,
                            std::size_t begin, std::size_t end, bool need_audio,
                            bool need_visual) {
  const std::size_t B = end - begin;
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  const auto da = static_cast<std::size_t>(ds.scene_config.audio_dim);
  const auto dv = static_cast<std::size_t>(ds.scene_config.visual_dim);
  const auto hw =
      static_cast<std::size_t>(ds.scene_config.grid_h * ds.scene_config.grid_w);
  Batch b;
  std::vector<double> audio(need_audio ? B * T * da : 0);
  std::vector<double> visual(need_visual ? B * T * dv * hw : 0);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& item = ds.items[item_ids[begin + i]];
    b.tokens.push_back(ds.words.ids(tokenize(item.question)));
    b.answer_ids.push_back(ds.answers.id(item.answer));
    const auto& feat = ds.features[ds.scene_index.at(item.scene_id)];
    if (need_audio)
      std::memcpy(audio.data() + i * T * da, feat.audio.data().data(),
                  T * da * sizeof(double));
    if (need_visual)
      std::memcpy(visual.data() + i * T * dv * hw, feat.visual.data().data(),
                  T * dv * hw * sizeof(double));
  }
  if (need_audio) b.audio = Tensor::from_data({B, T, da}, std::move(audio));
  if (need_visual) b.visual = Tensor::from_data({B, T, dv, hw}, std::move(visual));
  return b;
}

// Scene-level batch for the matching stage: one entry per scene, a fixed
// one-token question (the head never reads it).
inline Batch assemble_scene_batch(const Dataset& ds,
                                  const std::vector<std::size_t>& scene_indices,
                                  std::size_t begin, std::size_t end) {
  const std::size_t B = end - begin;
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  const auto da = static_cast<std::size_t>(ds.scene_config.audio_dim);
  const auto dv = static_cast<std::size_t>(ds.scene_config.visual_dim);
  const auto hw =
      static_cast<std::size_t>(ds.scene_config.grid_h * ds.scene_config.grid_w);
  Batch b;
  std::vector<double> audio(B * T * da), visual(B * T * dv * hw);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& feat = ds.features[scene_indices[begin + i]];
    b.tokens.push_back({WordVocab::kUnk});
    std::memcpy(audio.data() + i * T * da, feat.audio.data().data(),
                T * da * sizeof(double));
    std::memcpy(visual.data() + i * T * dv * hw, feat.visual.data().data(),
                T * dv * hw * sizeof(double));
  }
  b.audio = Tensor::from_data({B, T, da}, std::move(audio));
  b.visual = Tensor::from_data({B, T, dv, hw}, std::move(visual));
  return b;
}

inline std::vector<std::uint64_t> scene_ids_of_items(
    const Dataset& ds, const std::vector<std::size_t>& item_ids, std::size_t begin,
    std::size_t end) {
  std::vector<std::uint64_t> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    out.push_back(ds.items[item_ids[i]].scene_id);
  return out;
}

inline std::vector<std::uint64_t> scene_ids_of_scenes(
    const Dataset& ds, const std::vector<std::size_t>& scene_indices,
    std::size_t begin, std::size_t end) {
  std::vector<std::uint64_t> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    out.push_back(ds.scenes[scene_indices[i]].scene_id);
  return out;
}

// Pairing for non-matched examples: visual row i takes audio row perm[i].
// A rotation guarantees a different row; among rotations we pick, starting
// from a stream-drawn offset, the first that avoids pairing two rows of the
// same scene (such a pair would be a matched "negative"). When every
// rotation collides somewhere, the least-colliding one wins.
inline std::vector<int> rotation_perm(const std::vector<std::uint64_t>& scene_ids,
                                      Rng& rng) {
  const std::size_t B = scene_ids.size();
  if (B < 2) return {};  // no valid mismatch exists
  const auto k0 = 1 + rng.next_below(B - 1);
  std::size_t best_k = k0, best_coll = std::numeric_limits<std::size_t>::max();
  for (std::size_t step = 0; step < B - 1; ++step) {
    const std::size_t k = 1 + (k0 - 1 + step) % (B - 1);
    std::size_t coll = 0;
    for (std::size_t i = 0; i < B; ++i)
      coll += scene_ids[i] == scene_ids[(i + k) % B];
    if (coll < best_coll) {
      best_coll = coll;
      best_k = k;
      if (coll == 0) break;
    }
  }
  std::vector<int> perm(B);
  for (std::size_t i = 0; i < B; ++i)
    perm[i] = static_cast<int>((i + best_k) % B);
  return perm;
}

inline Tensor match_loss(const ForwardOutput& out) {
  const auto B = out.match_pos_logits.shape()[0];
  Tensor lp = cross_entropy(out.match_pos_logits, std::vector<int>(B, 1));
  Tensor ln = cross_entropy(out.match_neg_logits, std::vector<int>(B, 0));
  return scale(add(lp, ln), 0.5);
}

inline std::vector<std::size_t> split_scene_indices(const Dataset& ds,
                                                    const std::string& split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.scenes.size(); ++i)
    if (split_for_scene(ds.seed, ds.scenes[i].scene_id) == split) out.push_back(i);
  return out;
}

// Scenes usable as matched pairs for the pretext task. A randomly re-dubbed
// scene's own soundtrack is unrelated to its video, so labeling that pair
// "matched" would be supervision noise; the matching task skips them.
inline std::vector<std::size_t> matching_scene_indices(const Dataset& ds,
                                                       const std::string& split) {
  std::vector<std::size_t> out;
  for (std::size_t i : split_scene_indices(ds, split))
    if (ds.scenes[i].composition_mode != "av_random_match") out.push_back(i);
  return out;
}

}  // namespace detail_train

// Answer accuracy over the given items, overall and split by question type.
struct SplitAccuracy {
  double overall = 0.0;
  std::map<std::string, double> by_qtype;
};

inline SplitAccuracy answer_accuracy_by_qtype(const Dataset& ds, ModelParams& p,
                                              const std::vector<std::size_t>& item_ids,
                                              int batch_size = 64) {
  SplitAccuracy acc;
  if (item_ids.empty()) return acc;
  std::size_t correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> qt;  // correct, total
  for (std::size_t begin = 0; begin < item_ids.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end =
        std::min(item_ids.size(), begin + static_cast<std::size_t>(batch_size));
    auto b = detail_train::assemble_batch(ds, item_ids, begin, end,
                                          p.cfg.use_audio, p.cfg.use_visual);
    auto out = forward(p, b);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const bool hit = argmax_row(out.answer_logits, i) ==
                       static_cast<std::size_t>(b.answer_ids[i]);
      correct += hit;
      auto& [c, n] = qt[ds.items[item_ids[begin + i]].qtype];
      c += hit;
      n += 1;
    }
  }
  acc.overall = static_cast<double>(correct) / static_cast<double>(item_ids.size());
  for (const auto& [qtype, cn] : qt)
    acc.by_qtype[qtype] =
        static_cast<double>(cn.first) / static_cast<double>(cn.second);
  return acc;
}

inline double answer_accuracy(const Dataset& ds, ModelParams& p,
                              const std::vector<std::size_t>& item_ids,
                              int batch_size = 64) {
  return answer_accuracy_by_qtype(ds, p, item_ids, batch_size).overall;
}

// Matching accuracy over the given scenes. The head scores each segment
// pair; a clip counts as classified matched when the summed per-segment
// logit margin favors the matched class. Positives are the scenes' own
// audio, negatives a rotated pairing drawn from the given stream id.
inline double match_accuracy(const Dataset& ds, ModelParams& p,
                             const std::vector<std::size_t>& scene_indices,
                             std::uint64_t stream_id, int batch_size = 64) {
  STG_CHECK(p.cfg.use_sg, "matching accuracy needs the matching head");
  if (scene_indices.size() < 2) return 0.0;
  const auto T = static_cast<std::size_t>(p.cfg.t_segments);
  std::size_t correct = 0, total = 0;
  Rng rng = stream_rng(ds.seed, "match-eval", stream_id);
  for (std::size_t begin = 0; begin < scene_indices.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(scene_indices.size(),
                              begin + static_cast<std::size_t>(batch_size));
    auto b = detail_train::assemble_scene_batch(ds, scene_indices, begin, end);
    b.match_perm = detail_train::rotation_perm(
        detail_train::scene_ids_of_scenes(ds, scene_indices, begin, end), rng);
    if (b.match_perm.empty()) continue;
    auto out = forward(p, b);
    const auto& pos = out.match_pos_logits.data();
    const auto& neg = out.match_neg_logits.data();
    for (std::size_t i = 0; i < end - begin; ++i) {
      double pos_margin = 0, neg_margin = 0;
      for (std::size_t t = 0; t < T; ++t) {
        const auto r = i * T + t;
        pos_margin += pos[2 * r + 1] - pos[2 * r];
        neg_margin += neg[2 * r + 1] - neg[2 * r];
      }
      correct += pos_margin > 0;
      correct += neg_margin < 0;
      total += 2;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

struct EpochMetrics {
  int stage = 0;      // 1 = matching pretrain, 2 = answer training
  int epoch = 0;      // within the stage
  double lr = 0;
  double train_loss = 0;
  double val_metric = 0;  // stage 1: matching accuracy; stage 2: answer accuracy
  // Stage 2 only: val answer accuracy per question type (empty in stage 1).
  std::map<std::string, double> val_qtype;
};

inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = "stage,epoch,lr,train_loss,val_metric";
  for (const auto& q : qtype_names()) out += ",val_" + q;
  out += "\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g,%.10g", r.stage, r.epoch,
                  r.lr, r.train_loss, r.val_metric);
    out += buf;
    for (const auto& q : qtype_names()) {
      out += ',';
      const auto it = r.val_qtype.find(q);
      if (it != r.val_qtype.end()) {
        std::snprintf(buf, sizeof buf, "%.10g", it->second);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: "STGC" magic, a little-endian u32 manifest length, a JSON
// manifest, then float64 tensor blobs in manifest order (parameters first,
// then Adam first/second moments).

namespace detail_train {

inline nlohmann::ordered_json model_config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["d_audio"] = c.d_audio;
  j["d_visual"] = c.d_visual;
  j["n_answers"] = c.n_answers;
  j["vocab_size"] = c.vocab_size;
  j["t_segments"] = c.t_segments;
  j["use_audio"] = c.use_audio;
  j["use_visual"] = c.use_visual;
  j["use_tg"] = c.use_tg;
  j["use_sg"] = c.use_sg;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.d_audio = j.at("d_audio").get<int>();
  c.d_visual = j.at("d_visual").get<int>();
  c.n_answers = j.at("n_answers").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.t_segments = j.at("t_segments").get<int>();
  c.use_audio = j.at("use_audio").get<bool>();
  c.use_visual = j.at("use_visual").get<bool>();
  c.use_tg = j.at("use_tg").get<bool>();
  c.use_sg = j.at("use_sg").get<bool>();
  return c;
}

inline nlohmann::ordered_json train_config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["stage1_epochs"] = c.stage1_epochs;
  j["stage2_epochs"] = c.stage2_epochs;
  j["lr0"] = c.lr0;
  j["lr_decay_every"] = c.lr_decay_every;
  j["stage1_lr_decay_every"] = c.stage1_lr_decay_every;
  j["lr_decay"] = c.lr_decay;
  j["lambda_match"] = c.lambda_match;
  j["grad_clip"] = c.grad_clip;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.stage1_epochs = j.at("stage1_epochs").get<int>();
  c.stage2_epochs = j.at("stage2_epochs").get<int>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_decay_every = j.at("lr_decay_every").get<int>();
  c.stage1_lr_decay_every = j.at("stage1_lr_decay_every").get<int>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.lambda_match = j.at("lambda_match").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail_train

struct Checkpoint {
  ModelParams params;
  Adam adam;
  TrainConfig train_config;
  int stage = 2;
  int next_epoch = 0;  // first epoch the resumed loop should run
  std::string dataset_hash;
};

inline void save_checkpoint(const std::string& path, ModelParams& params,
                            const Adam& adam, const TrainConfig& tcfg, int stage,
                            int next_epoch, const std::string& dataset_hash,
                            const nlohmann::ordered_json& provenance = {}) {
  auto plist = params.all();
  nlohmann::ordered_json m;
  m["format"] = "STGC";
  m["format_version"] = 1;
  m["model_config"] = detail_train::model_config_json(params.cfg);
  m["train_config"] = detail_train::train_config_json(tcfg);
  m["stage"] = stage;
  m["next_epoch"] = next_epoch;
  m["dataset_hash"] = dataset_hash;
  m["provenance"] = provenance;
  m["adam"] = {{"beta1", adam.beta1},
               {"beta2", adam.beta2},
               {"eps", adam.eps},
               {"t", adam.t}};
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (auto& [name, t] : plist) names.push_back(name);
  m["tensors"] = names;

  std::ofstream os(path, std::ios::binary);
  STG_CONFIG_CHECK(os.is_open(), "cannot open checkpoint for writing: " + path);
  const std::string manifest = m.dump();
  const auto len = static_cast<std::uint32_t>(manifest.size());
  os.write("STGC", 4);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (auto& [name, t] : plist)
    write_tensor_stream(os, t->shape(), t->data(), kTensorFormatFloat64);
  STG_CHECK(adam.m.size() == plist.size(), "optimizer state out of sync");
  for (std::size_t i = 0; i < plist.size(); ++i) {
    write_tensor_stream(os, plist[i].second->shape(), adam.m[i],
                        kTensorFormatFloat64);
    write_tensor_stream(os, plist[i].second->shape(), adam.v[i],
                        kTensorFormatFloat64);
  }
  STG_CHECK(os.good(), "short checkpoint write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  STG_CONFIG_CHECK(is.is_open(), "cannot open checkpoint: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  STG_CHECK(is.gcount() == 4 && std::memcmp(magic, "STGC", 4) == 0,
            "not a checkpoint file (bad magic)");
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  STG_CHECK(is.good(), "truncated checkpoint manifest length");
  std::string manifest(len, '\0');
  is.read(manifest.data(), static_cast<std::streamsize>(len));
  STG_CHECK(is.good(), "truncated checkpoint manifest");
  const auto m = nlohmann::ordered_json::parse(manifest);
  STG_CHECK(m.at("format").get<std::string>() == "STGC", "bad checkpoint format tag");

  Checkpoint ck;
  const auto cfg = detail_train::model_config_from_json(m.at("model_config"));
  ck.params = init_params(cfg, 0);  // shapes only; values overwritten below
  ck.train_config = detail_train::train_config_from_json(m.at("train_config"));
  ck.stage = m.at("stage").get<int>();
  ck.next_epoch = m.at("next_epoch").get<int>();
  ck.dataset_hash = m.at("dataset_hash").get<std::string>();
  ck.adam.beta1 = m.at("adam").at("beta1").get<double>();
  ck.adam.beta2 = m.at("adam").at("beta2").get<double>();
  ck.adam.eps = m.at("adam").at("eps").get<double>();

  auto plist = ck.params.all();
  const auto names = m.at("tensors").get<std::vector<std::string>>();
  STG_CHECK(names.size() == plist.size(), "checkpoint tensor list mismatch");
  for (std::size_t i = 0; i < plist.size(); ++i) {
    STG_CHECK(names[i] == plist[i].first, "checkpoint tensor order mismatch");
    auto lt = read_tensor_stream(is);
    STG_CHECK(lt.shape == plist[i].second->shape(),
              "checkpoint shape mismatch for " + names[i]);
    plist[i].second->data() = std::move(lt.data);
  }
  ck.adam.init(ck.params);
  ck.adam.t = m.at("adam").at("t").get<std::int64_t>();
  for (std::size_t i = 0; i < plist.size(); ++i) {
    auto lm = read_tensor_stream(is);
    auto lv = read_tensor_stream(is);
    STG_CHECK(lm.shape == plist[i].second->shape() &&
                  lv.shape == plist[i].second->shape(),
              "checkpoint optimizer shape mismatch for " + names[i]);
    ck.adam.m[i] = std::move(lm.data);
    ck.adam.v[i] = std::move(lv.data);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Training loops

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  double best_val = 0;
  int best_epoch = -1;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  // Called after each stage-2 epoch with (params, adam, next_epoch).
  std::function<void(ModelParams&, const Adam&, int, const EpochMetrics&)>
      on_checkpoint;
};

// Stage 1: matching pretrain over train-split scenes.
inline std::vector<EpochMetrics> train_stage1(Dataset& ds, ModelParams& p,
                                              const TrainConfig& tcfg,
                                              const TrainHooks& hooks = {}) {
  STG_CHECK(p.cfg.use_sg, "stage 1 trains the matching head");
  STG_CHECK(!ds.features.empty(), "render features before training");
  const auto scenes = detail_train::matching_scene_indices(ds, "train");
  const auto val_scenes = detail_train::matching_scene_indices(ds, "val");
  const auto B = static_cast<std::size_t>(tcfg.batch_size);
  Adam adam;
  adam.init(p);
  std::vector<EpochMetrics> out;
  for (int epoch = 0; epoch < tcfg.stage1_epochs; ++epoch) {
    const double lr = tcfg.stage1_lr_at(epoch);
    auto order = scenes;
    stream_rng(tcfg.seed, "s1-shuffle", static_cast<std::uint64_t>(epoch))
        .shuffle(order);
    Rng perm_rng = stream_rng(tcfg.seed, "s1-perm", static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += B) {
      const auto end = std::min(order.size(), begin + B);
      auto batch = detail_train::assemble_scene_batch(ds, order, begin, end);
      batch.match_perm = detail_train::rotation_perm(
          detail_train::scene_ids_of_scenes(ds, order, begin, end), perm_rng);
      if (batch.match_perm.empty()) continue;
      auto fwd = forward(p, batch);
      Tensor loss = detail_train::match_loss(fwd);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw detail_train::divergence_error("stage-1", epoch, begin, lr, p);
      p.zero_grads();
      loss.backward();
      clip_gradients(p, tcfg.grad_clip);
      adam.step(p, lr);
      loss_sum += lv;
      ++n_batches;
    }
    EpochMetrics em;
    em.stage = 1;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    em.val_metric =
        match_accuracy(ds, p, val_scenes, static_cast<std::uint64_t>(epoch));
    out.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(em);
  }
  return out;
}

// Stage 2: answer training (plus the weighted matching term when grounding
// is on). `start_epoch`, `adam` and the parameter values define the resume
// point; a fresh run passes start_epoch 0 and a fresh optimizer.
inline TrainResult train_stage2(Dataset& ds, ModelParams& p, Adam& adam,
                                const TrainConfig& tcfg, int start_epoch = 0,
                                const TrainHooks& hooks = {}) {
  STG_CHECK(!ds.features.empty(), "render features before training");
  const auto train_items = ds.item_ids_for_split("train");
  const auto val_items = ds.item_ids_for_split("val");
  STG_CHECK(!train_items.empty(), "empty training split");
  const auto B = static_cast<std::size_t>(tcfg.batch_size);
  if (adam.m.empty()) adam.init(p);

  TrainResult res;
  for (int epoch = start_epoch; epoch < tcfg.stage2_epochs; ++epoch) {
    const double lr = tcfg.lr_at(epoch);
    auto order = train_items;
    stream_rng(tcfg.seed, "s2-shuffle", static_cast<std::uint64_t>(epoch))
        .shuffle(order);
    Rng perm_rng = stream_rng(tcfg.seed, "s2-perm", static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += B) {
      const auto end = std::min(order.size(), begin + B);
      auto batch = detail_train::assemble_batch(ds, order, begin, end,
                                                p.cfg.use_audio, p.cfg.use_visual);
      if (p.cfg.use_sg)
        batch.match_perm = detail_train::rotation_perm(
            detail_train::scene_ids_of_items(ds, order, begin, end), perm_rng);
      auto fwd = forward(p, batch);
      Tensor loss = cross_entropy(fwd.answer_logits, batch.answer_ids);
      if (fwd.has_match)
        loss = add(loss, scale(detail_train::match_loss(fwd), tcfg.lambda_match));
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw detail_train::divergence_error("stage-2", epoch, begin, lr, p);
      p.zero_grads();
      loss.backward();
      clip_gradients(p, tcfg.grad_clip);
      adam.step(p, lr);
      loss_sum += lv;
      ++n_batches;
    }
    EpochMetrics em;
    em.stage = 2;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss = loss_sum / static_cast<double>(n_batches);
    const auto val = answer_accuracy_by_qtype(ds, p, val_items);
    em.val_metric = val.overall;
    em.val_qtype = val.by_qtype;
    res.metrics.push_back(em);
    if (em.val_metric > res.best_val) {
      res.best_val = em.val_metric;
      res.best_epoch = epoch;
    }
    if (hooks.on_epoch) hooks.on_epoch(em);
    if (hooks.on_checkpoint) hooks.on_checkpoint(p, adam, epoch + 1, em);
  }
  return res;
}

// Full recipe: fresh parameters, optional matching pretrain, answer training.
inline TrainResult train_model(Dataset& ds, const ModelConfig& mcfg,
                               const TrainConfig& tcfg, ModelParams& out_params,
                               const TrainHooks& hooks = {}) {
  mcfg.validate();
  tcfg.validate();
  out_params = init_params(mcfg, tcfg.seed);
  TrainResult res;
  if (mcfg.use_sg && tcfg.stage1_epochs > 0) {
    auto s1 = train_stage1(ds, out_params, tcfg, hooks);
    res.metrics.insert(res.metrics.end(), s1.begin(), s1.end());
  }
  Adam adam;
  adam.init(out_params);
  auto s2 = train_stage2(ds, out_params, adam, tcfg, 0, hooks);
  res.metrics.insert(res.metrics.end(), s2.metrics.begin(), s2.metrics.end());
  res.best_val = s2.best_val;
  res.best_epoch = s2.best_epoch;
  return res;
}

}  // namespace stg
