// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation harness: per-question-type accuracy tables, the six-row
// ablation suite, segment-shuffle evaluation, and spatial-attention
// localization scoring against scene ground truth.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stg/common.hpp"
#include "stg/dataset.hpp"
#include "stg/model.hpp"
#include "stg/train.hpp"

namespace stg {

// ---------------------------------------------------------------------------
// Accuracy reports

struct AccuracyCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

// Fixed row/column orders for report tables. Only cells present in a report
// are emitted, but always in this order.
inline const std::vector<std::string>& report_modality_order() {
  static const std::vector<std::string> v = {"audio", "visual", "audio_visual"};
  return v;
}
inline const std::vector<std::string>& report_qtype_order() { return qtype_names(); }
inline std::string modality_prefix(const std::string& modality) {
  if (modality == "audio") return "a";
  if (modality == "visual") return "v";
  if (modality == "audio_visual") return "av";
  return modality;
}

// Canonical description of which branches a configuration enables, in the
// vocabulary of the standard ablation rows ("q", "a+q", ..., "av+q+tg+sg").
inline std::string ablation_flags_string(const ModelConfig& cfg) {
  std::string s;
  if (cfg.use_audio && cfg.use_visual) s = "av+q";
  else if (cfg.use_audio) s = "a+q";
  else if (cfg.use_visual) s = "v+q";
  else s = "q";
  if (cfg.use_tg) s += "+tg";
  if (cfg.use_sg) s += "+sg";
  return s;
}

struct AccuracyReport {
  // modality -> qtype -> counts. Marginals are computed, never stored, so
  // the overall correct count is the sum of cell corrects by construction.
  std::map<std::string, std::map<std::string, AccuracyCell>> cells;
  std::string model_tag;
  std::string ablation_flags;
  std::string dataset_hash;
  std::string split;
  std::uint64_t seed = 0;

  void add(const QAItem& item, bool correct) {
    auto& c = cells[item.modality][item.qtype];
    c.total += 1;
    c.correct += correct ? 1u : 0u;
  }

  // Micro marginal: every question of the modality weighs equally.
  AccuracyCell modality_cell(const std::string& modality) const {
    AccuracyCell m;
    auto it = cells.find(modality);
    if (it == cells.end()) return m;
    for (const auto& [qtype, c] : it->second) {
      m.correct += c.correct;
      m.total += c.total;
    }
    return m;
  }

  AccuracyCell overall_cell() const {
    AccuracyCell m;
    for (const auto& [modality, row] : cells)
      for (const auto& [qtype, c] : row) {
        m.correct += c.correct;
        m.total += c.total;
      }
    return m;
  }

  double overall() const { return overall_cell().accuracy(); }
};

// ---------------------------------------------------------------------------
// evaluate: argmax answer prediction, grouped per (modality, qtype)

namespace detail_eval {

inline void check_dims(const Dataset& ds, const ModelConfig& cfg) {
  STG_CONFIG_CHECK(!cfg.use_audio || cfg.d_audio == ds.scene_config.audio_dim,
                   "model d_audio does not match dataset audio_dim");
  STG_CONFIG_CHECK(!cfg.use_visual || cfg.d_visual == ds.scene_config.visual_dim,
                   "model d_visual does not match dataset visual_dim");
  STG_CONFIG_CHECK(cfg.t_segments == ds.scene_config.duration_segments,
                   "model t_segments does not match dataset duration");
}

}  // namespace detail_eval

// Report for an arbitrary per-item predictor (returns an answer id). Used by
// baseline predictors and tests; the model path below shares its accumulator.
inline AccuracyReport evaluate_predictor(
    const Dataset& ds, const std::vector<std::size_t>& item_ids,
    const std::function<int(const QAItem&)>& predict) {
  STG_CONFIG_CHECK(!item_ids.empty(), "evaluate: empty item set");
  AccuracyReport r;
  r.dataset_hash = ds.hash_hex;
  for (std::size_t id : item_ids) {
    const auto& item = ds.items[id];
    r.add(item, predict(item) == ds.answers.id(item.answer));
  }
  return r;
}

// Model accuracy over one split. Reads parameters only; never mutates them.
inline AccuracyReport evaluate(const Dataset& ds, ModelParams& p,
                               const std::string& split, int batch_size = 64) {
  detail_eval::check_dims(ds, p.cfg);
  const auto item_ids = ds.item_ids_for_split(split);
  STG_CONFIG_CHECK(!item_ids.empty(), "evaluate: split has no items: " + split);
  AccuracyReport r;
  r.dataset_hash = ds.hash_hex;
  r.split = split;
  r.ablation_flags = ablation_flags_string(p.cfg);
  for (std::size_t begin = 0; begin < item_ids.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end =
        std::min(item_ids.size(), begin + static_cast<std::size_t>(batch_size));
    auto b = detail_train::assemble_batch(ds, item_ids, begin, end,
                                          p.cfg.use_audio, p.cfg.use_visual);
    auto out = forward(p, b);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const auto& item = ds.items[item_ids[begin + i]];
      r.add(item, argmax_row(out.answer_logits, i) ==
                      static_cast<std::size_t>(b.answer_ids[i]));
    }
  }
  return r;
}

// Value hash over every active parameter tensor (name, shape, then raw
// float64 bytes). Evaluation must leave this unchanged.
inline std::uint64_t param_hash(ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto& [name, t] : p.all()) {
    h = fnv1a64(name, h);
    for (std::size_t dim : t->shape()) {
      const auto d64 = static_cast<std::uint64_t>(dim);
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&d64), sizeof d64), h);
    }
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t->data().data()),
                                 t->numel() * sizeof(double)),
                h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Segment-shuffle evaluation: permute the segment axis of both feature
// streams with one permutation per item, then evaluate as usual. Temporal
// pooling (attention or mean) is order-free, so a trained model's answer
// logits move only by floating-point summation order.

namespace detail_eval {

inline std::vector<std::size_t> segment_permutation(std::uint64_t shuffle_seed,
                                                    std::uint64_t qa_id,
                                                    std::size_t T) {
  std::vector<std::size_t> perm(T);
  for (std::size_t t = 0; t < T; ++t) perm[t] = t;
  stream_rng(shuffle_seed, "seg-shuffle", qa_id).shuffle(perm);
  return perm;
}

// assemble_batch with each item's segments reordered by perm_for(qa_id),
// identically on the audio and visual streams.
inline Batch assemble_permuted_batch(
    const Dataset& ds, const std::vector<std::size_t>& item_ids, std::size_t begin,
    std::size_t end, bool need_audio, bool need_visual,
    const std::function<std::vector<std::size_t>(std::uint64_t)>& perm_for) {
  const std::size_t B = end - begin;
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  const auto da = static_cast<std::size_t>(ds.scene_config.audio_dim);
  const auto dvhw = static_cast<std::size_t>(ds.scene_config.visual_dim) *
                    static_cast<std::size_t>(ds.scene_config.grid_h *
                                             ds.scene_config.grid_w);
  Batch b;
  std::vector<double> audio(need_audio ? B * T * da : 0);
  std::vector<double> visual(need_visual ? B * T * dvhw : 0);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& item = ds.items[item_ids[begin + i]];
    b.tokens.push_back(ds.words.ids(tokenize(item.question)));
    b.answer_ids.push_back(ds.answers.id(item.answer));
    const auto& feat = ds.features[ds.scene_index.at(item.scene_id)];
    const auto perm = perm_for(item.qa_id);
    STG_CHECK(perm.size() == T, "segment permutation has wrong length");
    for (std::size_t t = 0; t < T; ++t) {
      if (need_audio)
        std::memcpy(audio.data() + (i * T + t) * da,
                    feat.audio.data().data() + perm[t] * da, da * sizeof(double));
      if (need_visual)
        std::memcpy(visual.data() + (i * T + t) * dvhw,
                    feat.visual.data().data() + perm[t] * dvhw,
                    dvhw * sizeof(double));
    }
  }
  const auto dv = static_cast<std::size_t>(ds.scene_config.visual_dim);
  const auto hw = static_cast<std::size_t>(ds.scene_config.grid_h * ds.scene_config.grid_w);
  if (need_audio) b.audio = Tensor::from_data({B, T, da}, std::move(audio));
  if (need_visual) b.visual = Tensor::from_data({B, T, dv, hw}, std::move(visual));
  return b;
}

inline double max_logit_delta_for(
    const Dataset& ds, ModelParams& p, const std::vector<std::size_t>& item_ids,
    const std::function<std::vector<std::size_t>(std::uint64_t)>& perm_for,
    int batch_size) {
  detail_eval::check_dims(ds, p.cfg);
  double worst = 0.0;
  for (std::size_t begin = 0; begin < item_ids.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end =
        std::min(item_ids.size(), begin + static_cast<std::size_t>(batch_size));
    auto plain = detail_train::assemble_batch(ds, item_ids, begin, end,
                                              p.cfg.use_audio, p.cfg.use_visual);
    auto shuffled = assemble_permuted_batch(ds, item_ids, begin, end,
                                            p.cfg.use_audio, p.cfg.use_visual,
                                            perm_for);
    auto out_a = forward(p, plain);
    auto out_b = forward(p, shuffled);
    const auto& a = out_a.answer_logits.data();
    const auto& b = out_b.answer_logits.data();
    for (std::size_t k = 0; k < a.size(); ++k)
      worst = std::max(worst, std::fabs(a[k] - b[k]));
  }
  return worst;
}

}  // namespace detail_eval

// Largest |answer logit change| caused by per-item segment shuffles.
inline double shuffle_logit_delta(const Dataset& ds, ModelParams& p,
                                  const std::vector<std::size_t>& item_ids,
                                  std::uint64_t shuffle_seed, int batch_size = 64) {
  STG_CONFIG_CHECK(!item_ids.empty(), "shuffle_logit_delta: empty item set");
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  return detail_eval::max_logit_delta_for(
      ds, p, item_ids,
      [&](std::uint64_t qa_id) {
        return detail_eval::segment_permutation(shuffle_seed, qa_id, T);
      },
      batch_size);
}

// Accuracy report under per-item segment shuffles (consistent across the
// audio and visual streams).
inline AccuracyReport shuffle_eval(const Dataset& ds, ModelParams& p,
                                   const std::string& split,
                                   std::uint64_t shuffle_seed, int batch_size = 64) {
  detail_eval::check_dims(ds, p.cfg);
  const auto item_ids = ds.item_ids_for_split(split);
  STG_CONFIG_CHECK(!item_ids.empty(), "shuffle_eval: split has no items: " + split);
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  AccuracyReport r;
  r.dataset_hash = ds.hash_hex;
  r.split = split;
  r.ablation_flags = ablation_flags_string(p.cfg);
  r.seed = shuffle_seed;
  for (std::size_t begin = 0; begin < item_ids.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end =
        std::min(item_ids.size(), begin + static_cast<std::size_t>(batch_size));
    auto b = detail_eval::assemble_permuted_batch(
        ds, item_ids, begin, end, p.cfg.use_audio, p.cfg.use_visual,
        [&](std::uint64_t qa_id) {
          return detail_eval::segment_permutation(shuffle_seed, qa_id, T);
        });
    auto out = forward(p, b);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const auto& item = ds.items[item_ids[begin + i]];
      r.add(item, argmax_row(out.answer_logits, i) ==
                      static_cast<std::size_t>(b.answer_ids[i]));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Localization: does the spatial attention's argmax cell contain an object
// that is visible and sounding in that segment? Segments with no such object
// (silence, or sound from an off-screen source) are excluded.

struct LocalizationReport {
  double score = 0.0;   // argmax hits / considered segments
  double chance = 0.0;  // uniform-attention baseline, 1/(H*W)
  std::size_t considered = 0;
  std::size_t skipped = 0;          // segments with no visible sounding object
  double mean_truth_cells = 0.0;    // avg ground-truth cells per considered segment
};

namespace detail_eval {

inline std::vector<int> truth_cells(const SceneSpec& scene, int t) {
  std::vector<int> cells;
  for (const auto& o : scene.objects)
    if (o.visible && o.sounds_at(t)) {
      const int cell = o.row * scene.grid_w + o.col;
      if (std::find(cells.begin(), cells.end(), cell) == cells.end())
        cells.push_back(cell);
    }
  return cells;
}

}  // namespace detail_eval

inline LocalizationReport localization_score(
    const Dataset& ds, ModelParams& p,
    const std::vector<std::size_t>& scene_indices, int batch_size = 64) {
  STG_CONFIG_CHECK(p.cfg.use_sg, "localization needs spatial grounding enabled");
  detail_eval::check_dims(ds, p.cfg);
  STG_CONFIG_CHECK(!scene_indices.empty(), "localization: empty scene set");
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  const auto hw =
      static_cast<std::size_t>(ds.scene_config.grid_h * ds.scene_config.grid_w);
  LocalizationReport rep;
  rep.chance = 1.0 / static_cast<double>(hw);
  std::size_t hits = 0, truth_sum = 0;
  for (std::size_t begin = 0; begin < scene_indices.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(scene_indices.size(),
                              begin + static_cast<std::size_t>(batch_size));
    auto b = detail_train::assemble_scene_batch(ds, scene_indices, begin, end);
    auto out = forward(p, b);
    STG_CHECK(out.has_spatial, "forward produced no spatial attention");
    for (std::size_t i = 0; i < end - begin; ++i) {
      const auto& scene = ds.scenes[scene_indices[begin + i]];
      for (std::size_t t = 0; t < T; ++t) {
        const auto truth = detail_eval::truth_cells(scene, static_cast<int>(t));
        if (truth.empty()) {
          ++rep.skipped;
          continue;
        }
        const auto best =
            static_cast<int>(argmax_row(out.spatial_att, i * T + t));
        hits += std::find(truth.begin(), truth.end(), best) != truth.end();
        truth_sum += truth.size();
        ++rep.considered;
      }
    }
  }
  if (rep.considered > 0) {
    rep.score = static_cast<double>(hits) / static_cast<double>(rep.considered);
    rep.mean_truth_cells =
        static_cast<double>(truth_sum) / static_cast<double>(rep.considered);
  }
  return rep;
}

inline LocalizationReport localization_score(const Dataset& ds, ModelParams& p,
                                             const std::string& split,
                                             int batch_size = 64) {
  return localization_score(ds, p, detail_train::split_scene_indices(ds, split),
                            batch_size);
}

// Per-segment attention heatmaps for the first `max_scenes` scenes, one CSV
// row per segment; the weight columns of each row sum to 1.
inline std::string localization_heatmap_csv(
    const Dataset& ds, ModelParams& p, const std::vector<std::size_t>& scene_indices,
    std::size_t max_scenes = 8) {
  STG_CONFIG_CHECK(p.cfg.use_sg, "heatmaps need spatial grounding enabled");
  detail_eval::check_dims(ds, p.cfg);
  const auto T = static_cast<std::size_t>(ds.scene_config.duration_segments);
  const auto hw =
      std::size_t(ds.scene_config.grid_h) * std::size_t(ds.scene_config.grid_w);
  std::vector<std::size_t> chosen(
      scene_indices.begin(),
      scene_indices.begin() +
          static_cast<std::ptrdiff_t>(std::min(max_scenes, scene_indices.size())));
  STG_CONFIG_CHECK(!chosen.empty(), "heatmap: empty scene set");
  std::string out = "scene_id,segment";
  for (std::size_t c = 0; c < hw; ++c) out += ",c" + std::to_string(c);
  out += "\n";
  auto b = detail_train::assemble_scene_batch(ds, chosen, 0, chosen.size());
  auto fwd = forward(p, b);
  STG_CHECK(fwd.has_spatial, "forward produced no spatial attention");
  const auto& att = fwd.spatial_att.data();
  char buf[64];
  for (std::size_t i = 0; i < chosen.size(); ++i)
    for (std::size_t t = 0; t < T; ++t) {
      out += std::to_string(ds.scenes[chosen[i]].scene_id);
      out += "," + std::to_string(t);
      for (std::size_t c = 0; c < hw; ++c) {
        std::snprintf(buf, sizeof buf, ",%.10g", att[(i * T + t) * hw + c]);
        out += buf;
      }
      out += "\n";
    }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation suite: the six standard rows, each trained and evaluated on the
// test split under identical budgets, repeated over the given seeds.

struct AblationRun {
  std::string row;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;      // failure reason when !ok
  AccuracyReport report;  // test-split report when ok
  double best_val = 0.0;
};

struct AblationSuite {
  std::vector<std::string> rows;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;  // rows-major: runs[r * seeds.size() + s]

  const AblationRun& run(std::size_t row_idx, std::size_t seed_idx) const {
    return runs[row_idx * seeds.size() + seed_idx];
  }

  // Mean test accuracy over the seeds that finished; NaN when none did.
  double mean_overall(const std::string& row_name) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs)
      if (r.row == row_name && r.ok) {
        sum += r.report.overall();
        ++n;
      }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                  : sum / static_cast<double>(n);
  }
};

struct AblationHooks {
  std::function<void(const AblationRun&)> on_run;  // after each (row, seed)
  TrainHooks train;                                // forwarded to training
};

inline AblationSuite ablation_suite(Dataset& ds, const ModelConfig& base,
                                    const TrainConfig& tcfg,
                                    const std::vector<std::uint64_t>& seeds = {0, 1, 2},
                                    const AblationHooks& hooks = {}) {
  STG_CONFIG_CHECK(!seeds.empty(), "ablation suite needs at least one seed");
  AblationSuite suite;
  suite.rows = ablation_row_names();
  suite.seeds = seeds;
  for (const auto& row : suite.rows) {
    for (const auto seed : seeds) {
      AblationRun run;
      run.row = row;
      run.seed = seed;
      // One failed row must not take down the rest of the suite.
      try {
        ModelConfig mcfg = ablation_config(base, row);
        TrainConfig tc = tcfg;
        tc.seed = seed;
        ModelParams params;
        auto res = train_model(ds, mcfg, tc, params, hooks.train);
        run.best_val = res.best_val;
        run.report = evaluate(ds, params, "test");
        run.report.model_tag = row;
        run.report.seed = seed;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (hooks.on_run) hooks.on_run(run);
      suite.runs.push_back(std::move(run));
    }
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Report serialization. Accuracies are percentages with two decimals; the
// column set is the union of cells present, in fixed modality/qtype order,
// with a micro-averaged column per modality and an overall column.

namespace detail_eval {

inline std::vector<std::pair<std::string, std::string>> report_columns(
    const std::vector<const AccuracyReport*>& reports) {
  std::vector<std::pair<std::string, std::string>> cols;
  for (const auto& modality : report_modality_order()) {
    bool any = false;
    for (const auto& qtype : report_qtype_order()) {
      for (const auto* r : reports) {
        auto mit = r->cells.find(modality);
        if (mit != r->cells.end() && mit->second.count(qtype)) {
          cols.emplace_back(modality, qtype);
          any = true;
          break;
        }
      }
    }
    if (any) cols.emplace_back(modality, "avg");
  }
  cols.emplace_back("all", "all");
  return cols;
}

inline std::string pct(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

inline std::string csv_header(
    const std::vector<std::pair<std::string, std::string>>& cols) {
  std::string out = "method";
  for (const auto& [modality, qtype] : cols) {
    if (modality == "all") {
      out += ",all";
    } else {
      out += "," + modality_prefix(modality) + "_" + qtype;
    }
  }
  out += "\n";
  return out;
}

inline std::string csv_row(
    const std::string& name, const AccuracyReport& r,
    const std::vector<std::pair<std::string, std::string>>& cols) {
  std::string out = name;
  for (const auto& [modality, qtype] : cols) {
    out += ",";
    if (modality == "all") {
      out += pct(r.overall());
    } else if (qtype == "avg") {
      const auto m = r.modality_cell(modality);
      out += m.total ? pct(m.accuracy()) : "";
    } else {
      auto mit = r.cells.find(modality);
      if (mit != r.cells.end()) {
        auto qit = mit->second.find(qtype);
        if (qit != mit->second.end()) out += pct(qit->second.accuracy());
      }
    }
  }
  out += "\n";
  return out;
}

}  // namespace detail_eval

inline std::string report_csv(const AccuracyReport& r) {
  const auto cols = detail_eval::report_columns({&r});
  const std::string name = r.model_tag.empty() ? r.ablation_flags : r.model_tag;
  return detail_eval::csv_header(cols) +
         detail_eval::csv_row(name.empty() ? "model" : name, r, cols);
}

// One row per ablation config, cells averaged over the seeds that finished.
inline std::string ablation_csv(const AblationSuite& suite) {
  std::vector<const AccuracyReport*> ok_reports;
  for (const auto& run : suite.runs)
    if (run.ok) ok_reports.push_back(&run.report);
  // With every run failed there are no cells; emit headers only.
  const auto cols = detail_eval::report_columns(
      ok_reports.empty() ? std::vector<const AccuracyReport*>{} : ok_reports);
  std::string out = detail_eval::csv_header(cols);
  for (const auto& row : suite.rows) {
    // Seed-mean report: sum counts across finished seeds, then divide once.
    AccuracyReport mean;
    std::size_t n_ok = 0;
    for (const auto& run : suite.runs)
      if (run.row == row && run.ok) {
        ++n_ok;
        for (const auto& [modality, cell_row] : run.report.cells)
          for (const auto& [qtype, c] : cell_row) {
            auto& acc = mean.cells[modality][qtype];
            acc.correct += c.correct;
            acc.total += c.total;
          }
      }
    if (n_ok == 0) {
      out += row + std::string(cols.size(), ',') + "\n";
      continue;
    }
    out += detail_eval::csv_row(row, mean, cols);
  }
  return out;
}

// Merged table: one row per report, in the given order.
inline std::string reports_csv(const std::vector<AccuracyReport>& reports) {
  std::vector<const AccuracyReport*> ptrs;
  ptrs.reserve(reports.size());
  for (const auto& r : reports) ptrs.push_back(&r);
  const auto cols = detail_eval::report_columns(ptrs);
  std::string out = detail_eval::csv_header(cols);
  for (const auto& r : reports) {
    std::string name = r.model_tag.empty() ? r.ablation_flags : r.model_tag;
    if (name.empty()) name = "model";
    out += detail_eval::csv_row(name, r, cols);
  }
  return out;
}

inline nlohmann::ordered_json report_json(const AccuracyReport& r) {
  nlohmann::ordered_json j;
  j["version"] = kVersionString;
  j["model_tag"] = r.model_tag;
  j["ablation_flags"] = r.ablation_flags;
  j["dataset_hash"] = r.dataset_hash;
  j["split"] = r.split;
  j["seed"] = r.seed;
  nlohmann::ordered_json cells = nlohmann::ordered_json::object();
  for (const auto& modality : report_modality_order()) {
    auto mit = r.cells.find(modality);
    if (mit == r.cells.end()) continue;
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (const auto& qtype : report_qtype_order()) {
      auto qit = mit->second.find(qtype);
      if (qit == mit->second.end()) continue;
      row[qtype] = {{"correct", qit->second.correct},
                    {"total", qit->second.total},
                    {"accuracy", qit->second.accuracy()}};
    }
    const auto m = r.modality_cell(modality);
    row["avg"] = {{"correct", m.correct}, {"total", m.total}, {"accuracy", m.accuracy()}};
    cells[modality] = row;
  }
  j["cells"] = cells;
  const auto o = r.overall_cell();
  j["overall"] = {{"correct", o.correct}, {"total", o.total}, {"accuracy", o.accuracy()}};
  return j;
}

// Inverse of report_json for the counts and metadata; derived numbers
// (per-modality averages, overall) are recomputed, never trusted.
inline AccuracyReport report_from_json(const nlohmann::ordered_json& j) {
  AccuracyReport r;
  r.model_tag = j.value("model_tag", "");
  r.ablation_flags = j.value("ablation_flags", "");
  r.dataset_hash = j.value("dataset_hash", "");
  r.split = j.value("split", "");
  r.seed = j.value("seed", std::uint64_t{0});
  for (const auto& [modality, row] : j.at("cells").items()) {
    for (const auto& [qtype, cell] : row.items()) {
      if (qtype == "avg") continue;
      AccuracyCell c;
      c.correct = cell.at("correct").get<std::size_t>();
      c.total = cell.at("total").get<std::size_t>();
      r.cells[modality][qtype] = c;
    }
  }
  return r;
}

}  // namespace stg
