// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic audio-visual scene simulator. A scene is a grid of instrument
// performers over a fixed number of time segments; six composition modes
// produce solos, same-instrument ensembles, mixed ensembles, dubbed audio,
// spliced videos, and deliberately mismatched audio/video pairs. Rendering
// turns a scene into per-segment audio vectors and visual feature maps from
// per-instrument prototype banks, with i.i.d. Gaussian noise on every entry.
// Everything is a pure function of (config, master seed, scene id), so
// parallel generation produces byte-identical corpora.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stg/common.hpp"
#include "stg/rng.hpp"
#include "stg/tensor.hpp"

namespace stg {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Instrument taxonomy: 22 instruments in 4 families.

inline const std::vector<std::string>& instrument_names() {
  static const std::vector<std::string> names = {
      // string
      "violin", "cello", "guitar", "ukulele", "erhu", "guzheng", "pipa", "bass",
      "banjo",
      // wind
      "tuba", "trumpet", "suona", "bassoon", "clarinet", "bagpipe", "flute",
      "saxophone",
      // percussion
      "drum", "xylophone", "congas",
      // keyboard
      "accordion", "piano"};
  return names;
}

inline constexpr int kInstrumentCount = 22;

inline int instrument_id(const std::string& name) {
  const auto& names = instrument_names();
  for (int i = 0; i < kInstrumentCount; ++i)
    if (names[static_cast<size_t>(i)] == name) return i;
  throw InvariantError("unknown instrument: " + name);
}

// ---------------------------------------------------------------------------
// Composition modes

enum class SceneMode {
  kRealSolo,
  kRealEsit,   // ensemble of the same instrument type
  kRealEdit,   // ensemble of different instrument types
  kAudioOverlay,
  kVideoStitching,
  kAvRandomMatch,
};

inline const char* mode_name(SceneMode m) {
  switch (m) {
    case SceneMode::kRealSolo: return "real_solo";
    case SceneMode::kRealEsit: return "real_esit";
    case SceneMode::kRealEdit: return "real_edit";
    case SceneMode::kAudioOverlay: return "audio_overlay";
    case SceneMode::kVideoStitching: return "video_stitching";
    case SceneMode::kAvRandomMatch: return "av_random_match";
  }
  throw InvariantError("bad mode");
}

inline SceneMode mode_from_name(const std::string& s) {
  for (SceneMode m : {SceneMode::kRealSolo, SceneMode::kRealEsit,
                      SceneMode::kRealEdit, SceneMode::kAudioOverlay,
                      SceneMode::kVideoStitching, SceneMode::kAvRandomMatch})
    if (s == mode_name(m)) return m;
  throw InvariantError("unknown composition mode: " + s);
}

// ---------------------------------------------------------------------------
// Types

struct SceneObject {
  int instrument = 0;
  int row = 0;
  int col = 0;
  std::vector<int> sounding;  // sorted segment indices, empty = never sounds
  double loudness = 1.0;
  double rhythmicity = 1.0;
  bool visible = true;

  bool sounds_at(int t) const {
    for (int s : sounding)
      if (s == t) return true;
    return false;
  }
  int onset() const { return sounding.empty() ? -1 : sounding.front(); }
  int duration() const { return static_cast<int>(sounding.size()); }
};

struct SceneSpec {
  std::uint64_t scene_id = 0;
  int duration_segments = 10;
  int grid_h = 4;
  int grid_w = 4;
  std::vector<SceneObject> objects;
  std::string composition_mode = "real_solo";
  std::string venue = "indoor";  // oracle-visible tag, not rendered
  std::uint64_t seed = 0;        // per-scene stream seed, recorded for replay
};

struct SceneConfig {
  int duration_segments = 10;
  int grid_h = 4;
  int grid_w = 4;
  int audio_dim = 32;
  int visual_dim = 64;
  double noise_sigma = 0.05;
  double min_proto_angle_deg = 30.0;
  // Proportions over the six modes, same order as SceneMode. Must sum to 1.
  std::array<double, 6> mode_mix = {0.27, 0.15, 0.30, 0.10, 0.10, 0.08};
  double loudness_lo = 0.6, loudness_hi = 1.4;
  double rhythmicity_lo = 0.5, rhythmicity_hi = 3.0;
  double extra_silent_prob = 0.25;  // chance a non-lead visible object is mute

  void validate() const {
    STG_CONFIG_CHECK(duration_segments >= 2, "duration_segments must be >= 2");
    STG_CONFIG_CHECK(grid_h >= 1 && grid_w >= 2, "grid must be at least 1x2");
    STG_CONFIG_CHECK(audio_dim >= 16 && visual_dim >= 16,
                     "feature dims must be >= 16");
    double s = 0;
    for (double p : mode_mix) {
      STG_CONFIG_CHECK(p >= 0, "mode mix entries must be nonnegative");
      s += p;
    }
    STG_CONFIG_CHECK(std::fabs(s - 1.0) < 1e-9, "mode mix must sum to 1");
    STG_CONFIG_CHECK(noise_sigma >= 0, "noise_sigma must be nonnegative");
  }
};

// Per-instrument feature prototypes. Unit norm; every pair (including the
// visual background vector) is separated by at least the configured angle.
struct ProtoBank {
  Tensor audio_protos;    // [22, audio_dim]
  Tensor visual_protos;   // [22, visual_dim]
  Tensor background_visual;  // [visual_dim]
  std::uint64_t seed = 0;
};

namespace detail {

inline void normalize_row(double* v, size_t d) {
  double n = 0;
  for (size_t i = 0; i < d; ++i) n += v[i] * v[i];
  n = std::sqrt(n);
  STG_CHECK(n > 0, "zero vector cannot be normalized");
  for (size_t i = 0; i < d; ++i) v[i] /= n;
}

// Rejection-samples `count` unit vectors with pairwise cosine below the
// bound. At dim >= 16 random directions are nearly orthogonal, so this
// terminates in a handful of attempts per vector.
inline std::vector<double> sample_separated_unit_vectors(Rng& rng, size_t count,
                                                         size_t dim,
                                                         double max_cos) {
  std::vector<double> bank;
  bank.reserve(count * dim);
  std::vector<double> cand(dim);
  size_t have = 0;
  int attempts = 0;
  while (have < count) {
    STG_CHECK(++attempts < 100000, "prototype sampling did not converge");
    for (auto& x : cand) x = rng.normal();
    normalize_row(cand.data(), dim);
    bool ok = true;
    for (size_t r = 0; r < have && ok; ++r) {
      double dot = 0;
      for (size_t i = 0; i < dim; ++i) dot += bank[r * dim + i] * cand[i];
      if (std::fabs(dot) > max_cos) ok = false;
    }
    if (!ok) continue;
    bank.insert(bank.end(), cand.begin(), cand.end());
    ++have;
  }
  return bank;
}

}  // namespace detail

inline ProtoBank make_proto_bank(const SceneConfig& cfg, std::uint64_t master_seed) {
  const double max_cos = std::cos(cfg.min_proto_angle_deg * M_PI / 180.0);
  ProtoBank bank;
  bank.seed = stream_seed(master_seed, "proto-bank");
  Rng rng(bank.seed);
  const auto da = static_cast<size_t>(cfg.audio_dim);
  const auto dv = static_cast<size_t>(cfg.visual_dim);
  bank.audio_protos = Tensor::from_data(
      {static_cast<size_t>(kInstrumentCount), da},
      detail::sample_separated_unit_vectors(rng, kInstrumentCount, da, max_cos));
  // 23 visual directions: 22 instruments + the background.
  auto vis = detail::sample_separated_unit_vectors(rng, kInstrumentCount + 1, dv,
                                                   max_cos);
  bank.visual_protos = Tensor::from_data(
      {static_cast<size_t>(kInstrumentCount), dv},
      std::vector<double>(vis.begin(),
                          vis.begin() + static_cast<long>(kInstrumentCount * dv)));
  bank.background_visual = Tensor::from_data(
      {dv}, std::vector<double>(vis.begin() + static_cast<long>(kInstrumentCount * dv),
                                vis.end()));
  return bank;
}

// ---------------------------------------------------------------------------
// Scene validity

inline void validate_scene(const SceneSpec& s) {
  STG_CHECK(!s.objects.empty(), "scene has no objects");
  const int T = s.duration_segments;
  bool any_sounding = false;
  std::vector<char> cell_used(static_cast<size_t>(s.grid_h * s.grid_w), 0);
  for (const auto& o : s.objects) {
    STG_CHECK(o.instrument >= 0 && o.instrument < kInstrumentCount,
              "object instrument out of range");
    if (o.visible) {
      STG_CHECK(o.row >= 0 && o.row < s.grid_h && o.col >= 0 && o.col < s.grid_w,
                "object cell out of grid");
      auto& used = cell_used[static_cast<size_t>(o.row * s.grid_w + o.col)];
      STG_CHECK(!used, "two visible objects share a cell");
      used = 1;
    } else {
      STG_CHECK(!o.sounding.empty(), "invisible object must sound");
    }
    int prev = -1;
    for (int t : o.sounding) {
      STG_CHECK(t >= 0 && t < T, "sounding segment out of range");
      STG_CHECK(t > prev, "sounding segments must be strictly increasing");
      prev = t;
    }
    if (!o.sounding.empty()) any_sounding = true;
  }
  STG_CHECK(any_sounding, "scene must have at least one sounding object");

  const SceneMode mode = mode_from_name(s.composition_mode);
  if (mode == SceneMode::kRealSolo) {
    STG_CHECK(s.objects.size() == 1 && s.objects[0].visible, "solo wants 1 visible object");
  }
  if (mode == SceneMode::kRealEsit) {
    for (const auto& o : s.objects)
      STG_CHECK(o.visible && o.instrument == s.objects[0].instrument,
                "same-instrument ensemble must be visible and homogeneous");
    STG_CHECK(s.objects.size() >= 2, "ensemble wants >= 2 objects");
  }
  if (mode == SceneMode::kAudioOverlay) {
    bool invisible = false;
    for (const auto& o : s.objects) invisible |= !o.visible;
    STG_CHECK(invisible, "overlay scene must carry an off-screen track");
  }
  if (mode == SceneMode::kVideoStitching) {
    // The two source clips occupy disjoint column ranges and only one side
    // carries the audio track.
    const int half = s.grid_w / 2;
    bool left_sounds = false, right_sounds = false;
    for (const auto& o : s.objects) {
      STG_CHECK(o.visible, "stitched scenes have no off-screen objects");
      if (o.col < half) left_sounds |= !o.sounding.empty();
      else right_sounds |= !o.sounding.empty();
    }
    STG_CHECK(left_sounds != right_sounds, "exactly one stitched half sounds");
  }
  if (mode == SceneMode::kAvRandomMatch) {
    // Audio instruments are disjoint from visible instruments.
    std::vector<char> visible_types(kInstrumentCount, 0);
    for (const auto& o : s.objects)
      if (o.visible) visible_types[static_cast<size_t>(o.instrument)] = 1;
    for (const auto& o : s.objects)
      if (!o.sounding.empty())
        STG_CHECK(!o.visible && !visible_types[static_cast<size_t>(o.instrument)],
                  "mismatched scene: sounding types must be invisible and disjoint");
  }
}

// ---------------------------------------------------------------------------
// Scene sampling

namespace detail {

inline std::vector<int> sample_interval(Rng& rng, int T, int min_len) {
  const int start = rng.next_int(0, T - min_len);
  const int len = rng.next_int(min_len, T - start);
  std::vector<int> seg;
  seg.reserve(static_cast<size_t>(len));
  for (int t = start; t < start + len; ++t) seg.push_back(t);
  return seg;
}

// Long interval for lead objects so scenes are rarely silent.
inline std::vector<int> sample_lead_interval(Rng& rng, int T) {
  const int start = rng.next_int(0, std::min(2, T - 1));
  const int end = T - rng.next_int(0, std::min(2, T - start - 1));
  std::vector<int> seg;
  for (int t = start; t < end; ++t) seg.push_back(t);
  return seg;
}

inline std::vector<std::pair<int, int>> sample_cells(Rng& rng, int grid_h,
                                                     int col_lo, int col_hi,
                                                     size_t count) {
  std::vector<int> cells;
  for (int r = 0; r < grid_h; ++r)
    for (int c = col_lo; c < col_hi; ++c) cells.push_back(r * 1000 + c);
  STG_CHECK(count <= cells.size(), "not enough grid cells for requested objects");
  rng.shuffle(cells);
  std::vector<std::pair<int, int>> out;
  for (size_t i = 0; i < count; ++i)
    out.emplace_back(cells[i] / 1000, cells[i] % 1000);
  return out;
}

inline SceneObject make_object(Rng& rng, const SceneConfig& cfg, int instrument,
                               std::pair<int, int> cell, std::vector<int> sounding) {
  SceneObject o;
  o.instrument = instrument;
  o.row = cell.first;
  o.col = cell.second;
  o.sounding = std::move(sounding);
  o.loudness = rng.uniform(cfg.loudness_lo, cfg.loudness_hi);
  o.rhythmicity = rng.uniform(cfg.rhythmicity_lo, cfg.rhythmicity_hi);
  o.visible = true;
  return o;
}

}  // namespace detail

// Builds the "real" footage families directly.
inline SceneSpec sample_real_scene(const SceneConfig& cfg, SceneMode mode, Rng& rng) {
  STG_CHECK(mode == SceneMode::kRealSolo || mode == SceneMode::kRealEsit ||
                mode == SceneMode::kRealEdit,
            "sample_real_scene wants a real mode");
  SceneSpec s;
  s.duration_segments = cfg.duration_segments;
  s.grid_h = cfg.grid_h;
  s.grid_w = cfg.grid_w;
  s.composition_mode = mode_name(mode);
  s.venue = rng.bernoulli(0.5) ? "indoor" : "outdoor";
  const int T = cfg.duration_segments;

  if (mode == SceneMode::kRealSolo) {
    const int instr = rng.next_int(0, kInstrumentCount - 1);
    auto cells = detail::sample_cells(rng, cfg.grid_h, 0, cfg.grid_w, 1);
    s.objects.push_back(
        detail::make_object(rng, cfg, instr, cells[0], detail::sample_lead_interval(rng, T)));
    return s;
  }

  const size_t count = static_cast<size_t>(
      mode == SceneMode::kRealEsit ? rng.next_int(2, 3) : rng.next_int(2, 4));
  auto cells = detail::sample_cells(rng, cfg.grid_h, 0, cfg.grid_w, count);
  std::vector<int> instruments(count);
  if (mode == SceneMode::kRealEsit) {
    const int instr = rng.next_int(0, kInstrumentCount - 1);
    for (auto& i : instruments) i = instr;
  } else {
    // Mixed ensemble: at least two distinct instrument types.
    std::vector<int> pool(kInstrumentCount);
    for (int i = 0; i < kInstrumentCount; ++i) pool[static_cast<size_t>(i)] = i;
    rng.shuffle(pool);
    for (size_t i = 0; i < count; ++i) instruments[i] = pool[i];
  }
  for (size_t i = 0; i < count; ++i) {
    std::vector<int> sounding;
    if (i == 0) {
      sounding = detail::sample_lead_interval(rng, T);
    } else if (!rng.bernoulli(cfg.extra_silent_prob)) {
      sounding = detail::sample_interval(rng, T, 2);
    }
    s.objects.push_back(detail::make_object(rng, cfg, instruments[i], cells[i],
                                            std::move(sounding)));
  }
  return s;
}

// Derives the synthetic families from a real base scene.
inline SceneSpec compose_synthetic(const SceneSpec& base, SceneMode mode,
                                   const SceneConfig& cfg, Rng& rng) {
  SceneSpec s = base;
  s.composition_mode = mode_name(mode);
  const int T = cfg.duration_segments;

  auto visible_types = [&s] {
    std::vector<char> types(kInstrumentCount, 0);
    for (const auto& o : s.objects)
      if (o.visible) types[static_cast<size_t>(o.instrument)] = 1;
    return types;
  };
  auto pick_absent_type = [&](const std::vector<char>& used) {
    std::vector<int> pool;
    for (int i = 0; i < kInstrumentCount; ++i)
      if (!used[static_cast<size_t>(i)]) pool.push_back(i);
    STG_CHECK(!pool.empty(), "no absent instrument type available");
    return pool[static_cast<size_t>(rng.next_below(pool.size()))];
  };

  switch (mode) {
    case SceneMode::kAudioOverlay: {
      // Dub one extra off-screen track over the base scene.
      SceneObject voice;
      voice.instrument = pick_absent_type(visible_types());
      voice.visible = false;
      voice.row = voice.col = -1;
      voice.sounding = detail::sample_interval(rng, T, 3);
      voice.loudness = rng.uniform(cfg.loudness_lo, cfg.loudness_hi);
      voice.rhythmicity = rng.uniform(cfg.rhythmicity_lo, cfg.rhythmicity_hi);
      s.objects.push_back(std::move(voice));
      return s;
    }
    case SceneMode::kAvRandomMatch: {
      // Keep the footage, replace the audio with disjoint instrument types.
      auto used = visible_types();
      for (auto& o : s.objects) o.sounding.clear();
      const int extra = rng.next_int(1, 2);
      for (int i = 0; i < extra; ++i) {
        SceneObject off;
        off.instrument = pick_absent_type(used);
        used[static_cast<size_t>(off.instrument)] = 1;
        off.visible = false;
        off.row = off.col = -1;
        off.sounding = i == 0 ? detail::sample_lead_interval(rng, T)
                              : detail::sample_interval(rng, T, 2);
        off.loudness = rng.uniform(cfg.loudness_lo, cfg.loudness_hi);
        off.rhythmicity = rng.uniform(cfg.rhythmicity_lo, cfg.rhythmicity_hi);
        s.objects.push_back(std::move(off));
      }
      return s;
    }
    case SceneMode::kVideoStitching: {
      // Splice the base footage (audio kept) side by side with a silent clip.
      const int half = cfg.grid_w / 2;
      STG_CHECK(half >= 1, "grid too narrow to stitch");
      const bool base_left = rng.bernoulli(0.5);
      const int lo = base_left ? 0 : half;
      const int hi = base_left ? half : cfg.grid_w;
      auto cells = detail::sample_cells(rng, cfg.grid_h, lo, hi, s.objects.size());
      for (size_t i = 0; i < s.objects.size(); ++i) {
        s.objects[i].row = cells[i].first;
        s.objects[i].col = cells[i].second;
      }
      // Partner clip: 1-2 visible, silent performers on the other side.
      auto used = visible_types();
      const int plo = base_left ? half : 0;
      const int phi = base_left ? cfg.grid_w : half;
      const auto pcount = static_cast<size_t>(rng.next_int(1, 2));
      auto pcells = detail::sample_cells(rng, cfg.grid_h, plo, phi, pcount);
      for (size_t i = 0; i < pcount; ++i) {
        SceneObject o = detail::make_object(
            rng, cfg, pick_absent_type(used), pcells[i], {});
        used[static_cast<size_t>(o.instrument)] = 1;
        s.objects.push_back(std::move(o));
      }
      return s;
    }
    default:
      throw InvariantError("compose_synthetic wants a synthetic mode");
  }
}

// Top-level sampler: one scene, fully determined by (cfg, master_seed, id).
inline SceneSpec sample_scene(const SceneConfig& cfg, std::uint64_t master_seed,
                              std::uint64_t scene_id) {
  Rng rng = stream_rng(master_seed, "scene", scene_id);
  double u = rng.next_double();
  SceneMode mode = SceneMode::kAvRandomMatch;
  double acc = 0;
  for (int i = 0; i < 6; ++i) {
    acc += cfg.mode_mix[static_cast<size_t>(i)];
    if (u < acc) {
      mode = static_cast<SceneMode>(i);
      break;
    }
  }
  SceneSpec s;
  if (mode == SceneMode::kRealSolo || mode == SceneMode::kRealEsit ||
      mode == SceneMode::kRealEdit) {
    s = sample_real_scene(cfg, mode, rng);
  } else {
    // Synthetic modes start from real footage; overlay and mismatch read
    // better over ensembles, stitching needs the base to fit half a grid.
    SceneMode base_mode;
    if (mode == SceneMode::kVideoStitching) {
      base_mode = rng.bernoulli(0.6) ? SceneMode::kRealSolo : SceneMode::kRealEsit;
    } else {
      const double v = rng.next_double();
      base_mode = v < 0.4 ? SceneMode::kRealSolo
                          : (v < 0.6 ? SceneMode::kRealEsit : SceneMode::kRealEdit);
    }
    SceneSpec base = sample_real_scene(cfg, base_mode, rng);
    if (mode == SceneMode::kVideoStitching) {
      // Cap base population to what half a grid can hold.
      const size_t cap = static_cast<size_t>(cfg.grid_h * (cfg.grid_w / 2));
      if (base.objects.size() > cap) base.objects.resize(cap);
    }
    s = compose_synthetic(base, mode, cfg, rng);
  }
  s.scene_id = scene_id;
  s.seed = stream_seed(master_seed, "scene-render", scene_id);
  validate_scene(s);
  return s;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderedScene {
  Tensor audio;   // [T, audio_dim]
  Tensor visual;  // [T, visual_dim, grid_h*grid_w]
};

inline double amplitude_at(const SceneObject& o, int t, int T) {
  const double phase = 6.283185307179586 * o.rhythmicity * t / T;
  return o.loudness * (1.0 + 0.5 * std::sin(phase));
}

inline RenderedScene render_scene(const SceneSpec& s, const ProtoBank& bank,
                                  const SceneConfig& cfg) {
  const auto T = static_cast<size_t>(s.duration_segments);
  const auto da = static_cast<size_t>(cfg.audio_dim);
  const auto dv = static_cast<size_t>(cfg.visual_dim);
  const auto hw = static_cast<size_t>(s.grid_h * s.grid_w);
  std::vector<double> audio(T * da, 0.0);
  std::vector<double> visual(T * dv * hw, 0.0);
  Rng rng(stream_seed(s.seed, "render"));

  for (size_t t = 0; t < T; ++t) {
    double* at = audio.data() + t * da;
    for (const auto& o : s.objects) {
      if (!o.sounds_at(static_cast<int>(t))) continue;
      const double amp = amplitude_at(o, static_cast<int>(t), s.duration_segments);
      const double* proto =
          bank.audio_protos.data().data() + static_cast<size_t>(o.instrument) * da;
      for (size_t i = 0; i < da; ++i) at[i] += amp * proto[i];
    }
    for (size_t i = 0; i < da; ++i) at[i] += rng.normal(0.0, cfg.noise_sigma);

    // Visual map: one column per cell, prototype where a performer stands,
    // background elsewhere. Column-major walk keeps noise draws ordered.
    double* vt = visual.data() + t * dv * hw;
    std::vector<const double*> cell_proto(hw, bank.background_visual.data().data());
    for (const auto& o : s.objects) {
      if (!o.visible) continue;
      cell_proto[static_cast<size_t>(o.row * s.grid_w + o.col)] =
          bank.visual_protos.data().data() + static_cast<size_t>(o.instrument) * dv;
    }
    for (size_t cell = 0; cell < hw; ++cell) {
      const double* proto = cell_proto[cell];
      for (size_t i = 0; i < dv; ++i)
        vt[i * hw + cell] = proto[i] + rng.normal(0.0, cfg.noise_sigma);
    }
  }
  RenderedScene out;
  out.audio = Tensor::from_data({T, da}, std::move(audio));
  out.visual = Tensor::from_data({T, dv, hw}, std::move(visual));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (JSONL). Key order is fixed so reruns are byte-identical.

inline ordered_json scene_to_json(const SceneSpec& s) {
  ordered_json j;
  j["scene_id"] = s.scene_id;
  j["duration_segments"] = s.duration_segments;
  j["grid"] = {s.grid_h, s.grid_w};
  ordered_json objs = ordered_json::array();
  for (const auto& o : s.objects) {
    ordered_json jo;
    jo["instrument"] = instrument_names()[static_cast<size_t>(o.instrument)];
    jo["cell"] = {o.row, o.col};
    jo["sounding"] = o.sounding;
    jo["loudness"] = o.loudness;
    jo["rhythmicity"] = o.rhythmicity;
    jo["visible"] = o.visible;
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  j["composition_mode"] = s.composition_mode;
  j["venue"] = s.venue;
  j["seed"] = s.seed;
  return j;
}

inline SceneSpec scene_from_json(const ordered_json& j) {
  SceneSpec s;
  s.scene_id = j.at("scene_id").get<std::uint64_t>();
  s.duration_segments = j.at("duration_segments").get<int>();
  s.grid_h = j.at("grid").at(0).get<int>();
  s.grid_w = j.at("grid").at(1).get<int>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.instrument = instrument_id(jo.at("instrument").get<std::string>());
    o.row = jo.at("cell").at(0).get<int>();
    o.col = jo.at("cell").at(1).get<int>();
    o.sounding = jo.at("sounding").get<std::vector<int>>();
    o.loudness = jo.at("loudness").get<double>();
    o.rhythmicity = jo.at("rhythmicity").get<double>();
    o.visible = jo.at("visible").get<bool>();
    s.objects.push_back(std::move(o));
  }
  s.composition_mode = j.at("composition_mode").get<std::string>();
  s.venue = j.at("venue").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

// Coarse grid position -> answer word. Columns split into thirds for
// left/middle/right; the middle band splits by row into top/middle.
inline std::string position_word(int row, int col, int grid_h, int grid_w) {
  const int cband = 3 * col / grid_w;
  if (cband == 0) return "left";
  if (cband == 2) return "right";
  const int rband = 3 * row / grid_h;
  return rband == 0 ? "top" : "middle";
}

}  // namespace stg
