// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "stg/scene.hpp"
#include "stg/thread_pool.hpp"

using namespace stg;

namespace {

double dot(const double* a, const double* b, size_t d) {
  double s = 0;
  for (size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

double norm(const double* a, size_t d) { return std::sqrt(dot(a, a, d)); }

double cosine(const double* a, const double* b, size_t d) {
  return dot(a, b, d) / (norm(a, d) * norm(b, d));
}

}  // namespace

TEST_CASE("instrument taxonomy is fixed and invertible") {
  const auto& names = instrument_names();
  REQUIRE(names.size() == 22);
  std::set<std::string> uniq(names.begin(), names.end());
  REQUIRE(uniq.size() == 22);
  for (int i = 0; i < kInstrumentCount; ++i)
    REQUIRE(instrument_id(names[static_cast<size_t>(i)]) == i);
  REQUIRE_THROWS_AS(instrument_id("theremin"), InvariantError);
}

TEST_CASE("prototype bank: unit norms, pairwise separation, determinism") {
  SceneConfig cfg;
  const auto bank = make_proto_bank(cfg, 7);
  const auto da = static_cast<size_t>(cfg.audio_dim);
  const auto dv = static_cast<size_t>(cfg.visual_dim);
  const double max_cos = std::cos(cfg.min_proto_angle_deg * M_PI / 180.0);

  const double* ap = bank.audio_protos.data().data();
  for (int i = 0; i < 22; ++i) {
    REQUIRE(std::fabs(norm(ap + static_cast<size_t>(i) * da, da) - 1.0) < 1e-9);
    for (int j = 0; j < i; ++j)
      REQUIRE(std::fabs(dot(ap + static_cast<size_t>(i) * da,
                            ap + static_cast<size_t>(j) * da, da)) <=
              max_cos + 1e-12);
  }

  // The background vector participates in the visual separation constraint.
  std::vector<const double*> vis;
  const double* vp = bank.visual_protos.data().data();
  for (int i = 0; i < 22; ++i) vis.push_back(vp + static_cast<size_t>(i) * dv);
  vis.push_back(bank.background_visual.data().data());
  for (size_t i = 0; i < vis.size(); ++i) {
    REQUIRE(std::fabs(norm(vis[i], dv) - 1.0) < 1e-9);
    for (size_t j = 0; j < i; ++j)
      REQUIRE(std::fabs(dot(vis[i], vis[j], dv)) <= max_cos + 1e-12);
  }

  const auto bank2 = make_proto_bank(cfg, 7);
  REQUIRE(bank.audio_protos.data() == bank2.audio_protos.data());
  REQUIRE(bank.visual_protos.data() == bank2.visual_protos.data());
  REQUIRE(bank.background_visual.data() == bank2.background_visual.data());
  const auto bank3 = make_proto_bank(cfg, 8);
  REQUIRE(bank.audio_protos.data() != bank3.audio_protos.data());
}

TEST_CASE("sampled scenes validate and are reproducible") {
  SceneConfig cfg;
  for (std::uint64_t id = 0; id < 3000; ++id) {
    const auto s = sample_scene(cfg, 11, id);
    REQUIRE_NOTHROW(validate_scene(s));
    REQUIRE(s.scene_id == id);
    REQUIRE(!s.objects.empty());
  }
  const auto a = sample_scene(cfg, 11, 123);
  const auto b = sample_scene(cfg, 11, 123);
  REQUIRE(scene_to_json(a).dump() == scene_to_json(b).dump());
  const auto c = sample_scene(cfg, 12, 123);
  REQUIRE(scene_to_json(a).dump() != scene_to_json(c).dump());
}

TEST_CASE("composition mode frequencies match the configured mix") {
  SceneConfig cfg;
  const int n = 10000;
  std::map<std::string, int> freq;
  for (std::uint64_t id = 0; id < n; ++id)
    freq[sample_scene(cfg, 5, id).composition_mode]++;
  const char* names[6] = {"real_solo",     "real_esit",       "real_edit",
                          "audio_overlay", "video_stitching", "av_random_match"};
  for (int m = 0; m < 6; ++m) {
    const double got = freq[names[m]] / static_cast<double>(n);
    INFO(names[m] << ": got " << got << " want " << cfg.mode_mix[static_cast<size_t>(m)]);
    REQUIRE(std::fabs(got - cfg.mode_mix[static_cast<size_t>(m)]) < 0.02);
  }
}

TEST_CASE("mode structure: mismatch modes produce off-screen or silent evidence") {
  SceneConfig cfg;
  int overlay_seen = 0, avrm_seen = 0, stitch_seen = 0;
  for (std::uint64_t id = 0; id < 2000; ++id) {
    const auto s = sample_scene(cfg, 17, id);
    const bool has_invisible_sounding = [&] {
      for (const auto& o : s.objects)
        if (!o.visible && !o.sounding.empty()) return true;
      return false;
    }();
    if (s.composition_mode == "audio_overlay") {
      ++overlay_seen;
      REQUIRE(has_invisible_sounding);
    } else if (s.composition_mode == "av_random_match") {
      ++avrm_seen;
      REQUIRE(has_invisible_sounding);
      for (const auto& o : s.objects)
        if (o.visible) REQUIRE(o.sounding.empty());
    } else if (s.composition_mode == "video_stitching") {
      ++stitch_seen;
      // Exactly one horizontal half carries all the sound.
      bool left = false, right = false;
      for (const auto& o : s.objects) {
        if (o.sounding.empty()) continue;
        (o.col < s.grid_w / 2 ? left : right) = true;
      }
      REQUIRE(left != right);
    } else if (s.composition_mode == "real_solo") {
      REQUIRE(s.objects.size() == 1);
      REQUIRE(s.objects[0].visible);
      REQUIRE(!s.objects[0].sounding.empty());
    } else if (s.composition_mode == "real_esit") {
      std::set<int> types;
      for (const auto& o : s.objects) types.insert(o.instrument);
      REQUIRE(types.size() == 1);
      REQUIRE(s.objects.size() >= 2);
    } else if (s.composition_mode == "real_edit") {
      std::set<int> types;
      for (const auto& o : s.objects) types.insert(o.instrument);
      REQUIRE(types.size() == s.objects.size());
      REQUIRE(types.size() >= 2);
    }
  }
  REQUIRE(overlay_seen > 50);
  REQUIRE(avrm_seen > 50);
  REQUIRE(stitch_seen > 50);
}

TEST_CASE("amplitude model: loudness scaled by a rhythmic modulation") {
  SceneObject o;
  o.loudness = 0.8;
  o.rhythmicity = 2.0;
  o.sounding = {0, 1, 2, 3, 4};
  REQUIRE(amplitude_at(o, 0, 10) == Catch::Approx(0.8));         // sin(0) = 0
  const double want = 0.8 * (1.0 + 0.5 * std::sin(2.0 * M_PI * 2.0 * 3.0 / 10.0));
  REQUIRE(amplitude_at(o, 3, 10) == Catch::Approx(want));
  REQUIRE(amplitude_at(o, 3, 10) > 0.0);
}

// Fidelity bounds frozen from a direct Monte Carlo of the generative model
// (amp = L*(1+0.5*sin), unit prototype plus isotropic noise):
//   audio segment vs prototype cosine, sigma=0.05: mean 0.947
//   audio segment vs prototype cosine, sigma=0.10: mean 0.842
//   visual cell vs prototype cosine,  sigma=0.05: mean 0.929
//   sounding/silent audio norm ratio,  sigma=0.05: 3.98
TEST_CASE("render fidelity: segments stay close to their prototypes") {
  SceneConfig cfg;  // sigma = 0.05
  const auto bank = make_proto_bank(cfg, 3);
  const auto da = static_cast<size_t>(cfg.audio_dim);
  const auto dv = static_cast<size_t>(cfg.visual_dim);
  const auto hw = static_cast<size_t>(cfg.grid_h * cfg.grid_w);

  double cos_sum = 0, snd_norm_sum = 0, sil_norm_sum = 0;
  double vis_cos_sum = 0, bg_cos_sum = 0;
  int cos_n = 0, snd_n = 0, sil_n = 0, vis_n = 0, bg_n = 0;

  for (std::uint64_t id = 0; id < 400; ++id) {
    auto s = sample_scene(cfg, 21, id);
    if (s.composition_mode != "real_solo") continue;
    const auto r = render_scene(s, bank, cfg);
    const auto& obj = s.objects[0];
    const double* proto =
        bank.audio_protos.data().data() + static_cast<size_t>(obj.instrument) * da;
    for (int t = 0; t < s.duration_segments; ++t) {
      const double* at = r.audio.data().data() + static_cast<size_t>(t) * da;
      if (obj.sounds_at(t)) {
        cos_sum += cosine(at, proto, da);
        ++cos_n;
        snd_norm_sum += norm(at, da);
        ++snd_n;
      } else {
        sil_norm_sum += norm(at, da);
        ++sil_n;
      }
      const double* vt = r.visual.data().data() + static_cast<size_t>(t) * dv * hw;
      const size_t cell = static_cast<size_t>(obj.row * s.grid_w + obj.col);
      std::vector<double> cell_vec(dv), other_vec(dv);
      const size_t other = cell == 0 ? 1 : 0;
      for (size_t i = 0; i < dv; ++i) {
        cell_vec[i] = vt[i * hw + cell];
        other_vec[i] = vt[i * hw + other];
      }
      const double* vproto = bank.visual_protos.data().data() +
                             static_cast<size_t>(obj.instrument) * dv;
      vis_cos_sum += cosine(cell_vec.data(), vproto, dv);
      ++vis_n;
      bg_cos_sum += cosine(other_vec.data(), bank.background_visual.data().data(), dv);
      ++bg_n;
    }
  }
  REQUIRE(cos_n > 500);
  REQUIRE(sil_n > 50);
  const double mean_cos = cos_sum / cos_n;
  INFO("mean sounding-segment audio cosine: " << mean_cos);
  REQUIRE(mean_cos > 0.90);

  const double ratio = (snd_norm_sum / snd_n) / (sil_norm_sum / sil_n);
  INFO("sounding/silent norm ratio: " << ratio);
  REQUIRE(ratio >= 3.0);

  REQUIRE(vis_cos_sum / vis_n > 0.90);
  REQUIRE(bg_cos_sum / bg_n > 0.90);
}

TEST_CASE("render fidelity degrades gracefully at doubled noise") {
  SceneConfig cfg;
  cfg.noise_sigma = 0.10;
  const auto bank = make_proto_bank(cfg, 3);
  const auto da = static_cast<size_t>(cfg.audio_dim);
  double cos_sum = 0;
  int cos_n = 0;
  for (std::uint64_t id = 0; id < 400; ++id) {
    auto s = sample_scene(cfg, 23, id);
    if (s.composition_mode != "real_solo") continue;
    const auto r = render_scene(s, bank, cfg);
    const auto& obj = s.objects[0];
    const double* proto =
        bank.audio_protos.data().data() + static_cast<size_t>(obj.instrument) * da;
    for (int t = 0; t < s.duration_segments; ++t)
      if (obj.sounds_at(t)) {
        cos_sum += cosine(r.audio.data().data() + static_cast<size_t>(t) * da,
                          proto, da);
        ++cos_n;
      }
  }
  const double mean_cos = cos_sum / cos_n;
  INFO("mean cosine at sigma=0.1: " << mean_cos);
  REQUIRE(mean_cos > 0.80);
  REQUIRE(mean_cos < 0.90);  // the default sigma=0.05 exists for a reason
}

TEST_CASE("rendering is bit-deterministic") {
  SceneConfig cfg;
  const auto bank = make_proto_bank(cfg, 3);
  const auto s = sample_scene(cfg, 29, 42);
  const auto r1 = render_scene(s, bank, cfg);
  const auto r2 = render_scene(s, bank, cfg);
  REQUIRE(r1.audio.data() == r2.audio.data());
  REQUIRE(r1.visual.data() == r2.visual.data());
}

TEST_CASE("scene json round trip is lossless and byte-stable") {
  SceneConfig cfg;
  for (std::uint64_t id = 0; id < 500; ++id) {
    const auto s = sample_scene(cfg, 31, id);
    const auto j = scene_to_json(s);
    const auto s2 = scene_from_json(ordered_json::parse(j.dump()));
    REQUIRE(scene_to_json(s2).dump() == j.dump());
    REQUIRE(s2.scene_id == s.scene_id);
    REQUIRE(s2.composition_mode == s.composition_mode);
    REQUIRE(s2.venue == s.venue);
    REQUIRE(s2.seed == s.seed);
    REQUIRE(s2.objects.size() == s.objects.size());
    for (size_t i = 0; i < s.objects.size(); ++i) {
      REQUIRE(s2.objects[i].instrument == s.objects[i].instrument);
      REQUIRE(s2.objects[i].row == s.objects[i].row);
      REQUIRE(s2.objects[i].col == s.objects[i].col);
      REQUIRE(s2.objects[i].sounding == s.objects[i].sounding);
      REQUIRE(s2.objects[i].loudness == s.objects[i].loudness);
      REQUIRE(s2.objects[i].rhythmicity == s.objects[i].rhythmicity);
      REQUIRE(s2.objects[i].visible == s.objects[i].visible);
    }
  }
}

TEST_CASE("validate_scene rejects malformed scenes") {
  SceneConfig cfg;
  const auto good = sample_scene(cfg, 37, 0);
  REQUIRE_NOTHROW(validate_scene(good));

  SECTION("two visible objects on the same cell") {
    auto s = good;
    size_t vi = 0;
    while (vi < s.objects.size() && !s.objects[vi].visible) ++vi;
    REQUIRE(vi < s.objects.size());
    s.objects.push_back(s.objects[vi]);
    REQUIRE_THROWS_AS(validate_scene(s), InvariantError);
  }
  SECTION("invisible object that never sounds") {
    auto s = good;
    SceneObject o;
    o.instrument = 0;
    o.visible = false;
    o.row = o.col = -1;
    o.sounding = {};
    s.objects.push_back(o);
    REQUIRE_THROWS_AS(validate_scene(s), InvariantError);
  }
  SECTION("sounding segment out of range") {
    auto s = good;
    s.objects[0].sounding = {0, s.duration_segments};
    REQUIRE_THROWS_AS(validate_scene(s), InvariantError);
  }
  SECTION("unsorted sounding segments") {
    auto s = good;
    s.objects[0].sounding = {3, 1};
    REQUIRE_THROWS_AS(validate_scene(s), InvariantError);
  }
  SECTION("nothing sounds") {
    auto s = good;
    for (auto& o : s.objects) {
      o.sounding.clear();
      o.visible = true;  // keep the invisible-must-sound rule out of the way
      o.row = 0;
    }
    for (size_t i = 0; i < s.objects.size(); ++i)
      s.objects[i].col = static_cast<int>(i);
    REQUIRE_THROWS_AS(validate_scene(s), InvariantError);
  }
}

TEST_CASE("position words partition the grid") {
  // 4x4: columns 0-1 left, column 3 right, column 2 split by row.
  REQUIRE(position_word(0, 0, 4, 4) == "left");
  REQUIRE(position_word(3, 1, 4, 4) == "left");
  REQUIRE(position_word(0, 3, 4, 4) == "right");
  REQUIRE(position_word(0, 2, 4, 4) == "top");
  REQUIRE(position_word(1, 2, 4, 4) == "top");
  REQUIRE(position_word(2, 2, 4, 4) == "middle");
  REQUIRE(position_word(3, 2, 4, 4) == "middle");
  // 7x7: columns 0-2 left, 3-4 center band, 5-6 right.
  REQUIRE(position_word(0, 2, 7, 7) == "left");
  REQUIRE(position_word(6, 5, 7, 7) == "right");
  REQUIRE(position_word(1, 3, 7, 7) == "top");
  REQUIRE(position_word(3, 4, 7, 7) == "middle");
  REQUIRE(position_word(6, 3, 7, 7) == "middle");
}
