// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <map>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "stg/dataset.hpp"
#include "stg/question.hpp"

using namespace stg;

namespace {

SceneObject make_obj(const std::string& instr, int row, int col,
                     std::vector<int> sounding, double loud, double rhythm,
                     bool visible = true) {
  SceneObject o;
  o.instrument = instrument_id(instr);
  o.row = row;
  o.col = col;
  o.sounding = std::move(sounding);
  o.loudness = loud;
  o.rhythmicity = rhythm;
  o.visible = visible;
  if (!visible) o.row = o.col = -1;
  return o;
}

// Duet: violin plays the whole clip from the top-left, a drum joins
// mid-clip from the right side.
SceneSpec duet_scene() {
  SceneSpec s;
  s.scene_id = 900001;
  s.composition_mode = "real_edit";
  s.venue = "outdoor";
  s.objects.push_back(
      make_obj("violin", 0, 0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 1.2, 1.0));
  s.objects.push_back(make_obj("drum", 1, 3, {5, 6, 7}, 0.8, 2.0));
  return s;
}

// Same-type pair: a rhythmic quiet guitar left, a flat loud guitar right.
SceneSpec guitar_pair_scene() {
  SceneSpec s;
  s.scene_id = 900002;
  s.composition_mode = "real_esit";
  s.venue = "indoor";
  s.objects.push_back(make_obj("guitar", 0, 0, {0, 1, 2, 3}, 0.7, 2.5));
  s.objects.push_back(make_obj("guitar", 0, 3, {2, 3, 4, 5}, 1.3, 1.0));
  return s;
}

SceneSpec solo_scene() {
  SceneSpec s;
  s.scene_id = 900003;
  s.composition_mode = "real_solo";
  s.venue = "indoor";
  s.objects.push_back(make_obj("cello", 2, 2, {1, 2, 3}, 1.0, 1.5));
  return s;
}

// Duet plus an off-screen trumpet (a voiceover-style overlay).
SceneSpec overlay_scene() {
  SceneSpec s = duet_scene();
  s.scene_id = 900004;
  s.composition_mode = "audio_overlay";
  s.objects.push_back(make_obj("trumpet", -1, -1, {0, 1, 2}, 1.0, 1.0, false));
  return s;
}

std::string ask(int template_id, const SceneSpec& s, const SlotMap& slots) {
  const auto& def = question_templates()[static_cast<size_t>(template_id)];
  auto ans = def.answer(s, slots);
  return ans ? *ans : "<reject>";
}

}  // namespace

TEST_CASE("answer vocabulary: 42 entries partitioned 22/12/6/2") {
  AnswerVocab av;
  REQUIRE(av.size() == 42);
  for (int i = 0; i < 22; ++i)
    REQUIRE(av.word(i) == instrument_names()[static_cast<size_t>(i)]);
  REQUIRE(av.word(22) == "zero");
  REQUIRE(av.word(33) == "eleven");
  REQUIRE(av.word(34) == "left");
  REQUIRE(av.word(39) == "outdoor");
  REQUIRE(av.word(40) == "yes");
  REQUIRE(av.word(41) == "no");
  for (int i = 0; i < 42; ++i) REQUIRE(av.id(av.word(i)) == i);
  REQUIRE_THROWS_AS(av.id("maybe"), InvariantError);
}

TEST_CASE("tokenizer: lowercase, question mark split, detokenize round trip") {
  const auto toks = tokenize("Is there a Violin in the entire video?");
  REQUIRE(toks == std::vector<std::string>{"is", "there", "a", "violin", "in",
                                           "the", "entire", "video", "?"});
  REQUIRE(detokenize(toks) == "Is there a violin in the entire video?");
  REQUIRE(tokenize(detokenize(toks)) == toks);
  REQUIRE(tokenize("").empty());
  REQUIRE(detokenize({"?"}) == "?");
}

TEST_CASE("word vocabulary: reserved ids and closure over generated questions") {
  WordVocab wv;
  REQUIRE(wv.word(WordVocab::kPad) == "<pad>");
  REQUIRE(wv.word(WordVocab::kUnk) == "<unk>");
  REQUIRE(wv.id("qqqq-not-a-word") == WordVocab::kUnk);
  // Sorted after the reserved entries.
  for (size_t i = 3; i < wv.size(); ++i) REQUIRE(wv.word(static_cast<int>(i - 1)) <
                                                 wv.word(static_cast<int>(i)));
  // Closure: every token of every question generated from a real corpus
  // resolves to a non-UNK id.
  SceneConfig cfg;
  for (std::uint64_t id = 0; id < 300; ++id) {
    const auto s = sample_scene(cfg, 7, id);
    for (const auto& q : make_scene_questions(s, 7))
      for (const auto& tok : tokenize(q.question)) {
        INFO("token: " << tok);
        REQUIRE(wv.id(tok) != WordVocab::kUnk);
      }
  }
}

TEST_CASE("template table: 33 templates over 9 families, distinct surfaces") {
  const auto& defs = question_templates();
  REQUIRE(defs.size() == 33);
  std::set<std::string> patterns;
  std::map<std::string, int> families;
  for (const auto& d : defs) {
    patterns.insert(d.pattern);
    families[d.modality + "/" + d.qtype]++;
  }
  REQUIRE(patterns.size() == 33);
  REQUIRE(families.size() == 9);
  REQUIRE(families["audio_visual/existential"] == 3);
  REQUIRE(families["audio_visual/counting"] == 4);
  REQUIRE(families["audio_visual/location"] == 4);
  REQUIRE(families["audio_visual/comparative"] == 4);
  REQUIRE(families["audio_visual/temporal"] == 4);
  REQUIRE(families["visual/counting"] == 4);
  REQUIRE(families["visual/location"] == 4);
  REQUIRE(families["audio/counting"] == 3);
  REQUIRE(families["audio/comparative"] == 3);
}

TEST_CASE("oracle answers on a hand-built duet") {
  const auto s = duet_scene();
  CHECK(ask(0, s, {}) == "yes");
  CHECK(ask(1, s, {{"obj", "violin"}}) == "yes");
  CHECK(ask(1, s, {{"obj", "drum"}}) == "no");
  CHECK(ask(2, s, {}) == "no");
  CHECK(ask(3, s, {}) == "two");
  CHECK(ask(4, s, {}) == "two");
  CHECK(ask(5, s, {}) == "zero");
  CHECK(ask(6, s, {{"obj", "violin"}}) == "one");
  CHECK(ask(7, s, {{"ll", "loudest"}}) == "left");   // violin, 1.2 vs 0.8
  CHECK(ask(7, s, {{"ll", "longest"}}) == "left");   // violin, 10 vs 3 segments
  CHECK(ask(8, s, {{"fl", "first"}, {"lr", "left"}}) == "yes");
  CHECK(ask(8, s, {{"fl", "last"}, {"lr", "right"}}) == "yes");
  CHECK(ask(8, s, {{"fl", "last"}, {"lr", "left"}}) == "no");
  CHECK(ask(9, s, {{"obj", "violin"}}) == "drum");
  CHECK(ask(9, s, {{"obj", "drum"}}) == "violin");
  CHECK(ask(10, s, {{"lr", "right"}, {"fl", "first"}}) == "drum");
  CHECK(ask(10, s, {{"lr", "left"}, {"fl", "first"}}) == "<reject>");
  CHECK(ask(11, s, {}) == "no");   // rhythm 1.0 vs 2.0
  CHECK(ask(12, s, {}) == "yes");  // loudness 1.2 vs 0.8
  CHECK(ask(15, s, {{"fl", "first"}}) == "left");
  CHECK(ask(15, s, {{"fl", "last"}}) == "right");
  CHECK(ask(17, s, {{"ba", "after"}, {"obj", "violin"}}) == "drum");
  CHECK(ask(17, s, {{"ba", "before"}, {"obj", "violin"}}) == "<reject>");
  CHECK(ask(17, s, {{"ba", "before"}, {"obj", "drum"}}) == "violin");
  CHECK(ask(18, s, {{"fl", "first"}}) == "violin");
  CHECK(ask(18, s, {{"fl", "last"}}) == "drum");
  CHECK(ask(19, s, {{"obj", "violin"}}) == "yes");
  CHECK(ask(19, s, {{"obj", "flute"}}) == "no");
  CHECK(ask(20, s, {{"obj", "violin"}, {"obj2", "drum"}}) == "yes");
  CHECK(ask(20, s, {{"obj", "violin"}, {"obj2", "flute"}}) == "no");
  CHECK(ask(21, s, {}) == "two");
  CHECK(ask(22, s, {{"obj", "violin"}}) == "one");
  CHECK(ask(22, s, {{"obj", "flute"}}) == "zero");
  CHECK(ask(23, s, {}) == "outdoor");
  CHECK(ask(24, s, {{"lr", "right"}, {"obj", "violin"}}) == "drum");
  CHECK(ask(24, s, {{"lr", "left"}, {"obj", "drum"}}) == "violin");
  CHECK(ask(26, s, {{"lrer", "lefter"}}) == "violin");
  CHECK(ask(26, s, {{"lrer", "righter"}}) == "drum");
  CHECK(ask(27, s, {{"obj", "violin"}}) == "yes");
  CHECK(ask(27, s, {{"obj", "flute"}}) == "no");
  CHECK(ask(28, s, {}) == "two");
  CHECK(ask(29, s, {}) == "two");
  CHECK(ask(30, s, {{"obj", "violin"}, {"obj2", "drum"}}) == "no");
  CHECK(ask(30, s, {{"obj", "drum"}, {"obj2", "violin"}}) == "yes");
  CHECK(ask(31, s, {{"obj", "violin"}, {"obj2", "drum"}}) == "yes");
  CHECK(ask(32, s, {{"obj", "violin"}, {"obj2", "drum"}}) == "yes");
}

TEST_CASE("oracle answers on a same-type pair") {
  const auto s = guitar_pair_scene();
  // Left guitar: quiet (0.7) but rhythmic (2.5), starts first (onset 0).
  CHECK(ask(13, s, {{"obj", "guitar"}, {"obj2", "guitar"}, {"lr", "left"}, {"rl", "right"}}) == "yes");
  CHECK(ask(13, s, {{"obj", "guitar"}, {"obj2", "guitar"}, {"lr", "right"}, {"rl", "left"}}) == "no");
  CHECK(ask(14, s, {{"obj", "guitar"}, {"obj2", "guitar"}, {"lr", "left"}, {"rl", "right"}}) == "no");
  CHECK(ask(14, s, {{"obj", "guitar"}, {"obj2", "guitar"}, {"lr", "right"}, {"rl", "left"}}) == "yes");
  CHECK(ask(16, s, {{"obj", "guitar"}, {"fl", "first"}}) == "left");
  CHECK(ask(16, s, {{"obj", "guitar"}, {"fl", "last"}}) == "right");
  // Degenerate slots are rejected, not mis-answered.
  CHECK(ask(13, s, {{"obj", "guitar"}, {"obj2", "guitar"}, {"lr", "left"}, {"rl", "left"}}) == "<reject>");
}

TEST_CASE("oracle answers on a solo scene") {
  const auto s = solo_scene();
  CHECK(ask(0, s, {}) == "yes");
  CHECK(ask(1, s, {{"obj", "cello"}}) == "no");  // plays 3 of 10 segments
  CHECK(ask(3, s, {}) == "one");
  CHECK(ask(5, s, {}) == "zero");
  CHECK(ask(21, s, {}) == "one");
  CHECK(ask(23, s, {}) == "indoor");
  CHECK(ask(25, s, {}) == "cello");
  CHECK(ask(28, s, {}) == "one");
  // Position of the only performer: column 2 of 4, row 2 -> middle.
  CHECK(position_word(2, 2, 4, 4) == "middle");
}

TEST_CASE("oracle answers see through an off-screen overlay") {
  const auto s = overlay_scene();
  CHECK(ask(0, s, {}) == "no");           // the trumpet sound has no performer
  CHECK(ask(2, s, {}) == "yes");          // voiceover present
  CHECK(ask(3, s, {}) == "two");          // on-screen sounding count
  CHECK(ask(28, s, {}) == "three");       // heard count includes the trumpet
  CHECK(ask(29, s, {}) == "three");
  CHECK(ask(18, s, {{"fl", "first"}}) == "<reject>");  // onset tie: violin=trumpet=0
  CHECK(ask(19, s, {{"obj", "trumpet"}}) == "no");     // not visible
  CHECK(ask(27, s, {{"obj", "trumpet"}}) == "yes");    // but audible
}

TEST_CASE("slot parsing recovers fillers and rejects mismatches") {
  const auto& defs = question_templates();
  const auto& t19 = defs[19];
  const auto slots = parse_slots(t19.pattern, tokenize("Is there a erhu in the entire video?"));
  REQUIRE(slots.has_value());
  REQUIRE(slots->at("obj") == "erhu");
  REQUIRE(!parse_slots(t19.pattern, tokenize("Is there a erhu in the video?")).has_value());
  REQUIRE(!parse_slots(t19.pattern, tokenize("Was there a erhu in the entire video?")).has_value());
}

TEST_CASE("generated questions re-evaluate to their stored answers") {
  SceneConfig cfg;
  AnswerVocab av;
  std::set<int> seen_templates;
  size_t n_items = 0;
  for (std::uint64_t id = 0; id < 1500; ++id) {
    const auto s = sample_scene(cfg, 7, id);
    const auto items = make_scene_questions(s, 7);
    REQUIRE(items.size() <= 5);
    std::set<int> per_scene;
    for (const auto& q : items) {
      ++n_items;
      seen_templates.insert(q.template_id);
      REQUIRE(per_scene.insert(q.template_id).second);  // dedup within scene
      REQUIRE_NOTHROW(av.id(q.answer));
      const auto re = reevaluate_answer(s, q);
      REQUIRE(re.has_value());
      REQUIRE(*re == q.answer);
      // Canonical surface form round-trips through the tokenizer.
      REQUIRE(detokenize(tokenize(q.question)) == q.question);
      REQUIRE(q.question.back() == '?');
    }
  }
  REQUIRE(seen_templates.size() == 33);  // full template coverage
  REQUIRE(n_items > 1500 * 4);           // near the 5-per-scene cap
}

TEST_CASE("question generation is deterministic and seed-sensitive") {
  SceneConfig cfg;
  const auto s = sample_scene(cfg, 7, 99);
  const auto a = make_scene_questions(s, 7);
  const auto b = make_scene_questions(s, 7);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].question == b[i].question);
    REQUIRE(a[i].answer == b[i].answer);
    REQUIRE(a[i].template_id == b[i].template_id);
  }
  const auto c = make_scene_questions(s, 8);
  bool differs = c.size() != a.size();
  for (size_t i = 0; !differs && i < a.size(); ++i)
    differs = a[i].question != c[i].question;
  REQUIRE(differs);
}

TEST_CASE("corpus statistics: balance and modality spread") {
  SceneConfig cfg;
  auto ds = generate_dataset(cfg, 7, 1500, 5);
  size_t yes = 0, yesno = 0;
  std::map<std::string, size_t> modality;
  for (const auto& q : ds.items) {
    modality[q.modality]++;
    if (q.answer == "yes" || q.answer == "no") {
      ++yesno;
      yes += (q.answer == "yes");
    }
  }
  const double frac_yes = static_cast<double>(yes) / static_cast<double>(yesno);
  INFO("yes fraction " << frac_yes);
  REQUIRE(frac_yes > 0.3);
  REQUIRE(frac_yes < 0.7);
  // Audio-visual questions are the plurality.
  REQUIRE(modality["audio_visual"] > modality["visual"]);
  REQUIRE(modality["audio_visual"] > modality["audio"]);
}

TEST_CASE("dataset: deterministic hash, split fractions, jsonl round trip") {
  SceneConfig cfg;
  auto ds1 = generate_dataset(cfg, 7, 400, 5);
  auto ds2 = generate_dataset(cfg, 7, 400, 5);
  REQUIRE(ds1.hash_hex == ds2.hash_hex);
  auto ds3 = generate_dataset(cfg, 8, 400, 5);
  REQUIRE(ds1.hash_hex != ds3.hash_hex);

  // qa ids are dense and scene-ordered.
  for (size_t i = 0; i < ds1.items.size(); ++i)
    REQUIRE(ds1.items[i].qa_id == i);

  // Items inherit their scene's split; fractions near 70/10/20.
  std::map<std::string, int> sc;
  for (const auto& s : ds1.scenes) sc[split_for_scene(7, s.scene_id)]++;
  for (const auto& q : ds1.items)
    REQUIRE(q.split == split_for_scene(7, q.scene_id));
  REQUIRE(std::fabs(sc["train"] / 400.0 - 0.7) < 0.05);
  REQUIRE(std::fabs(sc["val"] / 400.0 - 0.1) < 0.05);
  REQUIRE(std::fabs(sc["test"] / 400.0 - 0.2) < 0.05);
}

TEST_CASE("dataset directory: write, reload, verify") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "stg_ds_test";
  fs::remove_all(dir);

  SceneConfig cfg;
  auto ds = generate_dataset(cfg, 7, 60, 5);
  render_features(ds);
  nlohmann::ordered_json prov;
  prov["command_line"] = "unit-test";
  write_dataset(ds, dir, prov);

  auto re = load_dataset(dir, true);
  REQUIRE(re.hash_hex == ds.hash_hex);
  REQUIRE(re.seed == ds.seed);
  REQUIRE(re.scenes.size() == ds.scenes.size());
  REQUIRE(re.items.size() == ds.items.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    REQUIRE(re.items[i].question == ds.items[i].question);
    REQUIRE(re.items[i].answer == ds.items[i].answer);
    REQUIRE(re.items[i].split == ds.items[i].split);
  }
  // float32 rounding at render time makes reloads bit-identical.
  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    REQUIRE(re.features[i].audio.data() == ds.features[i].audio.data());
    REQUIRE(re.features[i].visual.data() == ds.features[i].visual.data());
  }
  REQUIRE(re.scene_config.noise_sigma == cfg.noise_sigma);

  // stats.json exists and carries the headline counts.
  const auto stats = nlohmann::ordered_json::parse(
      detail_dataset::read_text_file(dir / "stats.json"));
  REQUIRE(stats.at("n_scenes").get<size_t>() == 60);
  REQUIRE(stats.at("n_items").get<size_t>() == ds.items.size());

  // Tampering with qa.jsonl is caught by the manifest hash.
  auto qa = detail_dataset::read_text_file(dir / "qa.jsonl");
  qa[qa.find("\"answer\"")] = 'X';
  detail_dataset::write_text_file(dir / "qa.jsonl", qa);
  REQUIRE_THROWS_AS(load_dataset(dir, false), InvariantError);

  fs::remove_all(dir);
}
