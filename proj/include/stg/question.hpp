// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Question templates and answer oracles. 33 templates across 9
// (modality, type) families generate natural-language questions about a
// scene; every template splits into a slot chooser (seeded, handles answer
// balance) and a pure answer function of (scene, slots), so stored answers
// can be re-derived from the question text alone. Templates reject scenes
// where their presuppositions fail (missing objects, ties, ambiguity).

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stg/scene.hpp"

namespace stg {

// ---------------------------------------------------------------------------
// Tokenizer. Lowercases, splits on spaces, and treats '?' as its own token.
// detokenize() restores the canonical surface (capitalized, '?' attached),
// so tokenize(detokenize(tokens)) == tokens for every generated question.

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const char c = (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
    if (c == ' ' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else if (c == '?') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      out.emplace_back("?");
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (t == "?") {
      out += "?";
    } else {
      if (!out.empty()) out += " ";
      out += t;
    }
  }
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z')
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

// ---------------------------------------------------------------------------
// Answer vocabulary: exactly 42 entries, partitioned 22/12/6/2.

inline const std::vector<std::string>& count_words() {
  static const std::vector<std::string> w = {"zero", "one", "two",   "three",
                                             "four", "five", "six",  "seven",
                                             "eight", "nine", "ten", "eleven"};
  return w;
}

inline const std::vector<std::string>& location_words() {
  static const std::vector<std::string> w = {"left", "right", "middle",
                                             "top", "indoor", "outdoor"};
  return w;
}

class AnswerVocab {
 public:
  AnswerVocab() {
    for (const auto& n : instrument_names()) entries_.push_back(n);
    for (const auto& n : count_words()) entries_.push_back(n);
    for (const auto& n : location_words()) entries_.push_back(n);
    entries_.push_back("yes");
    entries_.push_back("no");
    STG_CHECK(entries_.size() == 42, "answer vocabulary must have 42 entries");
  }
  int id(const std::string& word) const {
    for (size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i] == word) return static_cast<int>(i);
    throw InvariantError("answer outside vocabulary: " + word);
  }
  const std::string& word(int id) const { return entries_.at(static_cast<size_t>(id)); }
  size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

 private:
  std::vector<std::string> entries_;
};

inline std::string count_word(int n) {
  STG_CHECK(n >= 0 && n < static_cast<int>(count_words().size()),
            "count answer out of range: " + std::to_string(n));
  return count_words()[static_cast<size_t>(n)];
}

// ---------------------------------------------------------------------------
// Scene analysis helpers shared by the oracles.

namespace oracle {

inline std::vector<const SceneObject*> visible(const SceneSpec& s) {
  std::vector<const SceneObject*> v;
  for (const auto& o : s.objects)
    if (o.visible) v.push_back(&o);
  return v;
}

inline std::vector<const SceneObject*> sounding(const SceneSpec& s) {
  std::vector<const SceneObject*> v;
  for (const auto& o : s.objects)
    if (!o.sounding.empty()) v.push_back(&o);
  return v;
}

inline std::vector<const SceneObject*> visible_of_type(const SceneSpec& s, int instr) {
  std::vector<const SceneObject*> v;
  for (const auto& o : s.objects)
    if (o.visible && o.instrument == instr) v.push_back(&o);
  return v;
}

inline bool type_visible(const SceneSpec& s, int instr) {
  return !visible_of_type(s, instr).empty();
}

inline bool type_sounding(const SceneSpec& s, int instr) {
  for (const auto& o : s.objects)
    if (o.instrument == instr && !o.sounding.empty()) return true;
  return false;
}

inline std::vector<int> visible_types(const SceneSpec& s) {
  std::vector<int> t;
  for (const auto& o : s.objects)
    if (o.visible && std::find(t.begin(), t.end(), o.instrument) == t.end())
      t.push_back(o.instrument);
  return t;
}

inline std::vector<int> sounding_types(const SceneSpec& s) {
  std::vector<int> t;
  for (const auto& o : s.objects)
    if (!o.sounding.empty() &&
        std::find(t.begin(), t.end(), o.instrument) == t.end())
      t.push_back(o.instrument);
  return t;
}

// Strictly-unique extremum; nullptr when the candidate set is empty or tied.
template <typename Key>
const SceneObject* unique_extreme(const std::vector<const SceneObject*>& objs,
                                  Key key, bool want_max) {
  const SceneObject* best = nullptr;
  bool tied = false;
  for (const auto* o : objs) {
    if (!best) {
      best = o;
      continue;
    }
    const auto kb = key(best), ko = key(o);
    if (ko == kb) {
      tied = true;
    } else if ((want_max && ko > kb) || (!want_max && ko < kb)) {
      best = o;
      tied = false;
    }
  }
  return tied ? nullptr : best;
}

inline const SceneObject* unique_onset_extreme(const SceneSpec& s, bool last) {
  return unique_extreme(sounding(s), [](const SceneObject* o) { return o->onset(); },
                        last);
}

inline const SceneObject* unique_column_extreme(
    const std::vector<const SceneObject*>& objs, bool rightmost) {
  return unique_extreme(objs, [](const SceneObject* o) { return o->col; }, rightmost);
}

// Visible neighbor of `anchor` strictly to one side, nearest by column;
// nullptr if none or if the nearest distance is shared.
inline const SceneObject* nearest_side_neighbor(const SceneSpec& s,
                                                const SceneObject* anchor,
                                                bool right_side) {
  std::vector<const SceneObject*> cands;
  for (const auto& o : s.objects) {
    if (!o.visible || &o == anchor) continue;
    if (right_side ? o.col > anchor->col : o.col < anchor->col) cands.push_back(&o);
  }
  return unique_extreme(
      cands,
      [anchor](const SceneObject* o) { return std::abs(o->col - anchor->col); },
      false);
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Template definitions

// Canonical question-type order, used by metrics logs and report tables.
inline const std::vector<std::string>& qtype_names() {
  static const std::vector<std::string> v = {"existential", "counting", "location",
                                             "comparative", "temporal"};
  return v;
}

using SlotMap = std::map<std::string, std::string>;

struct TemplateDef {
  int id;
  std::string qtype;     // existential | counting | location | comparative | temporal
  std::string modality;  // audio | visual | audio_visual
  std::string pattern;   // surface with <slot> markers
  // Seeded slot selection; nullopt when the scene cannot host the template.
  std::function<std::optional<SlotMap>(const SceneSpec&, Rng&)> choose_slots;
  // Pure answer oracle; nullopt when presuppositions fail for these slots.
  std::function<std::optional<std::string>(const SceneSpec&, const SlotMap&)> answer;
};

inline std::vector<std::string> realize_pattern(const std::string& pattern,
                                                const SlotMap& slots) {
  std::vector<std::string> out;
  for (auto& tok : tokenize(pattern)) {
    if (tok.size() >= 3 && tok.front() == '<' && tok.back() == '>') {
      const std::string key = tok.substr(1, tok.size() - 2);
      out.push_back(slots.at(key));
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

// Recovers slot values by aligning question tokens with the pattern.
// Every slot is a single token, so alignment is positional.
inline std::optional<SlotMap> parse_slots(const std::string& pattern,
                                          const std::vector<std::string>& tokens) {
  const auto ptoks = tokenize(pattern);
  if (ptoks.size() != tokens.size()) return std::nullopt;
  SlotMap slots;
  for (size_t i = 0; i < ptoks.size(); ++i) {
    const auto& p = ptoks[i];
    if (p.size() >= 3 && p.front() == '<' && p.back() == '>') {
      slots[p.substr(1, p.size() - 2)] = tokens[i];
    } else if (p != tokens[i]) {
      return std::nullopt;
    }
  }
  return slots;
}

namespace detail_templates {

using oracle::sounding;
using oracle::sounding_types;
using oracle::visible;
using oracle::visible_of_type;
using oracle::visible_types;

inline std::string iname(int id) {
  return instrument_names()[static_cast<size_t>(id)];
}

inline std::optional<int> slot_instrument(const SlotMap& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) return std::nullopt;
  const auto& names = instrument_names();
  for (int i = 0; i < kInstrumentCount; ++i)
    if (names[static_cast<size_t>(i)] == it->second) return i;
  return std::nullopt;
}

// Instrument types with exactly `n` visible objects.
inline std::vector<int> types_with_visible_count(const SceneSpec& s, size_t n) {
  std::vector<int> out;
  for (int i = 0; i < kInstrumentCount; ++i)
    if (visible_of_type(s, i).size() == n) out.push_back(i);
  return out;
}

// Types with exactly one sounding object (the object may be invisible).
inline std::vector<int> types_with_one_sounding(const SceneSpec& s) {
  std::vector<int> out;
  for (int i = 0; i < kInstrumentCount; ++i) {
    int c = 0;
    for (const auto& o : s.objects)
      if (o.instrument == i && !o.sounding.empty()) ++c;
    if (c == 1) out.push_back(i);
  }
  return out;
}

inline const SceneObject* one_sounding_of_type(const SceneSpec& s, int instr) {
  const SceneObject* found = nullptr;
  for (const auto& o : s.objects) {
    if (o.instrument != instr || o.sounding.empty()) continue;
    if (found) return nullptr;
    found = &o;
  }
  return found;
}

inline int pick(Rng& rng, const std::vector<int>& v) {
  return v[static_cast<size_t>(rng.next_below(v.size()))];
}

inline std::vector<int> absent_types(const SceneSpec& s) {
  std::vector<int> out;
  for (int i = 0; i < kInstrumentCount; ++i) {
    bool present = false;
    for (const auto& o : s.objects) present |= (o.instrument == i);
    if (!present) out.push_back(i);
  }
  return out;
}

inline std::vector<int> non_sounding_types(const SceneSpec& s) {
  std::vector<int> out;
  const auto snd = sounding_types(s);
  for (int i = 0; i < kInstrumentCount; ++i)
    if (std::find(snd.begin(), snd.end(), i) == snd.end()) out.push_back(i);
  return out;
}

}  // namespace detail_templates

inline const std::vector<TemplateDef>& question_templates() {
  using namespace detail_templates;
  static const std::vector<TemplateDef> defs = [] {
    std::vector<TemplateDef> v;

    // ---- Audio-Visual / Existential -------------------------------------
    v.push_back(TemplateDef{
        0, "existential", "audio_visual",
        "Is this sound from the instrument in the video?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          for (const auto& o : s.objects)
            if (!o.sounding.empty() && !o.visible) return "no";
          return "yes";
        }});

    v.push_back(TemplateDef{
        1, "existential", "audio_visual",
        "Is the <obj> in the video always playing?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto solo_types = types_with_visible_count(s, 1);
          if (solo_types.empty()) return std::nullopt;
          // Prefer an always-playing candidate half the time for balance.
          std::vector<int> full;
          for (int t : solo_types) {
            const auto objs = visible_of_type(s, t);
            if (objs[0]->duration() == s.duration_segments) full.push_back(t);
          }
          const int t = (!full.empty() && rng.bernoulli(0.5)) ? pick(rng, full)
                                                              : pick(rng, solo_types);
          return SlotMap{{"obj", iname(t)}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          const auto objs = visible_of_type(s, *instr);
          if (objs.size() != 1) return std::nullopt;
          return objs[0]->duration() == s.duration_segments ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        2, "existential", "audio_visual", "Is there a voiceover?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          for (const auto& o : s.objects)
            if (!o.visible && !o.sounding.empty()) return "yes";
          return "no";
        }});

    // ---- Audio-Visual / Counting -----------------------------------------
    v.push_back(TemplateDef{
        3, "counting", "audio_visual",
        "How many instruments in the video are sounding?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          int n = 0;
          for (const auto& o : s.objects) n += (o.visible && !o.sounding.empty());
          return count_word(n);
        }});

    v.push_back(TemplateDef{
        4, "counting", "audio_visual",
        "How many kinds of instruments are sounding in the video?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          std::vector<int> t;
          for (const auto& o : s.objects)
            if (o.visible && !o.sounding.empty() &&
                std::find(t.begin(), t.end(), o.instrument) == t.end())
              t.push_back(o.instrument);
          return count_word(static_cast<int>(t.size()));
        }});

    v.push_back(TemplateDef{
        5, "counting", "audio_visual",
        "How many instruments in the video did not sound from beginning to end?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          int n = 0;
          for (const auto& o : s.objects) n += (o.visible && o.sounding.empty());
          return count_word(n);
        }});

    v.push_back(TemplateDef{
        6, "counting", "audio_visual",
        "How many <obj> instruments are sounding in the video?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto types = visible_types(s);
          if (types.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, types))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr || !oracle::type_visible(s, *instr)) return std::nullopt;
          int n = 0;
          for (const auto& o : s.objects)
            n += (o.visible && o.instrument == *instr && !o.sounding.empty());
          return count_word(n);
        }});

    // ---- Audio-Visual / Location ------------------------------------------
    v.push_back(TemplateDef{
        7, "location", "audio_visual", "Where is the <ll> instrument?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"ll", rng.bernoulli(0.5) ? "loudest" : "longest"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          std::vector<const SceneObject*> cands;
          for (const auto& o : s.objects)
            if (o.visible && !o.sounding.empty()) cands.push_back(&o);
          if (cands.size() < 2) return std::nullopt;
          const auto& ll = m.at("ll");
          const SceneObject* w = nullptr;
          if (ll == "loudest")
            w = oracle::unique_extreme(
                cands, [](const SceneObject* o) { return o->loudness; }, true);
          else if (ll == "longest")
            w = oracle::unique_extreme(
                cands, [](const SceneObject* o) { return o->duration(); }, true);
          if (!w) return std::nullopt;
          return position_word(w->row, w->col, s.grid_h, s.grid_w);
        }});

    v.push_back(TemplateDef{
        8, "location", "audio_visual",
        "Is the <fl> sound coming from the <lr> instrument?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"fl", rng.bernoulli(0.5) ? "first" : "last"},
                         {"lr", rng.bernoulli(0.5) ? "left" : "right"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto vis = visible(s);
          if (vis.size() < 2) return std::nullopt;
          const SceneObject* snd = oracle::unique_onset_extreme(s, m.at("fl") == "last");
          const SceneObject* pos =
              oracle::unique_column_extreme(vis, m.at("lr") == "right");
          if (!snd || !pos) return std::nullopt;
          return snd == pos ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        9, "location", "audio_visual",
        "Which is the musical instrument that sounds at the same time as the <obj>?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          // Anchor: a type with exactly one visible, sounding object.
          std::vector<int> anchors;
          for (int t : types_with_visible_count(s, 1))
            if (!visible_of_type(s, t)[0]->sounding.empty()) anchors.push_back(t);
          if (anchors.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, anchors))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          const auto objs = visible_of_type(s, *instr);
          if (objs.size() != 1 || objs[0]->sounding.empty()) return std::nullopt;
          const auto* anchor = objs[0];
          // Exactly one other type may overlap the anchor's active segments.
          std::vector<int> overlapping;
          for (const auto& o : s.objects) {
            if (o.instrument == *instr || o.sounding.empty()) continue;
            bool overlap = false;
            for (int t : o.sounding) overlap |= anchor->sounds_at(t);
            if (overlap &&
                std::find(overlapping.begin(), overlapping.end(), o.instrument) ==
                    overlapping.end())
              overlapping.push_back(o.instrument);
          }
          if (overlapping.size() != 1) return std::nullopt;
          return iname(overlapping[0]);
        }});

    v.push_back(TemplateDef{
        10, "location", "audio_visual",
        "What is the instrument on the <lr> of the <fl> sounding instrument?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"lr", rng.bernoulli(0.5) ? "left" : "right"},
                         {"fl", rng.bernoulli(0.5) ? "first" : "last"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const SceneObject* snd = oracle::unique_onset_extreme(s, m.at("fl") == "last");
          if (!snd || !snd->visible) return std::nullopt;
          const SceneObject* nb =
              oracle::nearest_side_neighbor(s, snd, m.at("lr") == "right");
          if (!nb) return std::nullopt;
          return iname(nb->instrument);
        }});

    // ---- Audio-Visual / Comparative ----------------------------------------
    auto side_objects = [](const SceneSpec& s)
        -> std::optional<std::pair<const SceneObject*, const SceneObject*>> {
      const auto vis = oracle::visible(s);
      if (vis.size() < 2) return std::nullopt;
      const auto* l = oracle::unique_column_extreme(vis, false);
      const auto* r = oracle::unique_column_extreme(vis, true);
      if (!l || !r || l == r) return std::nullopt;
      if (l->sounding.empty() || r->sounding.empty()) return std::nullopt;
      return std::make_pair(l, r);
    };

    v.push_back(TemplateDef{
        11, "comparative", "audio_visual",
        "Is the instrument on the left more rhythmic than the instrument on the right?",
        [side_objects](const SceneSpec& s, Rng&) -> std::optional<SlotMap> {
          if (!side_objects(s)) return std::nullopt;
          return SlotMap{};
        },
        [side_objects](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          const auto lr = side_objects(s);
          if (!lr) return std::nullopt;
          if (lr->first->rhythmicity == lr->second->rhythmicity) return std::nullopt;
          return lr->first->rhythmicity > lr->second->rhythmicity ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        12, "comparative", "audio_visual",
        "Is the instrument on the left louder than the instrument on the right?",
        [side_objects](const SceneSpec& s, Rng&) -> std::optional<SlotMap> {
          if (!side_objects(s)) return std::nullopt;
          return SlotMap{};
        },
        [side_objects](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          const auto lr = side_objects(s);
          if (!lr) return std::nullopt;
          if (lr->first->loudness == lr->second->loudness) return std::nullopt;
          return lr->first->loudness > lr->second->loudness ? "yes" : "no";
        }});

    // Pair of same-type objects, left/right disambiguated.
    auto same_type_pair = [](const SceneSpec& s, int instr)
        -> std::optional<std::pair<const SceneObject*, const SceneObject*>> {
      const auto objs = oracle::visible_of_type(s, instr);
      if (objs.size() != 2) return std::nullopt;
      if (objs[0]->sounding.empty() || objs[1]->sounding.empty()) return std::nullopt;
      if (objs[0]->col == objs[1]->col) return std::nullopt;
      const auto* l = objs[0]->col < objs[1]->col ? objs[0] : objs[1];
      const auto* r = objs[0]->col < objs[1]->col ? objs[1] : objs[0];
      return std::make_pair(l, r);
    };
    auto choose_pair_type = [same_type_pair](const SceneSpec& s,
                                             Rng& rng) -> std::optional<int> {
      std::vector<int> cands;
      for (int t : types_with_visible_count(s, 2))
        if (same_type_pair(s, t)) cands.push_back(t);
      if (cands.empty()) return std::nullopt;
      return pick(rng, cands);
    };

    v.push_back(TemplateDef{
        13, "comparative", "audio_visual",
        "Is the <obj> on the <lr> more rhythmic than the <obj2> on the <rl>?",
        [choose_pair_type](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto t = choose_pair_type(s, rng);
          if (!t) return std::nullopt;
          const bool left_first = rng.bernoulli(0.5);
          return SlotMap{{"obj", iname(*t)},
                         {"obj2", iname(*t)},
                         {"lr", left_first ? "left" : "right"},
                         {"rl", left_first ? "right" : "left"}};
        },
        [same_type_pair](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr || m.at("obj") != m.at("obj2")) return std::nullopt;
          if (m.at("lr") == m.at("rl")) return std::nullopt;
          const auto pair = same_type_pair(s, *instr);
          if (!pair) return std::nullopt;
          const auto* a = m.at("lr") == "left" ? pair->first : pair->second;
          const auto* b = m.at("lr") == "left" ? pair->second : pair->first;
          if (a->rhythmicity == b->rhythmicity) return std::nullopt;
          return a->rhythmicity > b->rhythmicity ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        14, "comparative", "audio_visual",
        "Is the <obj> on the <lr> louder than the <obj2> on the <rl>?",
        [choose_pair_type](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto t = choose_pair_type(s, rng);
          if (!t) return std::nullopt;
          const bool left_first = rng.bernoulli(0.5);
          return SlotMap{{"obj", iname(*t)},
                         {"obj2", iname(*t)},
                         {"lr", left_first ? "left" : "right"},
                         {"rl", left_first ? "right" : "left"}};
        },
        [same_type_pair](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr || m.at("obj") != m.at("obj2")) return std::nullopt;
          if (m.at("lr") == m.at("rl")) return std::nullopt;
          const auto pair = same_type_pair(s, *instr);
          if (!pair) return std::nullopt;
          const auto* a = m.at("lr") == "left" ? pair->first : pair->second;
          const auto* b = m.at("lr") == "left" ? pair->second : pair->first;
          if (a->loudness == b->loudness) return std::nullopt;
          return a->loudness > b->loudness ? "yes" : "no";
        }});

    // ---- Audio-Visual / Temporal -------------------------------------------
    v.push_back(TemplateDef{
        15, "temporal", "audio_visual", "Where is the <fl> sounding instrument?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"fl", rng.bernoulli(0.5) ? "first" : "last"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          if (oracle::sounding(s).size() < 2) return std::nullopt;
          const SceneObject* w = oracle::unique_onset_extreme(s, m.at("fl") == "last");
          if (!w || !w->visible) return std::nullopt;
          return position_word(w->row, w->col, s.grid_h, s.grid_w);
        }});

    v.push_back(TemplateDef{
        16, "temporal", "audio_visual", "Which <obj> makes the sound <fl>?",
        [same_type_pair](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          std::vector<int> cands;
          for (int t : types_with_visible_count(s, 2))
            if (same_type_pair(s, t)) cands.push_back(t);
          if (cands.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, cands))},
                         {"fl", rng.bernoulli(0.5) ? "first" : "last"}};
        },
        [same_type_pair](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          const auto pair = same_type_pair(s, *instr);
          if (!pair) return std::nullopt;
          const int ol = pair->first->onset(), orr = pair->second->onset();
          if (ol == orr) return std::nullopt;
          const bool last = m.at("fl") == "last";
          const bool left_wins = last ? ol > orr : ol < orr;
          return left_wins ? "left" : "right";
        }});

    v.push_back(TemplateDef{
        17, "temporal", "audio_visual",
        "Which instrument makes sounds <ba> the <obj>?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          std::vector<int> anchors;
          for (int t : types_with_visible_count(s, 1))
            if (!visible_of_type(s, t)[0]->sounding.empty()) anchors.push_back(t);
          if (anchors.empty()) return std::nullopt;
          return SlotMap{{"ba", rng.bernoulli(0.5) ? "before" : "after"},
                         {"obj", iname(pick(rng, anchors))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          const auto objs = visible_of_type(s, *instr);
          if (objs.size() != 1 || objs[0]->sounding.empty()) return std::nullopt;
          const int anchor_onset = objs[0]->onset();
          const bool after = m.at("ba") == "after";
          std::vector<const SceneObject*> cands;
          for (const auto& o : s.objects) {
            if (o.sounding.empty() || &o == objs[0]) continue;
            if (after ? o.onset() > anchor_onset : o.onset() < anchor_onset)
              cands.push_back(&o);
          }
          const SceneObject* nb = oracle::unique_extreme(
              cands,
              [anchor_onset](const SceneObject* o) {
                return std::abs(o->onset() - anchor_onset);
              },
              false);
          if (!nb) return std::nullopt;
          return iname(nb->instrument);
        }});

    v.push_back(TemplateDef{
        18, "temporal", "audio_visual", "Which instrument makes the sound <fl>?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"fl", rng.bernoulli(0.5) ? "first" : "last"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          if (oracle::sounding(s).size() < 2) return std::nullopt;
          const SceneObject* w = oracle::unique_onset_extreme(s, m.at("fl") == "last");
          if (!w) return std::nullopt;
          return iname(w->instrument);
        }});

    // ---- Visual / Counting ---------------------------------------------------
    v.push_back(TemplateDef{
        19, "counting", "visual", "Is there a <obj> in the entire video?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto present = visible_types(s);
          const auto absent = absent_types(s);
          const bool want_yes = absent.empty() || (!present.empty() && rng.bernoulli(0.5));
          const auto& pool = want_yes ? present : absent;
          if (pool.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, pool))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          return oracle::type_visible(s, *instr) ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        20, "counting", "visual",
        "Are there <obj> and <obj2> instruments in the video?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          auto present = visible_types(s);
          auto absent = absent_types(s);
          rng.shuffle(present);
          rng.shuffle(absent);
          const bool want_yes = present.size() >= 2 && rng.bernoulli(0.5);
          std::string a, b;
          if (want_yes) {
            a = iname(present[0]);
            b = iname(present[1]);
          } else if (!present.empty() && !absent.empty()) {
            a = iname(present[0]);
            b = iname(absent[0]);
            if (rng.bernoulli(0.5)) std::swap(a, b);
          } else {
            return std::nullopt;
          }
          return SlotMap{{"obj", a}, {"obj2", b}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto a = slot_instrument(m, "obj");
          const auto b = slot_instrument(m, "obj2");
          if (!a || !b || *a == *b) return std::nullopt;
          return oracle::type_visible(s, *a) && oracle::type_visible(s, *b) ? "yes"
                                                                            : "no";
        }});

    v.push_back(TemplateDef{
        21, "counting", "visual",
        "How many types of musical instruments appeared in the entire video?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          return count_word(static_cast<int>(visible_types(s).size()));
        }});

    v.push_back(TemplateDef{
        22, "counting", "visual",
        "How many <obj> instruments are in the entire video?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto present = visible_types(s);
          const auto absent = absent_types(s);
          const bool zero = !absent.empty() && rng.bernoulli(0.2);
          const auto& pool = zero ? absent : present;
          if (pool.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, pool))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          return count_word(static_cast<int>(visible_of_type(s, *instr).size()));
        }});

    // ---- Visual / Location -----------------------------------------------------
    v.push_back(TemplateDef{
        23, "location", "visual", "Where is the performance?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          return s.venue;
        }});

    v.push_back(TemplateDef{
        24, "location", "visual",
        "What is the instrument on the <lr> of the <obj>?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          std::vector<int> anchors = types_with_visible_count(s, 1);
          if (anchors.empty()) return std::nullopt;
          return SlotMap{{"lr", rng.bernoulli(0.5) ? "left" : "right"},
                         {"obj", iname(pick(rng, anchors))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          const auto objs = visible_of_type(s, *instr);
          if (objs.size() != 1) return std::nullopt;
          const SceneObject* nb =
              oracle::nearest_side_neighbor(s, objs[0], m.at("lr") == "right");
          if (!nb) return std::nullopt;
          return iname(nb->instrument);
        }});

    v.push_back(TemplateDef{
        25, "location", "visual", "What kind of musical instrument is it?",
        [](const SceneSpec& s, Rng&) -> std::optional<SlotMap> {
          if (visible(s).size() != 1) return std::nullopt;
          return SlotMap{};
        },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          const auto vis = visible(s);
          if (vis.size() != 1) return std::nullopt;
          return iname(vis[0]->instrument);
        }});

    v.push_back(TemplateDef{
        26, "location", "visual",
        "What kind of instrument is the <lrer> instrument?",
        [](const SceneSpec&, Rng& rng) -> std::optional<SlotMap> {
          return SlotMap{{"lrer", rng.bernoulli(0.5) ? "lefter" : "righter"}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto vis = visible(s);
          if (vis.size() < 2) return std::nullopt;
          const SceneObject* w =
              oracle::unique_column_extreme(vis, m.at("lrer") == "righter");
          if (!w) return std::nullopt;
          return iname(w->instrument);
        }});

    // ---- Audio / Counting --------------------------------------------------------
    v.push_back(TemplateDef{
        27, "counting", "audio", "Is there a <obj> sound?",
        [](const SceneSpec& s, Rng& rng) -> std::optional<SlotMap> {
          const auto snd = sounding_types(s);
          const auto silent = non_sounding_types(s);
          const bool want_yes = silent.empty() || (!snd.empty() && rng.bernoulli(0.5));
          const auto& pool = want_yes ? snd : silent;
          if (pool.empty()) return std::nullopt;
          return SlotMap{{"obj", iname(pick(rng, pool))}};
        },
        [](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto instr = slot_instrument(m, "obj");
          if (!instr) return std::nullopt;
          return oracle::type_sounding(s, *instr) ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        28, "counting", "audio",
        "How many musical instruments were heard throughout the video?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          return count_word(static_cast<int>(sounding(s).size()));
        }});

    v.push_back(TemplateDef{
        29, "counting", "audio",
        "How many kinds of musical instruments were heard?",
        [](const SceneSpec&, Rng&) -> std::optional<SlotMap> { return SlotMap{}; },
        [](const SceneSpec& s, const SlotMap&) -> std::optional<std::string> {
          return count_word(static_cast<int>(sounding_types(s).size()));
        }});

    // ---- Audio / Comparative -------------------------------------------------------
    auto choose_two_sounding_types = [](const SceneSpec& s,
                                        Rng& rng) -> std::optional<SlotMap> {
      auto cands = types_with_one_sounding(s);
      if (cands.size() < 2) return std::nullopt;
      rng.shuffle(cands);
      return SlotMap{{"obj", iname(cands[0])}, {"obj2", iname(cands[1])}};
    };
    auto two_sounding = [](const SceneSpec& s, const SlotMap& m)
        -> std::optional<std::pair<const SceneObject*, const SceneObject*>> {
      const auto a = slot_instrument(m, "obj");
      const auto b = slot_instrument(m, "obj2");
      if (!a || !b || *a == *b) return std::nullopt;
      const auto* oa = one_sounding_of_type(s, *a);
      const auto* ob = one_sounding_of_type(s, *b);
      if (!oa || !ob) return std::nullopt;
      return std::make_pair(oa, ob);
    };

    v.push_back(TemplateDef{
        30, "comparative", "audio",
        "Is the <obj> more rhythmic than the <obj2>?",
        choose_two_sounding_types,
        [two_sounding](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto p = two_sounding(s, m);
          if (!p || p->first->rhythmicity == p->second->rhythmicity)
            return std::nullopt;
          return p->first->rhythmicity > p->second->rhythmicity ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        31, "comparative", "audio", "Is the <obj> louder than the <obj2>?",
        choose_two_sounding_types,
        [two_sounding](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto p = two_sounding(s, m);
          if (!p || p->first->loudness == p->second->loudness) return std::nullopt;
          return p->first->loudness > p->second->loudness ? "yes" : "no";
        }});

    v.push_back(TemplateDef{
        32, "comparative", "audio",
        "Does the <obj> sound longer than the <obj2>?",
        choose_two_sounding_types,
        [two_sounding](const SceneSpec& s, const SlotMap& m) -> std::optional<std::string> {
          const auto p = two_sounding(s, m);
          if (!p || p->first->duration() == p->second->duration())
            return std::nullopt;
          return p->first->duration() > p->second->duration() ? "yes" : "no";
        }});

    STG_CHECK(v.size() == 33, "template table must have 33 entries");
    for (size_t i = 0; i < v.size(); ++i)
      STG_CHECK(v[i].id == static_cast<int>(i), "template ids must be 0..32");
    return v;
  }();
  return defs;
}

// ---------------------------------------------------------------------------
// Word vocabulary: id 0 = PAD, id 1 = UNK, then the sorted closure of every
// token any template can emit.

class WordVocab {
 public:
  WordVocab() {
    std::vector<std::string> words;
    auto add = [&words](const std::string& w) {
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    };
    for (const auto& t : question_templates())
      for (const auto& tok : tokenize(t.pattern))
        if (!(tok.size() >= 3 && tok.front() == '<' && tok.back() == '>')) add(tok);
    for (const auto& n : instrument_names()) add(n);
    for (const char* w : {"first", "last", "left", "right", "loudest", "longest",
                          "lefter", "righter", "before", "after"})
      add(w);
    std::sort(words.begin(), words.end());
    entries_ = {"<pad>", "<unk>"};
    entries_.insert(entries_.end(), words.begin(), words.end());
  }

  int id(const std::string& word) const {
    for (size_t i = 2; i < entries_.size(); ++i)
      if (entries_[i] == word) return static_cast<int>(i);
    return 1;  // UNK
  }
  std::vector<int> ids(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }
  const std::string& word(int id) const { return entries_.at(static_cast<size_t>(id)); }
  size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

 private:
  std::vector<std::string> entries_;
};

// ---------------------------------------------------------------------------
// Per-scene question generation

struct QAItem {
  std::uint64_t qa_id = 0;
  std::uint64_t scene_id = 0;
  int template_id = 0;
  std::string qtype;
  std::string modality;
  std::string question;
  std::string answer;
  std::string split;
};

// At most `cap` questions per scene, each template used at most once,
// template order shuffled per scene.
inline std::vector<QAItem> make_scene_questions(const SceneSpec& scene,
                                                std::uint64_t master_seed,
                                                size_t cap = 5) {
  Rng rng = stream_rng(master_seed, "questions", scene.scene_id);
  const auto& defs = question_templates();
  std::vector<int> order(defs.size());
  for (size_t i = 0; i < defs.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  std::vector<QAItem> items;
  for (int tid : order) {
    if (items.size() >= cap) break;
    const auto& def = defs[static_cast<size_t>(tid)];
    auto slots = def.choose_slots(scene, rng);
    if (!slots) continue;
    auto ans = def.answer(scene, *slots);
    if (!ans) continue;
    QAItem item;
    item.scene_id = scene.scene_id;
    item.template_id = def.id;
    item.qtype = def.qtype;
    item.modality = def.modality;
    item.question = detokenize(realize_pattern(def.pattern, *slots));
    item.answer = *ans;
    items.push_back(std::move(item));
  }
  return items;
}

// Recomputes the answer for a stored item from the question text alone.
// Returns nullopt if the question does not parse against its template or the
// oracle rejects the scene (either would mean corpus corruption).
inline std::optional<std::string> reevaluate_answer(const SceneSpec& scene,
                                                    const QAItem& item) {
  const auto& defs = question_templates();
  STG_CHECK(item.template_id >= 0 &&
                item.template_id < static_cast<int>(defs.size()),
            "template id out of range");
  const auto& def = defs[static_cast<size_t>(item.template_id)];
  const auto slots = parse_slots(def.pattern, tokenize(item.question));
  if (!slots) return std::nullopt;
  return def.answer(scene, *slots);
}

}  // namespace stg
