// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// The grounded question-answering network.
//
//   question tokens -> embedding -> LSTM -> f_q                  [B, d]
//   audio segments  -> linear projection -> f_a[t]               [B*T, d]
//   visual maps     -> cell average f_vg[t]                      [B*T, d]
//                   -> audio-guided cell attention f_vs[t]       (spatial)
//                   -> fuse(tanh[f_vg; f_vs]) -> f_v[t]
//   f_q-guided attention over segments pools each stream         (temporal)
//   fused clip feature * f_q -> answer logits                    [B, 42]
//
// A clip-level matching head (audio paired with its own video vs a shuffled
// one) provides the auxiliary supervision that teaches the spatial attention
// where sound comes from. Ablation flags disable branches structurally:
// disabled branches allocate no parameters at all.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stg/ops.hpp"
#include "stg/rng.hpp"

namespace stg {

struct ModelConfig {
  int d_model = 64;
  int d_audio = 32;
  int d_visual = 64;
  int n_answers = 42;
  int vocab_size = 0;   // word vocabulary size, set from the dataset
  int t_segments = 10;
  bool use_audio = true;
  bool use_visual = true;
  bool use_tg = true;  // question-guided temporal attention (off: uniform mean)
  bool use_sg = true;  // audio-guided spatial attention + matching head

  void validate() const {
    STG_CONFIG_CHECK(d_model > 0 && d_audio > 0 && d_visual > 0, "dims positive");
    STG_CONFIG_CHECK(vocab_size >= 2, "vocab_size must include pad and unk");
    STG_CONFIG_CHECK(n_answers > 1, "need at least two answers");
    STG_CONFIG_CHECK(t_segments > 0, "t_segments positive");
    STG_CONFIG_CHECK(!use_sg || (use_audio && use_visual),
                     "spatial grounding needs both audio and visual branches");
    STG_CONFIG_CHECK(!use_tg || use_audio || use_visual,
                     "temporal grounding needs at least one stream");
    STG_CONFIG_CHECK(!use_visual || d_visual == d_model,
                     "visual features feed fusion directly; d_visual must equal d_model");
  }
};

// The six standard ablation rows, weakest to strongest.
inline const std::vector<std::string>& ablation_row_names() {
  static const std::vector<std::string> rows = {"q",     "a+q",      "v+q",
                                                "av+q",  "av+q+tg",  "av+q+tg+sg"};
  return rows;
}

inline ModelConfig ablation_config(ModelConfig base, const std::string& row) {
  base.use_audio = base.use_visual = base.use_tg = base.use_sg = false;
  if (row == "q") {
  } else if (row == "a+q") {
    base.use_audio = true;
  } else if (row == "v+q") {
    base.use_visual = true;
  } else if (row == "av+q") {
    base.use_audio = base.use_visual = true;
  } else if (row == "av+q+tg") {
    base.use_audio = base.use_visual = base.use_tg = true;
  } else if (row == "av+q+tg+sg") {
    base.use_audio = base.use_visual = base.use_tg = base.use_sg = true;
  } else {
    throw ConfigError("unknown ablation row: " + row);
  }
  return base;
}

struct ModelParams {
  ModelConfig cfg;
  Tensor word_embed;              // [V, d]
  Tensor lstm_w_ih, lstm_w_hh;    // [4d, d] each, gate order i f g o
  Tensor lstm_b_ih, lstm_b_hh;    // [4d]
  Tensor audio_w, audio_b;        // [d, d_a], [d]
  Tensor sg_w, sg_b;              // [d, 2d], [d]
  Tensor match_h_w, match_h_b;    // [d, 2d], [d]  matching hidden layer
  Tensor match_w, match_b;        // [2, d], [2]   matching readout
  Tensor av_w, av_b;              // [d, 2d], [d]
  Tensor answer_w, answer_b;      // [n_answers, d_in]

  // Active parameters in a fixed order; the checkpoint format and the
  // optimizer state both follow this order.
  std::vector<std::pair<std::string, Tensor*>> all() {
    std::vector<std::pair<std::string, Tensor*>> v;
    v.push_back({"word_embed", &word_embed});
    v.push_back({"lstm_w_ih", &lstm_w_ih});
    v.push_back({"lstm_w_hh", &lstm_w_hh});
    v.push_back({"lstm_b_ih", &lstm_b_ih});
    v.push_back({"lstm_b_hh", &lstm_b_hh});
    if (cfg.use_audio) {
      v.push_back({"audio_w", &audio_w});
      v.push_back({"audio_b", &audio_b});
    }
    if (cfg.use_sg) {
      v.push_back({"sg_w", &sg_w});
      v.push_back({"sg_b", &sg_b});
      v.push_back({"match_h_w", &match_h_w});
      v.push_back({"match_h_b", &match_h_b});
      v.push_back({"match_w", &match_w});
      v.push_back({"match_b", &match_b});
    }
    if (cfg.use_audio && cfg.use_visual) {
      v.push_back({"av_w", &av_w});
      v.push_back({"av_b", &av_b});
    }
    v.push_back({"answer_w", &answer_w});
    v.push_back({"answer_b", &answer_b});
    return v;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& [name, t] : all()) n += t->numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : all()) t->zero_grad();
  }
};

namespace detail_model {

inline Tensor init_uniform(Rng& rng, Shape shape, double bound) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  Tensor t = Tensor::from_data(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

inline Tensor init_normal(Rng& rng, Shape shape, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  Tensor t = Tensor::from_data(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

inline Tensor init_zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace detail_model

// Deterministic initialization: a single stream seeded by (master, "init"),
// draws in fixed declaration order. Inactive branches draw nothing.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t master_seed) {
  cfg.validate();
  using namespace detail_model;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto da = static_cast<std::size_t>(cfg.d_audio);
  const auto na = static_cast<std::size_t>(cfg.n_answers);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  Rng rng = stream_rng(master_seed, "init");
  ModelParams p;
  p.cfg = cfg;

  p.word_embed = init_normal(rng, {V, d}, 0.02);
  const double lb = 1.0 / std::sqrt(static_cast<double>(d));
  p.lstm_w_ih = init_uniform(rng, {4 * d, d}, lb);
  p.lstm_w_hh = init_uniform(rng, {4 * d, d}, lb);
  p.lstm_b_ih = init_zeros({4 * d});
  p.lstm_b_hh = init_zeros({4 * d});
  // Forget-gate bias starts at one so early training does not wipe state.
  for (std::size_t i = d; i < 2 * d; ++i) p.lstm_b_ih.data()[i] = 1.0;

  if (cfg.use_audio) {
    p.audio_w = init_uniform(rng, {d, da}, 1.0 / std::sqrt(static_cast<double>(da)));
    p.audio_b = init_zeros({d});
  }
  if (cfg.use_sg) {
    const double b2 = 1.0 / std::sqrt(static_cast<double>(2 * d));
    p.sg_w = init_uniform(rng, {d, 2 * d}, b2);
    p.sg_b = init_zeros({d});
    p.match_h_w = init_uniform(rng, {d, 2 * d}, b2);
    p.match_h_b = init_zeros({d});
    p.match_w = init_uniform(rng, {2, d}, 1.0 / std::sqrt(static_cast<double>(d)));
    p.match_b = init_zeros({2});
  }
  if (cfg.use_audio && cfg.use_visual) {
    const double b2 = 1.0 / std::sqrt(static_cast<double>(2 * d));
    p.av_w = init_uniform(rng, {d, 2 * d}, b2);
    p.av_b = init_zeros({d});
  }
  p.answer_w = init_uniform(rng, {na, d}, lb);
  p.answer_b = init_zeros({na});
  return p;
}

struct Batch {
  std::vector<std::vector<int>> tokens;  // B sequences of word ids (no padding)
  Tensor audio;   // [B, T, d_audio] when the audio branch is active
  Tensor visual;  // [B, T, d_visual, HW] when the visual branch is active
  std::vector<int> answer_ids;  // size B; empty at pure inference
  // Mismatched pairing for the matching head: negatives pair audio row
  // match_perm[i] with visual row i. Empty disables the head for this pass.
  std::vector<int> match_perm;
};

struct ForwardOutput {
  Tensor answer_logits;     // [B, n_answers]
  Tensor match_pos_logits;  // [B*T, 2] (class 1 = matched), when head ran
  Tensor match_neg_logits;  // [B*T, 2]
  Tensor spatial_att;       // [B*T, HW], when spatial grounding ran
  Tensor temporal_w_audio;  // [B, T], when temporal attention ran
  Tensor temporal_w_visual; // [B, T]
  bool has_match = false;
  bool has_spatial = false;
  bool has_temporal = false;
};

namespace detail_model {

inline bool defined(const Tensor& t) { return t.raw() != nullptr; }

// LSTM over right-padded token rows; returns the hidden state each row had
// at its own final token (pad steps leave state untouched).
inline Tensor encode_question(ModelParams& p, const std::vector<std::vector<int>>& tokens) {
  const auto B = tokens.size();
  const auto d = static_cast<std::size_t>(p.cfg.d_model);
  std::size_t L = 0;
  for (const auto& row : tokens) L = std::max(L, row.size());
  STG_CHECK(L > 0, "empty question batch");

  Tensor h = Tensor::zeros({B, d});
  Tensor c = Tensor::zeros({B, d});
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<int> ids(B, 0);
    std::vector<double> mask(B, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      if (t < tokens[b].size()) {
        ids[b] = tokens[b][t];
        mask[b] = 1.0;
      }
    Tensor x = embedding(p.word_embed, ids);
    Tensor gates = add(linear(x, p.lstm_w_ih, p.lstm_b_ih),
                       linear(h, p.lstm_w_hh, p.lstm_b_hh));
    Tensor gi = sigmoid(slice_cols(gates, 0, d));
    Tensor gf = sigmoid(slice_cols(gates, d, d));
    Tensor gg = tanh(slice_cols(gates, 2 * d, d));
    Tensor go = sigmoid(slice_cols(gates, 3 * d, d));
    Tensor c_new = add(mul(gf, c), mul(gi, gg));
    Tensor h_new = mul(go, tanh(c_new));
    Tensor m = Tensor::from_data({B}, std::move(mask));
    c = add(c, row_scale(sub(c_new, c), m));
    h = add(h, row_scale(sub(h_new, h), m));
  }
  return h;
}

// Question-guided attention pooling over segments (or a uniform mean).
inline Tensor pool_segments(const Tensor& seq, const Tensor& f_q, bool use_tg,
                            Tensor* weights_out) {
  const auto B = seq.shape()[0];
  const auto T = seq.shape()[1];
  const auto d = seq.shape()[2];
  if (!use_tg) return mean_axis(seq, 1);
  Tensor q3 = reshape(f_q, {B, 1, d});
  Tensor scores = scale(bmm(q3, seq, false, true),
                        1.0 / std::sqrt(static_cast<double>(d)));  // [B,1,T]
  Tensor w = softmax(reshape(scores, {B, T}), -1);
  if (weights_out) *weights_out = w;
  return reshape(bmm(reshape(w, {B, 1, T}), seq), {B, d});
}

}  // namespace detail_model

inline ForwardOutput forward(ModelParams& p, const Batch& batch) {
  using namespace detail_model;
  const auto& cfg = p.cfg;
  const auto B = batch.tokens.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto T = static_cast<std::size_t>(cfg.t_segments);
  STG_CHECK(B > 0, "empty batch");

  ForwardOutput out;
  Tensor f_q = encode_question(p, batch.tokens);

  Tensor a_seq, v_seq;  // [B, T, d] per active stream

  if (cfg.use_audio) {
    STG_CHECK(defined(batch.audio) &&
                  (batch.audio.shape() ==
                   Shape{B, T, static_cast<std::size_t>(cfg.d_audio)}),
              "audio batch must be [B, T, d_audio]");
    Tensor flat = reshape(batch.audio, {B * T, static_cast<std::size_t>(cfg.d_audio)});
    a_seq = reshape(linear(flat, p.audio_w, p.audio_b), {B, T, d});
  }

  Tensor vmap, f_vg;  // kept alive for the matching head's negative pass
  std::size_t hw = 0;
  // Audio-guided cell attention over one video map. Returns the grounded
  // per-segment visual feature [B*T, d] and the attention weights [B*T, HW].
  auto ground = [&](const Tensor& a) {
    Tensor fa_flat = reshape(a, {B * T, 1, d});
    Tensor att = softmax(reshape(bmm(fa_flat, vmap), {B * T, hw}), -1);
    Tensor f_vs = reshape(bmm(vmap, reshape(att, {B * T, hw, 1})), {B * T, d});
    Tensor f_v = linear(tanh(concat_cols(f_vg, f_vs)), p.sg_w, p.sg_b);
    return std::make_pair(f_v, att);
  };

  Tensor f_v_seg;  // [B*T, d], grounded when spatial attention is on
  if (cfg.use_visual) {
    STG_CHECK(defined(batch.visual) && batch.visual.rank() == 4 &&
                  batch.visual.shape()[0] == B && batch.visual.shape()[1] == T &&
                  batch.visual.shape()[2] == static_cast<std::size_t>(cfg.d_visual),
              "visual batch must be [B, T, d_visual, HW]");
    hw = batch.visual.shape()[3];
    vmap = reshape(batch.visual, {B * T, d, hw});
    f_vg = mean_axis(vmap, 2);  // [B*T, d]
    f_v_seg = f_vg;
    if (cfg.use_sg) {
      auto [f_v, att] = ground(a_seq);
      out.spatial_att = att;
      out.has_spatial = true;
      f_v_seg = f_v;
    }
    v_seq = reshape(f_v_seg, {B, T, d});
  }

  // Per-segment matching head: does this audio segment belong to this video
  // segment? The negative re-grounds the video with another scene's audio;
  // mismatched audio attends to cells that do not echo it, so the grounded
  // visual feature itself carries the agreement signal. (A linear readout of
  // the two streams side by side is additive in each and could never see it.)
  if (cfg.use_sg && !batch.match_perm.empty()) {
    STG_CHECK(batch.match_perm.size() == B, "match_perm must cover the batch");
    Tensor a_flat = reshape(a_seq, {B * T, d});
    Tensor a_shuf_seq =
        reshape(embedding(reshape(a_seq, {B, T * d}), batch.match_perm), {B, T, d});
    Tensor a_shuf_flat = reshape(a_shuf_seq, {B * T, d});
    auto [f_v_neg, att_neg] = ground(a_shuf_seq);
    auto match_head = [&p](const Tensor& x) {
      return linear(tanh(linear(x, p.match_h_w, p.match_h_b)), p.match_w,
                    p.match_b);
    };
    out.match_pos_logits = match_head(concat_cols(a_flat, f_v_seg));
    out.match_neg_logits = match_head(concat_cols(a_shuf_flat, f_v_neg));
    out.has_match = true;
  }

  Tensor f_av;
  if (cfg.use_audio && cfg.use_visual) {
    Tensor bar_a = pool_segments(a_seq, f_q, cfg.use_tg, &out.temporal_w_audio);
    Tensor bar_v = pool_segments(v_seq, f_q, cfg.use_tg, &out.temporal_w_visual);
    out.has_temporal = cfg.use_tg;
    f_av = linear(tanh(concat_cols(bar_a, bar_v)), p.av_w, p.av_b);
  } else if (cfg.use_audio) {
    f_av = pool_segments(a_seq, f_q, cfg.use_tg, &out.temporal_w_audio);
    out.has_temporal = cfg.use_tg;
  } else if (cfg.use_visual) {
    f_av = pool_segments(v_seq, f_q, cfg.use_tg, &out.temporal_w_visual);
    out.has_temporal = cfg.use_tg;
  }

  // Question-only rows bypass fusion: the answer head reads f_q directly.
  Tensor e = defined(f_av) ? mul(f_av, f_q) : f_q;
  out.answer_logits = linear(e, p.answer_w, p.answer_b);
  return out;
}

}  // namespace stg
