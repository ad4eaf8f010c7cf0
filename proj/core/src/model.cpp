// core/src/model.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/model.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace slt::model {

Model Model::init(const ModelConfig& cfg, const datasynth::VocabSet& vocabs,
                  std::uint64_t seed) {
  Model m;
  m.cfg = cfg;
  m.vocabs = vocabs;
  std::mt19937_64 rng(seed);
  encoder::init_params(cfg.enc, vocabs.asr.size(), vocabs.slu.size(),
                       m.params, rng);
  kt::init_params(cfg.kt, cfg.enc.width, vocabs.teacher_tokens.size(),
                  m.params, rng);
  sluhead::init_params(cfg.slu, vocabs.slu.size(), vocabs.boe_labels.size(),
                       cfg.enc.width, cfg.kt.teacher_width, m.params, rng);
  return m;
}

std::vector<int> Model::teacher_token_ids(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  for (const auto& tok : tokens) {
    auto it = std::find(vocabs.teacher_tokens.begin(),
                        vocabs.teacher_tokens.end(), tok);
    if (it == vocabs.teacher_tokens.end()) {
      throw std::invalid_argument("token outside teacher vocabulary: " + tok);
    }
    ids.push_back(static_cast<int>(it - vocabs.teacher_tokens.begin()));
  }
  return ids;
}

Scorer::Scorer(Model& model, const Tensor& frames, bool gated)
    : gated_(gated) {
  binding_ = ad::bind_params(tape_, model.params);
  auto enc = encoder::encode(tape_, binding_, frames, model.cfg.enc);
  h_value_ = tape_.value(enc.h);
  head_logits_ = enc.head_logits.back();
  frame_count_ = frames.rows();
  vocab_ = model.vocabs.slu.size();

  e_node_ = tape_.matmul(enc.h, ad::pnode(binding_, "joint.enc.w"));
  if (gated_) {
    auto pool = kt::cls_query(tape_, binding_, model.cls_token_id(), enc.h);
    boe_node_ = sluhead::boe_distribution(tape_, binding_, pool.pooled);
    gate_h_ = tape_.matmul(enc.h, ad::pnode(binding_, "joint.gate.h.w"));
    int v = tape_.add(
        tape_.matmul(boe_node_, ad::pnode(binding_, "joint.gate.boe.w")),
        tape_.matmul(pool.pooled, ad::pnode(binding_, "joint.gate.cls.w")));
    gate_v_ = tape_.reshape(v, {tape_.value(v).cols()});
  }

  sluhead::LstmState start = sluhead::lstm_start(tape_, binding_);
  states_.push_back(
      make_state(sluhead::lstm_step(tape_, binding_, blank(), start)));
}

Scorer::State Scorer::make_state(const sluhead::LstmState& lstm) {
  State s;
  s.lstm = lstm;
  int gp = tape_.matmul(lstm.h, ad::pnode(binding_, "joint.pred.w"));
  s.gp_row = tape_.add(tape_.reshape(gp, {tape_.value(gp).cols()}),
                       ad::pnode(binding_, "joint.b"));
  if (gated_) {
    int gg = tape_.matmul(lstm.h, ad::pnode(binding_, "joint.gate.g.w"));
    s.gate_row = tape_.reshape(gg, {tape_.value(gg).cols()});
  }
  return s;
}

int Scorer::advance(int state, int symbol) {
  auto key = std::make_pair(state, symbol);
  // Beam search frequently advances the same state with the same symbol;
  // dedupe so the tape does not grow quadratically.
  for (std::size_t i = 0; i < advance_keys_.size(); ++i) {
    if (advance_keys_[i] == key) return advance_vals_[i];
  }
  const State& prev = states_.at(static_cast<std::size_t>(state));
  int next = static_cast<int>(states_.size());
  states_.push_back(make_state(
      sluhead::lstm_step(tape_, binding_, symbol, prev.lstm)));
  advance_keys_.push_back(key);
  advance_vals_.push_back(next);
  return next;
}

std::vector<double> Scorer::log_probs(int state, std::size_t frame) {
  auto key = std::make_pair(state, frame);
  auto it = lp_cache_.find(key);
  if (it != lp_cache_.end()) return it->second;

  const State& s = states_.at(static_cast<std::size_t>(state));
  int pre = tape_.add(
      tape_.slice_rows(e_node_, frame, frame + 1), s.gp_row);
  if (gated_) {
    int act = tape_.sigmoid(
        tape_.add(tape_.slice_rows(gate_h_, frame, frame + 1),
                  tape_.add(s.gate_row, ad::pnode(binding_, "joint.gate.b"))));
    pre = tape_.add(pre, tape_.mul(act, gate_v_));
  }
  int lp = tape_.log_softmax(
      tape_.matmul(tape_.tanh(pre), ad::pnode(binding_, "joint.out.w")));
  std::vector<double> out = tape_.value(lp).vec();
  lp_cache_.emplace(key, out);
  return out;
}

Tensor Scorer::last_head_logits() const { return tape_.value(head_logits_); }

Tensor Scorer::boe_distribution_value() const {
  if (!gated_) {
    throw std::logic_error("boe_distribution_value: scorer is not gated");
  }
  return tape_.value(boe_node_);
}

}  // namespace slt::model
