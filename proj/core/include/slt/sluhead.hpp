// core/include/slt/sluhead.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_SLUHEAD_HPP_
#define SLT_SLUHEAD_HPP_

#include <cstddef>
#include <random>
#include <vector>

#include "slt/lattice.hpp"
#include "slt/tape.hpp"
#include "slt/tensor.hpp"

namespace slt::sluhead {

struct SluConfig {
  std::size_t pred_width = 48;   // p: prediction-net hidden width
  std::size_t joint_width = 32;  // j
  std::size_t embed_width = 24;  // prediction-net input embedding
};

/// Creates prediction-net ("pred."), joint ("joint.") and BOE-head ("boe.")
/// parameters.  `vocab` is |V_S| + blank; `boe_size` the intent+slot-type
/// inventory; `enc_width`/`teacher_width` size the gate projections.
void init_params(const SluConfig& cfg, std::size_t vocab, std::size_t boe_size,
                 std::size_t enc_width, std::size_t teacher_width,
                 ParamStore& store, std::mt19937_64& rng);

/// Runs the single-layer LSTM over [start] + targets and returns G, one row
/// per context u = 0..U.  The blank embedding row doubles as the start
/// symbol.
int prediction_net(ad::Tape& tape, const ad::ParamBinding& params,
                   const lattice::SymbolSeq& targets, int blank);

/// One LSTM step; exposed so incremental decoding shares the exact
/// arithmetic of prediction_net.
struct LstmState {
  int h = -1;  // [1 x p]
  int c = -1;  // [1 x p]
};
LstmState lstm_step(ad::Tape& tape, const ad::ParamBinding& params,
                    int symbol, const LstmState& prev);
LstmState lstm_start(ad::Tape& tape, const ad::ParamBinding& params);

/// Optional conditioning inputs for the gated joint network.
struct GateContext {
  int p_boe = -1;  // [1 x boe] distribution node
  int x_cls = -1;  // [1 x e] pooled utterance vector node
};

/// Per-context emission log-probabilities: element u is a [frames x vocab]
/// node for prediction state g_u.  `gate == nullptr` gives the plain joint
/// network; otherwise the sigmoid-gated variant.
std::vector<int> joint_log_probs(ad::Tape& tape, const ad::ParamBinding& params,
                                 int h_node, int g_node,
                                 const GateContext* gate);

/// Single-position conveniences (h_t [1 x d], g_u [1 x p]).
int joint_plain(ad::Tape& tape, const ad::ParamBinding& params, int h_t,
                int g_u);
int joint_gated(ad::Tape& tape, const ad::ParamBinding& params, int h_t,
                int g_u, int p_boe, int x_cls);

/// Bag-of-entities head over x_[CLS].
int boe_logits(ad::Tape& tape, const ad::ParamBinding& params, int x_cls);
int boe_distribution(ad::Tape& tape, const ad::ParamBinding& params,
                     int x_cls);

/// L1-normalized multi-hot over the label inventory.  Throws if empty.
Tensor boe_target(const std::vector<std::size_t>& label_ids,
                  std::size_t boe_size);

/// Soft cross-entropy: -sum_k target_k * log_softmax(logits)_k.
int boe_loss(ad::Tape& tape, int logits, const Tensor& target);

}  // namespace slt::sluhead

#endif  // SLT_SLUHEAD_HPP_
