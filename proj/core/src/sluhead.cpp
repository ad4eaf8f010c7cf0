// core/src/sluhead.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/sluhead.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace slt::sluhead {

namespace {

const char* kGates[4] = {"i", "f", "g", "o"};

}  // namespace

void init_params(const SluConfig& cfg, std::size_t vocab, std::size_t boe_size,
                 std::size_t enc_width, std::size_t teacher_width,
                 ParamStore& store, std::mt19937_64& rng) {
  const std::size_t m = cfg.embed_width, p = cfg.pred_width;
  const std::size_t j = cfg.joint_width;

  xavier_fill(store.create("pred.emb", {vocab, m}), rng);
  for (const char* g : kGates) {
    xavier_fill(store.create(std::string("pred.wx.") + g, {m, p}), rng);
    xavier_fill(store.create(std::string("pred.wh.") + g, {p, p}), rng);
    store.create(std::string("pred.b.") + g, {p});
  }

  xavier_fill(store.create("joint.enc.w", {enc_width, j}), rng);
  xavier_fill(store.create("joint.pred.w", {p, j}), rng);
  store.create("joint.b", {j});
  xavier_fill(store.create("joint.out.w", {j, vocab}), rng);

  store.create("joint.gate.h.w", {enc_width, j});
  store.create("joint.gate.g.w", {p, j});
  store.create("joint.gate.b", {j});
  // Gate content projections start at zero: the gated joint then equals the
  // plain one, so SLU adaptation starts from the pretrained behavior.
  store.create("joint.gate.boe.w", {boe_size, j});
  store.create("joint.gate.cls.w", {teacher_width, j});

  xavier_fill(store.create("boe.w", {teacher_width, boe_size}), rng);
  store.create("boe.b", {boe_size});
}

LstmState lstm_start(ad::Tape& tape, const ad::ParamBinding& params) {
  const std::size_t p = tape.value(ad::pnode(params, "pred.wh.i")).rows();
  LstmState s;
  s.h = tape.constant(Tensor({1, p}));
  s.c = tape.constant(Tensor({1, p}));
  return s;
}

LstmState lstm_step(ad::Tape& tape, const ad::ParamBinding& params,
                    int symbol, const LstmState& prev) {
  int x = tape.embedding(ad::pnode(params, "pred.emb"), {symbol});
  auto gate = [&](const char* g) {
    return tape.add(
        tape.add(tape.matmul(x, ad::pnode(params, std::string("pred.wx.") + g)),
                 tape.matmul(prev.h,
                             ad::pnode(params, std::string("pred.wh.") + g))),
        ad::pnode(params, std::string("pred.b.") + g));
  };
  int i = tape.sigmoid(gate("i"));
  int f = tape.sigmoid(gate("f"));
  int g = tape.tanh(gate("g"));
  int o = tape.sigmoid(gate("o"));
  LstmState next;
  next.c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  next.h = tape.mul(o, tape.tanh(next.c));
  return next;
}

int prediction_net(ad::Tape& tape, const ad::ParamBinding& params,
                   const lattice::SymbolSeq& targets, int blank) {
  LstmState s = lstm_start(tape, params);
  std::vector<int> rows;
  s = lstm_step(tape, params, blank, s);  // start symbol
  rows.push_back(s.h);
  for (int sym : targets) {
    s = lstm_step(tape, params, sym, s);
    rows.push_back(s.h);
  }
  return rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
}

namespace {

// Row vector [1 x j] -> [j] so it broadcasts over the frame axis.
int as_row(ad::Tape& tape, int node) {
  return tape.reshape(node, {tape.value(node).cols()});
}

}  // namespace

std::vector<int> joint_log_probs(ad::Tape& tape, const ad::ParamBinding& params,
                                 int h_node, int g_node,
                                 const GateContext* gate) {
  int e = tape.matmul(h_node, ad::pnode(params, "joint.enc.w"));  // [T x j]
  int gp = tape.matmul(g_node, ad::pnode(params, "joint.pred.w"));
  int gate_h = -1, gate_g = -1, gate_v = -1;
  if (gate != nullptr) {
    gate_h = tape.matmul(h_node, ad::pnode(params, "joint.gate.h.w"));
    gate_g = tape.matmul(g_node, ad::pnode(params, "joint.gate.g.w"));
    gate_v = as_row(
        tape,
        tape.add(tape.matmul(gate->p_boe,
                             ad::pnode(params, "joint.gate.boe.w")),
                 tape.matmul(gate->x_cls,
                             ad::pnode(params, "joint.gate.cls.w"))));
  }

  const std::size_t contexts = tape.value(g_node).rows();
  std::vector<int> out;
  for (std::size_t u = 0; u < contexts; ++u) {
    int gu = tape.add(as_row(tape, tape.slice_rows(gp, u, u + 1)),
                      ad::pnode(params, "joint.b"));
    int pre = tape.add(e, gu);
    if (gate != nullptr) {
      int act = tape.sigmoid(
          tape.add(gate_h,
                   tape.add(as_row(tape, tape.slice_rows(gate_g, u, u + 1)),
                            ad::pnode(params, "joint.gate.b"))));
      pre = tape.add(pre, tape.mul(act, gate_v));
    }
    out.push_back(tape.log_softmax(
        tape.matmul(tape.tanh(pre), ad::pnode(params, "joint.out.w"))));
  }
  return out;
}

int joint_plain(ad::Tape& tape, const ad::ParamBinding& params, int h_t,
                int g_u) {
  return joint_log_probs(tape, params, h_t, g_u, nullptr)[0];
}

int joint_gated(ad::Tape& tape, const ad::ParamBinding& params, int h_t,
                int g_u, int p_boe, int x_cls) {
  GateContext gc{p_boe, x_cls};
  return joint_log_probs(tape, params, h_t, g_u, &gc)[0];
}

int boe_logits(ad::Tape& tape, const ad::ParamBinding& params, int x_cls) {
  return tape.add(tape.matmul(x_cls, ad::pnode(params, "boe.w")),
                  ad::pnode(params, "boe.b"));
}

int boe_distribution(ad::Tape& tape, const ad::ParamBinding& params,
                     int x_cls) {
  return tape.softmax(boe_logits(tape, params, x_cls));
}

Tensor boe_target(const std::vector<std::size_t>& label_ids,
                  std::size_t boe_size) {
  if (label_ids.empty()) {
    throw std::invalid_argument("boe_target: the intent is always present");
  }
  Tensor t({1, boe_size});
  for (std::size_t id : label_ids) {
    if (id >= boe_size) {
      throw std::invalid_argument("boe_target: label id out of range");
    }
    t.at(0, id) = 1.0;
  }
  double sum = 0;
  for (double v : t.vec()) sum += v;
  for (double& v : t.vec()) v /= sum;
  return t;
}

int boe_loss(ad::Tape& tape, int logits, const Tensor& target) {
  const Tensor& lg = tape.value(logits);
  if (!lg.same_shape(target)) {
    throw ShapeError("boe_loss: target shape " + target.shape_str() +
                     " does not match logits " + lg.shape_str());
  }
  double sum = 0;
  for (double v : target.vec()) {
    if (v < 0) throw std::invalid_argument("boe_target entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("boe_target must sum to 1");
  }
  return tape.scale(
      tape.reduce_sum(tape.mul(tape.constant(target),
                               tape.log_softmax(logits))),
      -1.0);
}

}  // namespace slt::sluhead
