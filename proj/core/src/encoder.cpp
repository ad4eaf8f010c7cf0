// core/src/encoder.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "slt/ctc.hpp"

namespace slt::encoder {

namespace {

void xavier(ParamStore& store, std::mt19937_64& rng, const std::string& name,
            std::size_t rows, std::size_t cols) {
  xavier_fill(store.create(name, {rows, cols}), rng);
}

void zeros(ParamStore& store, const std::string& name,
           std::vector<std::size_t> shape) {
  store.create(name, std::move(shape));
}

void ones(ParamStore& store, const std::string& name, std::size_t n) {
  Tensor& t = store.create(name, {n});
  for (double& v : t.vec()) v = 1.0;
}

std::string lyr(std::size_t j) { return "enc.l" + std::to_string(j) + "."; }
std::string hed(std::size_t k) { return "enc.head" + std::to_string(k) + "."; }

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || width < 1 || heads < 1 || input_width < 1) {
    throw std::invalid_argument("encoder config: extents must be positive");
  }
  if (width % heads != 0) {
    throw std::invalid_argument("encoder config: width not divisible by heads");
  }
  if (sctc_positions.empty()) {
    throw std::invalid_argument("encoder config: need at least one CTC head");
  }
  for (std::size_t k = 0; k < sctc_positions.size(); ++k) {
    if (sctc_positions[k] < 1 || sctc_positions[k] > layers) {
      throw std::invalid_argument("encoder config: head position out of range");
    }
    if (k > 0 && sctc_positions[k] <= sctc_positions[k - 1]) {
      throw std::invalid_argument(
          "encoder config: head positions must strictly increase");
    }
  }
  if (sctc_positions.back() != layers) {
    throw std::invalid_argument(
        "encoder config: last head must sit on the final layer");
  }
  if (sctc_targets.size() != sctc_positions.size()) {
    throw std::invalid_argument(
        "encoder config: one target kind per head position");
  }
}

Tensor positional_encoding(std::size_t frames, std::size_t width) {
  Tensor p({frames, width});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      const double exponent =
          static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, exponent);
      p.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

void init_params(const EncoderConfig& cfg, std::size_t asr_emit,
                 std::size_t slu_emit, ParamStore& store,
                 std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = cfg.width, dh = d / cfg.heads, f = cfg.ff_mult * d;

  xavier(store, rng, "enc.in.w", cfg.input_width, d);
  zeros(store, "enc.in.b", {d});

  for (std::size_t j = 1; j <= cfg.layers; ++j) {
    ones(store, lyr(j) + "ln1.g", d);
    zeros(store, lyr(j) + "ln1.b", {d});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      xavier(store, rng, lyr(j) + "attn.q" + std::to_string(h), d, dh);
      xavier(store, rng, lyr(j) + "attn.k" + std::to_string(h), d, dh);
      xavier(store, rng, lyr(j) + "attn.v" + std::to_string(h), d, dh);
    }
    xavier(store, rng, lyr(j) + "attn.out.w", d, d);
    zeros(store, lyr(j) + "attn.out.b", {d});
    ones(store, lyr(j) + "ln2.g", d);
    zeros(store, lyr(j) + "ln2.b", {d});
    xavier(store, rng, lyr(j) + "ff.w1", d, f);
    zeros(store, lyr(j) + "ff.b1", {f});
    xavier(store, rng, lyr(j) + "ff.w2", f, d);
    zeros(store, lyr(j) + "ff.b2", {d});
  }

  for (std::size_t k = 0; k < cfg.head_count(); ++k) {
    const std::size_t emit =
        cfg.sctc_targets[k] == HeadTarget::kAsr ? asr_emit : slu_emit;
    xavier(store, rng, hed(k) + "emit.w", d, emit);
    zeros(store, hed(k) + "emit.b", {emit});
    // Conditioning projection starts at zero so early training matches the
    // unconditioned model; it has no bias (zero weights must mean Z == 0).
    zeros(store, hed(k) + "cond.w", {emit, d});
  }
}

EncoderState encode(ad::Tape& tape, const ad::ParamBinding& params,
                    const Tensor& frames, const EncoderConfig& cfg) {
  cfg.validate();
  if (frames.rank() != 2 || frames.cols() != cfg.input_width) {
    throw ShapeError("encode: frames must be [T x " +
                     std::to_string(cfg.input_width) + "], got " +
                     frames.shape_str());
  }
  const std::size_t T = frames.rows(), d = cfg.width;
  const std::size_t dh = d / cfg.heads;
  auto p = [&](const std::string& n) { return ad::pnode(params, n); };

  // Positions join the raw frames before the input projection, so zero
  // parameters still give an exactly-zero encoder output.
  int x = tape.constant(frames);
  x = tape.add(x, tape.constant(positional_encoding(T, cfg.input_width)));
  x = tape.add(tape.matmul(x, p("enc.in.w")), p("enc.in.b"));

  EncoderState state;
  std::size_t next_head = 0;
  int pending_z = -1;  // conditioning vector awaiting injection
  for (std::size_t j = 1; j <= cfg.layers; ++j) {
    int in = x;
    if (pending_z >= 0) {
      in = tape.add(in, pending_z);
      pending_z = -1;
    }

    int ln1 = tape.layer_norm(in, p(lyr(j) + "ln1.g"), p(lyr(j) + "ln1.b"));
    std::vector<int> ctx;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      int q = tape.matmul(ln1, p(lyr(j) + "attn.q" + std::to_string(h)));
      int k = tape.matmul(ln1, p(lyr(j) + "attn.k" + std::to_string(h)));
      int v = tape.matmul(ln1, p(lyr(j) + "attn.v" + std::to_string(h)));
      int scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                              1.0 / std::sqrt(static_cast<double>(dh)));
      ctx.push_back(tape.matmul(tape.softmax(scores), v));
    }
    int attn = tape.add(tape.matmul(tape.concat_cols(ctx),
                                    p(lyr(j) + "attn.out.w")),
                        p(lyr(j) + "attn.out.b"));
    int a = tape.add(in, attn);

    int ln2 = tape.layer_norm(a, p(lyr(j) + "ln2.g"), p(lyr(j) + "ln2.b"));
    int ff = tape.add(
        tape.matmul(tape.tanh(tape.add(tape.matmul(ln2, p(lyr(j) + "ff.w1")),
                                       p(lyr(j) + "ff.b1"))),
                    p(lyr(j) + "ff.w2")),
        p(lyr(j) + "ff.b2"));
    x = tape.add(a, ff);

    if (next_head < cfg.head_count() && cfg.sctc_positions[next_head] == j) {
      const std::string hp = hed(next_head);
      int logits = tape.add(tape.matmul(x, p(hp + "emit.w")),
                            p(hp + "emit.b"));
      int z = tape.matmul(tape.softmax(logits), p(hp + "cond.w"));
      state.head_logits.push_back(logits);
      state.head_z.push_back(z);
      pending_z = z;
      ++next_head;
    }
  }

  state.x_last = x;
  state.h = tape.add(x, state.head_z.back());
  return state;
}

int sctc_loss(ad::Tape& tape, const EncoderState& state,
              const std::vector<lattice::SymbolSeq>& targets, int blank) {
  if (targets.size() != state.head_logits.size()) {
    throw ShapeError("sctc_loss: need one target per CTC head");
  }
  int total = -1;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    int lk = ctc::ctc_loss_node(tape, state.head_logits[k], targets[k], blank);
    if (lk < 0) return -1;  // infeasible example
    total = total < 0 ? lk : tape.add(total, lk);
  }
  return tape.scale(total, 1.0 / static_cast<double>(targets.size()));
}

}  // namespace slt::encoder
