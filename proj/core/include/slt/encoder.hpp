// core/include/slt/encoder.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_ENCODER_HPP_
#define SLT_ENCODER_HPP_

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "slt/lattice.hpp"
#include "slt/tape.hpp"
#include "slt/tensor.hpp"

namespace slt::encoder {

/// Target kind for an intermediate CTC head: character transcript or
/// SLU tag sequence.
enum class HeadTarget { kAsr, kSlu };

struct EncoderConfig {
  std::size_t layers = 4;       // L
  std::size_t width = 64;       // d
  std::size_t heads = 4;        // attention heads (d divisible by heads)
  std::size_t ff_mult = 2;      // feed-forward hidden = ff_mult * d
  std::size_t input_width = 16; // feature width of the frame matrix
  // Strictly increasing layer indices carrying a CTC head; the last one
  // must be the final layer so its conditioning vector feeds the output.
  std::vector<std::size_t> sctc_positions = {2, 4};
  std::vector<HeadTarget> sctc_targets = {HeadTarget::kAsr, HeadTarget::kAsr};

  std::size_t head_count() const { return sctc_positions.size(); }
  void validate() const;  // throws std::invalid_argument
};

/// Everything the rest of the model needs from one encoder pass: per-head
/// emission logits (pre log_softmax), per-head conditioning vectors Z, and
/// the final output H = X_last + Z_last.
struct EncoderState {
  std::vector<int> head_logits;  // tape nodes, frames x head vocab
  std::vector<int> head_z;       // tape nodes, frames x d
  int x_last = -1;               // frames x d
  int h = -1;                    // frames x d
};

/// Sinusoidal position matrix [frames x width].
Tensor positional_encoding(std::size_t frames, std::size_t width);

/// Creates every encoder parameter in `store` (names under "enc.").
/// `asr_emit` / `slu_emit` are the emission vocab sizes (incl. blank) for
/// the two head kinds.
void init_params(const EncoderConfig& cfg, std::size_t asr_emit,
                 std::size_t slu_emit, ParamStore& store,
                 std::mt19937_64& rng);

/// Runs the encoder on `frames` [T x input_width] using parameters bound on
/// `tape`.  Throws ShapeError on a frame-width mismatch.
EncoderState encode(ad::Tape& tape, const ad::ParamBinding& params,
                    const Tensor& frames, const EncoderConfig& cfg);

/// Mean of the per-head CTC losses.  Returns -1 if any head's target is
/// infeasible for the frame count (caller skips the example).
int sctc_loss(ad::Tape& tape, const EncoderState& state,
              const std::vector<lattice::SymbolSeq>& targets, int blank);

}  // namespace slt::encoder

#endif  // SLT_ENCODER_HPP_
