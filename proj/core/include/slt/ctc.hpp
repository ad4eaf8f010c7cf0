// core/include/slt/ctc.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_CTC_HPP_
#define SLT_CTC_HPP_

#include "slt/lattice.hpp"
#include "slt/tape.hpp"
#include "slt/tensor.hpp"

namespace slt::ctc {

struct CtcResult {
  bool feasible = true;
  double loss = 0.0;            // +inf when infeasible
  Tensor grad_logits;           // (softmax - occupancy) per frame; empty when infeasible
};

/// Negative log-likelihood of target y under per-frame emissions.
/// `logits` is [T x |V|], unnormalized; log_softmax is applied internally.
/// Forward-backward over the blank-augmented label sequence, all in log
/// space.  Targets whose minimal alignment length exceeds T come back as
/// an explicit infeasible result.
CtcResult ctc_loss(const Tensor& logits, const lattice::SymbolSeq& y,
                   int blank);

/// Per-frame posteriors P(symbol | frame), i.e. softmax of the logits.
/// Used by the alignment dumps.
Tensor frame_posteriors(const Tensor& logits);

/// Rowwise argmax then collapse; ties break to the lowest symbol id.
lattice::SymbolSeq greedy_decode(const Tensor& logits, int blank);

/// Tape hook: registers the analytic gradient via a custom-gradient node.
/// Returns the loss node id, or -1 when the target is infeasible.
int ctc_loss_node(ad::Tape& tape, int logits_node, const lattice::SymbolSeq& y,
                  int blank);

}  // namespace slt::ctc

#endif  // SLT_CTC_HPP_
