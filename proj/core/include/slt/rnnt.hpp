// core/include/slt/rnnt.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_RNNT_HPP_
#define SLT_RNNT_HPP_

#include <memory>
#include <vector>

#include "slt/lattice.hpp"
#include "slt/tape.hpp"
#include "slt/tensor.hpp"

namespace slt::rnnt {

/// Per-(t,u) joint-network log-probabilities, [T x (U+1) x V], each (t,u)
/// slice normalized.
struct JointLogProbs {
  Tensor values;  // rank 3
  std::size_t frames() const { return values.extent(0); }
  std::size_t contexts() const { return values.extent(1); }  // U+1
  std::size_t vocab() const { return values.extent(2); }
  double at(std::size_t t, std::size_t u, std::size_t k) const {
    return values.vec()[(t * contexts() + u) * vocab() + k];
  }
};

struct RnntResult {
  double loss = 0.0;
  Tensor grad;  // same shape as jlp.values, d loss / d log-prob
};

/// -log sum over all blank/emit paths through the (T+1) x (U+1) trellis.
/// Gradients come from the alpha/beta posteriors.
RnntResult rnnt_loss(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                     int blank);

/// Forward variables alpha(t,u) in log space, (T+1) x (U+1); alpha(T,U) is
/// the total path log-probability.  Exposed for the trellis invariant
/// checks and alignment dumps.
Tensor forward_lattice(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                       int blank);
Tensor backward_lattice(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                        int blank);

/// Emission-side view of a transducer model: an opaque prediction-network
/// state advanced per emitted symbol, and joint log-probabilities per
/// frame.  Implemented by the full model; kept abstract so decoding is
/// independent of model wiring.
class TransducerScorer {
 public:
  virtual ~TransducerScorer() = default;
  virtual std::size_t frames() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual int blank() const = 0;
  // State handles are indices into scorer-owned storage.
  virtual int start_state() = 0;
  virtual int advance(int state, int symbol) = 0;
  virtual std::vector<double> log_probs(int state, std::size_t frame) = 0;
};

struct Hypothesis {
  lattice::SymbolSeq symbols;
  double score = 0.0;  // total path log-probability
};

/// Per frame, emit argmax non-blank symbols until blank or the cap, then
/// move on.  Returns the emitted sequence and its path score.
Hypothesis greedy_decode(TransducerScorer& scorer,
                         std::size_t max_symbols_per_frame = 5);

/// Breadth-first beam over the trellis; beam == 1 reproduces the greedy
/// decisions exactly.  Hypotheses come back sorted by score, best first.
std::vector<Hypothesis> beam_decode(TransducerScorer& scorer, std::size_t beam,
                                    std::size_t max_symbols_per_frame = 5);

/// Tape hook for the analytic gradient.  `jlp_nodes` holds one [T x V]
/// log-prob node per prediction context u = 0..U.
int rnnt_loss_node(ad::Tape& tape, const std::vector<int>& jlp_nodes,
                   const lattice::SymbolSeq& s, int blank);

}  // namespace slt::rnnt

#endif  // SLT_RNNT_HPP_
