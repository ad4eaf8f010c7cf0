// core/include/slt/metrics.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_METRICS_HPP_
#define SLT_METRICS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "slt/lattice.hpp"

namespace slt::metrics {

/// Levenshtein(sub=del=ins=1) / |ref|.  An empty reference against a
/// non-empty hypothesis counts |hyp| errors over a length of 1.
double wer(const std::vector<std::string>& hyp,
           const std::vector<std::string>& ref);

/// Intent plus a multiset of (slot type, value) pairs parsed from a tag
/// sequence.  Tokens that violate the tag format (no leading intent,
/// intent tokens mid-sequence, trailing value without a slot token) are
/// dropped and counted in `malformed`.
struct EntitySet {
  std::string intent;
  std::vector<std::pair<std::string, std::string>> entities;
  std::size_t malformed = 0;
};

EntitySet parse_tags(const lattice::Vocab& slu_vocab,
                     const lattice::SymbolSeq& tags);

struct SluScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double intent_acc = 0;
};

/// Micro-averaged multiset matching on (type, value) pairs plus
/// exact-match intent accuracy.  Lists must have equal length.
SluScores slu_scores(const std::vector<EntitySet>& hyps,
                     const std::vector<EntitySet>& refs);

}  // namespace slt::metrics

#endif  // SLT_METRICS_HPP_
