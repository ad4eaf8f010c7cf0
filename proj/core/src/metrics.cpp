// core/src/metrics.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace slt::metrics {

double wer(const std::vector<std::string>& hyp,
           const std::vector<std::string>& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  if (m == 0) return static_cast<double>(n);  // |hyp| errors over length 1
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(m);
}

EntitySet parse_tags(const lattice::Vocab& slu_vocab,
                     const lattice::SymbolSeq& tags) {
  EntitySet out;
  std::size_t start = 0;
  if (!tags.empty() && slu_vocab.is_slu(tags[0]) &&
      slu_vocab.symbol(tags[0]).rfind("IN-", 0) == 0) {
    out.intent = slu_vocab.symbol(tags[0]).substr(3);
    start = 1;
  } else if (!tags.empty()) {
    ++out.malformed;  // missing leading intent
  }
  std::string value;
  for (std::size_t i = start; i < tags.size(); ++i) {
    const std::string& sym = slu_vocab.symbol(tags[i]);
    if (!slu_vocab.is_slu(tags[i])) {
      value += sym;
      continue;
    }
    if (sym.rfind("b-", 0) == 0) {
      out.entities.emplace_back(sym.substr(2), value);
      value.clear();
    } else {
      ++out.malformed;  // intent token mid-sequence
      value.clear();
    }
  }
  if (!value.empty()) ++out.malformed;  // trailing value without a slot
  return out;
}

SluScores slu_scores(const std::vector<EntitySet>& hyps,
                     const std::vector<EntitySet>& refs) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("slu_scores: list lengths differ");
  }
  std::size_t matches = 0, hyp_total = 0, ref_total = 0, intent_hits = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& e : refs[i].entities) ++counts[e];
    ref_total += refs[i].entities.size();
    hyp_total += hyps[i].entities.size();
    for (const auto& e : hyps[i].entities) {
      auto it = counts.find(e);
      if (it != counts.end() && it->second > 0) {
        --it->second;
        ++matches;
      }
    }
    if (hyps[i].intent == refs[i].intent) ++intent_hits;
  }

  SluScores s;
  s.precision = hyp_total == 0
                    ? (ref_total == 0 ? 1.0 : 0.0)
                    : static_cast<double>(matches) /
                          static_cast<double>(hyp_total);
  s.recall = ref_total == 0
                 ? (hyp_total == 0 ? 1.0 : 0.0)
                 : static_cast<double>(matches) /
                       static_cast<double>(ref_total);
  s.f1 = (s.precision + s.recall) > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  s.intent_acc = hyps.empty() ? 1.0
                              : static_cast<double>(intent_hits) /
                                    static_cast<double>(hyps.size());
  return s;
}

}  // namespace slt::metrics
