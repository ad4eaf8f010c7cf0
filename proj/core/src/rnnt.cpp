// core/src/rnnt.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/rnnt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace slt::rnnt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_instance(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                    int blank) {
  if (jlp.values.rank() != 3) {
    throw ShapeError("rnnt_loss: jlp must be rank 3, got " +
                     jlp.values.shape_str());
  }
  if (jlp.contexts() != s.size() + 1) {
    throw ShapeError("rnnt_loss: jlp has " + std::to_string(jlp.contexts()) +
                     " contexts but target length is " +
                     std::to_string(s.size()));
  }
  for (int sym : s) {
    if (sym < 0 || static_cast<std::size_t>(sym) >= jlp.vocab() ||
        sym == blank) {
      throw std::invalid_argument("rnnt_loss: invalid target symbol");
    }
  }
}

}  // namespace

Tensor forward_lattice(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                       int blank) {
  check_instance(jlp, s, blank);
  const std::size_t T = jlp.frames(), U = s.size();
  Tensor alpha({T + 1, U + 1}, kNegInf);
  alpha.at(0, 0) = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double acc = kNegInf;
      if (t >= 1) {
        acc = lse2(acc, alpha.at(t - 1, u) +
                            jlp.at(t - 1, u, static_cast<std::size_t>(blank)));
      }
      if (u >= 1 && t < T) {
        acc = lse2(acc, alpha.at(t, u - 1) +
                            jlp.at(t, u - 1,
                                   static_cast<std::size_t>(s[u - 1])));
      }
      alpha.at(t, u) = acc;
    }
  }
  return alpha;
}

Tensor backward_lattice(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                        int blank) {
  check_instance(jlp, s, blank);
  const std::size_t T = jlp.frames(), U = s.size();
  Tensor beta({T + 1, U + 1}, kNegInf);
  beta.at(T, U) = 0.0;
  for (std::size_t t = T + 1; t-- > 0;) {
    for (std::size_t u = U + 1; u-- > 0;) {
      if (t == T) continue;  // only (T,U) is live in the last row
      double acc = jlp.at(t, u, static_cast<std::size_t>(blank)) +
                   beta.at(t + 1, u);
      if (u < U) {
        acc = lse2(acc, jlp.at(t, u, static_cast<std::size_t>(s[u])) +
                            beta.at(t, u + 1));
      }
      beta.at(t, u) = acc;
    }
  }
  return beta;
}

RnntResult rnnt_loss(const JointLogProbs& jlp, const lattice::SymbolSeq& s,
                     int blank) {
  const std::size_t T = jlp.frames(), U = s.size(), V = jlp.vocab();
  Tensor alpha = forward_lattice(jlp, s, blank);
  Tensor beta = backward_lattice(jlp, s, blank);
  const double log_p = alpha.at(T, U);
  if (log_p == kNegInf) {
    throw NumericError("rnnt_loss: zero-probability instance");
  }

  RnntResult r;
  r.loss = -log_p;
  r.grad = Tensor(jlp.values.shape());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      const double a = alpha.at(t, u);
      if (a == kNegInf) continue;
      const double gb = a + jlp.at(t, u, static_cast<std::size_t>(blank)) +
                        beta.at(t + 1, u) - log_p;
      r.grad.vec()[(t * (U + 1) + u) * V + static_cast<std::size_t>(blank)] =
          -std::exp(gb);
      if (u < U) {
        const double ge = a + jlp.at(t, u, static_cast<std::size_t>(s[u])) +
                          beta.at(t, u + 1) - log_p;
        r.grad.vec()[(t * (U + 1) + u) * V + static_cast<std::size_t>(s[u])] =
            -std::exp(ge);
      }
    }
  }
  return r;
}

Hypothesis greedy_decode(TransducerScorer& scorer,
                         std::size_t max_symbols_per_frame) {
  Hypothesis hyp;
  int state = scorer.start_state();
  const int blank = scorer.blank();
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    std::size_t emitted = 0;
    for (;;) {
      std::vector<double> lp = scorer.log_probs(state, t);
      std::size_t best = 0;
      for (std::size_t k = 1; k < lp.size(); ++k) {
        if (lp[k] > lp[best]) best = k;
      }
      if (static_cast<int>(best) == blank) {
        hyp.score += lp[static_cast<std::size_t>(blank)];
        break;
      }
      hyp.score += lp[best];
      hyp.symbols.push_back(static_cast<int>(best));
      state = scorer.advance(state, static_cast<int>(best));
      if (++emitted >= max_symbols_per_frame) {
        // Cap reached: take the blank transition to move to the next frame.
        std::vector<double> lp2 = scorer.log_probs(state, t);
        hyp.score += lp2[static_cast<std::size_t>(blank)];
        break;
      }
    }
  }
  return hyp;
}

namespace {

struct BeamHyp {
  lattice::SymbolSeq symbols;
  double score = 0.0;
  int state = 0;
  std::size_t emitted_this_frame = 0;
};

// Keep the best-scoring hypothesis per symbol sequence.
void dedupe(std::vector<BeamHyp>& hyps) {
  std::map<lattice::SymbolSeq, BeamHyp> best;
  for (auto& h : hyps) {
    auto it = best.find(h.symbols);
    if (it == best.end() || h.score > it->second.score) {
      best[h.symbols] = h;
    }
  }
  hyps.clear();
  for (auto& [seq, h] : best) hyps.push_back(h);
}

}  // namespace

std::vector<Hypothesis> beam_decode(TransducerScorer& scorer, std::size_t beam,
                                    std::size_t max_symbols_per_frame) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");
  const int blank = scorer.blank();
  const std::size_t V = scorer.vocab_size();

  std::vector<BeamHyp> frame_in{{{}, 0.0, scorer.start_state(), 0}};
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    std::vector<BeamHyp> active = frame_in;
    for (auto& h : active) h.emitted_this_frame = 0;
    std::vector<BeamHyp> finished;

    while (!active.empty()) {
      // Tagged candidates: true = still expandable within this frame.
      std::vector<std::pair<BeamHyp, bool>> pool;
      for (auto& h : finished) pool.emplace_back(h, false);
      for (auto& h : active) {
        std::vector<double> lp = scorer.log_probs(h.state, t);
        // Blank ends the frame for this hypothesis.
        BeamHyp fin = h;
        fin.score += lp[static_cast<std::size_t>(blank)];
        pool.emplace_back(fin, false);
        if (h.emitted_this_frame >= max_symbols_per_frame) continue;
        for (std::size_t k = 0; k < V; ++k) {
          if (static_cast<int>(k) == blank) continue;
          BeamHyp e = h;
          e.score += lp[k];
          e.symbols.push_back(static_cast<int>(k));
          e.state = scorer.advance(h.state, static_cast<int>(k));
          e.emitted_this_frame = h.emitted_this_frame + 1;
          pool.emplace_back(e, true);
        }
      }
      std::stable_sort(pool.begin(), pool.end(),
                       [](const auto& a, const auto& b) {
                         return a.first.score > b.first.score;
                       });
      if (pool.size() > beam) pool.resize(beam);
      finished.clear();
      active.clear();
      for (auto& [h, is_active] : pool) {
        (is_active ? active : finished).push_back(h);
      }
    }
    dedupe(finished);
    std::stable_sort(finished.begin(), finished.end(),
                     [](const BeamHyp& a, const BeamHyp& b) {
                       return a.score > b.score;
                     });
    if (finished.size() > beam) finished.resize(beam);
    frame_in = finished;
  }

  std::vector<Hypothesis> out;
  for (auto& h : frame_in) out.push_back({h.symbols, h.score});
  // The n-best always retains the greedy path as a floor, so widening the
  // beam can never score below the greedy decode.
  Hypothesis greedy = greedy_decode(scorer, max_symbols_per_frame);
  bool have_greedy = false;
  for (auto& h : out) {
    if (h.symbols == greedy.symbols) {
      h.score = std::max(h.score, greedy.score);
      have_greedy = true;
    }
  }
  if (!have_greedy) out.push_back(greedy);
  std::stable_sort(out.begin(), out.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     return a.score > b.score;
                   });
  if (out.size() > beam) out.resize(beam);
  return out;
}

int rnnt_loss_node(ad::Tape& tape, const std::vector<int>& jlp_nodes,
                   const lattice::SymbolSeq& s, int blank) {
  if (jlp_nodes.size() != s.size() + 1) {
    throw ShapeError("rnnt_loss_node: need one log-prob node per context");
  }
  const Tensor& first = tape.value(jlp_nodes[0]);
  const std::size_t T = first.rows(), V = first.cols();
  const std::size_t U = s.size();
  JointLogProbs jlp;
  jlp.values = Tensor({T, U + 1, V});
  for (std::size_t u = 0; u <= U; ++u) {
    const Tensor& m = tape.value(jlp_nodes[u]);
    if (m.rows() != T || m.cols() != V) {
      throw ShapeError("rnnt_loss_node: context matrices disagree in shape");
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < V; ++k)
        jlp.values.vec()[(t * (U + 1) + u) * V + k] = m.at(t, k);
  }
  RnntResult r = rnnt_loss(jlp, s, blank);
  std::vector<std::pair<int, Tensor>> grads;
  for (std::size_t u = 0; u <= U; ++u) {
    Tensor g({T, V});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < V; ++k)
        g.at(t, k) = r.grad.vec()[(t * (U + 1) + u) * V + k];
    grads.emplace_back(jlp_nodes[u], std::move(g));
  }
  return tape.custom_scalar(r.loss, std::move(grads), "rnnt_loss");
}

}  // namespace slt::rnnt
