// core/src/ctc.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace slt::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}


// Row-wise log_softmax into a fresh matrix.
Tensor log_probs_of(const Tensor& logits) {
  Tensor lp(logits.shape());
  const std::size_t T = logits.rows(), n = logits.cols();
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = &logits.vec()[t * n];
    double mx = *std::max_element(x, x + n);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    const double l = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) lp.at(t, j) = x[j] - l;
  }
  return lp;
}

}  // namespace

Tensor frame_posteriors(const Tensor& logits) {
  Tensor lp = log_probs_of(logits);
  for (double& v : lp.vec()) v = std::exp(v);
  return lp;
}

CtcResult ctc_loss(const Tensor& logits, const lattice::SymbolSeq& y,
                   int blank) {
  if (logits.rank() != 2) {
    throw ShapeError("ctc_loss: logits must be [T x V], got " +
                     logits.shape_str());
  }
  const std::size_t T = logits.rows();
  const std::size_t V = logits.cols();
  for (int s : y) {
    if (s < 0 || static_cast<std::size_t>(s) >= V || s == blank) {
      throw std::invalid_argument("ctc_loss: invalid target symbol");
    }
  }
  if (lattice::ctc_min_frames(y) > T) {
    CtcResult r;
    r.feasible = false;
    r.loss = std::numeric_limits<double>::infinity();
    return r;
  }

  const Tensor lp = log_probs_of(logits);
  const std::size_t M = 2 * y.size() + 1;
  std::vector<int> lab(M, blank);
  for (std::size_t i = 0; i < y.size(); ++i) lab[2 * i + 1] = y[i];

  auto idx = [M](std::size_t t, std::size_t s) { return t * M + s; };
  std::vector<double> alpha(T * M, kNegInf), beta(T * M, kNegInf);

  alpha[idx(0, 0)] = lp.at(0, static_cast<std::size_t>(lab[0]));
  if (M > 1) alpha[idx(0, 1)] = lp.at(0, static_cast<std::size_t>(lab[1]));
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < M; ++s) {
      double acc = alpha[idx(t - 1, s)];
      if (s >= 1) acc = lse2(acc, alpha[idx(t - 1, s - 1)]);
      if (s >= 2 && lab[s] != blank && lab[s] != lab[s - 2]) {
        acc = lse2(acc, alpha[idx(t - 1, s - 2)]);
      }
      alpha[idx(t, s)] = acc + lp.at(t, static_cast<std::size_t>(lab[s]));
    }
  }
  const double log_p = M > 1 ? lse2(alpha[idx(T - 1, M - 1)],
                                    alpha[idx(T - 1, M - 2)])
                             : alpha[idx(T - 1, M - 1)];

  beta[idx(T - 1, M - 1)] = lp.at(T - 1, static_cast<std::size_t>(lab[M - 1]));
  if (M > 1) {
    beta[idx(T - 1, M - 2)] =
        lp.at(T - 1, static_cast<std::size_t>(lab[M - 2]));
  }
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < M; ++s) {
      double acc = beta[idx(t + 1, s)];
      if (s + 1 < M) acc = lse2(acc, beta[idx(t + 1, s + 1)]);
      if (s + 2 < M && lab[s + 2] != blank && lab[s] != lab[s + 2]) {
        acc = lse2(acc, beta[idx(t + 1, s + 2)]);
      }
      beta[idx(t, s)] = acc + lp.at(t, static_cast<std::size_t>(lab[s]));
    }
  }

  CtcResult r;
  r.loss = -log_p;
  r.grad_logits = Tensor(logits.shape());
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> occ(V, 0.0);
    for (std::size_t s = 0; s < M; ++s) {
      const double g = alpha[idx(t, s)] + beta[idx(t, s)] -
                       lp.at(t, static_cast<std::size_t>(lab[s])) - log_p;
      if (g != kNegInf) occ[static_cast<std::size_t>(lab[s])] += std::exp(g);
    }
    for (std::size_t k = 0; k < V; ++k) {
      r.grad_logits.at(t, k) = std::exp(lp.at(t, k)) - occ[k];
    }
  }
  return r;
}

lattice::SymbolSeq greedy_decode(const Tensor& logits, int blank) {
  const std::size_t T = logits.rows(), V = logits.cols();
  lattice::SymbolSeq path(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < V; ++k) {
      if (logits.at(t, k) > logits.at(t, best)) best = k;
    }
    path[t] = static_cast<int>(best);
  }
  return lattice::collapse_ctc({path, lattice::AlignKind::kCtc}, blank);
}

int ctc_loss_node(ad::Tape& tape, int logits_node, const lattice::SymbolSeq& y,
                  int blank) {
  CtcResult r = ctc_loss(tape.value(logits_node), y, blank);
  if (!r.feasible) return -1;
  return tape.custom_scalar(r.loss, {{logits_node, std::move(r.grad_logits)}},
                            "ctc_loss");
}

}  // namespace slt::ctc
