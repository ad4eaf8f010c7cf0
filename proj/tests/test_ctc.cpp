// tests/test_ctc.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "slt/ctc.hpp"
#include "slt/lattice.hpp"
#include "test_util.hpp"

using namespace slt;
using lattice::SymbolSeq;
using testutil::random_tensor;

namespace {

// Enumeration-oracle loss: -log sum over the exact preimage set.
double oracle_ctc_loss(const Tensor& logits, const SymbolSeq& y,
                       const lattice::Vocab& vocab) {
  Tensor lp = testutil::ref_log_softmax(logits);
  auto alignments =
      lattice::enumerate_ctc_alignments(y, logits.rows(), vocab);
  std::vector<double> terms;
  for (const auto& a : alignments) {
    double s = 0;
    for (std::size_t t = 0; t < a.symbols.size(); ++t) {
      s += lp.at(t, static_cast<std::size_t>(a.symbols[t]));
    }
    terms.push_back(s);
  }
  return -testutil::lse(terms);
}

}  // namespace

TEST_CASE("uniform single frame gives ln 3") {
  Tensor logits({1, 3}, {0, 0, 0});
  auto r = ctc::ctc_loss(logits, {1}, 0);
  CHECK(r.feasible);
  CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("uniform two frames, three alignments of [a]") {
  Tensor logits({2, 3}, {0, 0, 0, 0, 0, 0});
  auto r = ctc::ctc_loss(logits, {1}, 0);
  // P = 3/9
  CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("loss equals enumeration oracle on random small instances") {
  std::mt19937_64 rng(23);
  lattice::Vocab vocab({"<b>", "a", "b", "c"}, 0);
  for (int it = 0; it < 50; ++it) {
    std::uniform_int_distribution<std::size_t> Td(1, 6), yd(0, 3);
    std::uniform_int_distribution<int> sym(1, 3);
    const std::size_t T = Td(rng);
    SymbolSeq y(yd(rng));
    for (int& s : y) s = sym(rng);
    Tensor logits = random_tensor({T, 4}, rng, -2, 2);
    auto r = ctc::ctc_loss(logits, y, 0);
    if (lattice::ctc_min_frames(y) > T) {
      CHECK(!r.feasible);
      continue;
    }
    CHECK(std::abs(r.loss - oracle_ctc_loss(logits, y, vocab)) <= 1e-10);
    CHECK(r.loss >= 0.0);
  }
}

TEST_CASE("loss is invariant to shifting a logits row") {
  std::mt19937_64 rng(29);
  Tensor logits = random_tensor({4, 3}, rng);
  SymbolSeq y{1, 2};
  double base = ctc::ctc_loss(logits, y, 0).loss;
  for (std::size_t j = 0; j < 3; ++j) logits.at(2, j) += 7.5;
  CHECK(ctc::ctc_loss(logits, y, 0).loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(31);
  SymbolSeq y{1, 2, 1};
  double err = ad::grad_check(
      [&y](ad::Tape& t, const std::vector<int>& ids) {
        return ctc::ctc_loss_node(t, ids[0], y, 0);
      },
      {random_tensor({5, 4}, rng, -1.5, 1.5)});
  CHECK(err <= 1e-4);
}

TEST_CASE("infeasible target reports explicitly instead of a silent number") {
  Tensor logits({2, 3});
  auto r = ctc::ctc_loss(logits, {1, 1}, 0);  // needs 3 frames
  CHECK(!r.feasible);
  CHECK(std::isinf(r.loss));
  ad::Tape t;
  int node = t.leaf(logits);
  CHECK(ctc::ctc_loss_node(t, node, {1, 1}, 0) == -1);
}

TEST_CASE("greedy decode is collapse of rowwise argmax") {
  // argmax path: [b, a, a, b, c]
  Tensor logits({5, 4},
                {9, 0, 0, 0,
                 0, 9, 0, 0,
                 0, 9, 0, 0,
                 9, 0, 0, 0,
                 0, 0, 0, 9});
  CHECK(ctc::greedy_decode(logits, 0) == SymbolSeq{1, 3});
  Tensor blanks({3, 4}, {9, 0, 0, 0, 9, 0, 0, 0, 9, 0, 0, 0});
  CHECK(ctc::greedy_decode(blanks, 0).empty());
}

TEST_CASE("greedy decode matches direct recomputation on random logits") {
  std::mt19937_64 rng(37);
  for (int it = 0; it < 50; ++it) {
    Tensor logits = random_tensor({6, 4}, rng);
    SymbolSeq path;
    for (std::size_t t = 0; t < 6; ++t) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (logits.at(t, k) > logits.at(t, best)) best = k;
      path.push_back(static_cast<int>(best));
    }
    CHECK(ctc::greedy_decode(logits, 0) ==
          lattice::collapse_ctc({path, lattice::AlignKind::kCtc}, 0));
  }
}
