// tests/test_rnnt.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <cmath>
#include <map>
#include <random>

#include <doctest.h>

#include "slt/rnnt.hpp"
#include "test_util.hpp"

using namespace slt;
using lattice::SymbolSeq;
using testutil::random_tensor;

namespace {

rnnt::JointLogProbs uniform_jlp(std::size_t T, std::size_t U, std::size_t V) {
  rnnt::JointLogProbs jlp;
  jlp.values = Tensor({T, U + 1, V}, -std::log(static_cast<double>(V)));
  return jlp;
}

rnnt::JointLogProbs random_jlp(std::size_t T, std::size_t U, std::size_t V,
                               std::mt19937_64& rng) {
  rnnt::JointLogProbs jlp;
  jlp.values = Tensor({T, U + 1, V});
  std::uniform_real_distribution<double> dist(-2, 2);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      std::vector<double> row(V);
      for (double& v : row) v = dist(rng);
      const double l = testutil::lse(row);
      for (std::size_t k = 0; k < V; ++k)
        jlp.values.vec()[(t * (U + 1) + u) * V + k] = row[k] - l;
    }
  }
  return jlp;
}

double oracle_rnnt_loss(const rnnt::JointLogProbs& jlp, const SymbolSeq& y,
                        const lattice::Vocab& vocab) {
  auto paths = lattice::enumerate_rnnt_paths(y, jlp.frames(), vocab);
  std::vector<double> terms;
  for (const auto& p : paths) {
    double s = 0;
    std::size_t t = 0, u = 0;
    for (int sym : p.symbols) {
      s += jlp.at(t, u, static_cast<std::size_t>(sym));
      if (sym == vocab.blank()) {
        ++t;
      } else {
        ++u;
      }
    }
    terms.push_back(s);
  }
  return -testutil::lse(terms);
}

// Table-driven scorer for decode tests: log-probs depend on the frame and
// the last emitted symbol, drawn once from a seeded RNG.
class TableScorer : public rnnt::TransducerScorer {
 public:
  TableScorer(std::size_t T, std::size_t V, std::uint64_t seed, double spread)
      : T_(T), V_(V) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-spread, spread);
    table_.resize(T * V * V);
    for (double& v : table_) v = dist(rng);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t last = 0; last < V; ++last) {
        std::vector<double> row(V);
        for (std::size_t k = 0; k < V; ++k) row[k] = table_[(t * V + last) * V + k];
        const double l = testutil::lse(row);
        for (std::size_t k = 0; k < V; ++k)
          table_[(t * V + last) * V + k] = row[k] - l;
      }
    }
    states_.push_back(0);  // start: behaves like last symbol 0 (blank)
  }

  std::size_t frames() const override { return T_; }
  std::size_t vocab_size() const override { return V_; }
  int blank() const override { return 0; }
  int start_state() override { return 0; }
  int advance(int, int symbol) override {
    states_.push_back(symbol);
    return static_cast<int>(states_.size() - 1);
  }
  std::vector<double> log_probs(int state, std::size_t frame) override {
    const std::size_t last = static_cast<std::size_t>(states_.at(state));
    std::vector<double> out(V_);
    for (std::size_t k = 0; k < V_; ++k)
      out[k] = table_[(frame * V_ + last) * V_ + k];
    return out;
  }

  // Best path score for a fixed output sequence (Viterbi over the trellis
  // with the per-frame emission cap); independent oracle for the beam.
  double best_path_score(const SymbolSeq& y, std::size_t cap) {
    const std::size_t U = y.size();
    const double ninf = -std::numeric_limits<double>::infinity();
    auto lp = [&](std::size_t t, std::size_t u, std::size_t k) {
      const std::size_t last =
          u == 0 ? 0 : static_cast<std::size_t>(y[u - 1]);
      return table_[(t * V_ + last) * V_ + k];
    };
    std::vector<double> dp(U + 1, ninf);
    dp[0] = 0;
    for (std::size_t t = 0; t < T_; ++t) {
      // Within this frame: up to `cap` emissions, then one blank.
      // reach[u][e]: best score at frame t having emitted u total, e here.
      std::vector<std::vector<double>> reach(
          U + 1, std::vector<double>(cap + 1, ninf));
      for (std::size_t u = 0; u <= U; ++u) reach[u][0] = dp[u];
      for (std::size_t e = 0; e < cap; ++e) {
        for (std::size_t u = 0; u < U; ++u) {
          if (reach[u][e] == ninf) continue;
          reach[u + 1][e + 1] =
              std::max(reach[u + 1][e + 1],
                       reach[u][e] + lp(t, u, static_cast<std::size_t>(y[u])));
        }
      }
      std::vector<double> next(U + 1, ninf);
      for (std::size_t u = 0; u <= U; ++u) {
        for (std::size_t e = 0; e <= cap; ++e) {
          if (reach[u][e] == ninf) continue;
          next[u] = std::max(next[u], reach[u][e] + lp(t, u, 0));
        }
      }
      dp = next;
    }
    return dp[U];
  }

 private:
  std::size_t T_, V_;
  std::vector<double> table_;
  std::vector<int> states_;
};

}  // namespace

TEST_CASE("T=1 U=1 uniform: single path, loss ln 9") {
  auto jlp = uniform_jlp(1, 1, 3);
  auto r = rnnt::rnnt_loss(jlp, {1}, 0);
  CHECK(r.loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("T=2 U=1 uniform: two paths, loss ln(27/2)") {
  auto jlp = uniform_jlp(2, 1, 3);
  auto r = rnnt::rnnt_loss(jlp, {1}, 0);
  CHECK(r.loss == doctest::Approx(std::log(27.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("loss equals path-enumeration oracle on random instances") {
  std::mt19937_64 rng(41);
  lattice::Vocab vocab({"<b>", "a", "b", "c"}, 0);
  for (int it = 0; it < 50; ++it) {
    std::uniform_int_distribution<std::size_t> Td(1, 5), Ud(0, 3);
    std::uniform_int_distribution<int> sym(1, 3);
    const std::size_t T = Td(rng), U = Ud(rng);
    SymbolSeq y(U);
    for (int& s : y) s = sym(rng);
    auto jlp = random_jlp(T, U, 4, rng);
    auto r = rnnt::rnnt_loss(jlp, y, 0);
    CHECK(std::abs(r.loss - oracle_rnnt_loss(jlp, y, vocab)) <= 1e-10);
  }
}

TEST_CASE("extent mismatch is an error") {
  auto jlp = uniform_jlp(2, 1, 3);
  CHECK_THROWS_AS(rnnt::rnnt_loss(jlp, {1, 2}, 0), ShapeError);
}

TEST_CASE("forward and backward lattices agree on every anti-diagonal") {
  std::mt19937_64 rng(43);
  const std::size_t T = 4, U = 3;
  SymbolSeq y{1, 2, 1};
  auto jlp = random_jlp(T, U, 4, rng);
  Tensor alpha = rnnt::forward_lattice(jlp, y, 0);
  Tensor beta = rnnt::backward_lattice(jlp, y, 0);
  const double log_p = alpha.at(T, U);
  for (std::size_t c = 0; c <= T + U; ++c) {
    std::vector<double> terms;
    for (std::size_t t = 0; t <= T; ++t) {
      if (c < t || c - t > U) continue;
      terms.push_back(alpha.at(t, c - t) + beta.at(t, c - t));
    }
    CHECK(testutil::lse(terms) == doctest::Approx(log_p).epsilon(1e-9));
  }
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(47);
  SymbolSeq y{1, 2};
  const std::size_t T = 3, V = 4;
  std::vector<Tensor> points;
  for (std::size_t u = 0; u <= y.size(); ++u)
    points.push_back(random_tensor({T, V}, rng, -1, 1));
  double err = ad::grad_check(
      [&y](ad::Tape& t, const std::vector<int>& ids) {
        std::vector<int> lps;
        for (int id : ids) lps.push_back(t.log_softmax(id));
        return rnnt::rnnt_loss_node(t, lps, y, 0);
      },
      points);
  CHECK(err <= 1e-4);
}

TEST_CASE("greedy returns empty when blank always wins") {
  TableScorer scorer(4, 3, 7, 0.0);  // uniform: ties, argmax -> symbol 0 = blank
  auto hyp = rnnt::greedy_decode(scorer);
  CHECK(hyp.symbols.empty());
}

TEST_CASE("beam=1 reproduces greedy exactly") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TableScorer s1(5, 4, seed, 1.5), s2(5, 4, seed, 1.5);
    auto greedy = rnnt::greedy_decode(s1, 3);
    auto beam = rnnt::beam_decode(s2, 1, 3);
    REQUIRE(!beam.empty());
    CHECK(beam[0].symbols == greedy.symbols);
    CHECK(beam[0].score == doctest::Approx(greedy.score).epsilon(1e-12));
  }
}

TEST_CASE("wider beam never scores below greedy") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    TableScorer s1(5, 4, seed, 2.0), s2(5, 4, seed, 2.0);
    auto greedy = rnnt::greedy_decode(s1, 3);
    auto beam = rnnt::beam_decode(s2, 4, 3);
    CHECK(beam[0].score >= greedy.score - 1e-12);
  }
}

TEST_CASE("beam score is non-decreasing in beam width") {
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t b : {1u, 2u, 4u, 8u}) {
      TableScorer s(4, 3, seed, 2.0);
      auto beam = rnnt::beam_decode(s, b, 2);
      CHECK(beam[0].score >= prev - 1e-12);
      prev = std::max(prev, beam[0].score);
    }
  }
}

TEST_CASE("saturating beam contains the exhaustive-search optimum") {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    TableScorer s(3, 3, seed, 2.0);
    auto beam = rnnt::beam_decode(s, 64, 2);
    // Exhaustive: all sequences over {1,2} with length <= 3*2
    double best = -std::numeric_limits<double>::infinity();
    SymbolSeq best_seq;
    std::vector<SymbolSeq> all{{}};
    for (std::size_t len = 1; len <= 6; ++len) {
      std::vector<SymbolSeq> seqs{{}};
      for (std::size_t i = 0; i < len; ++i) {
        std::vector<SymbolSeq> grown;
        for (auto& q : seqs) {
          for (int sym : {1, 2}) {
            auto g = q;
            g.push_back(sym);
            grown.push_back(g);
          }
        }
        seqs = grown;
      }
      all.insert(all.end(), seqs.begin(), seqs.end());
    }
    TableScorer oracle(3, 3, seed, 2.0);
    for (auto& q : all) {
      const double sc = oracle.best_path_score(q, 2);
      if (sc > best) {
        best = sc;
        best_seq = q;
      }
    }
    CHECK(beam[0].score == doctest::Approx(best).epsilon(1e-9));
  }
}
