// benchmarks/bench_losses.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <random>

#include <benchmark/benchmark.h>

#include "slt/ctc.hpp"
#include "slt/rnnt.hpp"

namespace {

slt::Tensor random_logits(std::size_t rows, std::size_t cols,
                          std::uint64_t seed) {
  slt::Tensor t({rows, cols});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (double& v : t.vec()) v = dist(rng);
  return t;
}

void BM_CtcLoss(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  slt::Tensor logits = random_logits(T, 40, 1);
  slt::lattice::SymbolSeq y;
  for (std::size_t i = 0; i < T / 3; ++i) y.push_back(1 + static_cast<int>(i % 30));
  for (auto _ : state) {
    auto r = slt::ctc::ctc_loss(logits, y, 0);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_CtcLoss)->Arg(32)->Arg(64)->Arg(128);

void BM_RnntLoss(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t U = T / 4, V = 40;
  slt::rnnt::JointLogProbs jlp;
  jlp.values = slt::Tensor({T, U + 1, V});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      double mx = -1e30;
      std::size_t base = (t * (U + 1) + u) * V;
      for (std::size_t k = 0; k < V; ++k) {
        jlp.values.vec()[base + k] = dist(rng);
        mx = std::max(mx, jlp.values.vec()[base + k]);
      }
      double s = 0;
      for (std::size_t k = 0; k < V; ++k)
        s += std::exp(jlp.values.vec()[base + k] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t k = 0; k < V; ++k) jlp.values.vec()[base + k] -= lse;
    }
  }
  slt::lattice::SymbolSeq y;
  for (std::size_t i = 0; i < U; ++i) y.push_back(1 + static_cast<int>(i % 30));
  for (auto _ : state) {
    auto r = slt::rnnt::rnnt_loss(jlp, y, 0);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_RnntLoss)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
