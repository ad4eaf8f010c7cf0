// tests/test_metrics.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "slt/datasynth.hpp"
#include "slt/metrics.hpp"

using namespace slt;

namespace {

// Second, independent edit-distance implementation (full matrix).
std::size_t edit_distance_ref(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1,
                                          std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    }
  }
  return d[n][m];
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max) {
  static const char* kWords[] = {"a", "b", "c", "d", "e"};
  std::uniform_int_distribution<std::size_t> len(0, max);
  std::uniform_int_distribution<std::size_t> pick(0, 4);
  std::vector<std::string> out(len(rng));
  for (auto& w : out) w = kWords[pick(rng)];
  return out;
}

}  // namespace

TEST_CASE("wer basics") {
  CHECK(metrics::wer({"a", "b"}, {"a", "b"}) == 0.0);
  CHECK(metrics::wer({"a", "c"}, {"a", "b", "c"}) == doctest::Approx(1.0 / 3));
  CHECK(metrics::wer({}, {}) == 0.0);
  CHECK(metrics::wer({"a", "b"}, {}) == 2.0);  // |hyp| errors over length 1
}

TEST_CASE("wer equals an independent DP over random pairs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto hyp = random_tokens(rng, 8);
    auto ref = random_tokens(rng, 8);
    if (ref.empty()) continue;
    const double expect = static_cast<double>(edit_distance_ref(hyp, ref)) /
                          static_cast<double>(ref.size());
    CHECK(metrics::wer(hyp, ref) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("tag parsing recovers intent and entities") {
  auto g = datasynth::Grammar::Default();
  auto v = datasynth::build_vocabs(g);

  datasynth::Utterance u;
  u.intent = "weather_query";
  u.entities = {{"weather_descriptor", "cold"}, {"date", "today"}};
  auto tags = datasynth::slu_targets(v, u);

  auto parsed = metrics::parse_tags(v.slu, tags);
  CHECK(parsed.intent == "weather_query");
  CHECK(parsed.malformed == 0);
  REQUIRE(parsed.entities.size() == 2);
  CHECK(parsed.entities[0] ==
        std::pair<std::string, std::string>{"weather_descriptor", "cold"});
  CHECK(parsed.entities[1] ==
        std::pair<std::string, std::string>{"date", "today"});
}

TEST_CASE("tag parsing counts malformed pieces instead of failing") {
  auto g = datasynth::Grammar::Default();
  auto v = datasynth::build_vocabs(g);
  const int ch = v.slu.id("a");
  const int slot = v.slu.id("b-date");
  const int intent = v.slu.id("IN-alarm_set");
  REQUIRE(ch > 0);
  REQUIRE(slot > 0);
  REQUIRE(intent > 0);

  // Missing leading intent.
  auto p1 = metrics::parse_tags(v.slu, {ch, slot});
  CHECK(p1.intent.empty());
  CHECK(p1.malformed == 1);
  REQUIRE(p1.entities.size() == 1);

  // Trailing value without slot token.
  auto p2 = metrics::parse_tags(v.slu, {intent, ch, ch});
  CHECK(p2.intent == "alarm_set");
  CHECK(p2.entities.empty());
  CHECK(p2.malformed == 1);

  // Intent token mid-sequence drops the pending value.
  auto p3 = metrics::parse_tags(v.slu, {intent, ch, intent, ch, slot});
  CHECK(p3.malformed == 1);
  REQUIRE(p3.entities.size() == 1);
  CHECK(p3.entities[0].second == "a");

  // Empty sequence.
  auto p4 = metrics::parse_tags(v.slu, {});
  CHECK(p4.intent.empty());
  CHECK(p4.malformed == 0);
}

TEST_CASE("slu_scores hand examples") {
  metrics::EntitySet ref;
  ref.intent = "weather_query";
  ref.entities = {{"date", "today"}, {"weather_descriptor", "cold"}};
  metrics::EntitySet hyp;
  hyp.intent = "weather_query";
  hyp.entities = {{"date", "today"}};

  auto s = metrics::slu_scores({hyp}, {ref});
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 0.5);
  CHECK(s.f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(s.intent_acc == 1.0);

  auto perfect = metrics::slu_scores({ref}, {ref});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.intent_acc == 1.0);

  CHECK_THROWS_AS(metrics::slu_scores({hyp}, {}), std::invalid_argument);
}

namespace {

// Exhaustive maximum matching between two entity multisets: recursion over
// hypothesis entities, trying every unused reference entity.
std::size_t brute_force_matches(
    const std::vector<std::pair<std::string, std::string>>& hyp,
    const std::vector<std::pair<std::string, std::string>>& ref,
    std::size_t i, std::vector<bool>& used) {
  if (i == hyp.size()) return 0;
  std::size_t best = brute_force_matches(hyp, ref, i + 1, used);  // skip
  for (std::size_t j = 0; j < ref.size(); ++j) {
    if (used[j] || !(ref[j] == hyp[i])) continue;
    used[j] = true;
    best = std::max(best, 1 + brute_force_matches(hyp, ref, i + 1, used));
    used[j] = false;
  }
  return best;
}

}  // namespace

TEST_CASE("slu_scores equals the exhaustive matcher on random corpora") {
  static const char* kTypes[] = {"date", "time", "place"};
  static const char* kValues[] = {"x", "y"};
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> len(0, 4), t(0, 2), v(0, 1),
      in(0, 1);

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<metrics::EntitySet> hyps(4), refs(4);
    std::size_t expect_matches = 0, hyp_total = 0, ref_total = 0, hits = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      auto fill = [&](metrics::EntitySet& e) {
        e.intent = in(rng) ? "a" : "b";
        const std::size_t n = len(rng);
        for (std::size_t k = 0; k < n; ++k)
          e.entities.emplace_back(kTypes[t(rng)], kValues[v(rng)]);
      };
      fill(hyps[i]);
      fill(refs[i]);
      std::vector<bool> used(refs[i].entities.size(), false);
      expect_matches +=
          brute_force_matches(hyps[i].entities, refs[i].entities, 0, used);
      hyp_total += hyps[i].entities.size();
      ref_total += refs[i].entities.size();
      if (hyps[i].intent == refs[i].intent) ++hits;
    }
    auto s = metrics::slu_scores(hyps, refs);
    const double p = hyp_total ? double(expect_matches) / double(hyp_total)
                               : (ref_total == 0 ? 1.0 : 0.0);
    const double r = ref_total ? double(expect_matches) / double(ref_total)
                               : (hyp_total == 0 ? 1.0 : 0.0);
    CHECK(s.precision == doctest::Approx(p).epsilon(1e-15));
    CHECK(s.recall == doctest::Approx(r).epsilon(1e-15));
    if (s.precision + s.recall > 0) {
      CHECK(std::abs(s.f1 - 2 * s.precision * s.recall /
                                (s.precision + s.recall)) <= 1e-12);
    }
    CHECK(s.intent_acc == doctest::Approx(double(hits) / 4).epsilon(1e-15));

    // Order invariance.
    std::vector<metrics::EntitySet> hyps_r(hyps.rbegin(), hyps.rend());
    std::vector<metrics::EntitySet> refs_r(refs.rbegin(), refs.rend());
    auto s2 = metrics::slu_scores(hyps_r, refs_r);
    CHECK(s2.precision == s.precision);
    CHECK(s2.recall == s.recall);
    CHECK(s2.f1 == s.f1);
    CHECK(s2.intent_acc == s.intent_acc);
  }
}
