// tests/test_pipeline.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "slt/pipeline.hpp"

using namespace slt;

namespace {

model::ModelConfig tiny_cfg() {
  model::ModelConfig cfg;
  cfg.enc.layers = 2;
  cfg.enc.width = 8;
  cfg.enc.heads = 2;
  cfg.enc.input_width = 16;
  cfg.enc.sctc_positions = {1, 2};
  cfg.enc.sctc_targets = {encoder::HeadTarget::kAsr, encoder::HeadTarget::kAsr};
  cfg.kt.teacher_width = 4;
  cfg.slu.pred_width = 6;
  cfg.slu.joint_width = 5;
  cfg.slu.embed_width = 4;
  return cfg;
}

struct Fixture {
  datasynth::Grammar grammar = datasynth::Grammar::Default();
  datasynth::VocabSet vocabs = datasynth::build_vocabs(grammar);
  std::vector<datasynth::Utterance> data =
      datasynth::generate(grammar, 6, /*seed=*/11);
  model::Model m = model::Model::init(tiny_cfg(), vocabs, /*seed=*/7);

  pipeline::Batch batch(std::size_t n) const {
    pipeline::Batch b;
    for (std::size_t i = 0; i < n && i < data.size(); ++i)
      b.push_back(&data[i]);
    return b;
  }
};

}  // namespace

TEST_CASE("stage plan validation") {
  pipeline::StagePlan p;
  CHECK_NOTHROW(p.validate());
  p.lambda = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.lambda = 0.5;
  p.tau = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK(pipeline::parse_stage_kind("slu_adapt_kt") ==
        pipeline::StageKind::kSluAdaptKt);
  CHECK(pipeline::to_string(pipeline::StageKind::kAsrFinetuneKt) ==
        "asr_finetune_kt");
  CHECK_THROWS_AS(pipeline::parse_stage_kind("nope"), std::invalid_argument);
}

TEST_CASE("joint loss is an exact affine mix of its two parts") {
  Fixture f;
  auto b = f.batch(4);
  auto at1 = pipeline::loss_jnt(f.m, b, 1.0, false);
  auto at0 = pipeline::loss_jnt(f.m, b, 0.0, false);
  auto mid = pipeline::loss_jnt(f.m, b, 0.5, false);
  CHECK(std::abs(at1.total - at1.rnnt) <= 1e-12);
  CHECK(std::abs(at0.total - at0.sctc) <= 1e-12);
  // Parts are identical across lambda; the mix is affine in them.
  CHECK(at1.rnnt == mid.rnnt);
  CHECK(at0.sctc == mid.sctc);
  CHECK(std::abs(mid.total - (0.5 * mid.rnnt + 0.5 * mid.sctc)) <= 1e-12);
  CHECK(mid.used == 4);
}

TEST_CASE("pretraining loss with alignment decomposes per component") {
  Fixture f;
  auto b = f.batch(4);
  kt::SyntheticTeacher teacher(3, tiny_cfg().kt.teacher_width);
  auto off = pipeline::loss_asr_kt(f.m, b, teacher, 0.5, 0.0, 0.07, false);
  auto on = pipeline::loss_asr_kt(f.m, b, teacher, 0.5, 1.0, 0.07, false);
  CHECK(std::abs(off.total - (0.5 * off.rnnt + 0.5 * off.sctc)) <= 1e-12);
  CHECK(on.rnnt == off.rnnt);
  CHECK(on.sctc == off.sctc);
  CHECK(on.align == off.align);
  CHECK(on.align > 0);
  CHECK(std::abs((on.total - off.total) - on.align) <= 1e-12);
  // The transducer target here is the transcript, not the tag sequence.
  auto slu = pipeline::loss_jnt(f.m, b, 1.0, false);
  CHECK(on.rnnt != slu.rnnt);
}

TEST_CASE("gated adaptation loss reduces to the plain joint loss") {
  Fixture f;
  auto b = f.batch(4);
  // Gate content projections start at zero, so the reduction holds on the
  // freshly initialized model.
  auto plain = pipeline::loss_jnt(f.m, b, 0.5, false);
  auto gated = pipeline::loss_jnt_kt(f.m, b, 0.5, 0.0, false);
  CHECK(std::abs(gated.total - plain.total) <= 1e-12);
  CHECK(gated.boe > 0);

  auto with_boe = pipeline::loss_jnt_kt(f.m, b, 0.5, 0.1, false);
  CHECK(std::abs(with_boe.total - (plain.total + 0.1 * with_boe.boe)) <=
        1e-12);
}

TEST_CASE("adam takes the textbook first step") {
  ParamStore store;
  store.create("w", {2}) = Tensor({2}, {1.0, -2.0});
  store.grad("w") = Tensor({2}, {0.5, -1.0});
  pipeline::AdamOptions opt;
  opt.lr = 0.1;
  opt.clip = 0;  // disabled
  pipeline::Adam adam(store, opt);
  adam.step();
  // First step: m-hat = g, v-hat = g^2, update = lr * g / (|g| + eps).
  CHECK(store.get("w")[0] ==
        doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(store.get("w")[1] ==
        doctest::Approx(-2.0 + 0.1 * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(store.grad("w")[0] == 0.0);  // consumed
}

TEST_CASE("adam clips by global gradient norm") {
  ParamStore store;
  store.create("w", {1}) = Tensor({1}, {0.0});
  store.grad("w") = Tensor({1}, {100.0});
  pipeline::AdamOptions opt;
  opt.lr = 1.0;
  opt.clip = 5.0;
  pipeline::Adam adam(store, opt);
  adam.step();
  // Clipped gradient is 5; first-step update is lr * 5 / (5 + eps) ~= 1.
  CHECK(store.get("w")[0] == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("zero epochs and zero learning rate leave parameters unchanged") {
  Fixture f;
  pipeline::StagePlan plan;
  plan.kind = pipeline::StageKind::kAsrPretrain;
  plan.epochs = 0;
  auto before = f.m.params;  // ParamStore copy
  auto res = pipeline::train_stage(f.m, plan, f.data, nullptr, nullptr, 0, 3);
  CHECK(res.epoch_losses.empty());
  for (const auto& name : before.names()) {
    CHECK(f.m.params.get(name).vec() == before.get(name).vec());
  }

  plan.epochs = 1;
  plan.lr = 0.0;
  pipeline::train_stage(f.m, plan, f.data, nullptr, nullptr, 0, 3);
  for (const auto& name : before.names()) {
    CHECK(f.m.params.get(name).vec() == before.get(name).vec());
  }
}

TEST_CASE("training reduces the loss and is bit-deterministic") {
  pipeline::StagePlan plan;
  plan.kind = pipeline::StageKind::kSluAdaptKt;
  plan.epochs = 3;
  plan.seed = 9;

  Fixture f1, f2;
  std::ostringstream rec1, rec2;
  auto r1 = pipeline::train_stage(f1.m, plan, f1.data, nullptr, &rec1, 42, 3);
  auto r2 = pipeline::train_stage(f2.m, plan, f2.data, nullptr, &rec2, 42, 3);

  REQUIRE(r1.epoch_losses.size() == 3);
  CHECK(r1.epoch_losses.back().total < r1.epoch_losses.front().total);

  CHECK(rec1.str() == rec2.str());
  CHECK(rec1.str().find("\"config_hash\":42") != std::string::npos);
  for (const auto& name : f1.m.params.names()) {
    CHECK(f1.m.params.get(name).vec() == f2.m.params.get(name).vec());
  }
}

TEST_CASE("evaluation runs over a decoded split") {
  Fixture f;
  auto ev = pipeline::evaluate(f.m, f.data, /*slu=*/true, /*gated=*/false, 0);
  CHECK(ev.token_wer >= 0.0);
  CHECK(ev.slu.intent_acc >= 0.0);
  CHECK(ev.slu.intent_acc <= 1.0);
  auto eb = pipeline::evaluate(f.m, f.data, true, false, 1);
  CHECK(eb.token_wer == ev.token_wer);  // beam 1 matches greedy
}

TEST_CASE("ablation grid trains one fresh model per cell and seed") {
  Fixture f;
  pipeline::StagePlan plan;
  plan.kind = pipeline::StageKind::kSluAdapt;
  plan.epochs = 1;
  std::vector<std::vector<encoder::HeadTarget>> grid = {
      {encoder::HeadTarget::kAsr, encoder::HeadTarget::kAsr},
      {encoder::HeadTarget::kSlu, encoder::HeadTarget::kSlu}};
  auto rows = pipeline::ablation_matrix(tiny_cfg(), f.vocabs, {plan}, f.data,
                                        f.data, grid, {1, 2}, nullptr);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].targets[0] == encoder::HeadTarget::kAsr);
  CHECK(rows[2].targets[0] == encoder::HeadTarget::kSlu);
  CHECK(rows[0].seed == 1);
  CHECK(rows[1].seed == 2);
  // Same cell, same seed reproduces identically.
  auto again = pipeline::ablation_matrix(tiny_cfg(), f.vocabs, {plan}, f.data,
                                         f.data, {grid[0]}, {1}, nullptr);
  CHECK(again[0].final_loss == rows[0].final_loss);
  CHECK(again[0].eval.slu.f1 == rows[0].eval.slu.f1);
}
