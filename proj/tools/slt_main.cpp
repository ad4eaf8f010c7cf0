// tools/slt_main.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Command-line front end: data synthesis, verification suites, staged
// training, decoding, evaluation, ablations, alignment dumps.
// Exit codes: 0 success, 1 validation error, 2 verification failure,
// 3 divergence during training.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slt/config.hpp"
#include "slt/ctc.hpp"
#include "slt/datasynth.hpp"
#include "slt/kt.hpp"
#include "slt/metrics.hpp"
#include "slt/model.hpp"
#include "slt/pipeline.hpp"
#include "slt/rnnt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slt;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitVerification = 2;
constexpr int kExitDivergence = 3;

std::uint64_t vocab_hash(const datasynth::VocabSet& v) {
  std::string all;
  for (const auto& s : v.slu.symbols()) {
    all += s;
    all += '\x1f';
  }
  return fnv1a(all);
}

kt::SyntheticTeacher make_teacher(const config::RunConfig& c) {
  return kt::SyntheticTeacher(c.seed ^ 0x7e0acbe5ULL,
                              c.model.kt.teacher_width);
}

std::vector<datasynth::Utterance> load_split(const std::string& dir,
                                             const std::string& split) {
  return datasynth::read_utterances(dir + "/" + split + ".jsonl");
}

// ---------------------------------------------------------------- synth --

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  auto c = config::load_run_config(config_path);
  auto grammar = c.grammar();
  auto vocabs = datasynth::build_vocabs(grammar);
  fs::create_directories(out_dir);
  datasynth::write_manifest(out_dir + "/manifest.json", grammar, vocabs,
                            c.hash());
  const std::size_t w = c.model.enc.input_width;
  struct Split {
    const char* name;
    std::size_t count;
    std::uint64_t salt;
  } splits[] = {{"train", c.train_count, 1},
                {"dev", c.dev_count, 2},
                {"test", c.test_count, 3}};
  for (const auto& s : splits) {
    auto utts = datasynth::generate(grammar, s.count, c.seed * 8191 + s.salt,
                                    w);
    datasynth::write_utterances(out_dir + "/" + std::string(s.name) +
                                    ".jsonl",
                                utts);
    std::cout << s.name << ": " << utts.size() << " utterances\n";
  }
  return 0;
}

// --------------------------------------------------------------- verify --

struct SuiteReport {
  bool ok = true;
  void check(bool pass, const std::string& what) {
    std::cout << (pass ? "ok   " : "FAIL ") << what << "\n";
    ok = ok && pass;
  }
};

double ctc_enumeration_loss(const Tensor& logits, const lattice::SymbolSeq& y,
                            const lattice::Vocab& vocab) {
  // Independent oracle: explicit sum over every alignment in the preimage.
  const std::size_t T = logits.rows(), V = logits.cols();
  Tensor logp = logits;
  for (std::size_t t = 0; t < T; ++t) {
    double mx = logp.at(t, 0);
    for (std::size_t k = 1; k < V; ++k) mx = std::max(mx, logp.at(t, k));
    double z = 0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(logp.at(t, k) - mx);
    for (std::size_t k = 0; k < V; ++k)
      logp.at(t, k) -= mx + std::log(z);
  }
  double total = 0;
  for (const auto& a : lattice::enumerate_ctc_alignments(y, T, vocab)) {
    double lp = 0;
    for (std::size_t t = 0; t < T; ++t)
      lp += logp.at(t, static_cast<std::size_t>(a.symbols[t]));
    total += std::exp(lp);
  }
  return -std::log(total);
}

bool verify_oracles() {
  SuiteReport rep;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> logit(-2, 2);

  double worst_ctc = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t V = 2 + rng() % 3, T = 2 + rng() % 5;
    std::vector<std::string> syms = {"<b>"};
    for (std::size_t k = 1; k < V; ++k) syms.push_back(std::string(1, char('a' + k)));
    lattice::Vocab vocab(syms, 0);
    lattice::SymbolSeq y(rng() % 4);
    for (int& s : y) s = 1 + static_cast<int>(rng() % (V - 1));
    if (lattice::ctc_min_frames(y) > T) {
      --trial;
      continue;
    }
    Tensor logits({T, V});
    for (double& v : logits.vec()) v = logit(rng);
    auto res = ctc::ctc_loss(logits, y, 0);
    worst_ctc = std::max(
        worst_ctc, std::abs(res.loss - ctc_enumeration_loss(logits, y, vocab)));
  }
  rep.check(worst_ctc <= 1e-10, "ctc loss vs alignment enumeration (50)");

  double worst_rnnt = 0;
  bool counts_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t V = 2 + rng() % 3, T = 1 + rng() % 5;
    const std::size_t U = rng() % 4;
    std::vector<std::string> syms = {"<b>"};
    for (std::size_t k = 1; k < V; ++k) syms.push_back(std::string(1, char('a' + k)));
    lattice::Vocab vocab(syms, 0);
    lattice::SymbolSeq s(U);
    for (int& x : s) x = 1 + static_cast<int>(rng() % (V - 1));
    rnnt::JointLogProbs jlp;
    jlp.values = Tensor({T, U + 1, V});
    for (double& v : jlp.values.vec()) v = logit(rng);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t u = 0; u <= U; ++u) {
        double* row = jlp.values.data() + (t * (U + 1) + u) * V;
        double mx = row[0];
        for (std::size_t k = 1; k < V; ++k) mx = std::max(mx, row[k]);
        double z = 0;
        for (std::size_t k = 0; k < V; ++k) z += std::exp(row[k] - mx);
        for (std::size_t k = 0; k < V; ++k) row[k] -= mx + std::log(z);
      }
    }
    auto paths = lattice::enumerate_rnnt_paths(s, T, vocab);
    // C(T+U-1, U) interleavings: the final blank is forced.
    double expect = 1;
    for (std::size_t i = 0; i < U; ++i)
      expect = expect * double(T + U - 1 - i) / double(U - i);
    counts_ok = counts_ok &&
                std::llround(expect) == static_cast<long long>(paths.size());
    double total = 0;
    for (const auto& p : paths) {
      double lp = 0;
      std::size_t t = 0, u = 0;
      for (int sym : p.symbols) {
        lp += jlp.at(t, u, static_cast<std::size_t>(sym));
        if (sym == 0) ++t; else ++u;
      }
      total += std::exp(lp);
    }
    auto res = rnnt::rnnt_loss(jlp, s, 0);
    worst_rnnt = std::max(worst_rnnt, std::abs(res.loss + std::log(total)));
  }
  rep.check(worst_rnnt <= 1e-10, "transducer loss vs path enumeration (50)");
  rep.check(counts_ok, "transducer path count C(T+U-1, U)");
  return rep.ok;
}

bool verify_grads() {
  SuiteReport rep;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> dist(-1, 1);
  auto rand_t = [&](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = dist(rng);
    return t;
  };

  double err = ad::grad_check(
      [](ad::Tape& t, const std::vector<int>& xs) {
        return ctc::ctc_loss_node(t, xs[0], {1, 2}, 0);
      },
      {rand_t({5, 3})});
  rep.check(err <= 1e-4, "ctc loss gradient");

  err = ad::grad_check(
      [](ad::Tape& t, const std::vector<int>& xs) {
        std::vector<int> jlp;
        for (int x : xs) jlp.push_back(t.log_softmax(x));
        return rnnt::rnnt_loss_node(t, jlp, {1, 2}, 0);
      },
      {rand_t({4, 3}), rand_t({4, 3}), rand_t({4, 3})});
  rep.check(err <= 1e-4, "transducer loss gradient");

  Tensor by = rand_t({3, 4});
  err = ad::grad_check(
      [&by](ad::Tape& t, const std::vector<int>& xs) {
        return kt::align_loss(t, xs[0], t.constant(by), 0.07);
      },
      {rand_t({3, 4})});
  rep.check(err <= 1e-4, "alignment loss gradient");

  Tensor target = sluhead::boe_target({0, 2}, 4);
  err = ad::grad_check(
      [&target](ad::Tape& t, const std::vector<int>& xs) {
        return sluhead::boe_loss(t, xs[0], target);
      },
      {rand_t({1, 4})});
  rep.check(err <= 1e-4, "bag-of-entities loss gradient");
  return rep.ok;
}

model::ModelConfig verify_model_cfg() {
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

bool verify_identities() {
  SuiteReport rep;
  auto grammar = datasynth::Grammar::Default();
  auto vocabs = datasynth::build_vocabs(grammar);
  auto data = datasynth::generate(grammar, 4, 31);
  model::Model m = model::Model::init(verify_model_cfg(), vocabs, 5);
  pipeline::Batch batch;
  for (const auto& u : data) batch.push_back(&u);

  // (a) gate projections start at zero: gated joint == plain joint bit-level.
  {
    ad::Tape tape;
    auto binding = ad::bind_params(tape, m.params);
    auto enc = encoder::encode(tape, binding, data[0].frames, m.cfg.enc);
    auto g = sluhead::prediction_net(
        tape, binding, datasynth::slu_targets(vocabs, data[0]), 0);
    auto pool = kt::cls_query(tape, binding, m.cls_token_id(), enc.h);
    sluhead::GateContext gc;
    gc.p_boe = sluhead::boe_distribution(tape, binding, pool.pooled);
    gc.x_cls = pool.pooled;
    auto plain = sluhead::joint_log_probs(tape, binding, enc.h, g, nullptr);
    auto gated = sluhead::joint_log_probs(tape, binding, enc.h, g, &gc);
    bool same = true;
    for (std::size_t u = 0; u < plain.size(); ++u) {
      same = same && tape.value(plain[u]).vec() == tape.value(gated[u]).vec();
    }
    rep.check(same, "gated joint == plain joint at zero gate weights");
  }

  // (b) full adaptation loss reduces to the joint loss at beta = 0.
  auto a = pipeline::loss_jnt(m, batch, 0.5, false);
  auto b = pipeline::loss_jnt_kt(m, batch, 0.5, 0.0, false);
  rep.check(std::abs(a.total - b.total) <= 1e-12,
            "adaptation loss == joint loss at beta=0, zero gate weights");

  // (c) conditioning weights are zero-initialized: the intermediate-CTC
  // mean equals independently computed per-head CTC losses.
  {
    ad::Tape tape;
    auto binding = ad::bind_params(tape, m.params);
    auto enc = encoder::encode(tape, binding, data[0].frames, m.cfg.enc);
    auto y = datasynth::transcript_targets(vocabs, data[0].text);
    int sl = encoder::sctc_loss(tape, enc, {y, y}, 0);
    double mean = 0;
    for (int hl : enc.head_logits) {
      mean += ctc::ctc_loss(tape.value(hl), y, 0).loss;
    }
    mean /= double(enc.head_logits.size());
    rep.check(sl >= 0 && std::abs(tape.value(sl).scalar() - mean) <= 1e-12,
              "intermediate-CTC mean == independent per-head CTC");
  }

  // (d) identical aligned rows, b = 2: closed form tau * ln 2.
  {
    ad::Tape tape;
    Tensor rows({2, 3}, {0.3, -0.2, 0.9, 0.3, -0.2, 0.9});
    int loss = kt::align_loss(tape, tape.constant(rows), tape.constant(rows),
                              0.07);
    rep.check(std::abs(tape.value(loss).scalar() - 0.07 * std::log(2.0)) <=
                  1e-12,
              "alignment loss closed form 0.07*ln2");
  }
  return rep.ok;
}

int cmd_verify(const std::string& suite) {
  bool ok = true;
  if (suite == "oracles" || suite == "all") ok = verify_oracles() && ok;
  if (suite == "grads" || suite == "all") ok = verify_grads() && ok;
  if (suite == "identities" || suite == "all") ok = verify_identities() && ok;
  std::cout << (ok ? "verify: all suites passed\n" : "verify: FAILURES\n");
  return ok ? 0 : kExitVerification;
}

// ---------------------------------------------------------------- train --

int cmd_train(const std::string& config_path, std::size_t stage_idx,
              const std::string& init_ckpt, const std::string& out_dir) {
  auto c = config::load_run_config(config_path);
  if (stage_idx >= c.stages.size()) {
    throw std::invalid_argument("stage index out of range");
  }
  auto grammar = c.grammar();
  auto vocabs = datasynth::build_vocabs(grammar);
  if (datasynth::read_manifest(c.data_dir + "/manifest.json", grammar) !=
      c.hash()) {
    throw std::invalid_argument("data manifest was produced by a different "
                                "config");
  }
  auto train_data = load_split(c.data_dir, "train");

  model::Model m = model::Model::init(c.model, vocabs, c.seed);
  if (!init_ckpt.empty()) {
    if (m.params.load(init_ckpt) != c.hash()) {
      throw std::invalid_argument("checkpoint config hash mismatch: " +
                                  init_ckpt);
    }
  }
  const auto& plan = c.stages[stage_idx];
  auto teacher = make_teacher(c);
  kt::TeacherProvider* tp =
      plan.kind == pipeline::StageKind::kAsrFinetuneKt ? &teacher : nullptr;

  fs::create_directories(out_dir);
  const std::string tag = "stage" + std::to_string(stage_idx);
  std::ofstream rec(out_dir + "/" + tag + ".runrecord.jsonl");
  auto result = pipeline::train_stage(m, plan, train_data, tp, &rec, c.hash());
  m.params.save(out_dir + "/" + tag + ".ckpt", c.hash());

  std::cout << "stage " << stage_idx << " ("
            << pipeline::to_string(plan.kind) << "): "
            << result.epoch_losses.size() << " epochs, final loss "
            << (result.epoch_losses.empty()
                    ? 0.0
                    : result.epoch_losses.back().total)
            << ", skipped " << result.skipped
            << (result.improved_early ? "" : " [flag: early loss not falling]")
            << "\n";
  return 0;
}

// --------------------------------------------------------------- decode --

int cmd_decode(const std::string& config_path, const std::string& ckpt,
               const std::string& data_path, const std::string& mode,
               std::size_t beam, bool gated, const std::string& out_path) {
  auto c = config::load_run_config(config_path);
  auto vocabs = datasynth::build_vocabs(c.grammar());
  model::Model m = model::Model::init(c.model, vocabs, c.seed);
  if (m.params.load(ckpt) != c.hash()) {
    throw std::invalid_argument("checkpoint config hash mismatch: " + ckpt);
  }
  auto utts = datasynth::read_utterances(data_path);

  std::ofstream os(out_path);
  if (!os) throw std::invalid_argument("cannot write: " + out_path);
  json header;
  header["artifact"] = "hypotheses";
  header["config_hash"] = c.hash();
  header["vocab_hash"] = vocab_hash(vocabs);
  os << header.dump() << "\n";
  for (const auto& utt : utts) {
    model::Scorer scorer(m, utt.frames, gated);
    rnnt::Hypothesis hyp = mode == "greedy"
                               ? rnnt::greedy_decode(scorer)
                               : rnnt::beam_decode(scorer, beam).front();
    json rec;
    rec["id"] = utt.id;
    rec["score"] = hyp.score;
    rec["tokens"] = json::array();
    for (int sym : hyp.symbols) rec["tokens"].push_back(vocabs.slu.symbol(sym));
    os << rec.dump() << "\n";
  }
  std::cout << "decoded " << utts.size() << " utterances -> " << out_path
            << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval --

int cmd_eval(const std::string& hyp_path, const std::string& ref_path,
             const std::string& out_path) {
  auto vocabs = datasynth::build_vocabs(datasynth::Grammar::Default());
  std::ifstream is(hyp_path);
  if (!is) throw std::invalid_argument("cannot open: " + hyp_path);
  std::string line;
  if (!std::getline(is, line)) {
    throw std::invalid_argument("empty hypothesis file");
  }
  json header = json::parse(line);
  if (header.value("artifact", "") != "hypotheses" ||
      header.at("vocab_hash").get<std::uint64_t>() != vocab_hash(vocabs)) {
    throw std::invalid_argument("hypothesis vocab hash mismatch");
  }

  std::map<std::string, lattice::SymbolSeq> hyps_by_id;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    lattice::SymbolSeq seq;
    for (const auto& tok : rec.at("tokens")) {
      int id = vocabs.slu.id(tok.get<std::string>());
      if (id < 0) throw std::invalid_argument("token outside vocabulary");
      seq.push_back(id);
    }
    hyps_by_id[rec.at("id").get<std::string>()] = std::move(seq);
  }

  auto refs = datasynth::read_utterances(ref_path);
  std::vector<metrics::EntitySet> hyp_sets, ref_sets;
  double wer_sum = 0;
  std::size_t malformed = 0;
  for (const auto& utt : refs) {
    auto it = hyps_by_id.find(utt.id);
    if (it == hyps_by_id.end()) {
      throw std::invalid_argument("missing hypothesis for " + utt.id);
    }
    auto parsed = metrics::parse_tags(vocabs.slu, it->second);
    malformed += parsed.malformed;
    metrics::EntitySet h;
    h.intent = parsed.intent;
    h.entities = parsed.entities;
    hyp_sets.push_back(std::move(h));
    metrics::EntitySet r;
    r.intent = utt.intent;
    for (const auto& e : utt.entities) r.entities.emplace_back(e.type, e.value);
    ref_sets.push_back(std::move(r));

    std::vector<std::string> ht, rt;
    for (int s : it->second) ht.push_back(vocabs.slu.symbol(s));
    for (int s : datasynth::slu_targets(vocabs, utt))
      rt.push_back(vocabs.slu.symbol(s));
    wer_sum += metrics::wer(ht, rt);
  }
  auto scores = metrics::slu_scores(hyp_sets, ref_sets);
  json out;
  out["utterances"] = refs.size();
  out["intent_acc"] = scores.intent_acc;
  out["precision"] = scores.precision;
  out["recall"] = scores.recall;
  out["f1"] = scores.f1;
  out["token_wer"] = refs.empty() ? 0.0 : wer_sum / double(refs.size());
  out["malformed"] = malformed;
  std::cout << out.dump(2) << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << out.dump(2) << "\n";
  }
  return 0;
}

// --------------------------------------------------------------- ablate --

std::vector<std::vector<encoder::HeadTarget>> parse_grid(
    const std::string& grid, std::size_t heads) {
  std::vector<std::vector<encoder::HeadTarget>> out;
  std::stringstream cells(grid);
  std::string cell;
  while (std::getline(cells, cell, ';')) {
    std::vector<encoder::HeadTarget> targets;
    std::stringstream parts(cell);
    std::string part;
    while (std::getline(parts, part, ',')) {
      if (part == "asr") targets.push_back(encoder::HeadTarget::kAsr);
      else if (part == "slu") targets.push_back(encoder::HeadTarget::kSlu);
      else throw std::invalid_argument("grid entries must be asr|slu: " + part);
    }
    if (targets.size() != heads) {
      throw std::invalid_argument("grid cell has wrong head count: " + cell);
    }
    out.push_back(std::move(targets));
  }
  if (out.empty()) throw std::invalid_argument("empty ablation grid");
  return out;
}

int cmd_ablate(const std::string& config_path, const std::string& grid_str,
               const std::string& seeds_str, const std::string& out_path) {
  auto c = config::load_run_config(config_path);
  if (c.stages.empty()) {
    throw std::invalid_argument("config has no stages to ablate");
  }
  auto grammar = c.grammar();
  auto vocabs = datasynth::build_vocabs(grammar);
  auto train_data = load_split(c.data_dir, "train");
  auto test_data = load_split(c.data_dir, "test");

  auto grid = parse_grid(grid_str, c.model.enc.head_count());
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(seeds_str);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
  if (seeds.empty()) seeds = {c.seed, c.seed + 1, c.seed + 2};

  auto teacher = make_teacher(c);
  bool needs_teacher = false;
  for (const auto& s : c.stages) {
    needs_teacher =
        needs_teacher || s.kind == pipeline::StageKind::kAsrFinetuneKt;
  }
  auto rows = pipeline::ablation_matrix(
      c.model, vocabs, c.stages, train_data, test_data, grid, seeds,
      needs_teacher ? &teacher : nullptr);

  std::ostringstream csv;
  csv << "targets,seed,final_loss,token_wer,intent_acc,f1\n";
  for (const auto& r : rows) {
    std::string t;
    for (auto ht : r.targets) {
      if (!t.empty()) t += "+";
      t += ht == encoder::HeadTarget::kAsr ? "asr" : "slu";
    }
    csv << t << "," << r.seed << "," << r.final_loss << ","
        << r.eval.token_wer << "," << r.eval.slu.intent_acc << ","
        << r.eval.slu.f1 << "\n";
  }
  std::cout << csv.str();
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << "# config_hash=" << c.hash() << "\n" << csv.str();
  }
  return 0;
}

// ----------------------------------------------------------- align-dump --

void write_matrix_csv(const std::string& path, const Tensor& m,
                      std::uint64_t config_hash) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot write: " + path);
  os << "# config_hash=" << config_hash << "\n";
  os.precision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      os << (j ? "," : "") << m.at(r, j);
    }
    os << "\n";
  }
}

int cmd_align_dump(const std::string& config_path, const std::string& ckpt,
                   const std::string& data_path, const std::string& utt_id,
                   bool gated, const std::string& out_dir) {
  auto c = config::load_run_config(config_path);
  auto vocabs = datasynth::build_vocabs(c.grammar());
  model::Model m = model::Model::init(c.model, vocabs, c.seed);
  if (m.params.load(ckpt) != c.hash()) {
    throw std::invalid_argument("checkpoint config hash mismatch: " + ckpt);
  }
  auto utts = datasynth::read_utterances(data_path);
  const datasynth::Utterance* utt = nullptr;
  for (const auto& u : utts) {
    if (u.id == utt_id) utt = &u;
  }
  if (utt == nullptr) throw std::invalid_argument("utterance not found: " +
                                                  utt_id);
  fs::create_directories(out_dir);

  ad::Tape tape;
  auto binding = ad::bind_params(tape, m.params);
  auto enc = encoder::encode(tape, binding, utt->frames, m.cfg.enc);
  auto targets = datasynth::slu_targets(vocabs, *utt);
  int g = sluhead::prediction_net(tape, binding, targets, 0);
  sluhead::GateContext gc;
  const sluhead::GateContext* gp = nullptr;
  auto pool = kt::cls_query(tape, binding, m.cls_token_id(), enc.h);
  if (gated) {
    gc.p_boe = sluhead::boe_distribution(tape, binding, pool.pooled);
    gc.x_cls = pool.pooled;
    gp = &gc;
  }
  auto jlp_nodes = sluhead::joint_log_probs(tape, binding, enc.h, g, gp);

  // Transducer state-occupancy posterior over the (t, u) trellis.
  const std::size_t T = utt->frames.rows(), U = targets.size();
  const std::size_t V = vocabs.slu.size();
  rnnt::JointLogProbs jlp;
  jlp.values = Tensor({T, U + 1, V});
  for (std::size_t u = 0; u <= U; ++u) {
    const Tensor& lp = tape.value(jlp_nodes[u]);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < V; ++k)
        jlp.values.vec()[(t * (U + 1) + u) * V + k] = lp.at(t, k);
  }
  Tensor alpha = rnnt::forward_lattice(jlp, targets, 0);
  Tensor beta = rnnt::backward_lattice(jlp, targets, 0);
  const double logz = alpha.at(T, U);
  Tensor occupancy({T, U + 1});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u)
      occupancy.at(t, u) = std::exp(alpha.at(t, u) + beta.at(t, u) - logz);
  write_matrix_csv(out_dir + "/rnnt_posterior.csv", occupancy, c.hash());

  // Last intermediate head's per-frame emission posterior.
  write_matrix_csv(out_dir + "/ctc_posterior.csv",
                   ctc::frame_posteriors(tape.value(enc.head_logits.back())),
                   c.hash());

  // Token-to-frame attention of the knowledge-transfer pool.
  auto tokens = kt::tokenize(utt->text);
  auto pooled = kt::attend_tokens(tape, binding, m.teacher_token_ids(tokens),
                                  enc.h);
  write_matrix_csv(out_dir + "/kt_attention.csv", tape.value(pooled.weights),
                   c.hash());

  std::cout << "wrote alignment dumps for " << utt_id << " to " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint speech-recognition / language-understanding transducer"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt, data_path, hyp_path, ref_path;
  std::string suite = "all", mode = "greedy", grid, seeds, utt_id;
  std::size_t stage_idx = 0, beam = 8;
  bool gated = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--config", config_path)->required();
  synth->add_option("--out", out_path)->required();

  auto* verify = app.add_subcommand("verify", "run verification suites");
  verify->add_option("--suite", suite)
      ->check(CLI::IsMember({"oracles", "grads", "identities", "all"}));

  auto* train = app.add_subcommand("train", "train one schedule stage");
  train->add_option("--config", config_path)->required();
  train->add_option("--stage", stage_idx)->required();
  train->add_option("--init", ckpt);
  train->add_option("--out", out_path)->required();

  auto* decode = app.add_subcommand("decode", "decode a data split");
  decode->add_option("--config", config_path)->required();
  decode->add_option("--ckpt", ckpt)->required();
  decode->add_option("--data", data_path)->required();
  decode->add_option("--mode", mode)->check(CLI::IsMember({"greedy", "beam"}));
  decode->add_option("--beam", beam);
  decode->add_flag("--gated", gated, "use the gated joint network");
  decode->add_option("--out", out_path)->required();

  auto* eval = app.add_subcommand("eval", "score hypotheses against a split");
  eval->add_option("--hyp", hyp_path)->required();
  eval->add_option("--ref", ref_path)->required();
  eval->add_option("--out", out_path);

  auto* ablate = app.add_subcommand("ablate", "head-target ablation grid");
  ablate->add_option("--config", config_path)->required();
  ablate->add_option("--grid", grid)->required();
  ablate->add_option("--seeds", seeds);
  ablate->add_option("--out", out_path);

  auto* align = app.add_subcommand("align-dump", "alignment matrices as CSV");
  align->add_option("--config", config_path)->required();
  align->add_option("--ckpt", ckpt)->required();
  align->add_option("--data", data_path)->required();
  align->add_option("--utt", utt_id)->required();
  align->add_flag("--gated", gated, "use the gated joint network");
  align->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_path);
    if (verify->parsed()) return cmd_verify(suite);
    if (train->parsed()) return cmd_train(config_path, stage_idx, ckpt,
                                          out_path);
    if (decode->parsed()) return cmd_decode(config_path, ckpt, data_path,
                                            mode, beam, gated, out_path);
    if (eval->parsed()) return cmd_eval(hyp_path, ref_path, out_path);
    if (ablate->parsed()) return cmd_ablate(config_path, grid, seeds,
                                            out_path);
    if (align->parsed()) return cmd_align_dump(config_path, ckpt, data_path,
                                               utt_id, gated, out_path);
  } catch (const pipeline::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
