// core/src/pipeline.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "slt/ctc.hpp"
#include "slt/rnnt.hpp"

namespace slt::pipeline {

using nlohmann::json;

std::string to_string(StageKind kind) {
  switch (kind) {
    case StageKind::kAsrPretrain: return "asr_pretrain";
    case StageKind::kAsrFinetuneKt: return "asr_finetune_kt";
    case StageKind::kSluAdapt: return "slu_adapt";
    case StageKind::kSluAdaptKt: return "slu_adapt_kt";
  }
  throw std::invalid_argument("unknown stage kind");
}

StageKind parse_stage_kind(const std::string& name) {
  if (name == "asr_pretrain") return StageKind::kAsrPretrain;
  if (name == "asr_finetune_kt") return StageKind::kAsrFinetuneKt;
  if (name == "slu_adapt") return StageKind::kSluAdapt;
  if (name == "slu_adapt_kt") return StageKind::kSluAdaptKt;
  throw std::invalid_argument("unknown stage kind: " + name);
}

void StagePlan::validate() const {
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("stage lambda outside [0, 1]");
  }
  if (alpha < 0.0 || beta < 0.0 || tau <= 0.0) {
    throw std::invalid_argument("stage weights must be non-negative, tau > 0");
  }
  if (lr < 0.0) throw std::invalid_argument("negative learning rate");
}

namespace {

// What a stage's composite loss is made of.
struct LossShape {
  bool slu_targets = false;  // transducer target: tags vs transcript
  bool gated = false;        // gated joint with predicted entity bag
  bool align = false;        // batch-level alignment term
  bool boe = false;          // bag-of-entities term
};

LossShape shape_for(StageKind kind) {
  switch (kind) {
    case StageKind::kAsrPretrain: return {false, false, false, false};
    case StageKind::kAsrFinetuneKt: return {false, false, true, false};
    case StageKind::kSluAdapt: return {true, false, false, false};
    case StageKind::kSluAdaptKt: return {true, true, false, true};
  }
  throw std::invalid_argument("unknown stage kind");
}

int mean_node(ad::Tape& tape, const std::vector<int>& terms) {
  int acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
  return tape.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Builds the composite loss for one batch on one tape and optionally
// accumulates parameter gradients into the store.
LossParts run_batch(model::Model& m, const Batch& batch, const LossShape& ls,
                    double lambda, double alpha, double beta, double tau,
                    kt::TeacherProvider* teacher, bool accumulate_grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (ls.align && teacher == nullptr) {
    throw std::invalid_argument("alignment loss requires a teacher");
  }
  const auto& v = m.vocabs;

  ad::Tape tape;
  ad::ParamBinding binding = ad::bind_params(tape, m.params);
  std::vector<int> rnnt_terms, sctc_terms, boe_terms;
  std::vector<int> student_rows;
  std::vector<Tensor> teacher_rows;
  LossParts parts;

  for (const datasynth::Utterance* utt : batch) {
    auto enc = encoder::encode(tape, binding, utt->frames, m.cfg.enc);

    std::vector<lattice::SymbolSeq> head_targets;
    for (encoder::HeadTarget ht : m.cfg.enc.sctc_targets) {
      head_targets.push_back(ht == encoder::HeadTarget::kAsr
                                 ? datasynth::transcript_targets(v, utt->text)
                                 : datasynth::slu_targets(v, *utt));
    }
    int sctc = encoder::sctc_loss(tape, enc, head_targets, 0);
    if (sctc < 0) {
      ++parts.skipped;
      continue;
    }

    lattice::SymbolSeq target =
        ls.slu_targets ? datasynth::slu_targets(v, *utt)
                       : datasynth::transcript_targets(v, utt->text);
    int g = sluhead::prediction_net(tape, binding, target, 0);
    sluhead::GateContext gc;
    const sluhead::GateContext* gp = nullptr;
    if (ls.gated || ls.boe) {
      auto pool = kt::cls_query(tape, binding, m.cls_token_id(), enc.h);
      gc.p_boe = sluhead::boe_distribution(tape, binding, pool.pooled);
      gc.x_cls = pool.pooled;
      if (ls.gated) gp = &gc;
      if (ls.boe) {
        Tensor bt = sluhead::boe_target(datasynth::boe_label_ids(v, *utt),
                                        v.boe_labels.size());
        boe_terms.push_back(sluhead::boe_loss(
            tape, sluhead::boe_logits(tape, binding, gc.x_cls), bt));
      }
    }
    auto jlp = sluhead::joint_log_probs(tape, binding, enc.h, g, gp);
    rnnt_terms.push_back(rnnt::rnnt_loss_node(tape, jlp, target, 0));
    sctc_terms.push_back(sctc);

    if (ls.align) {
      auto tokens = kt::tokenize(utt->text);
      student_rows.push_back(
          kt::attend_tokens(tape, binding, m.teacher_token_ids(tokens), enc.h)
              .pooled);
      teacher_rows.push_back(teacher->rows(utt->id, tokens));
    }
    ++parts.used;
  }
  if (parts.used == 0) {
    throw std::invalid_argument("no feasible example in batch");
  }

  int rnnt = mean_node(tape, rnnt_terms);
  int sctc = mean_node(tape, sctc_terms);
  int total =
      tape.add(tape.scale(rnnt, lambda), tape.scale(sctc, 1.0 - lambda));
  parts.rnnt = tape.value(rnnt).scalar();
  parts.sctc = tape.value(sctc).scalar();

  if (ls.align) {
    std::size_t rows = 0, cols = teacher_rows.front().cols();
    for (const Tensor& t : teacher_rows) rows += t.rows();
    Tensor by({rows, cols});
    std::size_t r0 = 0;
    for (const Tensor& t : teacher_rows) {
      std::copy(t.vec().begin(), t.vec().end(),
                by.vec().begin() + r0 * cols);
      r0 += t.rows();
    }
    int align = kt::align_loss(tape, tape.concat_rows(student_rows),
                               tape.constant(by), tau);
    parts.align = tape.value(align).scalar();
    total = tape.add(total, tape.scale(align, alpha));
  }
  if (ls.boe) {
    int boe = mean_node(tape, boe_terms);
    parts.boe = tape.value(boe).scalar();
    total = tape.add(total, tape.scale(boe, beta));
  }
  parts.total = tape.value(total).scalar();

  if (accumulate_grads) {
    tape.backward(total);
    for (const auto& [name, node] : binding) {
      const Tensor& g = tape.grad(node);
      if (g.size() == 0) continue;  // parameter unused by this stage
      Tensor& slot = m.params.grad(name);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }
  }
  return parts;
}

}  // namespace

LossParts loss_jnt(model::Model& m, const Batch& batch, double lambda,
                   bool accumulate_grads) {
  return run_batch(m, batch, shape_for(StageKind::kSluAdapt), lambda, 0, 0,
                   0.07, nullptr, accumulate_grads);
}

LossParts loss_asr_kt(model::Model& m, const Batch& batch,
                      kt::TeacherProvider& teacher, double lambda,
                      double alpha, double tau, bool accumulate_grads) {
  return run_batch(m, batch, shape_for(StageKind::kAsrFinetuneKt), lambda,
                   alpha, 0, tau, &teacher, accumulate_grads);
}

LossParts loss_jnt_kt(model::Model& m, const Batch& batch, double lambda,
                      double beta, bool accumulate_grads) {
  return run_batch(m, batch, shape_for(StageKind::kSluAdaptKt), lambda, 0,
                   beta, 0.07, nullptr, accumulate_grads);
}

LossParts stage_loss(model::Model& m, const Batch& batch,
                     const StagePlan& plan, kt::TeacherProvider* teacher,
                     bool accumulate_grads) {
  plan.validate();
  return run_batch(m, batch, shape_for(plan.kind), plan.lambda, plan.alpha,
                   plan.beta, plan.tau, teacher, accumulate_grads);
}

Adam::Adam(ParamStore& store, Options opt) : store_(store), opt_(opt) {
  for (const auto& name : store.names()) {
    m_.emplace(name, Tensor(store.get(name).shape()));
    v_.emplace(name, Tensor(store.get(name).shape()));
  }
}

void Adam::step() {
  double sq = 0;
  for (const auto& name : store_.names()) {
    for (double g : store_.grad(name).vec()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double shrink = (opt_.clip > 0 && norm > opt_.clip)
                            ? opt_.clip / norm
                            : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (const auto& name : store_.names()) {
    Tensor& p = store_.get(name);
    Tensor& g = store_.grad(name);
    Tensor& mo = m_.at(name);
    Tensor& vo = v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * shrink;
      mo[i] = opt_.beta1 * mo[i] + (1.0 - opt_.beta1) * gi;
      vo[i] = opt_.beta2 * vo[i] + (1.0 - opt_.beta2) * gi * gi;
      p[i] -= opt_.lr * (mo[i] / c1) / (std::sqrt(vo[i] / c2) + opt_.epsilon);
    }
  }
  store_.zero_grads();
}

StageResult train_stage(model::Model& m, const StagePlan& plan,
                        const std::vector<datasynth::Utterance>& data,
                        kt::TeacherProvider* teacher, std::ostream* record_out,
                        std::uint64_t config_hash, std::size_t batch_size) {
  plan.validate();
  if (data.empty()) throw std::invalid_argument("empty training split");
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");

  Adam::Options opt;
  opt.lr = plan.lr;
  Adam adam(m.params, opt);
  m.params.zero_grads();
  StageResult result;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    std::mt19937_64 rng(plan.seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);

    LossParts sum;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch_size) {
      Batch batch;
      for (std::size_t i = b0; i < std::min(b0 + batch_size, order.size());
           ++i) {
        batch.push_back(&data[order[i]]);
      }
      LossParts parts;
      try {
        parts = stage_loss(m, batch, plan, teacher, /*accumulate_grads=*/true);
      } catch (const NumericError& e) {
        throw DivergenceError("stage " + to_string(plan.kind) + " epoch " +
                              std::to_string(epoch) + " batch " +
                              std::to_string(batches) + ": " + e.what());
      }
      if (!std::isfinite(parts.total)) {
        throw DivergenceError("stage " + to_string(plan.kind) + " epoch " +
                              std::to_string(epoch) + ": non-finite loss");
      }
      adam.step();
      const double w = static_cast<double>(parts.used);
      sum.total += parts.total * w;
      sum.rnnt += parts.rnnt * w;
      sum.sctc += parts.sctc * w;
      sum.align += parts.align * w;
      sum.boe += parts.boe * w;
      sum.used += parts.used;
      sum.skipped += parts.skipped;
      ++batches;
    }
    LossParts epoch_loss = sum;
    const double n = static_cast<double>(std::max<std::size_t>(sum.used, 1));
    epoch_loss.total = sum.total / n;
    epoch_loss.rnnt = sum.rnnt / n;
    epoch_loss.sctc = sum.sctc / n;
    epoch_loss.align = sum.align / n;
    epoch_loss.boe = sum.boe / n;
    result.epoch_losses.push_back(epoch_loss);
    result.skipped += epoch_loss.skipped;

    if (record_out != nullptr) {
      json rec;
      rec["stage"] = to_string(plan.kind);
      rec["epoch"] = epoch;
      rec["loss"] = epoch_loss.total;
      rec["rnnt"] = epoch_loss.rnnt;
      rec["sctc"] = epoch_loss.sctc;
      rec["align"] = epoch_loss.align;
      rec["boe"] = epoch_loss.boe;
      rec["used"] = epoch_loss.used;
      rec["skipped"] = epoch_loss.skipped;
      rec["seed"] = plan.seed;
      rec["lr"] = plan.lr;
      rec["config_hash"] = config_hash;
      (*record_out) << rec.dump() << "\n";
    }
  }

  // Smoothed (pairwise-mean) loss over the first five epochs should fall.
  const auto& el = result.epoch_losses;
  const std::size_t horizon = std::min<std::size_t>(el.size(), 5);
  for (std::size_t i = 2; i < horizon; ++i) {
    const double prev = 0.5 * (el[i - 2].total + el[i - 1].total);
    const double cur = 0.5 * (el[i - 1].total + el[i].total);
    if (cur > prev) result.improved_early = false;
  }
  return result;
}

EvalResult evaluate(model::Model& m,
                    const std::vector<datasynth::Utterance>& data, bool slu,
                    bool gated, std::size_t beam) {
  EvalResult out;
  std::vector<metrics::EntitySet> hyps, refs;
  double wer_sum = 0;
  for (const auto& utt : data) {
    model::Scorer scorer(m, utt.frames, gated);
    rnnt::Hypothesis hyp;
    if (beam == 0) {
      hyp = rnnt::greedy_decode(scorer);
    } else {
      hyp = rnnt::beam_decode(scorer, beam).front();
    }
    std::vector<std::string> hyp_tokens, ref_tokens;
    for (int sym : hyp.symbols) hyp_tokens.push_back(m.vocabs.slu.symbol(sym));
    lattice::SymbolSeq ref = slu ? datasynth::slu_targets(m.vocabs, utt)
                                 : datasynth::transcript_targets(m.vocabs,
                                                                 utt.text);
    for (int sym : ref) ref_tokens.push_back(m.vocabs.slu.symbol(sym));
    wer_sum += metrics::wer(hyp_tokens, ref_tokens);
    if (slu) {
      auto parsed = metrics::parse_tags(m.vocabs.slu, hyp.symbols);
      out.malformed += parsed.malformed;
      metrics::EntitySet h;
      h.intent = parsed.intent;
      h.entities = parsed.entities;
      hyps.push_back(std::move(h));
      metrics::EntitySet r;
      r.intent = utt.intent;
      for (const auto& e : utt.entities) r.entities.emplace_back(e.type,
                                                                 e.value);
      refs.push_back(std::move(r));
    }
  }
  out.token_wer = data.empty() ? 0.0 : wer_sum / double(data.size());
  if (slu && !data.empty()) out.slu = metrics::slu_scores(hyps, refs);
  return out;
}

std::vector<AblationRow> ablation_matrix(
    const model::ModelConfig& base, const datasynth::VocabSet& vocabs,
    const std::vector<StagePlan>& stages,
    const std::vector<datasynth::Utterance>& train_data,
    const std::vector<datasynth::Utterance>& test_data,
    const std::vector<std::vector<encoder::HeadTarget>>& grid,
    const std::vector<std::uint64_t>& seeds, kt::TeacherProvider* teacher) {
  if (grid.empty() || seeds.empty()) {
    throw std::invalid_argument("ablation grid and seed list must be nonempty");
  }
  std::vector<AblationRow> rows;
  for (const auto& targets : grid) {
    for (std::uint64_t seed : seeds) {
      model::ModelConfig cfg = base;
      cfg.enc.sctc_targets = targets;
      cfg.enc.validate();
      model::Model m = model::Model::init(cfg, vocabs, seed);
      AblationRow row;
      row.targets = targets;
      row.seed = seed;
      bool slu = false, gated = false;
      for (StagePlan plan : stages) {
        plan.seed ^= seed;
        auto res = train_stage(m, plan, train_data, teacher, nullptr, 0);
        row.final_loss = res.epoch_losses.back().total;
        slu = plan.kind == StageKind::kSluAdapt ||
              plan.kind == StageKind::kSluAdaptKt;
        gated = plan.kind == StageKind::kSluAdaptKt;
      }
      row.eval = evaluate(m, test_data, slu, gated, /*beam=*/0);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace slt::pipeline
