// core/include/slt/pipeline.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_PIPELINE_HPP_
#define SLT_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "slt/datasynth.hpp"
#include "slt/kt.hpp"
#include "slt/metrics.hpp"
#include "slt/model.hpp"

namespace slt::pipeline {

/// Training stages: transcript-target pretraining, transcript-target
/// finetuning with teacher alignment, tag-target adaptation, and tag-target
/// adaptation with the gated joint + bag-of-entities head.
enum class StageKind { kAsrPretrain, kAsrFinetuneKt, kSluAdapt, kSluAdaptKt };

std::string to_string(StageKind kind);
StageKind parse_stage_kind(const std::string& name);  // throws invalid_argument

struct StagePlan {
  StageKind kind = StageKind::kAsrPretrain;
  double lambda = 0.5;  // transducer-vs-intermediate-CTC mix
  double alpha = 1.0;   // alignment-loss weight (kAsrFinetuneKt)
  double beta = 0.1;    // bag-of-entities-loss weight (kSluAdaptKt)
  double tau = 0.07;    // alignment temperature
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Per-batch loss values: `total` is the weighted composite the optimizer
/// sees; components are unweighted per-example means.
struct LossParts {
  double total = 0.0;
  double rnnt = 0.0;
  double sctc = 0.0;
  double align = 0.0;
  double boe = 0.0;
  std::size_t used = 0;     // examples contributing
  std::size_t skipped = 0;  // infeasible intermediate-CTC targets
};

using Batch = std::vector<const datasynth::Utterance*>;

/// lambda * transducer(tag targets, plain joint) +
/// (1 - lambda) * intermediate-CTC mean.
LossParts loss_jnt(model::Model& m, const Batch& batch, double lambda,
                   bool accumulate_grads);

/// lambda * transducer(transcript targets) + (1 - lambda) * intermediate-CTC
/// mean + alpha * alignment loss.  Student/teacher rows are concatenated
/// across the batch so every batch row is a negative for every other.
LossParts loss_asr_kt(model::Model& m, const Batch& batch,
                      kt::TeacherProvider& teacher, double lambda,
                      double alpha, double tau, bool accumulate_grads);

/// lambda * transducer(tag targets, gated joint with predicted entity bag
/// and pooled [CLS] vector) + (1 - lambda) * intermediate-CTC mean +
/// beta * bag-of-entities loss.
LossParts loss_jnt_kt(model::Model& m, const Batch& batch, double lambda,
                      double beta, bool accumulate_grads);

/// Stage dispatch over the four loss shapes (kAsrPretrain == loss_asr_kt
/// with alpha = 0 and no teacher).
LossParts stage_loss(model::Model& m, const Batch& batch,
                     const StagePlan& plan, kt::TeacherProvider* teacher,
                     bool accumulate_grads);

/// Adam with global gradient-norm clipping; consumes (and clears) the
/// gradients accumulated in the store.
struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 5.0;  // global gradient-norm ceiling
};

class Adam {
 public:
  using Options = AdamOptions;

  explicit Adam(ParamStore& store, Options opt = Options());
  void step();

 private:
  ParamStore& store_;
  Options opt_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// Loss went NaN/Inf; carries the stage/epoch/batch where it happened.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageResult {
  std::vector<LossParts> epoch_losses;
  std::size_t skipped = 0;     // infeasible examples across all epochs
  bool improved_early = true;  // smoothed loss fell over the first 5 epochs
};

/// Runs one stage over `data` with deterministic shuffling and batching
/// (default 8 utterances, per-example averaging).  If `record_out` is set,
/// one JSON line per epoch is appended.  Throws DivergenceError on
/// non-finite loss.
StageResult train_stage(model::Model& m, const StagePlan& plan,
                        const std::vector<datasynth::Utterance>& data,
                        kt::TeacherProvider* teacher, std::ostream* record_out,
                        std::uint64_t config_hash, std::size_t batch_size = 8);

/// Greedy (beam == 0) or beam decoding plus scoring over a data split.
/// `slu` selects tag targets + entity metrics vs transcript targets.
/// `gated` must match the joint network the checkpoint was trained with.
struct EvalResult {
  double token_wer = 0.0;   // edit distance over output token sequences
  metrics::SluScores slu;   // meaningful only when slu == true
  std::size_t malformed = 0;
};
EvalResult evaluate(model::Model& m,
                    const std::vector<datasynth::Utterance>& data, bool slu,
                    bool gated, std::size_t beam);

/// One training run per intermediate-head target assignment, shared stage
/// plan, fresh model per cell.
struct AblationRow {
  std::vector<encoder::HeadTarget> targets;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  EvalResult eval;
};
std::vector<AblationRow> ablation_matrix(
    const model::ModelConfig& base, const datasynth::VocabSet& vocabs,
    const std::vector<StagePlan>& stages,
    const std::vector<datasynth::Utterance>& train_data,
    const std::vector<datasynth::Utterance>& test_data,
    const std::vector<std::vector<encoder::HeadTarget>>& grid,
    const std::vector<std::uint64_t>& seeds, kt::TeacherProvider* teacher);

}  // namespace slt::pipeline

#endif  // SLT_PIPELINE_HPP_
