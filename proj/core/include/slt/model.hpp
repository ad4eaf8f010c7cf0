// core/include/slt/model.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_MODEL_HPP_
#define SLT_MODEL_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "slt/datasynth.hpp"
#include "slt/encoder.hpp"
#include "slt/kt.hpp"
#include "slt/rnnt.hpp"
#include "slt/sluhead.hpp"

namespace slt::model {

struct ModelConfig {
  encoder::EncoderConfig enc;
  kt::KtConfig kt;
  sluhead::SluConfig slu;
};

/// The complete trainable model: one transducer over the SLU vocabulary
/// (characters are shared with the ASR vocabulary, so transcripts are valid
/// transducer targets too), K-head encoder, attention pool, BOE head.
struct Model {
  ModelConfig cfg;
  datasynth::VocabSet vocabs;
  ParamStore params;

  static Model init(const ModelConfig& cfg, const datasynth::VocabSet& vocabs,
                    std::uint64_t seed);

  int cls_token_id() const { return 0; }  // teacher_tokens[0] == [CLS]
  /// Teacher-token ids for a tokenized transcript; throws on unknown token.
  std::vector<int> teacher_token_ids(
      const std::vector<std::string>& tokens) const;
};

/// Emission scorer for decoding: pure forward evaluation on an internal
/// tape, arithmetically identical to the training-side joint network.
class Scorer : public rnnt::TransducerScorer {
 public:
  /// `gated` switches on the BOE/[CLS] gate (SLU adaptation models).
  Scorer(Model& model, const Tensor& frames, bool gated);

  std::size_t frames() const override { return frame_count_; }
  std::size_t vocab_size() const override { return vocab_; }
  int blank() const override { return 0; }
  int start_state() override { return 0; }
  int advance(int state, int symbol) override;
  std::vector<double> log_probs(int state, std::size_t frame) override;

  /// Values captured for alignment dumps.
  const Tensor& encoder_h() const { return h_value_; }
  Tensor last_head_logits() const;
  Tensor boe_distribution_value() const;  // gated scorers only

 private:
  struct State {
    sluhead::LstmState lstm;
    int gp_row = -1;      // g_u W_pred + b, [1 x j] node (bias folded in)
    int gate_row = -1;    // g_u W_g, [1 x j] node (gated only)
  };
  State make_state(const sluhead::LstmState& lstm);

  ad::Tape tape_;
  ad::ParamBinding binding_;
  bool gated_;
  std::size_t frame_count_ = 0, vocab_ = 0;
  int e_node_ = -1;       // H W_enc, [T x j]
  int gate_h_ = -1;       // H W_h, [T x j]
  int gate_v_ = -1;       // W_b P_BOE + W_c x_cls, [j]
  int boe_node_ = -1;
  int head_logits_ = -1;  // last CTC head emission logits
  Tensor h_value_;
  std::vector<State> states_;
  std::vector<std::pair<int, int>> advance_keys_;
  std::vector<int> advance_vals_;
  std::map<std::pair<int, std::size_t>, std::vector<double>> lp_cache_;
};

}  // namespace slt::model

#endif  // SLT_MODEL_HPP_
