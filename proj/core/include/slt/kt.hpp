// core/include/slt/kt.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_KT_HPP_
#define SLT_KT_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slt/tape.hpp"
#include "slt/tensor.hpp"

namespace slt::kt {

inline constexpr const char* kClsToken = "[CLS]";

struct KtConfig {
  std::size_t teacher_width = 32;  // e
  double temperature = 0.07;       // tau
};

/// Character-level tokens with a leading [CLS].
std::vector<std::string> tokenize(const std::string& transcript);

/// Source of per-token teacher embedding rows (one row per token, [CLS]
/// included).  Implementations must be deterministic.
class TeacherProvider {
 public:
  virtual ~TeacherProvider() = default;
  virtual Tensor rows(const std::string& utt_id,
                      const std::vector<std::string>& tokens) = 0;
};

/// Self-contained stand-in teacher: each token gets a fixed-seed base
/// vector, and each row is the average of the token's base vector with its
/// immediate neighbors' (cheap context sensitivity).
class SyntheticTeacher : public TeacherProvider {
 public:
  SyntheticTeacher(std::uint64_t seed, std::size_t width);
  Tensor rows(const std::string& utt_id,
              const std::vector<std::string>& tokens) override;
  const Tensor& base_vector(const std::string& token);

 private:
  std::uint64_t seed_;
  std::size_t width_;
  std::map<std::string, Tensor> cache_;
};

/// Teacher rows precomputed externally and stored in a binary file:
/// magic + version, token-vocabulary list, then per-utterance records
/// (id, row count, width, row-major 32-bit little-endian floats).
class FileTeacher : public TeacherProvider {
 public:
  explicit FileTeacher(const std::string& path);
  Tensor rows(const std::string& utt_id,
              const std::vector<std::string>& tokens) override;
  const std::vector<std::string>& vocab() const { return vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::map<std::string, Tensor> records_;
};

void write_teacher_file(
    const std::string& path, const std::vector<std::string>& vocab,
    const std::vector<std::pair<std::string, Tensor>>& records);

/// Attention-pool parameters under "kt.": a student token embedding table
/// plus single-head query/key/value projections (encoder width -> e).
void init_params(const KtConfig& cfg, std::size_t enc_width,
                 std::size_t token_vocab, ParamStore& store,
                 std::mt19937_64& rng);

struct PoolResult {
  int pooled = -1;   // [queries x e]
  int weights = -1;  // [queries x frames], rows sum to 1
};

/// Cross-attention from token queries to encoder output H [T x d].
PoolResult attend_tokens(ad::Tape& tape, const ad::ParamBinding& params,
                         const std::vector<int>& token_ids, int h_node);

/// Utterance-level vector: the same pool queried with the [CLS] token.
PoolResult cls_query(ad::Tape& tape, const ad::ParamBinding& params,
                     int cls_token_id, int h_node);

/// Symmetric InfoNCE over cosine similarities between matching rows of the
/// student (bx) and teacher (by) matrices, scaled by tau/(2b).
int align_loss(ad::Tape& tape, int bx, int by, double tau);

}  // namespace slt::kt

#endif  // SLT_KT_HPP_
