// core/src/kt.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/kt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slt::kt {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'T', 'T', 'E', 'A', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  std::string s(get_u32(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

void put_f32(std::ostream& os, float f) {
  put_u32(os, std::bit_cast<std::uint32_t>(f));
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace

std::vector<std::string> tokenize(const std::string& transcript) {
  std::vector<std::string> tokens{kClsToken};
  for (char c : transcript) tokens.emplace_back(1, c);
  return tokens;
}

SyntheticTeacher::SyntheticTeacher(std::uint64_t seed, std::size_t width)
    : seed_(seed), width_(width) {}

const Tensor& SyntheticTeacher::base_vector(const std::string& token) {
  auto it = cache_.find(token);
  if (it != cache_.end()) return it->second;
  std::mt19937_64 rng(seed_ ^ fnv1a(token));
  Tensor t({width_});
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.vec()) v = dist(rng);
  return cache_.emplace(token, std::move(t)).first->second;
}

Tensor SyntheticTeacher::rows(const std::string& /*utt_id*/,
                              const std::vector<std::string>& tokens) {
  if (tokens.empty()) {
    throw std::invalid_argument("SyntheticTeacher: empty token sequence");
  }
  Tensor out({tokens.size(), width_});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t lo = i > 0 ? i - 1 : i;
    std::size_t hi = i + 1 < tokens.size() ? i + 1 : i;
    const double n = static_cast<double>(hi - lo + 1);
    for (std::size_t j = lo; j <= hi; ++j) {
      const Tensor& b = base_vector(tokens[j]);
      for (std::size_t c = 0; c < width_; ++c) out.at(i, c) += b[c] / n;
    }
  }
  return out;
}

void write_teacher_file(
    const std::string& path, const std::vector<std::string>& vocab,
    const std::vector<std::pair<std::string, Tensor>>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& tok : vocab) put_string(os, tok);
  put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& [id, rows] : records) {
    if (rows.rank() != 2) {
      throw ShapeError("teacher record must be rank 2: " + id);
    }
    put_string(os, id);
    put_u32(os, static_cast<std::uint32_t>(rows.rows()));
    put_u32(os, static_cast<std::uint32_t>(rows.cols()));
    for (double v : rows.vec()) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

FileTeacher::FileTeacher(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open teacher file: " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a teacher embedding file: " + path);
  }
  if (get_u32(is) != kVersion) {
    throw std::runtime_error("unsupported teacher file version: " + path);
  }
  const std::uint32_t nv = get_u32(is);
  for (std::uint32_t i = 0; i < nv; ++i) vocab_.push_back(get_string(is));
  const std::uint32_t nr = get_u32(is);
  for (std::uint32_t i = 0; i < nr; ++i) {
    std::string id = get_string(is);
    const std::uint32_t rows = get_u32(is), cols = get_u32(is);
    Tensor t({rows, cols});
    for (double& v : t.vec()) v = static_cast<double>(get_f32(is));
    records_.emplace(std::move(id), std::move(t));
  }
  if (!is) throw std::runtime_error("truncated teacher file: " + path);
}

Tensor FileTeacher::rows(const std::string& utt_id,
                         const std::vector<std::string>& tokens) {
  for (const auto& tok : tokens) {
    if (std::find(vocab_.begin(), vocab_.end(), tok) == vocab_.end()) {
      throw std::runtime_error("teacher file does not know token: " + tok);
    }
  }
  auto it = records_.find(utt_id);
  if (it == records_.end()) {
    throw std::runtime_error("teacher file has no rows for utterance: " +
                             utt_id);
  }
  return it->second;
}

void init_params(const KtConfig& cfg, std::size_t enc_width,
                 std::size_t token_vocab, ParamStore& store,
                 std::mt19937_64& rng) {
  const std::size_t e = cfg.teacher_width;
  xavier_fill(store.create("kt.emb", {token_vocab, e}), rng);
  xavier_fill(store.create("kt.q.w", {e, e}), rng);
  xavier_fill(store.create("kt.k.w", {enc_width, e}), rng);
  xavier_fill(store.create("kt.v.w", {enc_width, e}), rng);
}

PoolResult attend_tokens(ad::Tape& tape, const ad::ParamBinding& params,
                         const std::vector<int>& token_ids, int h_node) {
  if (token_ids.empty()) {
    throw std::invalid_argument("attend_tokens: no queries");
  }
  const std::size_t e = tape.value(ad::pnode(params, "kt.q.w")).cols();
  int emb = tape.embedding(ad::pnode(params, "kt.emb"), token_ids);
  int q = tape.matmul(emb, ad::pnode(params, "kt.q.w"));
  int k = tape.matmul(h_node, ad::pnode(params, "kt.k.w"));
  int v = tape.matmul(h_node, ad::pnode(params, "kt.v.w"));
  int scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(e)));
  PoolResult r;
  r.weights = tape.softmax(scores);
  r.pooled = tape.matmul(r.weights, v);
  return r;
}

PoolResult cls_query(ad::Tape& tape, const ad::ParamBinding& params,
                     int cls_token_id, int h_node) {
  return attend_tokens(tape, params, {cls_token_id}, h_node);
}

int align_loss(ad::Tape& tape, int bx, int by, double tau) {
  const Tensor& x = tape.value(bx);
  const Tensor& y = tape.value(by);
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows() ||
      x.cols() != y.cols()) {
    throw ShapeError("align_loss: row counts/widths must match, got " +
                     x.shape_str() + " vs " + y.shape_str());
  }
  const std::size_t b = x.rows();
  int xn = tape.l2_normalize_rows(bx);
  int yn = tape.l2_normalize_rows(by);
  // s_ij = cos(by_i, bx_j), scaled by 1/tau.
  int s = tape.scale(tape.matmul(yn, tape.transpose(xn)), 1.0 / tau);

  Tensor eye({b, b});
  for (std::size_t i = 0; i < b; ++i) eye.at(i, i) = 1.0;
  int diag = tape.reduce_sum(tape.mul(s, tape.constant(eye)));
  int row_lse = tape.reduce_sum(tape.logsumexp(s));
  int col_lse = tape.reduce_sum(tape.logsumexp(tape.transpose(s)));
  int inner = tape.sub(tape.add(row_lse, col_lse), tape.scale(diag, 2.0));
  return tape.scale(inner, tau / (2.0 * static_cast<double>(b)));
}

}  // namespace slt::kt
