// core/src/lattice.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/lattice.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <unordered_map>

namespace slt::lattice {

Vocab::Vocab(std::vector<std::string> symbols, int blank_id)
    : symbols_(std::move(symbols)),
      slu_flags_(symbols_.size(), false),
      blank_id_(blank_id) {
  if (blank_id_ < 0 || static_cast<std::size_t>(blank_id_) >= symbols_.size()) {
    throw std::invalid_argument("Vocab: blank_id out of range");
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    for (std::size_t j = i + 1; j < symbols_.size(); ++j) {
      if (symbols_[i] == symbols_[j]) {
        throw std::invalid_argument("Vocab: duplicate symbol " + symbols_[i]);
      }
    }
  }
}

int Vocab::id(const std::string& symbol) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  return it == symbols_.end() ? -1
                              : static_cast<int>(it - symbols_.begin());
}

void Vocab::flag_slu(int id) { slu_flags_.at(id) = true; }

void Vocab::check_targets(const SymbolSeq& y) const {
  for (int s : y) {
    if (s < 0 || static_cast<std::size_t>(s) >= symbols_.size()) {
      throw std::invalid_argument("target symbol id out of range");
    }
    if (s == blank_id_) {
      throw std::invalid_argument("blank may not appear in a target sequence");
    }
  }
}

SymbolSeq collapse_ctc(const Alignment& a, int blank) {
  if (a.kind != AlignKind::kCtc) {
    throw std::invalid_argument("collapse_ctc: alignment is not CTC kind");
  }
  SymbolSeq out;
  int prev = -1;
  for (int s : a.symbols) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

SymbolSeq collapse_rnnt(const Alignment& a, int blank) {
  if (a.kind != AlignKind::kRnnt) {
    throw std::invalid_argument("collapse_rnnt: alignment is not RNN-T kind");
  }
  SymbolSeq out;
  for (int s : a.symbols) {
    if (s != blank) out.push_back(s);
  }
  return out;
}

std::size_t ctc_min_frames(const SymbolSeq& y) {
  std::size_t n = y.size();
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] == y[i - 1]) ++n;
  }
  return n;
}

std::vector<Alignment> enumerate_ctc_alignments(const SymbolSeq& y,
                                                std::size_t frames,
                                                const Vocab& vocab) {
  if (frames > 10 || y.size() > 5) {
    throw std::invalid_argument(
        "enumerate_ctc_alignments: instance beyond oracle scale (T <= 10, "
        "|y| <= 5)");
  }
  vocab.check_targets(y);
  std::vector<Alignment> out;
  SymbolSeq cur(frames, 0);
  const int n = static_cast<int>(vocab.size());
  // Depth-first over all |V|^T strings; prune when the partial collapse is
  // no longer a prefix of y.
  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    Alignment partial{SymbolSeq(cur.begin(), cur.begin() + pos),
                      AlignKind::kCtc};
    SymbolSeq c = collapse_ctc(partial, vocab.blank());
    if (c.size() > y.size() ||
        !std::equal(c.begin(), c.end(), y.begin())) {
      return;
    }
    if (pos == frames) {
      if (c == y) out.push_back(Alignment{cur, AlignKind::kCtc});
      return;
    }
    for (int s = 0; s < n; ++s) {
      cur[pos] = s;
      rec(pos + 1);
    }
  };
  rec(0);
  return out;
}

std::vector<Alignment> enumerate_rnnt_paths(const SymbolSeq& y,
                                            std::size_t frames,
                                            const Vocab& vocab) {
  if (frames > 8 || y.size() > 4) {
    throw std::invalid_argument(
        "enumerate_rnnt_paths: instance beyond oracle scale (T <= 8, |y| <= "
        "4)");
  }
  if (frames == 0) {
    throw std::invalid_argument("enumerate_rnnt_paths: need at least 1 frame");
  }
  vocab.check_targets(y);
  std::vector<Alignment> out;
  SymbolSeq cur;
  // Interleave T blanks with the fixed emissions of y; the path must end
  // with the final blank.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t t,
                                                          std::size_t u) {
    if (t == frames) {
      if (u == y.size() && !cur.empty() && cur.back() == vocab.blank()) {
        out.push_back(Alignment{cur, AlignKind::kRnnt});
      }
      return;
    }
    if (u < y.size()) {
      cur.push_back(y[u]);
      rec(t, u + 1);
      cur.pop_back();
    }
    cur.push_back(vocab.blank());
    rec(t + 1, u);
    cur.pop_back();
  };
  rec(0, 0);
  return out;
}

}  // namespace slt::lattice
