// core/include/slt/lattice.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_LATTICE_HPP_
#define SLT_LATTICE_HPP_

#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt::lattice {

using SymbolSeq = std::vector<int>;

/// Ordered symbol inventory with a designated blank.  SLU labels (intents,
/// slot types) are flagged so decoders and metrics can tell them from
/// ordinary characters.
class Vocab {
 public:
  Vocab() = default;
  Vocab(std::vector<std::string> symbols, int blank_id);

  int blank() const { return blank_id_; }
  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(int id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  int id(const std::string& symbol) const;  // -1 if absent
  bool has(const std::string& symbol) const { return id(symbol) >= 0; }

  void flag_slu(int id);
  bool is_slu(int id) const { return slu_flags_.at(id); }

  /// Rejects ids out of range and blanks inside target sequences.
  void check_targets(const SymbolSeq& y) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<bool> slu_flags_;
  int blank_id_ = 0;
};

enum class AlignKind { kCtc, kRnnt };

struct Alignment {
  SymbolSeq symbols;
  AlignKind kind = AlignKind::kCtc;
};

/// Merge adjacent duplicates, then drop blanks.
SymbolSeq collapse_ctc(const Alignment& a, int blank);
/// Drop blanks; duplicates survive.
SymbolSeq collapse_rnnt(const Alignment& a, int blank);

/// Exact CTC preimage of y among length-T strings over the vocab.
/// Exponential; rejects T > 10 or |y| > 5.
std::vector<Alignment> enumerate_ctc_alignments(const SymbolSeq& y,
                                                std::size_t frames,
                                                const Vocab& vocab);

/// All blank/emit interleavings of y over T frames (last element blank).
/// Rejects T > 8 or |y| > 4.
std::vector<Alignment> enumerate_rnnt_paths(const SymbolSeq& y,
                                            std::size_t frames,
                                            const Vocab& vocab);

/// Shortest CTC alignment length for y: |y| plus one blank per repeat.
std::size_t ctc_min_frames(const SymbolSeq& y);

}  // namespace slt::lattice

#endif  // SLT_LATTICE_HPP_
