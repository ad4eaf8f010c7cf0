// core/include/slt/datasynth.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_DATASYNTH_HPP_
#define SLT_DATASYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "slt/lattice.hpp"
#include "slt/tensor.hpp"

namespace slt::datasynth {

/// Template parts are carrier words or "{slot_type}" placeholders.
struct SlotDef {
  std::string name;
  std::vector<std::string> values;
};

struct Grammar {
  struct Template {
    std::string intent;
    std::vector<std::string> parts;
  };

  std::vector<std::string> intents;
  std::vector<SlotDef> slots;
  std::vector<Template> templates;

  static Grammar Default();
  void validate() const;        // throws std::invalid_argument
  std::uint64_t hash() const;   // content fingerprint for manifests
  const SlotDef& slot(const std::string& name) const;
};

struct Entity {
  std::string type;
  std::string value;
  bool operator==(const Entity&) const = default;
};

struct Utterance {
  std::string id;
  std::string text;               // character transcript Y
  std::string intent;
  std::vector<Entity> entities;   // in order of appearance in the tag
  Tensor frames;                  // T x frame width
};

/// Per-character synthetic frames: 1-3 frames per character (a repeated
/// character always gets at least 2 so the CTC blank separator fits), each
/// frame = the character's fixed base vector + N(0, sigma^2) noise.
Tensor render_frames(const std::string& transcript, std::uint64_t seed,
                     std::size_t width = 16, double sigma = 0.1);

std::vector<Utterance> generate(const Grammar& grammar, std::size_t n,
                                std::uint64_t seed, std::size_t width = 16,
                                double sigma = 0.1);

/// The model-wide symbol inventories derived from a grammar.
struct VocabSet {
  lattice::Vocab asr;  // blank + characters
  lattice::Vocab slu;  // blank + characters + intent tokens + slot tokens
  std::vector<std::string> boe_labels;      // intents then slot types
  std::vector<std::string> teacher_tokens;  // [CLS] + characters
};
VocabSet build_vocabs(const Grammar& grammar);

lattice::SymbolSeq transcript_targets(const VocabSet& v,
                                      const std::string& text);
/// Tag sequence: intent token, then per entity its value characters
/// followed by the slot token.
lattice::SymbolSeq slu_targets(const VocabSet& v, const Utterance& u);
std::vector<std::size_t> boe_label_ids(const VocabSet& v, const Utterance& u);

/// Corpus files: manifest.json (vocab lists, grammar hash, config hash) and
/// one JSON-lines file per split with frames inline.
void write_manifest(const std::string& path, const Grammar& grammar,
                    const VocabSet& vocabs, std::uint64_t config_hash);
/// Returns the config hash; throws if the manifest's vocab disagrees with
/// the grammar-derived one.
std::uint64_t read_manifest(const std::string& path, const Grammar& grammar);
void write_utterances(const std::string& path,
                      const std::vector<Utterance>& utts);
std::vector<Utterance> read_utterances(const std::string& path);

}  // namespace slt::datasynth

#endif  // SLT_DATASYNTH_HPP_
