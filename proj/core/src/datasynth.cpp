// core/src/datasynth.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/datasynth.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "slt/kt.hpp"

namespace slt::datasynth {

namespace {

using nlohmann::json;

// Base vectors are keyed by character only, independent of the corpus seed,
// so the same character always renders to the same (noisy) prototype.
constexpr std::uint64_t kBaseSeed = 0x5eedba5e00000000ull;

Tensor char_base(char c, std::size_t width) {
  std::mt19937_64 rng(kBaseSeed ^ static_cast<std::uint64_t>(
                                      static_cast<unsigned char>(c)));
  Tensor t({width});
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.vec()) v = dist(rng);
  return t;
}

bool is_placeholder(const std::string& part) {
  return part.size() >= 2 && part.front() == '{' && part.back() == '}';
}

std::string placeholder_slot(const std::string& part) {
  return part.substr(1, part.size() - 2);
}

}  // namespace

Grammar Grammar::Default() {
  Grammar g;
  g.intents = {"weather_query", "alarm_set",  "music_play",
               "light_on",      "timer_set",  "calendar_check"};
  g.slots = {
      {"date", {"today", "monday", "friday", "soon"}},
      {"time", {"noon", "six", "nine", "dawn"}},
      {"place", {"home", "paris", "office", "barn"}},
      {"weather_descriptor", {"cold", "hot", "rainy", "windy"}},
      {"song", {"jazz", "rock", "pop", "folk"}},
      {"device", {"lamp", "fan", "heater", "radio"}},
      {"duration", {"one min", "ten sec", "an hour", "a bit"}},
      {"person", {"alex", "sam", "kim", "jo"}},
  };
  g.templates = {
      {"weather_query", {"is", "it", "{weather_descriptor}", "{date}"}},
      {"weather_query", {"how", "{weather_descriptor}", "{date}"}},
      {"alarm_set", {"alarm", "at", "{time}"}},
      {"alarm_set", {"wake", "me", "at", "{time}", "{date}"}},
      {"music_play", {"play", "{song}"}},
      {"music_play", {"play", "{song}", "at", "{place}"}},
      {"light_on", {"turn", "on", "{device}"}},
      {"light_on", {"{device}", "on", "at", "{place}"}},
      {"timer_set", {"timer", "for", "{duration}"}},
      {"timer_set", {"set", "{duration}", "timer"}},
      {"calendar_check", {"am", "i", "free", "{date}"}},
      {"calendar_check", {"meet", "{person}", "{date}"}},
  };
  return g;
}

void Grammar::validate() const {
  if (templates.empty()) {
    throw std::invalid_argument("grammar: empty template set");
  }
  for (const auto& t : templates) {
    if (std::find(intents.begin(), intents.end(), t.intent) == intents.end()) {
      throw std::invalid_argument("grammar: template intent not in inventory: " +
                                  t.intent);
    }
    for (const auto& part : t.parts) {
      if (!is_placeholder(part)) continue;
      slot(placeholder_slot(part));  // throws if unknown
    }
  }
  for (const auto& s : slots) {
    if (s.values.empty()) {
      throw std::invalid_argument("grammar: slot without values: " + s.name);
    }
  }
}

const SlotDef& Grammar::slot(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("grammar: unknown slot type: " + name);
}

std::uint64_t Grammar::hash() const {
  std::ostringstream os;
  for (const auto& i : intents) os << "I:" << i << ';';
  for (const auto& s : slots) {
    os << "S:" << s.name << '=';
    for (const auto& v : s.values) os << v << ',';
    os << ';';
  }
  for (const auto& t : templates) {
    os << "T:" << t.intent << '=';
    for (const auto& p : t.parts) os << p << ' ';
    os << ';';
  }
  return fnv1a(os.str());
}

Tensor render_frames(const std::string& transcript, std::uint64_t seed,
                     std::size_t width, double sigma) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> repeats(1, 3);
  std::normal_distribution<double> noise(0.0, sigma);

  std::vector<std::pair<char, int>> plan;
  std::size_t total = 0;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    int r = repeats(rng);
    // A repeated character needs a blank separator in any CTC alignment;
    // two frames keep every generated transcript feasible.
    if (i > 0 && transcript[i] == transcript[i - 1] && r < 2) r = 2;
    plan.emplace_back(transcript[i], r);
    total += static_cast<std::size_t>(r);
  }
  if (total == 0) return Tensor();  // empty transcript: zero frames

  Tensor frames({total, width});
  std::size_t t = 0;
  for (const auto& [c, r] : plan) {
    Tensor base = char_base(c, width);
    for (int k = 0; k < r; ++k, ++t) {
      for (std::size_t j = 0; j < width; ++j) {
        frames.at(t, j) = base[j] + (sigma > 0 ? noise(rng) : 0.0);
      }
    }
  }
  return frames;
}

std::vector<Utterance> generate(const Grammar& grammar, std::size_t n,
                                std::uint64_t seed, std::size_t width,
                                double sigma) {
  grammar.validate();
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_template(
      0, grammar.templates.size() - 1);

  std::vector<Utterance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tpl = grammar.templates[pick_template(rng)];
    Utterance u;
    u.id = "u" + std::to_string(seed) + "-" + std::to_string(i);
    u.intent = tpl.intent;
    std::string text;
    for (const auto& part : tpl.parts) {
      std::string word = part;
      if (is_placeholder(part)) {
        const SlotDef& s = grammar.slot(placeholder_slot(part));
        std::uniform_int_distribution<std::size_t> pick(0, s.values.size() - 1);
        word = s.values[pick(rng)];
        u.entities.push_back({s.name, word});
      }
      if (!text.empty()) text += ' ';
      text += word;
    }
    u.text = text;
    u.frames = render_frames(text, rng(), width, sigma);
    out.push_back(std::move(u));
  }
  return out;
}

VocabSet build_vocabs(const Grammar& grammar) {
  grammar.validate();
  std::set<char> chars;
  for (const auto& t : grammar.templates) {
    for (const auto& part : t.parts) {
      if (is_placeholder(part)) continue;
      for (char c : part) chars.insert(c);
    }
  }
  for (const auto& s : grammar.slots) {
    for (const auto& v : s.values) {
      for (char c : v) chars.insert(c);
    }
  }
  chars.insert(' ');

  VocabSet v;
  std::vector<std::string> asr_syms = {"<b>"};
  for (char c : chars) asr_syms.emplace_back(1, c);
  v.asr = lattice::Vocab(asr_syms, 0);

  std::vector<std::string> slu_syms = asr_syms;
  const std::size_t first_label = slu_syms.size();
  for (const auto& i : grammar.intents) slu_syms.push_back("IN-" + i);
  for (const auto& s : grammar.slots) slu_syms.push_back("b-" + s.name);
  v.slu = lattice::Vocab(slu_syms, 0);
  for (std::size_t id = first_label; id < slu_syms.size(); ++id) {
    v.slu.flag_slu(static_cast<int>(id));
  }

  for (const auto& i : grammar.intents) v.boe_labels.push_back("IN-" + i);
  for (const auto& s : grammar.slots) v.boe_labels.push_back(s.name);

  v.teacher_tokens.push_back(kt::kClsToken);
  for (char c : chars) v.teacher_tokens.emplace_back(1, c);
  return v;
}

lattice::SymbolSeq transcript_targets(const VocabSet& v,
                                      const std::string& text) {
  lattice::SymbolSeq y;
  for (char c : text) {
    int id = v.asr.id(std::string(1, c));
    if (id < 0) {
      throw std::invalid_argument("transcript character outside vocab: " +
                                  std::string(1, c));
    }
    y.push_back(id);
  }
  return y;
}

lattice::SymbolSeq slu_targets(const VocabSet& v, const Utterance& u) {
  lattice::SymbolSeq s;
  int intent_id = v.slu.id("IN-" + u.intent);
  if (intent_id < 0) {
    throw std::invalid_argument("intent outside vocab: " + u.intent);
  }
  s.push_back(intent_id);
  for (const auto& ent : u.entities) {
    for (char c : ent.value) {
      int id = v.slu.id(std::string(1, c));
      if (id < 0) {
        throw std::invalid_argument("entity character outside vocab: " +
                                    std::string(1, c));
      }
      s.push_back(id);
    }
    int slot_id = v.slu.id("b-" + ent.type);
    if (slot_id < 0) {
      throw std::invalid_argument("slot type outside vocab: " + ent.type);
    }
    s.push_back(slot_id);
  }
  return s;
}

std::vector<std::size_t> boe_label_ids(const VocabSet& v, const Utterance& u) {
  std::set<std::size_t> ids;
  auto index_of = [&](const std::string& label) {
    auto it = std::find(v.boe_labels.begin(), v.boe_labels.end(), label);
    if (it == v.boe_labels.end()) {
      throw std::invalid_argument("label outside BOE inventory: " + label);
    }
    return static_cast<std::size_t>(it - v.boe_labels.begin());
  };
  ids.insert(index_of("IN-" + u.intent));
  for (const auto& ent : u.entities) ids.insert(index_of(ent.type));
  return {ids.begin(), ids.end()};
}

void write_manifest(const std::string& path, const Grammar& grammar,
                    const VocabSet& vocabs, std::uint64_t config_hash) {
  json m;
  m["grammar_hash"] = grammar.hash();
  m["config_hash"] = config_hash;
  m["asr_vocab"] = vocabs.asr.symbols();
  m["slu_vocab"] = vocabs.slu.symbols();
  m["boe_labels"] = vocabs.boe_labels;
  m["teacher_tokens"] = vocabs.teacher_tokens;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << m.dump(2) << '\n';
}

std::uint64_t read_manifest(const std::string& path, const Grammar& grammar) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest: " + path);
  json m = json::parse(is);
  if (m.at("grammar_hash").get<std::uint64_t>() != grammar.hash()) {
    throw std::runtime_error("manifest grammar hash mismatch: " + path);
  }
  VocabSet v = build_vocabs(grammar);
  if (m.at("asr_vocab").get<std::vector<std::string>>() != v.asr.symbols() ||
      m.at("slu_vocab").get<std::vector<std::string>>() != v.slu.symbols()) {
    throw std::runtime_error("manifest vocab mismatch: " + path);
  }
  return m.at("config_hash").get<std::uint64_t>();
}

void write_utterances(const std::string& path,
                      const std::vector<Utterance>& utts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write corpus: " + path);
  for (const auto& u : utts) {
    json rec;
    rec["id"] = u.id;
    rec["text"] = u.text;
    rec["slu"]["intent"] = u.intent;
    rec["slu"]["entities"] = json::array();
    for (const auto& e : u.entities) {
      rec["slu"]["entities"].push_back({{"type", e.type}, {"value", e.value}});
    }
    rec["frames"]["rows"] = u.frames.size() == 0 ? 0 : u.frames.rows();
    rec["frames"]["cols"] = u.frames.size() == 0 ? 0 : u.frames.cols();
    rec["frames"]["data"] = u.frames.vec();
    os << rec.dump() << '\n';
  }
}

std::vector<Utterance> read_utterances(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read corpus: " + path);
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Utterance u;
    u.id = rec.at("id").get<std::string>();
    u.text = rec.at("text").get<std::string>();
    u.intent = rec.at("slu").at("intent").get<std::string>();
    for (const auto& e : rec.at("slu").at("entities")) {
      u.entities.push_back({e.at("type").get<std::string>(),
                            e.at("value").get<std::string>()});
    }
    const std::size_t rows = rec.at("frames").at("rows").get<std::size_t>();
    const std::size_t cols = rec.at("frames").at("cols").get<std::size_t>();
    auto data = rec.at("frames").at("data").get<std::vector<double>>();
    if (rows * cols != data.size()) {
      throw std::runtime_error("corrupt frame record: " + u.id);
    }
    if (rows > 0) u.frames = Tensor({rows, cols}, std::move(data));
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace slt::datasynth
