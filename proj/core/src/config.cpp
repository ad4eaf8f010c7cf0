// core/src/config.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace slt::config {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("unknown config key " + where + "." + key);
    }
  }
}

std::string target_name(encoder::HeadTarget t) {
  return t == encoder::HeadTarget::kAsr ? "asr" : "slu";
}

encoder::HeadTarget parse_target(const std::string& s) {
  if (s == "asr") return encoder::HeadTarget::kAsr;
  if (s == "slu") return encoder::HeadTarget::kSlu;
  throw std::invalid_argument("unknown head target: " + s);
}

}  // namespace

datasynth::Grammar RunConfig::grammar() const {
  if (grammar_preset != "default") {
    throw std::invalid_argument("unknown grammar preset: " + grammar_preset);
  }
  return datasynth::Grammar::Default();
}

std::string RunConfig::serialize() const {
  json j;
  j["seed"] = seed;
  j["grammar"]["preset"] = grammar_preset;
  j["grammar"]["train"] = train_count;
  j["grammar"]["dev"] = dev_count;
  j["grammar"]["test"] = test_count;
  j["encoder"]["layers"] = model.enc.layers;
  j["encoder"]["width"] = model.enc.width;
  j["encoder"]["heads"] = model.enc.heads;
  j["encoder"]["ff_mult"] = model.enc.ff_mult;
  j["encoder"]["input_width"] = model.enc.input_width;
  j["encoder"]["sctc_positions"] = model.enc.sctc_positions;
  j["encoder"]["sctc_targets"] = json::array();
  for (auto t : model.enc.sctc_targets) {
    j["encoder"]["sctc_targets"].push_back(target_name(t));
  }
  j["sluhead"]["pred_width"] = model.slu.pred_width;
  j["sluhead"]["joint_width"] = model.slu.joint_width;
  j["sluhead"]["embed_width"] = model.slu.embed_width;
  j["kt"]["teacher_width"] = model.kt.teacher_width;
  j["kt"]["temperature"] = model.kt.temperature;
  j["stages"] = json::array();
  for (const auto& s : stages) {
    json js;
    js["kind"] = pipeline::to_string(s.kind);
    js["lambda"] = s.lambda;
    js["alpha"] = s.alpha;
    js["beta"] = s.beta;
    js["tau"] = s.tau;
    js["epochs"] = s.epochs;
    js["lr"] = s.lr;
    js["seed"] = s.seed;
    j["stages"].push_back(js);
  }
  j["paths"]["data"] = data_dir;
  j["paths"]["out"] = out_dir;
  return j.dump();  // nlohmann objects iterate key-sorted: canonical
}

std::uint64_t RunConfig::hash() const { return fnv1a(serialize()); }

void RunConfig::validate() const {
  grammar().validate();
  model.enc.validate();
  if (train_count == 0 || test_count == 0) {
    throw std::invalid_argument("train/test counts must be >= 1");
  }
  for (const auto& s : stages) s.validate();
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, "", {"seed", "grammar", "encoder", "sluhead", "kt",
                           "stages", "paths"});
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("grammar")) {
      const json& g = j["grammar"];
      reject_unknown(g, "grammar", {"preset", "train", "dev", "test"});
      if (g.contains("preset")) c.grammar_preset = g["preset"];
      if (g.contains("train")) c.train_count = g["train"].get<std::size_t>();
      if (g.contains("dev")) c.dev_count = g["dev"].get<std::size_t>();
      if (g.contains("test")) c.test_count = g["test"].get<std::size_t>();
    }
    if (j.contains("encoder")) {
      const json& e = j["encoder"];
      reject_unknown(e, "encoder",
                     {"layers", "width", "heads", "ff_mult", "input_width",
                      "sctc_positions", "sctc_targets"});
      auto& enc = c.model.enc;
      if (e.contains("layers")) enc.layers = e["layers"].get<std::size_t>();
      if (e.contains("width")) enc.width = e["width"].get<std::size_t>();
      if (e.contains("heads")) enc.heads = e["heads"].get<std::size_t>();
      if (e.contains("ff_mult")) enc.ff_mult = e["ff_mult"].get<std::size_t>();
      if (e.contains("input_width")) {
        enc.input_width = e["input_width"].get<std::size_t>();
      }
      if (e.contains("sctc_positions")) {
        enc.sctc_positions =
            e["sctc_positions"].get<std::vector<std::size_t>>();
      }
      if (e.contains("sctc_targets")) {
        enc.sctc_targets.clear();
        for (const auto& t : e["sctc_targets"]) {
          enc.sctc_targets.push_back(parse_target(t.get<std::string>()));
        }
      }
    }
    if (j.contains("sluhead")) {
      const json& s = j["sluhead"];
      reject_unknown(s, "sluhead", {"pred_width", "joint_width",
                                    "embed_width"});
      if (s.contains("pred_width")) {
        c.model.slu.pred_width = s["pred_width"].get<std::size_t>();
      }
      if (s.contains("joint_width")) {
        c.model.slu.joint_width = s["joint_width"].get<std::size_t>();
      }
      if (s.contains("embed_width")) {
        c.model.slu.embed_width = s["embed_width"].get<std::size_t>();
      }
    }
    if (j.contains("kt")) {
      const json& k = j["kt"];
      reject_unknown(k, "kt", {"teacher_width", "temperature"});
      if (k.contains("teacher_width")) {
        c.model.kt.teacher_width = k["teacher_width"].get<std::size_t>();
      }
      if (k.contains("temperature")) {
        c.model.kt.temperature = k["temperature"].get<double>();
      }
    }
    if (j.contains("stages")) {
      for (std::size_t i = 0; i < j["stages"].size(); ++i) {
        const json& s = j["stages"][i];
        reject_unknown(s, "stages[" + std::to_string(i) + "]",
                       {"kind", "lambda", "alpha", "beta", "tau", "epochs",
                        "lr", "seed"});
        pipeline::StagePlan p;
        p.kind = pipeline::parse_stage_kind(s.at("kind").get<std::string>());
        if (s.contains("lambda")) p.lambda = s["lambda"].get<double>();
        if (s.contains("alpha")) p.alpha = s["alpha"].get<double>();
        if (s.contains("beta")) p.beta = s["beta"].get<double>();
        if (s.contains("tau")) p.tau = s["tau"].get<double>();
        if (s.contains("epochs")) p.epochs = s["epochs"].get<std::size_t>();
        if (s.contains("lr")) p.lr = s["lr"].get<double>();
        if (s.contains("seed")) p.seed = s["seed"].get<std::uint64_t>();
        c.stages.push_back(p);
      }
    }
    if (j.contains("paths")) {
      const json& p = j["paths"];
      reject_unknown(p, "paths", {"data", "out"});
      if (p.contains("data")) c.data_dir = p["data"].get<std::string>();
      if (p.contains("out")) c.out_dir = p["out"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace slt::config
