// core/include/slt/config.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_CONFIG_HPP_
#define SLT_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "slt/datasynth.hpp"
#include "slt/model.hpp"
#include "slt/pipeline.hpp"

namespace slt::config {

/// One JSON document driving a whole run: corpus sizes, model dimensions,
/// stage schedule, paths, master seed.  Unknown keys are rejected so typos
/// fail loudly; every omitted key falls back to its default.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string grammar_preset = "default";
  std::size_t train_count = 500;
  std::size_t dev_count = 100;
  std::size_t test_count = 100;
  model::ModelConfig model;
  std::vector<pipeline::StagePlan> stages;
  std::string data_dir = "data";
  std::string out_dir = "out";

  datasynth::Grammar grammar() const;  // resolves the preset
  std::string serialize() const;       // canonical JSON (sorted keys)
  std::uint64_t hash() const;          // fingerprint of serialize()
  void validate() const;               // throws std::invalid_argument
};

/// Parses a JSON document; throws std::invalid_argument on unknown keys,
/// wrong types, or invalid values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);  // also throws on IO

}  // namespace slt::config

#endif  // SLT_CONFIG_HPP_
