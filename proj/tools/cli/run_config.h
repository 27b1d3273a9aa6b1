// Copyright 2026 The gaterace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GATERACE_TOOLS_CLI_RUN_CONFIG_H_
#define GATERACE_TOOLS_CLI_RUN_CONFIG_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gaterace/delta.h"
#include "gaterace/policy.h"
#include "gaterace/trainer.h"

namespace gaterace::cli {

// Every tunable of a run. Serialized as an INI-style file with sections
// [run] [dynamics] [field] [loss] [reward] [train] [policy] [track] [eval]
// [target] [delta] [io].
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  EnvConfig env;
  TrainConfig train;
  NetArch policy = NetArch::StateOnlyPolicy();
  int eval_trials = 10;
  int eval_horizon = 300;
  std::uint64_t eval_seed = 1000;
  TargetDynamics target;  // `base` is replaced by env.dynamics on use
  DeltaFitConfig delta;
  int collect_episodes = 16;
  int collect_horizon = 150;
  std::string out_dir = "run";

  // Applies [run] values to the nested configs and validates everything.
  void Finalize();
  TargetDynamics Target() const;
};

// Parses `in`, starting from defaults. `source` names the input in
// diagnostics ("file.ini:12: ..."). Throws ConfigError.
RunConfig ParseRunConfig(std::istream& in, const std::string& source);
RunConfig LoadRunConfig(const std::string& path);

// Applies one "section.key=value" override.
void ApplyOverride(RunConfig& cfg, const std::string& assignment);

// Writes every key, so parsing the output reproduces `cfg` exactly.
void WriteRunConfig(std::ostream& out, const RunConfig& cfg);
std::string SerializeRunConfig(const RunConfig& cfg);

// FNV-1a over the serialized config, as 16 hex digits.
// Applies an ablation arm: avf | no-avf-lp | no-avf-lpnorm | scalar-proj.
// The CLI runs this before --set overrides so single values can still be
// adjusted from the command line.
void ApplyAblation(const std::string& arm, RunConfig& cfg);

std::string ConfigHash(const RunConfig& cfg);

// "section.key" names accepted by the parser, in serialization order.
std::vector<std::string> ConfigKeys();

}  // namespace gaterace::cli

#endif  // GATERACE_TOOLS_CLI_RUN_CONFIG_H_
