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

#include "run_config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>

#include "gaterace/csv.h"

namespace gaterace::cli {
namespace {

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ToDouble(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + v + "'");
  }
  return out;
}

long long ToInt(const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t ToUint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool ToBool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

Vec3 ToVec3(const std::string& v) {
  std::string spaced = v;
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  std::istringstream s(spaced);
  std::string a, b, c, extra;
  if (!(s >> a >> b >> c) || (s >> extra)) {
    throw ConfigError("expected three numbers, got '" + v + "'");
  }
  return Vec3(ToDouble(a), ToDouble(b), ToDouble(c));
}

template <typename Ref>
Entry Num(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](RunConfig& c) { return FormatDouble(ref(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = ToDouble(v); }};
}

template <typename Ref>
Entry Int(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](RunConfig& c) { return std::to_string(ref(c)); },
          [ref](RunConfig& c, const std::string& v) {
            const long long x = ToInt(v);
            if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("integer out of range");
            ref(c) = static_cast<int>(x);
          }};
}

template <typename Ref>
Entry Uint(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](RunConfig& c) { return std::to_string(ref(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = ToUint(v); }};
}

template <typename Ref>
Entry Bool(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](RunConfig& c) { return std::string(ref(c) ? "true" : "false"); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = ToBool(v); }};
}

template <typename Ref>
Entry Vector(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](RunConfig& c) {
            const Vec3& v = ref(c);
            return FormatDouble(v.x()) + " " + FormatDouble(v.y()) + " " + FormatDouble(v.z());
          },
          [ref](RunConfig& c, const std::string& v) { ref(c) = ToVec3(v); }};
}

#define GR_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& Registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(Uint("run", "seed", GR_REF(seed)));
    e.push_back(Int("run", "threads", GR_REF(threads)));

    e.push_back(Num("dynamics", "dt", GR_REF(env.dynamics.dt)));
    e.push_back(Num("dynamics", "tau_act", GR_REF(env.dynamics.tau_act)));
    e.push_back(Num("dynamics", "drag_coeff", GR_REF(env.dynamics.drag_coeff)));
    e.push_back(Num("dynamics", "gravity", GR_REF(env.dynamics.gravity)));
    e.push_back(Num("dynamics", "a_max", GR_REF(env.dynamics.a_max)));
    e.push_back(Num("dynamics", "clamp_knee", GR_REF(env.dynamics.clamp_knee)));

    e.push_back(Num("field", "c_i", GR_REF(env.field.c_i)));
    e.push_back(Num("field", "lambda_a", GR_REF(env.field.lambda_a)));
    e.push_back(Num("field", "epsilon", GR_REF(env.field.epsilon)));

    e.push_back(Num("loss", "lambda_c", GR_REF(env.loss.lambda_c)));
    e.push_back(Num("loss", "lambda_a", GR_REF(env.loss.lambda_a)));
    e.push_back(Num("loss", "lambda_j", GR_REF(env.loss.lambda_j)));
    e.push_back(Num("loss", "lambda_p", GR_REF(env.loss.lambda_p)));
    e.push_back(Num("loss", "lambda_p_norm", GR_REF(env.loss.lambda_p_norm)));
    e.push_back(Num("loss", "lambda_proj", GR_REF(env.loss.lambda_proj)));
    e.push_back(Num("loss", "beta1", GR_REF(env.loss.beta1)));
    e.push_back(Num("loss", "beta2", GR_REF(env.loss.beta2)));
    e.push_back(Num("loss", "beta3", GR_REF(env.loss.beta3)));
    e.push_back(Num("loss", "r_q", GR_REF(env.loss.r_q)));
    e.push_back(Bool("loss", "clearance_as_printed", GR_REF(env.loss.clearance_as_printed)));

    e.push_back(Num("reward", "collision", GR_REF(env.reward.collision)));
    e.push_back(Num("reward", "avoid_clearance", GR_REF(env.reward.avoid_clearance)));
    e.push_back(Num("reward", "avoid_collide", GR_REF(env.reward.avoid_collide)));
    e.push_back(Num("reward", "smooth_accel", GR_REF(env.reward.smooth_accel)));
    e.push_back(Num("reward", "smooth_jerk", GR_REF(env.reward.smooth_jerk)));
    e.push_back(Num("reward", "pass", GR_REF(env.reward.pass)));
    e.push_back(Num("reward", "progress", GR_REF(env.reward.progress)));
    e.push_back(Num("reward", "r_th", GR_REF(env.reward.r_th)));

    e.push_back(Int("train", "horizon", GR_REF(train.horizon)));
    e.push_back(Int("train", "envs", GR_REF(train.envs)));
    e.push_back(Int("train", "iterations", GR_REF(train.iterations)));
    e.push_back(Num("train", "lr", GR_REF(train.lr)));
    e.push_back(Num("train", "adam_beta1", GR_REF(train.adam_beta1)));
    e.push_back(Num("train", "adam_beta2", GR_REF(train.adam_beta2)));
    e.push_back(Num("train", "adam_eps", GR_REF(train.adam_eps)));
    e.push_back(Num("train", "decay_alpha", GR_REF(train.decay_alpha)));
    e.push_back(Bool("train", "avf_enabled", GR_REF(train.avf_enabled)));
    e.push_back(Num("train", "grad_clip", GR_REF(train.grad_clip)));
    e.push_back(Int("train", "eval_every", GR_REF(train.eval_every)));
    e.push_back(Int("train", "eval_trials", GR_REF(train.eval_trials)));
    e.push_back(Int("train", "eval_horizon", GR_REF(train.eval_horizon)));

    e.push_back(Int("policy", "depth_embed", GR_REF(policy.depth_embed)));
    e.push_back(Int("policy", "conv1", GR_REF(policy.conv1)));
    e.push_back(Int("policy", "conv2", GR_REF(policy.conv2)));
    e.push_back(Int("policy", "state_embed", GR_REF(policy.state_embed)));
    e.push_back(Int("policy", "hidden", GR_REF(policy.hidden)));
    e.push_back(Int("policy", "head_hidden", GR_REF(policy.head_hidden)));
    e.push_back(Num("policy", "slope", GR_REF(policy.slope)));

    e.push_back({"track", "family",
                 [](RunConfig& c) { return std::string(TrackFamilyName(c.env.family)); },
                 [](RunConfig& c, const std::string& v) { c.env.family = ParseTrackFamily(v); }});
    e.push_back(Int("track", "difficulty", GR_REF(env.difficulty)));
    e.push_back(Bool("track", "vary_tracks", GR_REF(env.vary_tracks)));
    e.push_back(Uint("track", "layout_seed", GR_REF(env.layout_seed)));
    e.push_back(Num("track", "start_jitter", GR_REF(env.start_jitter)));
    e.push_back(Bool("track", "render_depth", GR_REF(env.observe.render_depth)));
    e.push_back(Int("track", "zigzag_gates", GR_REF(env.geometry.zigzag_gates)));
    e.push_back(Num("track", "gate_spacing", GR_REF(env.geometry.gate_spacing)));
    e.push_back(Num("track", "lateral_offset", GR_REF(env.geometry.lateral_offset)));
    e.push_back(Int("track", "ring_gates", GR_REF(env.geometry.ring_gates)));
    e.push_back(Num("track", "ring_radius", GR_REF(env.geometry.ring_radius)));
    e.push_back(Num("track", "semi_major", GR_REF(env.geometry.semi_major)));
    e.push_back(Num("track", "semi_minor", GR_REF(env.geometry.semi_minor)));
    e.push_back(Num("track", "gate_width", GR_REF(env.geometry.gate_width)));
    e.push_back(Num("track", "gate_height", GR_REF(env.geometry.gate_height)));
    e.push_back(Num("track", "gate_altitude", GR_REF(env.geometry.gate_altitude)));
    e.push_back(Num("track", "frame_thickness", GR_REF(env.geometry.frame_thickness)));
    e.push_back(Num("track", "min_gate_spacing", GR_REF(env.geometry.min_gate_spacing)));
    e.push_back(Num("track", "start_distance", GR_REF(env.geometry.start_distance)));
    e.push_back(Int("track", "obstacles_base", GR_REF(env.geometry.obstacles_base)));
    e.push_back(Int("track", "obstacles_per_level", GR_REF(env.geometry.obstacles_per_level)));
    e.push_back(Num("track", "obstacle_radius_min", GR_REF(env.geometry.obstacle_radius_min)));
    e.push_back(Num("track", "obstacle_radius_max", GR_REF(env.geometry.obstacle_radius_max)));
    e.push_back(Num("track", "corridor_halfwidth", GR_REF(env.geometry.corridor_halfwidth)));
    e.push_back(Num("track", "arena_length", GR_REF(env.geometry.arena_length)));
    e.push_back(Num("track", "arena_width", GR_REF(env.geometry.arena_width)));
    e.push_back(Num("track", "arena_height", GR_REF(env.geometry.arena_height)));
    e.push_back(Int("track", "laps", GR_REF(env.geometry.laps)));

    e.push_back(Int("eval", "trials", GR_REF(eval_trials)));
    e.push_back(Int("eval", "horizon", GR_REF(eval_horizon)));
    e.push_back(Uint("eval", "seed", GR_REF(eval_seed)));

    e.push_back(Vector("target", "action_bias", GR_REF(target.action_bias)));
    e.push_back(Num("target", "mass_scale", GR_REF(target.mass_scale)));
    e.push_back(Num("target", "extra_drag", GR_REF(target.extra_drag)));
    e.push_back(Num("target", "extra_lag", GR_REF(target.extra_lag)));

    e.push_back(Int("delta", "collect_episodes", GR_REF(collect_episodes)));
    e.push_back(Int("delta", "collect_horizon", GR_REF(collect_horizon)));
    e.push_back(Int("delta", "window", GR_REF(delta.window)));
    e.push_back(Int("delta", "epochs", GR_REF(delta.epochs)));
    e.push_back(Num("delta", "lr", GR_REF(delta.lr)));
    e.push_back(Num("delta", "weight_p", GR_REF(delta.weight_p)));
    e.push_back(Num("delta", "weight_v", GR_REF(delta.weight_v)));
    e.push_back(Num("delta", "decay_alpha", GR_REF(delta.decay_alpha)));
    e.push_back(Num("delta", "grad_clip", GR_REF(delta.grad_clip)));

    e.push_back({"io", "out_dir", [](RunConfig& c) { return c.out_dir; },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty()) throw ConfigError("io.out_dir must not be empty");
                   c.out_dir = v;
                 }});
    return e;
  }();
  return entries;
}

#undef GR_REF

const Entry* FindEntry(const std::string& section, const std::string& key) {
  for (const auto& e : Registry()) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

}  // namespace

void RunConfig::Finalize() {
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  train.seed = seed;
  train.threads = threads;
  delta.threads = threads;
  env.Validate();
  train.Validate();
  policy.Validate();
  Target().Validate();
  delta.Validate();
  if (eval_trials < 0 || eval_horizon < 1) {
    throw ConfigError("eval.trials must be >= 0 and eval.horizon >= 1");
  }
  if (collect_episodes < 0 || collect_horizon < 1) {
    throw ConfigError("delta.collect_episodes must be >= 0 and collect_horizon >= 1");
  }
}

TargetDynamics RunConfig::Target() const {
  TargetDynamics t = target;
  t.base = env.dynamics;
  return t;
}

RunConfig ParseRunConfig(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    line = Trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = Trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& e : Registry()) known = known || e.section == section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    const auto hash = value.find(" #");
    if (hash != std::string::npos) value = Trim(value.substr(0, hash));
    const Entry* entry = FindEntry(section, key);
    if (entry == nullptr) {
      throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    }
    try {
      entry->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + section + "." + key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return ParseRunConfig(in, path);
}

void ApplyOverride(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  }
  const std::string section = Trim(assignment.substr(0, dot));
  const std::string key = Trim(assignment.substr(dot + 1, eq - dot - 1));
  const Entry* entry = FindEntry(section, key);
  if (entry == nullptr) throw ConfigError("--set: unknown key '" + section + "." + key + "'");
  try {
    entry->set(cfg, Trim(assignment.substr(eq + 1)));
  } catch (const ConfigError& e) {
    throw ConfigError("--set " + section + "." + key + ": " + e.what());
  }
}

void WriteRunConfig(std::ostream& out, const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string section;
  for (const auto& e : Registry()) {
    if (e.section != section) {
      out << (section.empty() ? "" : "\n") << "[" << e.section << "]\n";
      section = e.section;
    }
    out << e.key << " = " << e.get(copy) << "\n";
  }
}

std::string SerializeRunConfig(const RunConfig& cfg) {
  std::ostringstream s;
  WriteRunConfig(s, cfg);
  return s.str();
}

void ApplyAblation(const std::string& arm, RunConfig& cfg) {
  LossWeights& w = cfg.env.loss;
  if (arm == "avf") {
    cfg.train.avf_enabled = true;
  } else if (arm == "no-avf-lp") {
    cfg.train.avf_enabled = false;
  } else if (arm == "no-avf-lpnorm") {
    cfg.train.avf_enabled = false;
    // The configured lambda_p becomes the weight of the normalized term.
    w.lambda_p_norm = w.lambda_p;
    w.lambda_p = 0.0;
  } else if (arm == "scalar-proj") {
    cfg.train.avf_enabled = false;
    w.lambda_proj = 3.0;
    w.beta3 = 0.5;
  } else {
    throw ConfigError("unknown ablation '" + arm + "'");
  }
}

std::string ConfigHash(const RunConfig& cfg) {
  RunConfig hashed = cfg;
  hashed.out_dir = "run";
  return HexDigest(Fnv1a64(SerializeRunConfig(hashed)));
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& e : Registry()) keys.push_back(e.section + "." + e.key);
  return keys;
}

}  // namespace gaterace::cli
