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

#ifndef GATERACE_TRAINER_H_
#define GATERACE_TRAINER_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaterace/dynamics.h"
#include "gaterace/field.h"
#include "gaterace/losses.h"
#include "gaterace/policy.h"
#include "gaterace/tape.h"
#include "gaterace/world.h"

namespace gaterace {

// Everything that defines an episode apart from the policy.
struct EnvConfig {
  DynamicsConfig dynamics;
  FieldConfig field;
  LossWeights loss;
  RewardWeights reward;
  ObserveConfig observe;
  TrackFamily family = TrackFamily::kZigzag;
  int difficulty = 0;
  TrackGeometry geometry;
  double start_jitter = 0.3;  // m, uniform per-axis offset of the start
  // Draw a new track seed per episode. When false, every episode of every
  // stream (training, evaluation, data collection) uses the single layout
  // generated from layout_seed.
  bool vary_tracks = true;
  std::uint64_t layout_seed = 0;

  void Validate() const;
};

struct TrainConfig {
  int horizon = 150;
  int envs = 16;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double decay_alpha = 3.0;  // 1/s
  bool avf_enabled = true;
  double grad_clip = 5.0;    // global-norm cap; <= 0 disables clipping
  int iterations = 200;
  int eval_every = 20;       // 0: evaluate after the last iteration only
  int eval_trials = 16;
  int eval_horizon = 300;
  int threads = 1;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct StepRecord {
  double t = 0.0;
  DroneState state;           // after the step
  Vec3 command = Vec3::Zero();  // body frame, policy output plus correction
  double frame_yaw = 0.0;       // heading of the body frame of `command`
  Vec3 world_accel = Vec3::Zero();
  Vec3 u_a = Vec3::Zero();    // attractive vector injected at this step
  int gate_idx = 0;           // target gate during the step
  bool passed = false;
  bool collided = false;
  // Per-step values of the loss summands (before horizon averaging).
  double clearance = 0.0;
  double collide = 0.0;
  double accel = 0.0;
  double jerk = 0.0;
  double progress = 0.0;
  double progress_norm = 0.0;
  double projection = 0.0;
  RewardBreakdown reward;
};

struct RolloutRecord {
  DroneState initial;
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::string diagnostic;
};

struct EpisodeResult {
  int gates_passed = 0;
  bool collided = false;
  bool success_cross = false;  // every gate passed, no collision
  bool success = false;        // no collision
  double v_max = 0.0;
  double reward = 0.0;
  RolloutRecord trajectory;
};

// Horizon-averaged loss values of one rollout.
struct LossValues {
  double total = 0.0;
  double clearance = 0.0;
  double collide = 0.0;
  double accel = 0.0;
  double jerk = 0.0;
  double progress = 0.0;
  double progress_norm = 0.0;
  double projection = 0.0;

  double c() const { return clearance + collide; }
};

// A finished rollout together with the tape that recorded it.
struct Rollout {
  Tape tape;
  NodeRef params;
  NodeRef loss;
  LossValues losses;
  std::vector<GradientInjection> injections;
  EpisodeResult result;
};

struct RolloutOptions {
  int horizon = 150;
  double decay_alpha = 3.0;
  bool avf_enabled = true;
  const Network* delta = nullptr;  // frozen correction network
};

// Deterministic in (policy, track, env, options, start_seed).
Rollout RunRollout(const Network& policy, const TrackSpec& track, const EnvConfig& env,
                   const RolloutOptions& options, std::uint64_t start_seed);

// Track seen by episode `index` of the named stream.
TrackSpec EpisodeTrack(const EnvConfig& env, std::uint64_t root_seed,
                       std::string_view stream, std::uint64_t index);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

void AdamStep(std::span<double> params, std::span<const double> grad, AdamState& state,
              const TrainConfig& cfg);

struct UpdateStats {
  LossValues losses;      // mean over rollouts
  double grad_norm = 0.0; // before clipping
  double avf_norm = 0.0;  // mean ||u_A|| over recorded steps
  bool skipped = false;   // non-finite gradient
};

// Mean parameter gradient of the rollouts' total losses, with the attractive
// vectors injected when `avf_enabled`. Summed in rollout order.
std::vector<double> RolloutGradient(std::span<Rollout> rollouts, bool avf_enabled,
                                    int threads = 1);

// One optimizer step from finished rollouts.
UpdateStats Update(std::span<Rollout> rollouts, Network& policy, AdamState& adam,
                   const TrainConfig& cfg);

struct EvalReport {
  int trials = 0;
  int successes = 0;
  int crosses = 0;
  double success_rate = 0.0;
  double success_cross = 0.0;
  double v_max = 0.0;          // mean over trials of the per-episode max speed
  double gates_per_episode = 0.0;
  double mean_reward = 0.0;
  std::vector<EpisodeResult> episodes;
};

// Runs `trials` episodes on held-out tracks and starts derived from `seed`.
EvalReport Evaluate(const Network& policy, const Network* delta, const EnvConfig& env,
                    int trials, int horizon, std::uint64_t seed, int threads = 1);

struct MetricsRow {
  int iter = 0;
  UpdateStats stats;
  std::optional<EvalReport> eval;
};

struct TrainOptions {
  const Network* delta = nullptr;  // frozen, stage-3 fine-tuning
  // Environment used for periodic evaluation; the training env when unset.
  std::optional<EnvConfig> eval_env;
  std::function<void(const MetricsRow&)> on_metrics;
  // Called with iteration 0 before training and after every iteration.
  std::function<void(int, const Network&)> on_checkpoint;
};

struct TrainResult {
  Network policy;
  std::vector<MetricsRow> metrics;
};

TrainResult Train(const TrainConfig& cfg, const EnvConfig& env, Network policy,
                  const TrainOptions& options = {});

// CSV writers. Eval columns are blank on rows without an evaluation.
void WriteMetricsHeader(std::ostream& out);
void WriteMetricsRow(std::ostream& out, const MetricsRow& row);
void WriteTrajectoryCsv(std::ostream& out, const RolloutRecord& record);

}  // namespace gaterace

#endif  // GATERACE_TRAINER_H_
