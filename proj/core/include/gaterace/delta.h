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

#ifndef GATERACE_DELTA_H_
#define GATERACE_DELTA_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gaterace/dynamics.h"
#include "gaterace/policy.h"
#include "gaterace/trainer.h"

namespace gaterace {

// Perturbed plant standing in for the deployment target.
struct TargetDynamics {
  DynamicsConfig base;
  Vec3 action_bias = Vec3::Zero();  // m/s^2, body frame; delivered = clamp(u) - bias
  double mass_scale = 1.0;          // thrust authority scales by 1 / mass_scale
  double extra_drag = 0.0;          // 1/s
  double extra_lag = 0.0;           // s

  DynamicsConfig Plant() const;
  bool IsNominal() const;
  void Validate() const;
};

// One recorded episode: states s_0..s_n and the actions u_0..u_{n-1} applied
// between them, with the body-frame heading each action was expressed in.
struct TransitionEpisode {
  std::vector<DroneState> states;
  std::vector<Vec3> actions;
  std::vector<double> yaws;

  std::size_t size() const { return actions.size(); }
};

struct TransitionDataset {
  std::string source;
  double dt = 1.0 / 30.0;
  std::vector<TransitionEpisode> episodes;

  std::size_t Transitions() const;
  // Throws IoError on shape mismatch or non-finite entries.
  void Validate() const;
};

// Rolls the policy closed-loop on the target plant. Deterministic in seed.
TransitionDataset Collect(const Network& policy, const TargetDynamics& target,
                          const EnvConfig& env, int episodes, int horizon,
                          std::uint64_t seed, int threads = 1);

// Directory layout: index.txt manifest plus one CSV per episode with columns
// t,px,py,pz,vx,vy,vz,ux,uy,uz,ax,ay,az,yaw (the last row carries the final
// state and a zero action).
void WriteDataset(const std::string& dir, const TransitionDataset& data,
                  const std::vector<std::string>& comments = {});
TransitionDataset ReadDataset(const std::string& dir);
void WriteEpisodeCsv(std::ostream& out, const TransitionEpisode& ep, double dt);
TransitionEpisode ReadEpisodeCsv(std::istream& in, const std::string& name);

struct DeltaFitConfig {
  int window = 90;         // steps per fitting window (3 s)
  int epochs = 600;
  double lr = 1e-2;
  double weight_p = 1.0;
  double weight_v = 0.5;
  double decay_alpha = 0.0;  // gradient decay inside windows
  double grad_clip = 5.0;
  double divergence_factor = 1e3;
  int threads = 1;

  void Validate() const;
};

struct DeltaFitResult {
  Network delta;
  std::vector<double> loss_curve;  // accepted loss per epoch, epoch 0 first
  int rejected_steps = 0;
};

// Window loss of the fitting objective for the given parameters, with its
// parameter gradient when `grad` is non-null.
double DeltaWindowLoss(const TransitionEpisode& ep, std::size_t begin, std::size_t length,
                       const Network& delta, const DynamicsConfig& nominal,
                       const DeltaFitConfig& cfg, std::vector<double>* grad);

// Fits the correction network so the nominal dynamics driven by
// u + correction reproduce the recorded states. Full-batch adaptive steps;
// a step that raises the loss is undone and the rate halved.
DeltaFitResult FitDelta(const TransitionDataset& data, Network delta,
                        const DynamicsConfig& nominal, const DeltaFitConfig& cfg);

struct AlignmentReport {
  Vec3 mean_correction = Vec3::Zero();
  double mean_correction_norm = 0.0;
  double velocity_rmse = 0.0;  // open-loop over windows, m/s
  std::size_t samples = 0;
  std::vector<Vec3> corrections;  // per step, window order
};

// Open-loop replay of every window from its recorded initial state. With a
// null delta the nominal dynamics run uncorrected.
AlignmentReport EvaluateAlignment(const TransitionDataset& data, const Network* delta,
                                  const DynamicsConfig& nominal, int window);

// Stage-3 fine-tuning: trains the policy on the nominal dynamics with the
// frozen correction added to its actions and evaluates on the target plant.
TrainResult FinetuneWithDelta(const Network& policy, const Network* delta,
                              const TargetDynamics& target, const TrainConfig& cfg,
                              const EnvConfig& env, TrainOptions options = {});

}  // namespace gaterace

#endif  // GATERACE_DELTA_H_
