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

#ifndef GATERACE_LOSSES_H_
#define GATERACE_LOSSES_H_

#include <optional>
#include <span>

#include "gaterace/common.h"
#include "gaterace/tape.h"

namespace gaterace {

struct LossWeights {
  double lambda_c = 3.0;
  double lambda_a = 1e-2;
  double lambda_j = 1e-3;
  double lambda_p = 0.4;
  double beta1 = 1.0;
  double beta2 = 5.0;
  double r_q = 0.2;  // m, safety radius
  double lambda_proj = 0.0;
  double beta3 = 0.5;
  double lambda_p_norm = 0.0;
  // Use ln(1 + e^{+beta2 (d - r_q)}) literally instead of the proximity
  // penalty ln(1 + e^{-beta2 (d - r_q)}).
  bool clearance_as_printed = false;

  void Validate() const;
};

struct RewardWeights {
  double collision = -30.0;
  double avoid_clearance = -6.0;
  double avoid_collide = -3.0;
  double smooth_accel = -1e-2;
  double smooth_jerk = -1e-3;
  double pass = 110.0;
  double progress = 0.4;
  // Gate-pass radius in m; values <= 0 mean half the smaller gate dimension.
  double r_th = -1.0;

  void Validate() const;
};

// Per-step obstacle terms on ||d||. v_c is detached inside.
NodeRef ClearanceLoss(NodeRef d_norm, const LossWeights& w, Tape& tape);
NodeRef CollideLoss(NodeRef d_norm, NodeRef v_c, const LossWeights& w, Tape& tape);

struct SmoothnessTerms {
  NodeRef accel;
  NodeRef jerk;
};

// L_a = sum ||a_k||^2 / T and L_j = sum ||(a_{k+1} - a_k) / dt||^2 / (T - 1),
// where T is `horizon` when given (masked rollouts) and accels.size()
// otherwise. Throws if T < 2.
SmoothnessTerms SmoothnessLosses(std::span<const NodeRef> accels, double dt,
                                 Tape& tape, std::optional<int> horizon = {});

// -(v . p) / ||p||. Throws if p is the zero vector.
NodeRef ProgressLoss(NodeRef v_body, NodeRef p_gate_body, Tape& tape);

// -cos(v, p); a zero node when ||v|| <= kMinProgressSpeed.
inline constexpr double kMinProgressSpeed = 1e-6;
NodeRef ProgressLossNormalized(NodeRef v_body, NodeRef p_gate_body, Tape& tape);

// ||p_yz||^2 exp(-beta3 d_gate) with p in the gate frame (x along the
// normal). d_gate is detached inside.
NodeRef ProjectionLoss(NodeRef p_gate_frame, NodeRef d_gate, const LossWeights& w,
                       Tape& tape);

// Horizon-averaged terms; unset handles count as zero.
struct LossTerms {
  NodeRef clearance;
  NodeRef collide;
  NodeRef accel;
  NodeRef jerk;
  NodeRef progress;
  NodeRef progress_norm;
  NodeRef projection;
};

NodeRef TotalLoss(const LossTerms& terms, const LossWeights& w, Tape& tape);

// Detached per-step quantities for the logging reward.
struct StepSample {
  double d_norm = 100.0;
  double v_c = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 prev_accel = Vec3::Zero();
  double dt = 1.0 / 30.0;
  bool has_gate = false;
  Vec3 v_body = Vec3::Zero();
  Vec3 p_gate_body = Vec3::Zero();
  double gate_min_dim = 1.5;
};

struct RewardBreakdown {
  double collision = 0.0;
  double avoid = 0.0;
  double smooth = 0.0;
  double pass = 0.0;
  double progress = 0.0;

  double total() const { return collision + avoid + smooth + pass + progress; }
};

RewardBreakdown StepReward(const StepSample& s, const RewardWeights& rw,
                           const LossWeights& lw);

}  // namespace gaterace

#endif  // GATERACE_LOSSES_H_
