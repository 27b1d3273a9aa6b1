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

#ifndef GATERACE_DYNAMICS_H_
#define GATERACE_DYNAMICS_H_

#include "gaterace/common.h"
#include "gaterace/tape.h"

namespace gaterace {

struct DynamicsConfig {
  double dt = 1.0 / 30.0;    // s
  double tau_act = 0.05;     // s, first-order actuation lag
  double drag_coeff = 0.3;   // 1/s, linear drag
  double gravity = 9.81;     // m/s^2
  double a_max = 12.0;       // m/s^2, command norm bound
  double clamp_knee = 9.0;   // m/s^2, saturation begins above this norm

  // Plant deviations for perturbed targets. At their neutral values (zero,
  // one) the nominal arithmetic is executed unchanged.
  Vec3 accel_offset = Vec3::Zero();  // body frame, subtracted after clamping
  double thrust_scale = 1.0;         // scales (command + gravity)

  void Validate() const;
};

// Numeric snapshot of the vehicle state.
struct DroneState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 actuated_accel = Vec3::Zero();
  Vec3 body_z = Vec3::UnitZ();

  static DroneState Hover(const Vec3& position);
  bool IsFinite() const;
};

// The same state recorded on a tape.
struct TapedState {
  NodeRef position;
  NodeRef velocity;
  NodeRef actuated_accel;
  NodeRef body_z;
};

// Body-frame acceleration command plus the heading of the body frame it is
// expressed in.
struct ControlCommand {
  NodeRef accel_cmd;
  double frame_yaw = 0.0;
};

struct StepResult {
  TapedState next;
  NodeRef world_accel;  // clamped command rotated to the world frame
};

TapedState RecordState(const DroneState& state, Tape& tape);
DroneState ReadState(const TapedState& state, const Tape& tape);

// Orthonormal frame whose third column is `body_z` and whose x axis points
// along `yaw` as closely as the tilt allows. If body_z points straight down
// the yaw-zero flipped frame diag(1, -1, -1) is returned.
Mat3 RotationFromR3(const Vec3& body_z, double yaw);

// One integration step s_{k+1} = f(s_k, u_k), recorded on the tape. Opens a
// new tape step; the incoming position, velocity and actuation state cross
// the step boundary through carry nodes. The returned position is marked as
// a position node.
StepResult Step(const TapedState& state, const ControlCommand& cmd,
                const DynamicsConfig& cfg, Tape& tape);

// Same arithmetic without keeping a tape.
DroneState StepNumeric(const DroneState& state, const Vec3& accel_cmd_body,
                       double frame_yaw, const DynamicsConfig& cfg);

// e^{-alpha dt}
double GradientDecayFactor(double alpha, double dt);

}  // namespace gaterace

#endif  // GATERACE_DYNAMICS_H_
