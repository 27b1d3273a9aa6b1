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

#include "gaterace/dynamics.h"

#include <cmath>

namespace gaterace {

void DynamicsConfig::Validate() const {
  if (!(dt > 0.0)) throw ConfigError("dynamics.dt must be > 0");
  if (!(tau_act > 0.0)) throw ConfigError("dynamics.tau_act must be > 0");
  if (!(drag_coeff >= 0.0)) throw ConfigError("dynamics.drag_coeff must be >= 0");
  if (!(a_max > 0.0)) throw ConfigError("dynamics.a_max must be > 0");
  if (!(clamp_knee > 0.0 && clamp_knee < a_max)) {
    throw ConfigError("dynamics.clamp_knee must lie in (0, a_max)");
  }
  if (!(thrust_scale > 0.0)) throw ConfigError("dynamics.thrust_scale must be > 0");
  if (!accel_offset.allFinite()) throw ConfigError("dynamics.accel_offset not finite");
}

DroneState DroneState::Hover(const Vec3& position) {
  DroneState s;
  s.position = position;
  return s;
}

bool DroneState::IsFinite() const {
  return position.allFinite() && velocity.allFinite() &&
         actuated_accel.allFinite() && body_z.allFinite();
}

TapedState RecordState(const DroneState& state, Tape& tape) {
  TapedState s;
  s.position = tape.Constant(state.position);
  s.velocity = tape.Constant(state.velocity);
  s.actuated_accel = tape.Constant(state.actuated_accel);
  s.body_z = tape.Constant(state.body_z);
  tape.MarkPosition(s.position);
  return s;
}

DroneState ReadState(const TapedState& state, const Tape& tape) {
  DroneState s;
  s.position = tape.Vec3Value(state.position);
  s.velocity = tape.Vec3Value(state.velocity);
  s.actuated_accel = tape.Vec3Value(state.actuated_accel);
  s.body_z = tape.Vec3Value(state.body_z);
  return s;
}

Mat3 RotationFromR3(const Vec3& body_z, double yaw) {
  const Vec3 z = body_z.normalized();
  if (z.z() <= -1.0 + 1e-12) {
    Mat3 flipped = Mat3::Identity();
    flipped(1, 1) = -1.0;
    flipped(2, 2) = -1.0;
    return flipped;
  }
  const Vec3 heading(std::cos(yaw), std::sin(yaw), 0.0);
  Vec3 y = z.cross(heading);
  Vec3 x;
  if (y.norm() > 1e-6) {
    y.normalize();
    x = y.cross(z);
  } else {
    // Tilted fully onto the heading direction: anchor on the lateral axis.
    const Vec3 lateral(-std::sin(yaw), std::cos(yaw), 0.0);
    x = lateral.cross(z).normalized();
    y = z.cross(x);
  }
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

StepResult Step(const TapedState& state, const ControlCommand& cmd,
                const DynamicsConfig& cfg, Tape& tape) {
  const DroneState now = ReadState(state, tape);
  if (!now.IsFinite()) throw NumericError("dynamics::Step: non-finite state");
  if (!tape.Vec3Value(cmd.accel_cmd).allFinite() || !std::isfinite(cmd.frame_yaw)) {
    throw NumericError("dynamics::Step: non-finite command");
  }

  tape.MarkStep();
  const NodeRef p = tape.Carry(state.position);
  const NodeRef v = tape.Carry(state.velocity);
  const NodeRef a = tape.Carry(state.actuated_accel);

  NodeRef u = tape.ClampNorm(cmd.accel_cmd, cfg.a_max, cfg.clamp_knee);
  if (!cfg.accel_offset.isZero(0.0)) {
    u = tape.AddConstant(u, Vec3(-cfg.accel_offset));
  }
  NodeRef world = tape.MatVec(RotationFromR3(now.body_z, cmd.frame_yaw), u);
  if (cfg.thrust_scale != 1.0) {
    world = tape.Affine(tape.AddConstant(world, Vec3(0.0, 0.0, cfg.gravity)),
                        cfg.thrust_scale);
    world = tape.AddConstant(world, Vec3(0.0, 0.0, -cfg.gravity));
  }

  const NodeRef a_next =
      tape.Add(a, tape.Affine(tape.Sub(world, a), cfg.dt / cfg.tau_act));
  const NodeRef net = tape.Sub(a_next, tape.Affine(v, cfg.drag_coeff));
  const NodeRef v_next = tape.Add(v, tape.Affine(net, cfg.dt));
  const NodeRef p_next =
      tape.Add(tape.Add(p, tape.Affine(v, cfg.dt)),
               tape.Affine(net, 0.5 * cfg.dt * cfg.dt));
  const NodeRef z_next =
      tape.Normalize(tape.AddConstant(a_next, Vec3(0.0, 0.0, cfg.gravity)));
  tape.MarkPosition(p_next);

  StepResult out;
  out.next = {p_next, v_next, a_next, z_next};
  out.world_accel = world;
  return out;
}

DroneState StepNumeric(const DroneState& state, const Vec3& accel_cmd_body,
                       double frame_yaw, const DynamicsConfig& cfg) {
  Tape tape;
  const TapedState s = RecordState(state, tape);
  const ControlCommand cmd{tape.Constant(accel_cmd_body), frame_yaw};
  return ReadState(Step(s, cmd, cfg, tape).next, tape);
}

double GradientDecayFactor(double alpha, double dt) { return std::exp(-alpha * dt); }

}  // namespace gaterace
