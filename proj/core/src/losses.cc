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

#include "gaterace/losses.h"

#include <cmath>

namespace gaterace {
namespace {

double Softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void LossWeights::Validate() const {
  for (double w : {lambda_c, lambda_a, lambda_j, lambda_p, beta1, beta2, lambda_proj,
                   beta3, lambda_p_norm}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  if (!(r_q > 0.0)) throw ConfigError("loss.r_q must be > 0");
}

void RewardWeights::Validate() const {
  if (!(collision <= 0 && avoid_clearance <= 0 && avoid_collide <= 0 &&
        smooth_accel <= 0 && smooth_jerk <= 0 && pass >= 0 && progress >= 0)) {
    throw ConfigError("reward weights have the wrong sign");
  }
}

NodeRef ClearanceLoss(NodeRef d_norm, const LossWeights& w, Tape& tape) {
  const double sign = w.clearance_as_printed ? 1.0 : -1.0;
  const NodeRef arg = tape.Affine(d_norm, sign * w.beta2, -sign * w.beta2 * w.r_q);
  return tape.Affine(tape.Softplus(arg), w.beta1);
}

NodeRef CollideLoss(NodeRef d_norm, NodeRef v_c, const LossWeights& w, Tape& tape) {
  // max(1 - (d - r_q), 0)^2
  const NodeRef hinge = tape.Relu(tape.Affine(d_norm, -1.0, 1.0 + w.r_q));
  return tape.Scale(tape.Square(hinge), tape.Detach(v_c));
}

SmoothnessTerms SmoothnessLosses(std::span<const NodeRef> accels, double dt,
                                 Tape& tape, std::optional<int> horizon) {
  const int t = horizon.value_or(static_cast<int>(accels.size()));
  if (t < 2) {
    throw std::invalid_argument("SmoothnessLosses: jerk term needs T >= 2");
  }
  SmoothnessTerms out;
  NodeRef acc_sum, jerk_sum;
  for (std::size_t k = 0; k < accels.size(); ++k) {
    const NodeRef sq = tape.Dot(accels[k], accels[k]);
    acc_sum = acc_sum.valid() ? tape.Add(acc_sum, sq) : sq;
    if (k + 1 < accels.size()) {
      const NodeRef diff = tape.Affine(tape.Sub(accels[k + 1], accels[k]), 1.0 / dt);
      const NodeRef jsq = tape.Dot(diff, diff);
      jerk_sum = jerk_sum.valid() ? tape.Add(jerk_sum, jsq) : jsq;
    }
  }
  out.accel = acc_sum.valid() ? tape.Affine(acc_sum, 1.0 / t) : tape.Constant(0.0);
  out.jerk = jerk_sum.valid() ? tape.Affine(jerk_sum, 1.0 / (t - 1)) : tape.Constant(0.0);
  return out;
}

NodeRef ProgressLoss(NodeRef v_body, NodeRef p_gate_body, Tape& tape) {
  if (tape.Vec3Value(p_gate_body).norm() == 0.0) {
    throw std::invalid_argument("ProgressLoss: gate offset is zero");
  }
  const NodeRef along = tape.Dot(v_body, tape.Normalize(p_gate_body));
  return tape.Affine(along, -1.0);
}

NodeRef ProgressLossNormalized(NodeRef v_body, NodeRef p_gate_body, Tape& tape) {
  if (tape.Vec3Value(p_gate_body).norm() == 0.0) {
    throw std::invalid_argument("ProgressLossNormalized: gate offset is zero");
  }
  if (tape.Vec3Value(v_body).norm() <= kMinProgressSpeed) return tape.Constant(0.0);
  const NodeRef cosine = tape.Dot(tape.Normalize(v_body), tape.Normalize(p_gate_body));
  return tape.Affine(cosine, -1.0);
}

NodeRef ProjectionLoss(NodeRef p_gate_frame, NodeRef d_gate, const LossWeights& w,
                       Tape& tape) {
  const NodeRef yz = tape.Slice(p_gate_frame, 1, 2);
  const NodeRef decay = tape.Exp(tape.Affine(tape.Detach(d_gate), -w.beta3));
  return tape.Scale(tape.Dot(yz, yz), decay);
}

NodeRef TotalLoss(const LossTerms& terms, const LossWeights& w, Tape& tape) {
  NodeRef total;
  auto add = [&](NodeRef term, double weight) {
    if (!term.valid()) return;
    const NodeRef scaled = tape.Affine(term, weight);
    total = total.valid() ? tape.Add(total, scaled) : scaled;
  };
  add(terms.clearance, w.lambda_c);
  add(terms.collide, w.lambda_c);
  add(terms.accel, w.lambda_a);
  add(terms.jerk, w.lambda_j);
  add(terms.progress, w.lambda_p);
  add(terms.progress_norm, w.lambda_p_norm);
  add(terms.projection, w.lambda_proj);
  return total.valid() ? total : tape.Constant(0.0);
}

RewardBreakdown StepReward(const StepSample& s, const RewardWeights& rw,
                           const LossWeights& lw) {
  RewardBreakdown r;
  if (s.d_norm < lw.r_q) r.collision = rw.collision;
  const double sign = lw.clearance_as_printed ? 1.0 : -1.0;
  const double hinge = std::max(1.0 - s.d_norm + lw.r_q, 0.0);
  r.avoid = rw.avoid_clearance * Softplus(sign * lw.beta2 * (s.d_norm - lw.r_q)) +
            rw.avoid_collide * s.v_c * hinge * hinge;
  const Vec3 jerk = (s.accel - s.prev_accel) / s.dt;
  r.smooth = rw.smooth_accel * s.accel.squaredNorm() + rw.smooth_jerk * jerk.squaredNorm();
  if (s.has_gate) {
    const double dist = s.p_gate_body.norm();
    const double r_th = rw.r_th > 0.0 ? rw.r_th : 0.5 * s.gate_min_dim;
    if (dist < r_th) r.pass = rw.pass;
    if (dist > 0.0) r.progress = rw.progress * s.v_body.dot(s.p_gate_body) / dist;
  }
  return r;
}

}  // namespace gaterace
