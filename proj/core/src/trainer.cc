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

#include "gaterace/trainer.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gaterace/csv.h"
#include "gaterace/parallel.h"
#include "gaterace/rng.h"

namespace gaterace {
namespace {

NodeRef Accumulate(NodeRef sum, NodeRef term, Tape& tape) {
  if (!term.valid()) return sum;
  return sum.valid() ? tape.Add(sum, term) : term;
}

NodeRef Average(NodeRef sum, int denominator, Tape& tape) {
  return sum.valid() ? tape.Affine(sum, 1.0 / denominator) : NodeRef{};
}

double ValueOr0(const Tape& tape, NodeRef n) { return n.valid() ? tape.ScalarValue(n) : 0.0; }

Mat3 GateFrameRows(const GateSpec& gate) {
  Mat3 m;
  m.row(0) = gate.normal.transpose();
  m.row(1) = gate.side().transpose();
  m.row(2) = gate.up.transpose();
  return m;
}

}  // namespace

void EnvConfig::Validate() const {
  dynamics.Validate();
  field.Validate();
  loss.Validate();
  reward.Validate();
  geometry.Validate();
  if (difficulty < 0 || difficulty > 9) throw ConfigError("track.difficulty must lie in [0, 9]");
  if (!(start_jitter >= 0.0)) throw ConfigError("track.start_jitter must be >= 0");
}

void TrainConfig::Validate() const {
  if (horizon < 2) throw ConfigError("train.horizon must be >= 2");
  if (envs < 1) throw ConfigError("train.envs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1/2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(decay_alpha >= 0.0)) throw ConfigError("train.decay_alpha must be >= 0");
  if (iterations < 0 || eval_every < 0 || eval_trials < 0) {
    throw ConfigError("train.iterations, eval_every and eval_trials must be >= 0");
  }
  if (eval_horizon < 1) throw ConfigError("train.eval_horizon must be >= 1");
  if (threads < 1) throw ConfigError("train.threads must be >= 1");
}

TrackSpec EpisodeTrack(const EnvConfig& env, std::uint64_t root_seed,
                       std::string_view stream, std::uint64_t index) {
  const std::uint64_t seed = env.vary_tracks ? SubstreamSeed(root_seed, stream, index)
                                             : SubstreamSeed(env.layout_seed, "layout");
  return GenerateTrack(env.family, env.difficulty, seed, env.geometry);
}

Rollout RunRollout(const Network& policy, const TrackSpec& track, const EnvConfig& env,
                   const RolloutOptions& options, std::uint64_t start_seed) {
  if (track.gates.empty()) throw std::invalid_argument("RunRollout: track has no gates");
  if (options.horizon < 1) throw std::invalid_argument("RunRollout: horizon must be >= 1");
  const DynamicsConfig& dyn = env.dynamics;
  const LossWeights& lw = env.loss;
  Rollout r;
  r.tape = Tape(GradientDecayFactor(options.decay_alpha, dyn.dt));
  Tape& tape = r.tape;
  r.params = tape.Parameters(policy.params);
  NodeRef delta_params;
  if (options.delta != nullptr) delta_params = tape.Parameters(options.delta->params);

  Rng rng = Substream(start_seed, "start");
  Vec3 jitter;
  for (int i = 0; i < 3; ++i) jitter[i] = Uniform(rng, -env.start_jitter, env.start_jitter);
  const DroneState initial = DroneState::Hover(track.start + jitter);
  RolloutRecord& record = r.result.trajectory;
  record.initial = initial;

  const int n_gates = static_cast<int>(track.gates.size());
  const int total_gates = track.TotalGatesToPass();
  TapedState ts = RecordState(initial, tape);
  NodeRef hidden, delta_hidden;
  Vec3 prev_cmd = Vec3::Zero();
  Vec3 prev_world = Vec3::Zero();
  int passed = 0;
  NodeRef clear_sum, collide_sum, prog_sum, prog_norm_sum, proj_sum;
  std::vector<NodeRef> accels;

  for (int k = 0; k < options.horizon; ++k) {
    const DroneState now = ReadState(ts, tape);
    const int gate_idx = passed % n_gates;
    const GateSpec& gate = track.gates[gate_idx];
    const double yaw = YawToward(now.position, gate);
    const Observation obs = Observe(now, track, gate_idx, prev_cmd, env.observe);

    StepResult sr;
    NodeRef action;
    try {
      const NetOutput out = PolicyForward(policy, r.params, obs, hidden, tape);
      hidden = out.hidden;
      action = out.output;
      if (options.delta != nullptr) {
        const NetOutput corr = DeltaForward(*options.delta, delta_params, obs.v_body,
                                            now.body_z, tape.Vec3Value(action),
                                            delta_hidden, tape);
        delta_hidden = corr.hidden;
        action = tape.Add(action, corr.output);
      }
      sr = Step(ts, ControlCommand{action, yaw}, dyn, tape);
    } catch (const NumericError& e) {
      record.aborted = true;
      record.diagnostic = "step " + std::to_string(k) + ": " + e.what();
      break;
    }
    const DroneState next = ReadState(sr.next, tape);
    if (!next.IsFinite()) {
      record.aborted = true;
      record.diagnostic = "step " + std::to_string(k) + ": non-finite state";
      break;
    }

    StepRecord step;
    step.t = (k + 1) * dyn.dt;
    step.state = next;
    step.command = tape.Vec3Value(action);
    step.frame_yaw = yaw;
    step.world_accel = tape.Vec3Value(sr.world_accel);
    step.gate_idx = gate_idx;

    // Obstacle terms: the nearest point is held fixed, d is a function of
    // the taped position.
    const CollisionInfo hit = CheckCollision(next.position, next.velocity, track, lw.r_q);
    if (hit.distance < kFarDistance) {
      const NodeRef d =
          tape.Sub(tape.Constant(Vec3(next.position + hit.offset)), sr.next.position);
      const NodeRef d_norm = tape.Norm(d);
      const NodeRef clear = ClearanceLoss(d_norm, lw, tape);
      const NodeRef coll = CollideLoss(d_norm, tape.Constant(hit.v_c), lw, tape);
      step.clearance = tape.ScalarValue(clear);
      step.collide = tape.ScalarValue(coll);
      clear_sum = Accumulate(clear_sum, clear, tape);
      collide_sum = Accumulate(collide_sum, coll, tape);
    }

    // Guidance terms in the body frame of the new state.
    const Mat3 body_t =
        RotationFromR3(next.body_z, YawToward(next.position, gate)).transpose();
    const NodeRef v_body = tape.MatVec(body_t, sr.next.velocity);
    const NodeRef to_gate = tape.Sub(tape.Constant(gate.center), sr.next.position);
    const NodeRef p_gate_body = tape.MatVec(body_t, to_gate);
    const Vec3 p_gate_val = tape.Vec3Value(p_gate_body);
    if (p_gate_val.norm() > 1e-9) {
      const NodeRef prog = ProgressLoss(v_body, p_gate_body, tape);
      step.progress = tape.ScalarValue(prog);
      prog_sum = Accumulate(prog_sum, prog, tape);
      if (lw.lambda_p_norm > 0.0) {
        const NodeRef pn = ProgressLossNormalized(v_body, p_gate_body, tape);
        step.progress_norm = tape.ScalarValue(pn);
        prog_norm_sum = Accumulate(prog_norm_sum, pn, tape);
      }
    }
    if (lw.lambda_proj > 0.0) {
      const NodeRef local = tape.MatVec(
          GateFrameRows(gate), tape.AddConstant(sr.next.position, Vec3(-gate.center)));
      const NodeRef d_gate = tape.Constant((next.position - gate.center).norm());
      const NodeRef proj = ProjectionLoss(local, d_gate, lw, tape);
      step.projection = tape.ScalarValue(proj);
      proj_sum = Accumulate(proj_sum, proj, tape);
    }
    accels.push_back(sr.world_accel);
    step.accel = step.world_accel.squaredNorm();
    if (k > 0) step.jerk = ((step.world_accel - prev_world) / dyn.dt).squaredNorm();

    step.u_a = AttractiveField(next.position, next.velocity, gate, env.field);
    if (options.avf_enabled) r.injections.push_back({sr.next.position, step.u_a});

    step.passed = CheckGatePass(now.position, next.position, gate, lw.r_q);
    step.collided = hit.collided || !track.InBounds(next.position);
    if (step.passed) ++passed;

    StepSample sample;
    sample.d_norm = hit.distance;
    sample.v_c = hit.v_c;
    sample.accel = step.world_accel;
    sample.prev_accel = k > 0 ? prev_world : step.world_accel;
    sample.dt = dyn.dt;
    sample.has_gate = true;
    sample.v_body = tape.Vec3Value(v_body);
    sample.p_gate_body = p_gate_val;
    sample.gate_min_dim = std::min(gate.width, gate.height);
    step.reward = StepReward(sample, env.reward, lw);
    if (step.collided && !hit.collided) step.reward.collision = env.reward.collision;

    r.result.v_max = std::max(r.result.v_max, next.velocity.norm());
    r.result.reward += step.reward.total();
    record.steps.push_back(step);

    ts = sr.next;
    prev_cmd = step.command;
    prev_world = step.world_accel;
    if (step.collided) {
      r.result.collided = true;
      break;
    }
    if (passed >= total_gates) break;
  }

  const int horizon = options.horizon;
  LossTerms terms;
  terms.clearance = Average(clear_sum, horizon, tape);
  terms.collide = Average(collide_sum, horizon, tape);
  terms.progress = Average(prog_sum, horizon, tape);
  terms.progress_norm = Average(prog_norm_sum, horizon, tape);
  terms.projection = Average(proj_sum, horizon, tape);
  if (!accels.empty()) {
    if (horizon >= 2) {
      const SmoothnessTerms smooth = SmoothnessLosses(accels, dyn.dt, tape, horizon);
      terms.accel = smooth.accel;
      terms.jerk = smooth.jerk;
    } else {
      terms.accel = tape.Dot(accels[0], accels[0]);
    }
  }
  r.loss = TotalLoss(terms, lw, tape);

  LossValues& v = r.losses;
  v.total = tape.ScalarValue(r.loss);
  v.clearance = ValueOr0(tape, terms.clearance);
  v.collide = ValueOr0(tape, terms.collide);
  v.accel = ValueOr0(tape, terms.accel);
  v.jerk = ValueOr0(tape, terms.jerk);
  v.progress = ValueOr0(tape, terms.progress);
  v.progress_norm = ValueOr0(tape, terms.progress_norm);
  v.projection = ValueOr0(tape, terms.projection);

  r.result.gates_passed = passed;
  r.result.success = !r.result.collided && !record.aborted;
  r.result.success_cross = r.result.success && passed >= total_gates;
  return r;
}

void AdamStep(std::span<double> params, std::span<const double> grad, AdamState& s,
              const TrainConfig& cfg) {
  if (params.size() != grad.size()) throw std::invalid_argument("AdamStep: size mismatch");
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
    s.t = 0;
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = cfg.adam_beta1 * s.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    s.v[i] = cfg.adam_beta2 * s.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

std::vector<double> RolloutGradient(std::span<Rollout> rollouts, bool avf_enabled,
                                    int threads) {
  if (rollouts.empty()) throw std::invalid_argument("RolloutGradient: no rollouts");
  const std::size_t n = rollouts[0].params.size;
  std::vector<std::vector<double>> per(rollouts.size());
  ParallelFor(static_cast<int>(rollouts.size()), threads, [&](int i) {
    Rollout& r = rollouts[i];
    std::span<const GradientInjection> inj;
    if (avf_enabled) inj = r.injections;
    const GradientTable g = r.tape.Backward(r.loss, inj);
    const auto gp = g[r.params];
    per[i].assign(gp.begin(), gp.end());
  });
  std::vector<double> mean(n, 0.0);
  for (const auto& g : per) {
    if (g.size() != n) throw std::invalid_argument("RolloutGradient: parameter size mismatch");
    for (std::size_t j = 0; j < n; ++j) mean[j] += g[j];
  }
  const double scale = 1.0 / static_cast<double>(rollouts.size());
  for (double& x : mean) x *= scale;
  return mean;
}

UpdateStats Update(std::span<Rollout> rollouts, Network& policy, AdamState& adam,
                   const TrainConfig& cfg) {
  UpdateStats stats;
  double avf_sum = 0.0;
  std::size_t avf_count = 0;
  for (const Rollout& r : rollouts) {
    const LossValues& v = r.losses;
    stats.losses.total += v.total;
    stats.losses.clearance += v.clearance;
    stats.losses.collide += v.collide;
    stats.losses.accel += v.accel;
    stats.losses.jerk += v.jerk;
    stats.losses.progress += v.progress;
    stats.losses.progress_norm += v.progress_norm;
    stats.losses.projection += v.projection;
    for (const auto& s : r.result.trajectory.steps) {
      avf_sum += s.u_a.norm();
      ++avf_count;
    }
  }
  const double inv = 1.0 / static_cast<double>(rollouts.size());
  for (double* x : {&stats.losses.total, &stats.losses.clearance, &stats.losses.collide,
                    &stats.losses.accel, &stats.losses.jerk, &stats.losses.progress,
                    &stats.losses.progress_norm, &stats.losses.projection}) {
    *x *= inv;
  }
  stats.avf_norm = avf_count > 0 ? avf_sum / static_cast<double>(avf_count) : 0.0;

  std::vector<double> grad = RolloutGradient(rollouts, cfg.avf_enabled, cfg.threads);
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  stats.grad_norm = std::sqrt(sq);
  if (!std::isfinite(stats.grad_norm)) {
    stats.skipped = true;
    return stats;
  }
  if (cfg.grad_clip > 0.0 && stats.grad_norm > cfg.grad_clip) {
    const double s = cfg.grad_clip / stats.grad_norm;
    for (double& g : grad) g *= s;
  }
  AdamStep(policy.params, grad, adam, cfg);
  return stats;
}

EvalReport Evaluate(const Network& policy, const Network* delta, const EnvConfig& env,
                    int trials, int horizon, std::uint64_t seed, int threads) {
  EvalReport rep;
  rep.trials = trials;
  rep.episodes.resize(trials);
  RolloutOptions opts;
  opts.horizon = horizon;
  opts.avf_enabled = false;
  opts.delta = delta;
  ParallelFor(trials, threads, [&](int i) {
    const TrackSpec track = EpisodeTrack(env, seed, "eval.track", i);
    Rollout r = RunRollout(policy, track, env, opts, SubstreamSeed(seed, "eval.start", i));
    rep.episodes[i] = std::move(r.result);
  });
  for (const auto& e : rep.episodes) {
    rep.successes += e.success ? 1 : 0;
    rep.crosses += e.success_cross ? 1 : 0;
    rep.v_max += e.v_max;
    rep.gates_per_episode += e.gates_passed;
    rep.mean_reward += e.reward;
  }
  if (trials > 0) {
    rep.success_rate = static_cast<double>(rep.successes) / trials;
    rep.success_cross = static_cast<double>(rep.crosses) / trials;
    rep.v_max /= trials;
    rep.gates_per_episode /= trials;
    rep.mean_reward /= trials;
  }
  return rep;
}

TrainResult Train(const TrainConfig& cfg, const EnvConfig& env, Network policy,
                  const TrainOptions& options) {
  cfg.Validate();
  env.Validate();
  const EnvConfig& eval_env = options.eval_env ? *options.eval_env : env;
  TrainResult result;
  AdamState adam;
  if (options.on_checkpoint) options.on_checkpoint(0, policy);
  RolloutOptions ro;
  ro.horizon = cfg.horizon;
  ro.decay_alpha = cfg.decay_alpha;
  ro.avf_enabled = cfg.avf_enabled;
  ro.delta = options.delta;
  const std::uint64_t eval_seed = SubstreamSeed(cfg.seed, "eval");

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Rollout> rollouts(cfg.envs);
    ParallelFor(cfg.envs, cfg.threads, [&](int e) {
      const std::uint64_t index = static_cast<std::uint64_t>(it) * cfg.envs + e;
      const TrackSpec track = EpisodeTrack(env, cfg.seed, "track", index);
      rollouts[e] = RunRollout(policy, track, env, ro, SubstreamSeed(cfg.seed, "rollout", index));
    });
    MetricsRow row;
    row.iter = it + 1;
    row.stats = Update(rollouts, policy, adam, cfg);
    const bool last = it + 1 == cfg.iterations;
    if (cfg.eval_trials > 0 && (last || (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0))) {
      row.eval = Evaluate(policy, nullptr, eval_env, cfg.eval_trials, cfg.eval_horizon,
                          eval_seed, cfg.threads);
      row.eval->episodes.clear();
    }
    if (options.on_metrics) options.on_metrics(row);
    if (options.on_checkpoint) options.on_checkpoint(it + 1, policy);
    result.metrics.push_back(std::move(row));
  }
  result.policy = std::move(policy);
  return result;
}

void WriteMetricsHeader(std::ostream& out) {
  out << "iter,loss_total,loss_C,loss_a,loss_j,loss_p,grad_norm,avf_norm,success_rate,"
         "success_cross,v_max\n";
}

void WriteMetricsRow(std::ostream& out, const MetricsRow& row) {
  const LossValues& l = row.stats.losses;
  const double loss_p = l.progress_norm != 0.0 && l.progress == 0.0 ? l.progress_norm
                                                                     : l.progress;
  out << row.iter << ',' << FormatDouble(l.total) << ',' << FormatDouble(l.c()) << ','
      << FormatDouble(l.accel) << ',' << FormatDouble(l.jerk) << ',' << FormatDouble(loss_p)
      << ',' << FormatDouble(row.stats.grad_norm) << ',' << FormatDouble(row.stats.avf_norm)
      << ',';
  if (row.eval) {
    out << FormatDouble(row.eval->success_rate) << ',' << FormatDouble(row.eval->success_cross)
        << ',' << FormatDouble(row.eval->v_max);
  } else {
    out << ",,";
  }
  out << '\n';
}

void WriteTrajectoryCsv(std::ostream& out, const RolloutRecord& record) {
  out << "t,px,py,pz,vx,vy,vz,ax,ay,az,gate_idx,collided,reward,loss_clearance,"
         "loss_collide,loss_accel,loss_jerk,loss_progress\n";
  auto v3 = [&](const Vec3& v) {
    out << FormatDouble(v.x()) << ',' << FormatDouble(v.y()) << ',' << FormatDouble(v.z());
  };
  out << "0,";
  v3(record.initial.position);
  out << ',';
  v3(record.initial.velocity);
  out << ",0,0,0,0,0,0,0,0,0,0,0\n";
  for (const auto& s : record.steps) {
    out << FormatDouble(s.t) << ',';
    v3(s.state.position);
    out << ',';
    v3(s.state.velocity);
    out << ',';
    v3(s.world_accel);
    out << ',' << s.gate_idx << ',' << (s.collided ? 1 : 0) << ','
        << FormatDouble(s.reward.total()) << ',' << FormatDouble(s.clearance) << ','
        << FormatDouble(s.collide) << ',' << FormatDouble(s.accel) << ','
        << FormatDouble(s.jerk) << ',' << FormatDouble(s.progress) << '\n';
  }
}

}  // namespace gaterace
