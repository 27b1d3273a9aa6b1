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

#include "gaterace/delta.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gaterace/csv.h"
#include "gaterace/parallel.h"
#include "gaterace/rng.h"

namespace gaterace {
namespace {

constexpr char kDatasetTag[] = "gaterace-dataset v1";
constexpr char kEpisodeHeader[] = "t,px,py,pz,vx,vy,vz,ux,uy,uz,ax,ay,az,yaw";

struct Window {
  std::size_t episode;
  std::size_t begin;
  std::size_t length;
};

std::vector<Window> MakeWindows(const TransitionDataset& data, int window) {
  std::vector<Window> out;
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const std::size_t n = data.episodes[e].size();
    for (std::size_t b = 0; b < n; b += window) {
      out.push_back({e, b, std::min<std::size_t>(window, n - b)});
    }
  }
  return out;
}

struct WindowTrace {
  NodeRef loss;
  std::vector<Vec3> corrections;
  std::vector<Vec3> sim_velocity;
};

// Closed-loop replay of one window on `tape`: the simulated state starts at
// the recorded state and is driven by the recorded actions plus the
// correction evaluated on the simulated state.
WindowTrace ReplayWindow(const TransitionEpisode& ep, std::size_t begin, std::size_t length,
                         const Network* delta, NodeRef params,
                         const DynamicsConfig& nominal, double weight_p, double weight_v,
                         Tape& tape) {
  WindowTrace trace;
  TapedState sim = RecordState(ep.states[begin], tape);
  NodeRef hidden;
  NodeRef sum;
  const double sp = std::sqrt(weight_p), sv = std::sqrt(weight_v);
  for (std::size_t k = begin; k < begin + length; ++k) {
    const DroneState now = ReadState(sim, tape);
    const Vec3& u = ep.actions[k];
    const double yaw = ep.yaws[k];
    NodeRef action = tape.Constant(u);
    if (delta != nullptr) {
      const Mat3 r = RotationFromR3(now.body_z, yaw);
      const NetOutput out = DeltaForward(*delta, params, r.transpose() * now.velocity,
                                         now.body_z, u, hidden, tape);
      hidden = out.hidden;
      trace.corrections.push_back(tape.Vec3Value(out.output));
      action = tape.Add(action, out.output);
    } else {
      trace.corrections.push_back(Vec3::Zero());
    }
    sim = Step(sim, ControlCommand{action, yaw}, nominal, tape).next;
    const DroneState& real = ep.states[k + 1];
    const NodeRef dp = tape.AddConstant(sim.position, Vec3(-real.position));
    const NodeRef dv = tape.AddConstant(sim.velocity, Vec3(-real.velocity));
    const std::array<NodeRef, 2> parts = {tape.Affine(dp, sp), tape.Affine(dv, sv)};
    const NodeRef err = tape.Norm(tape.Concat(parts));
    sum = sum.valid() ? tape.Add(sum, err) : err;
    trace.sim_velocity.push_back(tape.Vec3Value(sim.velocity));
  }
  trace.loss = tape.Affine(sum, 1.0 / static_cast<double>(length));
  return trace;
}

// Mean window loss and gradient over all windows, reduced in window order.
double BatchLoss(const TransitionDataset& data, const std::vector<Window>& windows,
                 const Network& delta, const DynamicsConfig& nominal,
                 const DeltaFitConfig& cfg, std::vector<double>& grad) {
  const int n = static_cast<int>(windows.size());
  std::vector<double> losses(n);
  std::vector<std::vector<double>> grads(n);
  ParallelFor(n, cfg.threads, [&](int i) {
    const Window& w = windows[i];
    losses[i] = DeltaWindowLoss(data.episodes[w.episode], w.begin, w.length, delta, nominal,
                                cfg, &grads[i]);
  });
  grad.assign(delta.params.size(), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += losses[i];
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += grads[i][j];
  }
  const double inv = 1.0 / n;
  for (double& g : grad) g *= inv;
  return total * inv;
}

}  // namespace

DynamicsConfig TargetDynamics::Plant() const {
  DynamicsConfig c = base;
  c.accel_offset = base.accel_offset + action_bias;
  c.thrust_scale = base.thrust_scale / mass_scale;
  c.drag_coeff = base.drag_coeff + extra_drag;
  c.tau_act = base.tau_act + extra_lag;
  return c;
}

bool TargetDynamics::IsNominal() const {
  return action_bias.isZero(0.0) && mass_scale == 1.0 && extra_drag == 0.0 &&
         extra_lag == 0.0;
}

void TargetDynamics::Validate() const {
  base.Validate();
  if (!(mass_scale > 0.0)) throw ConfigError("target.mass_scale must be > 0");
  if (!(base.drag_coeff + extra_drag >= 0.0)) throw ConfigError("target drag must stay >= 0");
  if (!(base.tau_act + extra_lag > 0.0)) throw ConfigError("target lag must stay > 0");
  if (!action_bias.allFinite()) throw ConfigError("target.action_bias not finite");
}

std::size_t TransitionDataset::Transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.size();
  return n;
}

void TransitionDataset::Validate() const {
  if (!(dt > 0.0)) throw IoError("dataset: dt must be > 0");
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    if (e.states.size() != e.actions.size() + 1 || e.yaws.size() != e.actions.size()) {
      throw IoError("dataset episode " + std::to_string(i) + ": inconsistent lengths");
    }
    for (const auto& s : e.states) {
      if (!s.IsFinite()) throw IoError("dataset episode " + std::to_string(i) + ": non-finite state");
    }
    for (std::size_t k = 0; k < e.actions.size(); ++k) {
      if (!e.actions[k].allFinite() || !std::isfinite(e.yaws[k])) {
        throw IoError("dataset episode " + std::to_string(i) + ": non-finite action");
      }
    }
  }
}

TransitionDataset Collect(const Network& policy, const TargetDynamics& target,
                          const EnvConfig& env, int episodes, int horizon,
                          std::uint64_t seed, int threads) {
  target.Validate();
  EnvConfig plant_env = env;
  plant_env.dynamics = target.Plant();
  TransitionDataset data;
  data.source = target.IsNominal() ? "nominal" : "target";
  data.dt = plant_env.dynamics.dt;
  data.episodes.resize(std::max(episodes, 0));
  RolloutOptions opts;
  opts.horizon = horizon;
  opts.avf_enabled = false;
  ParallelFor(episodes, threads, [&](int i) {
    const TrackSpec track = EpisodeTrack(plant_env, seed, "collect.track", i);
    const Rollout r =
        RunRollout(policy, track, plant_env, opts, SubstreamSeed(seed, "collect.start", i));
    TransitionEpisode& ep = data.episodes[i];
    const RolloutRecord& rec = r.result.trajectory;
    ep.states.push_back(rec.initial);
    for (const auto& s : rec.steps) {
      ep.states.push_back(s.state);
      ep.actions.push_back(s.command);
      ep.yaws.push_back(s.frame_yaw);
    }
  });
  return data;
}

void WriteEpisodeCsv(std::ostream& out, const TransitionEpisode& ep, double dt) {
  out << kEpisodeHeader << '\n';
  for (std::size_t k = 0; k < ep.states.size(); ++k) {
    const DroneState& s = ep.states[k];
    const bool last = k == ep.actions.size();
    const Vec3 u = last ? Vec3::Zero() : ep.actions[k];
    const double yaw = last ? 0.0 : ep.yaws[k];
    const double cols[] = {k * dt,           s.position.x(),       s.position.y(),
                           s.position.z(),   s.velocity.x(),       s.velocity.y(),
                           s.velocity.z(),   u.x(),                u.y(),
                           u.z(),            s.actuated_accel.x(), s.actuated_accel.y(),
                           s.actuated_accel.z(), yaw};
    for (std::size_t c = 0; c < std::size(cols); ++c) {
      out << (c ? "," : "") << FormatDouble(cols[c]);
    }
    out << '\n';
  }
}

TransitionEpisode ReadEpisodeCsv(std::istream& in, const std::string& name) {
  TransitionEpisode ep;
  std::string line;
  int line_no = 0;
  bool header = false;
  double last_t = -1.0;
  std::vector<std::array<double, 14>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kEpisodeHeader) {
        throw IoError(name + " line " + std::to_string(line_no) + ": unexpected header");
      }
      header = true;
      continue;
    }
    const auto f = SplitCsvLine(line);
    if (f.size() != 14) {
      throw IoError(name + " line " + std::to_string(line_no) + ": expected 14 columns, got " +
                    std::to_string(f.size()));
    }
    std::array<double, 14> row;
    for (int c = 0; c < 14; ++c) row[c] = ParseDouble(f[c], line_no);
    if (!(row[0] > last_t)) {
      throw IoError(name + " line " + std::to_string(line_no) + ": time is not increasing");
    }
    last_t = row[0];
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError(name + ": no rows");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    DroneState s;
    s.position = Vec3(r[1], r[2], r[3]);
    s.velocity = Vec3(r[4], r[5], r[6]);
    s.actuated_accel = Vec3(r[10], r[11], r[12]);
    ep.states.push_back(s);
    if (k + 1 < rows.size()) {
      ep.actions.push_back(Vec3(r[7], r[8], r[9]));
      ep.yaws.push_back(r[13]);
    }
  }
  return ep;
}

void WriteDataset(const std::string& dir, const TransitionDataset& data,
                  const std::vector<std::string>& comments) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());
  std::ofstream index(dir + "/index.txt");
  if (!index) throw IoError("cannot write '" + dir + "/index.txt'");
  index << kDatasetTag << '\n';
  for (const auto& c : comments) index << "# " << c << '\n';
  index << "source " << data.source << '\n';
  index << "dt " << FormatDouble(data.dt) << '\n';
  for (std::size_t i = 0; i < data.episodes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%04zu.csv", i);
    std::ofstream out(dir + "/" + name);
    if (!out) throw IoError("cannot write '" + dir + "/" + name + "'");
    for (const auto& c : comments) out << "# " << c << '\n';
    WriteEpisodeCsv(out, data.episodes[i], data.dt);
    index << "episode " << name << ' ' << data.episodes[i].size() << '\n';
  }
}

TransitionDataset ReadDataset(const std::string& dir) {
  std::ifstream index(dir + "/index.txt");
  if (!index) throw IoError("cannot open '" + dir + "/index.txt'");
  std::string line;
  if (!std::getline(index, line) || line != kDatasetTag) {
    throw IoError(dir + "/index.txt: missing '" + std::string(kDatasetTag) + "' header");
  }
  TransitionDataset data;
  int line_no = 1;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    std::string key, value;
    s >> key >> value;
    if (key == "source") {
      data.source = value;
    } else if (key == "dt") {
      data.dt = ParseDouble(value, line_no);
    } else if (key == "episode") {
      std::size_t expected = 0;
      if (!(s >> expected)) throw IoError(dir + "/index.txt line " + std::to_string(line_no) + ": missing length");
      std::ifstream ep_in(dir + "/" + value);
      if (!ep_in) throw IoError("cannot open '" + dir + "/" + value + "'");
      data.episodes.push_back(ReadEpisodeCsv(ep_in, value));
      if (data.episodes.back().size() != expected) {
        throw IoError(dir + "/" + value + ": length differs from index");
      }
    } else {
      throw IoError(dir + "/index.txt line " + std::to_string(line_no) + ": unknown record '" +
                    key + "'");
    }
  }
  data.Validate();
  return data;
}

void DeltaFitConfig::Validate() const {
  if (window < 1 || epochs < 0) throw ConfigError("delta: window >= 1 and epochs >= 0 required");
  if (!(lr > 0.0)) throw ConfigError("delta.lr must be > 0");
  if (!(weight_p >= 0.0 && weight_v >= 0.0 && weight_p + weight_v > 0.0)) {
    throw ConfigError("delta: state weights must be >= 0 and not both zero");
  }
  if (!(decay_alpha >= 0.0)) throw ConfigError("delta.decay_alpha must be >= 0");
  if (!(divergence_factor > 1.0)) throw ConfigError("delta.divergence_factor must be > 1");
  if (threads < 1) throw ConfigError("delta.threads must be >= 1");
}

double DeltaWindowLoss(const TransitionEpisode& ep, std::size_t begin, std::size_t length,
                       const Network& delta, const DynamicsConfig& nominal,
                       const DeltaFitConfig& cfg, std::vector<double>* grad) {
  if (length == 0 || begin + length > ep.size()) {
    throw std::invalid_argument("DeltaWindowLoss: window outside the episode");
  }
  Tape tape(GradientDecayFactor(cfg.decay_alpha, nominal.dt));
  const NodeRef params = tape.Parameters(delta.params);
  const WindowTrace trace = ReplayWindow(ep, begin, length, &delta, params, nominal,
                                         cfg.weight_p, cfg.weight_v, tape);
  if (grad != nullptr) {
    const auto g = tape.Backward(trace.loss)[params];
    grad->assign(g.begin(), g.end());
  }
  return tape.ScalarValue(trace.loss);
}

DeltaFitResult FitDelta(const TransitionDataset& data, Network delta,
                        const DynamicsConfig& nominal, const DeltaFitConfig& cfg) {
  cfg.Validate();
  nominal.Validate();
  if (data.Transitions() == 0) throw ConfigError("fit-delta: dataset is empty");
  const auto windows = MakeWindows(data, cfg.window);
  TrainConfig opt;
  opt.lr = cfg.lr;

  DeltaFitResult result;
  AdamState adam;
  std::vector<double> grad;
  double loss = BatchLoss(data, windows, delta, nominal, cfg, grad);
  const double initial = loss;
  result.loss_curve.push_back(loss);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (!std::isfinite(norm)) throw NumericError("fit-delta: non-finite gradient");
    std::vector<double> step = grad;
    if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
      for (double& g : step) g *= cfg.grad_clip / norm;
    }
    const std::vector<double> saved = delta.params;
    const AdamState saved_adam = adam;
    AdamStep(delta.params, step, adam, opt);
    std::vector<double> next_grad;
    const double next = BatchLoss(data, windows, delta, nominal, cfg, next_grad);
    if (initial > 0.0 && !(next <= cfg.divergence_factor * initial)) {
      throw NumericError("fit-delta: loss diverged at epoch " + std::to_string(epoch + 1) +
                         " (" + FormatDouble(next) + " vs initial " + FormatDouble(initial) +
                         ")");
    }
    if (next <= loss) {
      loss = next;
      grad = std::move(next_grad);
      opt.lr = std::min(cfg.lr, 1.2 * opt.lr);
    } else {
      delta.params = saved;
      adam = saved_adam;
      opt.lr *= 0.5;
      ++result.rejected_steps;
    }
    result.loss_curve.push_back(loss);
  }
  result.delta = std::move(delta);
  return result;
}

AlignmentReport EvaluateAlignment(const TransitionDataset& data, const Network* delta,
                                  const DynamicsConfig& nominal, int window) {
  AlignmentReport rep;
  double sq = 0.0;
  std::size_t vel_samples = 0;
  for (const Window& w : MakeWindows(data, window)) {
    const TransitionEpisode& ep = data.episodes[w.episode];
    Tape tape;
    const NodeRef params =
        delta != nullptr ? tape.Parameters(delta->params) : NodeRef{};
    const WindowTrace t = ReplayWindow(ep, w.begin, w.length, delta, params, nominal, 1.0,
                                       0.5, tape);
    for (std::size_t k = 0; k < w.length; ++k) {
      sq += (t.sim_velocity[k] - ep.states[w.begin + k + 1].velocity).squaredNorm();
      ++vel_samples;
      rep.corrections.push_back(t.corrections[k]);
      rep.mean_correction += t.corrections[k];
      rep.mean_correction_norm += t.corrections[k].norm();
    }
  }
  rep.samples = rep.corrections.size();
  if (rep.samples > 0) {
    rep.mean_correction /= static_cast<double>(rep.samples);
    rep.mean_correction_norm /= static_cast<double>(rep.samples);
    rep.velocity_rmse = std::sqrt(sq / static_cast<double>(vel_samples));
  }
  return rep;
}

TrainResult FinetuneWithDelta(const Network& policy, const Network* delta,
                              const TargetDynamics& target, const TrainConfig& cfg,
                              const EnvConfig& env, TrainOptions options) {
  EnvConfig eval_env = env;
  eval_env.dynamics = target.Plant();
  options.delta = delta;
  options.eval_env = eval_env;
  return Train(cfg, env, policy, options);
}

}  // namespace gaterace
