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

#include <cmath>
#include <algorithm>
#include <cstring>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "gaterace/rng.h"
#include "testing/finite_diff.h"
#include "testing/plain_bptt.h"
#include "testing/rollout_oracle.h"

namespace gaterace {
namespace {

EnvConfig SmallEnv() {
  EnvConfig env;
  env.observe.render_depth = false;
  env.start_jitter = 0.3;
  return env;
}

// A state-only policy with a nudge toward +x so rollouts actually move.
Network MovingPolicy(std::uint64_t seed) {
  Network net = Network::Init(NetArch::StateOnlyPolicy(16, 16), seed);
  const auto& b = net.manifest.Find("head.out.b");
  net.params[b.offset] += 2.0;
  return net;
}

RolloutOptions Options(int horizon, double alpha, bool avf) {
  RolloutOptions o;
  o.horizon = horizon;
  o.decay_alpha = alpha;
  o.avf_enabled = avf;
  return o;
}

std::vector<double> ParamGradient(Rollout& r, bool with_injections) {
  std::span<const GradientInjection> inj;
  if (with_injections) inj = r.injections;
  const GradientTable g = r.tape.Backward(r.loss, inj);
  return std::vector<double>(g[r.params].begin(), g[r.params].end());
}

bool BitEqual(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

TEST(TrainerTest, ZeroPolicyHoversInPlace) {
  EnvConfig env = SmallEnv();
  env.start_jitter = 0.0;
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 1, env.geometry);
  const Network zero = Network::Zeros(NetArch::StateOnlyPolicy());
  Rollout r = RunRollout(zero, track, env, Options(60, 3.0, true), 5);
  const EpisodeResult& e = r.result;
  ASSERT_EQ(e.trajectory.steps.size(), 60u);
  for (const auto& s : e.trajectory.steps) {
    EXPECT_LT((s.state.position - track.start).norm(), 1e-12);
  }
  EXPECT_EQ(e.gates_passed, 0);
  EXPECT_TRUE(e.success);
  EXPECT_FALSE(e.success_cross);
  EXPECT_NEAR(e.v_max, 0.0, 1e-12);
  EXPECT_EQ(r.losses.accel, 0.0);
}

TEST(TrainerTest, FixedLayoutIsSharedAcrossStreams) {
  EnvConfig env = SmallEnv();
  env.difficulty = 6;
  env.vary_tracks = false;
  env.layout_seed = 4;
  const TrackSpec train = EpisodeTrack(env, 1, "track", 17);
  const TrackSpec eval = EpisodeTrack(env, 999, "eval.track", 3);
  ASSERT_EQ(train.obstacles.size(), eval.obstacles.size());
  for (std::size_t i = 0; i < train.obstacles.size(); ++i) {
    EXPECT_EQ(train.obstacles[i].center, eval.obstacles[i].center);
  }
  env.layout_seed = 5;
  EXPECT_NE(EpisodeTrack(env, 1, "track", 17).obstacles.front().center,
            train.obstacles.front().center);
  env.vary_tracks = true;
  EXPECT_NE(EpisodeTrack(env, 1, "track", 17).obstacles.front().center,
            EpisodeTrack(env, 1, "track", 18).obstacles.front().center);
}

TEST(TrainerTest, HorizonOneRollout) {
  const EnvConfig env = SmallEnv();
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 1, env.geometry);
  Rollout r = RunRollout(MovingPolicy(1), track, env, Options(1, 3.0, true), 2);
  ASSERT_EQ(r.result.trajectory.steps.size(), 1u);
  EXPECT_EQ(r.losses.jerk, 0.0);
  EXPECT_DOUBLE_EQ(r.losses.accel, r.result.trajectory.steps[0].accel);
  EXPECT_TRUE(std::isfinite(r.losses.total));
  EXPECT_EQ(ParamGradient(r, true).size(), r.params.size);
}

TEST(TrainerTest, RolloutsAreDeterministic) {
  const EnvConfig env = SmallEnv();
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 3, 4, env.geometry);
  Rollout a = RunRollout(MovingPolicy(2), track, env, Options(40, 3.0, true), 9);
  Rollout b = RunRollout(MovingPolicy(2), track, env, Options(40, 3.0, true), 9);
  EXPECT_EQ(a.losses.total, b.losses.total);
  EXPECT_TRUE(BitEqual(ParamGradient(a, true), ParamGradient(b, true)));
  Rollout c = RunRollout(MovingPolicy(2), track, env, Options(40, 3.0, true), 10);
  EXPECT_NE(a.result.trajectory.initial.position, c.result.trajectory.initial.position);
}

// The tape gradient equals central differences of the rollout replayed with
// every detached quantity frozen at its recorded value.
TEST(TrainerTest, RolloutGradientMatchesFrozenReplay) {
  EnvConfig env = SmallEnv();
  env.difficulty = 4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, env.difficulty, seed,
                                          env.geometry);
    const Network net = MovingPolicy(seed);
    const int horizon = 20;
    Rollout r = RunRollout(net, track, env, Options(horizon, 0.0, false), seed);
    const testing::FrozenTrace frozen = testing::Freeze(r, track, env, horizon);
    const double replay = testing::OracleRollout(frozen, net, net.params, env).loss;
    EXPECT_NEAR(replay, r.losses.total, 1e-12 * (1.0 + std::abs(replay)));
    const auto analytic = ParamGradient(r, false);
    const auto numeric = testing::CentralGradient(
        [&](std::span<const double> x) {
          return testing::OracleRollout(frozen, net, x, env).loss;
        },
        net.params, 1e-6);
    EXPECT_LT(testing::RelativeError(analytic, numeric), 1e-6) << "seed " << seed;
  }
}

// With the attractive vectors injected, the update direction is
// grad L - sum_k u_k^T dp_k/dtheta; the Jacobians come from the frozen replay.
TEST(TrainerTest, InjectedGradientMatchesFieldWeightedJacobian) {
  const EnvConfig env = SmallEnv();
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 3, env.geometry);
  const Network net = MovingPolicy(4);
  const int horizon = 12;
  Rollout r = RunRollout(net, track, env, Options(horizon, 0.0, true), 6);
  const testing::FrozenTrace frozen = testing::Freeze(r, track, env, horizon);
  const auto plain = ParamGradient(r, false);
  const auto injected = ParamGradient(r, true);
  ASSERT_EQ(r.injections.size(), r.result.trajectory.steps.size());

  std::vector<double> expected = plain;
  const double h = 1e-6;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    std::vector<double> up = net.params, down = net.params;
    up[i] += h;
    down[i] -= h;
    const auto pu = testing::OracleRollout(frozen, net, up, env).positions;
    const auto pd = testing::OracleRollout(frozen, net, down, env).positions;
    for (std::size_t k = 0; k < pu.size(); ++k) {
      expected[i] -= r.injections[k].vector.dot((pu[k] - pd[k]) / (2.0 * h));
    }
  }
  std::vector<double> delta_expected(plain.size()), delta_tape(plain.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    delta_expected[i] = expected[i] - plain[i];
    delta_tape[i] = injected[i] - plain[i];
  }
  EXPECT_LT(testing::RelativeError(delta_tape, delta_expected), 1e-5);
  EXPECT_GT(std::sqrt(std::inner_product(delta_tape.begin(), delta_tape.end(),
                                         delta_tape.begin(), 0.0)),
            0.0);
}

TEST(TrainerTest, InjectionsSuperpose) {
  const EnvConfig env = SmallEnv();
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 3, env.geometry);
  Rollout r = RunRollout(MovingPolicy(5), track, env, Options(15, 3.0, true), 7);
  const auto plain = ParamGradient(r, false);
  const auto all = ParamGradient(r, true);
  std::vector<double> sum = plain;
  for (const auto& inj : r.injections) {
    const std::vector<GradientInjection> one = {inj};
    const GradientTable g = r.tape.Backward(r.loss, one);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[r.params][i] - plain[i];
  }
  EXPECT_LT(testing::RelativeError(all, sum, 1e-12), 1e-9);
}

TEST(TrainerTest, EarlyTerminationKeepsTheConfiguredDenominator) {
  EnvConfig env = SmallEnv();
  env.start_jitter = 0.0;
  TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 1, env.geometry);
  track.obstacles.push_back({Obstacle::Kind::kSphere, track.start + Vec3(0.6, 0, 0), 0.3, 0});
  const int horizon = 50;
  Rollout r = RunRollout(MovingPolicy(6), track, env, Options(horizon, 3.0, true), 1);
  const auto& steps = r.result.trajectory.steps;
  ASSERT_LT(static_cast<int>(steps.size()), horizon);
  EXPECT_TRUE(r.result.collided);
  EXPECT_FALSE(r.result.success);
  double acc = 0.0, jerk = 0.0, prog = 0.0;
  for (const auto& s : steps) {
    acc += s.accel;
    jerk += s.jerk;
    prog += s.progress;
  }
  EXPECT_NEAR(r.losses.accel, acc / horizon, 1e-12);
  EXPECT_NEAR(r.losses.jerk, jerk / (horizon - 1), 1e-9);
  EXPECT_NEAR(r.losses.progress, prog / horizon, 1e-12);
}

TEST(TrainerTest, AdamFirstStepIsSignedLearningRate) {
  TrainConfig cfg;
  cfg.lr = 0.01;
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {0.3, -4.0, 0.0};
  AdamState s;
  AdamStep(p, g, s, cfg);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(s.t, 1);
  EXPECT_THROW(AdamStep(p, std::vector<double>(2), s, cfg), std::invalid_argument);
}

TEST(TrainerTest, DisabledFieldReducesToPlainBptt) {
  TrainConfig cfg;
  cfg.horizon = 30;
  cfg.envs = 3;
  cfg.iterations = 10;
  cfg.eval_trials = 0;
  cfg.lr = 1e-2;
  cfg.avf_enabled = false;
  cfg.seed = 77;
  EnvConfig env = SmallEnv();
  env.difficulty = 2;
  const Network init = MovingPolicy(8);
  const TrainResult trained = Train(cfg, env, init);
  EXPECT_TRUE(BitEqual(trained.policy.params, testing::PlainBpttParams(cfg, env, init)));

  cfg.avf_enabled = true;
  const TrainResult with_field = Train(cfg, env, init);
  EXPECT_FALSE(BitEqual(with_field.policy.params, trained.policy.params));
}

TEST(TrainerTest, ZeroIterationsLeavesThePolicyUntouched) {
  TrainConfig cfg;
  cfg.iterations = 0;
  int checkpoints = 0;
  TrainOptions opts;
  opts.on_checkpoint = [&](int it, const Network&) {
    EXPECT_EQ(it, 0);
    ++checkpoints;
  };
  const Network init = MovingPolicy(9);
  const TrainResult r = Train(cfg, SmallEnv(), init, opts);
  EXPECT_TRUE(BitEqual(r.policy.params, init.params));
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(checkpoints, 1);
}

TEST(TrainerTest, TrainingIsDeterministicAndThreadCountInvariant) {
  TrainConfig cfg;
  cfg.horizon = 25;
  cfg.envs = 4;
  cfg.iterations = 3;
  cfg.eval_every = 2;
  cfg.eval_trials = 3;
  cfg.eval_horizon = 40;
  cfg.seed = 5;
  const EnvConfig env = SmallEnv();
  auto csv = [&](int threads) {
    TrainConfig c = cfg;
    c.threads = threads;
    std::ostringstream out;
    WriteMetricsHeader(out);
    TrainOptions opts;
    opts.on_metrics = [&](const MetricsRow& row) { WriteMetricsRow(out, row); };
    Train(c, env, MovingPolicy(10), opts);
    return out.str();
  };
  const std::string a = csv(1);
  EXPECT_EQ(a, csv(1));
  EXPECT_EQ(a, csv(3));
  std::istringstream lines(a);
  std::string header, row1, row2, row3;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  std::getline(lines, row3);
  EXPECT_EQ(header,
            "iter,loss_total,loss_C,loss_a,loss_j,loss_p,grad_norm,avf_norm,success_rate,"
            "success_cross,v_max");
  EXPECT_EQ(row1.substr(row1.size() - 3), ",,,");
  EXPECT_NE(row2.substr(row2.size() - 3), ",,,");
  EXPECT_NE(row3.substr(row3.size() - 3), ",,,");
}

TEST(TrainerTest, EvaluationOfHoveringPolicy) {
  const EnvConfig env = SmallEnv();
  const Network zero = Network::Zeros(NetArch::StateOnlyPolicy());
  const EvalReport rep = Evaluate(zero, nullptr, env, 10, 50, 3);
  EXPECT_EQ(rep.trials, 10);
  EXPECT_EQ(rep.successes, 10);
  EXPECT_EQ(rep.crosses, 0);
  EXPECT_DOUBLE_EQ(rep.success_rate, 1.0);
  EXPECT_DOUBLE_EQ(rep.success_cross, 0.0);
  EXPECT_NEAR(rep.v_max, 0.0, 1e-12);
}

TEST(TrainerTest, TrajectoryCsvLayout) {
  const EnvConfig env = SmallEnv();
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 0, 1, env.geometry);
  Rollout r = RunRollout(MovingPolicy(11), track, env, Options(5, 3.0, true), 1);
  std::ostringstream out;
  WriteTrajectoryCsv(out, r.result.trajectory);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "t,px,py,pz,vx,vy,vz,ax,ay,az,gate_idx,collided,reward,loss_clearance,"
            "loss_collide,loss_accel,loss_jerk,loss_progress");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 17);
  }
  EXPECT_EQ(rows, 6);
}

TEST(TrainerTest, ConfigValidation) {
  TrainConfig cfg;
  cfg.envs = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = TrainConfig();
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  EnvConfig env;
  env.difficulty = 12;
  EXPECT_THROW(env.Validate(), ConfigError);
}

}  // namespace
}  // namespace gaterace
