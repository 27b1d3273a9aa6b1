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

#include <cstdint>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gaterace/delta.h"
#include "gaterace/field.h"
#include "gaterace/policy.h"
#include "gaterace/tape.h"
#include "gaterace/trainer.h"
#include "gaterace/world.h"

namespace gaterace {
namespace {

EnvConfig StateOnlyEnv(int difficulty) {
  EnvConfig env;
  env.observe.render_depth = false;
  env.difficulty = difficulty;
  return env;
}

Network MovingPolicy(const NetArch& arch) {
  Network net = Network::Init(arch, 1);
  net.params[net.manifest.Find("head.out.b").offset] += 1.5;
  return net;
}

void BM_GateField(benchmark::State& state) {
  const GateSpec gate =
      GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 1.5, 1.5);
  const FieldConfig cfg;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<Vec3> points(1024);
  for (Vec3& p : points) p = Vec3(u(rng), u(rng), u(rng));
  std::size_t i = 0;
  for (auto _ : state) {
    const Vec3& p = points[i++ % points.size()];
    benchmark::DoNotOptimize(AttractiveField(p, Vec3(1.0, 0.5, 0.0), gate, cfg));
  }
}
BENCHMARK(BM_GateField);

void BM_DepthRender(benchmark::State& state) {
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, 6, 3, TrackGeometry());
  const CameraConfig cam;
  for (auto _ : state) {
    benchmark::DoNotOptimize(RenderDepth(track.start, Mat3::Identity(), track, cam));
  }
}
BENCHMARK(BM_DepthRender);

void BM_TapeBackward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  std::vector<double> x(3, 0.1);
  for (auto _ : state) {
    Tape tape(0.9);
    NodeRef p = tape.Parameters(x);
    NodeRef acc = tape.Dot(p, p);
    for (int k = 0; k < steps; ++k) {
      tape.MarkStep();
      p = tape.Add(tape.Affine(tape.Carry(p), 0.99), tape.Constant(Vec3(0.01, 0.0, 0.0)));
      acc = tape.Add(acc, tape.Dot(p, p));
    }
    benchmark::DoNotOptimize(tape.Backward(acc));
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_TapeBackward)->Arg(150)->Arg(450);

void BM_Rollout(benchmark::State& state) {
  const EnvConfig env = StateOnlyEnv(4);
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, env.difficulty, 5, env.geometry);
  const Network net = MovingPolicy(NetArch::StateOnlyPolicy());
  RolloutOptions ro;
  ro.horizon = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Rollout r = RunRollout(net, track, env, ro, 7);
    benchmark::DoNotOptimize(r.tape.Backward(r.loss, r.injections));
  }
}
BENCHMARK(BM_Rollout)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_CnnGruRollout(benchmark::State& state) {
  EnvConfig env = StateOnlyEnv(4);
  env.observe.render_depth = true;
  const TrackSpec track = GenerateTrack(TrackFamily::kZigzag, env.difficulty, 5, env.geometry);
  const Network net = MovingPolicy(NetArch::Policy());
  RolloutOptions ro;
  ro.horizon = 30;
  for (auto _ : state) {
    Rollout r = RunRollout(net, track, env, ro, 7);
    benchmark::DoNotOptimize(r.tape.Backward(r.loss, r.injections));
  }
}
BENCHMARK(BM_CnnGruRollout)->Unit(benchmark::kMillisecond);

void BM_DeltaWindowLoss(benchmark::State& state) {
  TargetDynamics target;
  target.action_bias = Vec3(0.5, 0.0, 0.0);
  const TransitionDataset data = Collect(MovingPolicy(NetArch::StateOnlyPolicy()), target,
                                         StateOnlyEnv(0), 1, 90, 3);
  const Network delta = Network::Init(NetArch::Delta(), 2);
  const DeltaFitConfig cfg;
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(DeltaWindowLoss(data.episodes.front(), 0, 90, delta,
                                             DynamicsConfig(), cfg, &grad));
  }
}
BENCHMARK(BM_DeltaWindowLoss)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace gaterace

BENCHMARK_MAIN();
