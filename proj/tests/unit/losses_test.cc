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
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "testing/finite_diff.h"

namespace gaterace {
namespace {

using Build = std::function<NodeRef(Tape&, NodeRef)>;

// Tape gradient of a scalar loss of x against central differences.
double GradientError(const Build& build, const std::vector<double>& x) {
  Tape tape;
  const NodeRef in = tape.Input(x);
  const GradientTable g = tape.Backward(build(tape, in));
  const auto analytic = g[in];
  const auto numeric = testing::CentralGradient(
      [&](std::span<const double> xs) {
        Tape t;
        return t.ScalarValue(build(t, t.Input(xs)));
      },
      x, 1e-6);
  return testing::RelativeError(analytic, numeric, 1e-8);
}

double Value(const Build& build, const std::vector<double>& x) {
  Tape t;
  return t.ScalarValue(build(t, t.Input(x)));
}

TEST(LossesTest, ClearanceValues) {
  LossWeights w;
  const Build f = [&](Tape& t, NodeRef d) { return ClearanceLoss(d, w, t); };
  EXPECT_NEAR(Value(f, {w.r_q}), w.beta1 * std::log(2.0), 1e-15);
  // Two meters beyond the safety radius the penalty is a softplus tail.
  EXPECT_NEAR(Value(f, {w.r_q + 10.0 / w.beta2}), w.beta1 * std::log1p(std::exp(-10.0)),
              1e-15);
  // Closer is costlier.
  EXPECT_GT(Value(f, {0.3}), Value(f, {0.8}));
}

TEST(LossesTest, ClearanceAsPrintedGrowsWithDistance) {
  LossWeights w;
  w.clearance_as_printed = true;
  const Build f = [&](Tape& t, NodeRef d) { return ClearanceLoss(d, w, t); };
  EXPECT_NEAR(Value(f, {w.r_q}), w.beta1 * std::log(2.0), 1e-15);
  EXPECT_NEAR(Value(f, {w.r_q - 10.0 / w.beta2}), w.beta1 * std::log1p(std::exp(-10.0)),
              1e-15);
  EXPECT_LT(Value(f, {0.3}), Value(f, {0.8}));
}

TEST(LossesTest, CollideValues) {
  LossWeights w;
  auto collide = [&](double d, double vc) {
    Tape t;
    return t.ScalarValue(CollideLoss(t.Constant(d), t.Constant(vc), w, t));
  };
  EXPECT_DOUBLE_EQ(collide(w.r_q + 1.0, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(collide(w.r_q + 1.5, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(collide(w.r_q, 2.0), 2.0);
  EXPECT_NEAR(collide(w.r_q + 0.5, 2.0), 0.5, 1e-15);
}

TEST(LossesTest, DetachedArgumentsReceiveNoGradient) {
  LossWeights w;
  Tape t;
  const NodeRef d = t.Input(std::vector<double>{0.5});
  const NodeRef vc = t.Input(std::vector<double>{3.0});
  const GradientTable g = t.Backward(CollideLoss(d, vc, w, t));
  EXPECT_EQ(g[vc][0], 0.0);
  EXPECT_NE(g[d][0], 0.0);

  Tape t2;
  const NodeRef p = t2.Input(std::vector<double>{0.5, 0.3, -0.2});
  const NodeRef dg = t2.Input(std::vector<double>{1.2});
  const GradientTable g2 = t2.Backward(ProjectionLoss(p, dg, w, t2));
  EXPECT_EQ(g2[dg][0], 0.0);
  EXPECT_EQ(g2[p][0], 0.0);  // the normal component does not enter
  EXPECT_NE(g2[p][1], 0.0);
}

TEST(LossesTest, ObstacleGradientsMatchFiniteDifferences) {
  LossWeights w;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 2.5);
  for (int i = 0; i < 50; ++i) {
    const double d = u(rng);
    EXPECT_LT(GradientError([&](Tape& t, NodeRef x) { return ClearanceLoss(x, w, t); }, {d}),
              1e-6);
    if (std::abs(d - (1.0 + w.r_q)) < 1e-3) continue;  // hinge kink
    EXPECT_LT(GradientError(
                  [&](Tape& t, NodeRef x) {
                    return CollideLoss(x, t.Constant(1.7), w, t);
                  },
                  {d}),
              1e-6);
  }
}

TEST(LossesTest, SmoothnessValues) {
  Tape t;
  const double dt = 1.0 / 30.0;
  std::vector<NodeRef> constant(5, t.Constant(Vec3(1.0, 0.0, 0.0)));
  SmoothnessTerms s = SmoothnessLosses(constant, dt, t);
  EXPECT_DOUBLE_EQ(t.ScalarValue(s.accel), 1.0);
  EXPECT_DOUBLE_EQ(t.ScalarValue(s.jerk), 0.0);

  std::vector<NodeRef> alternating;
  for (int k = 0; k < 6; ++k) {
    alternating.push_back(t.Constant(Vec3(k % 2 == 0 ? 1.0 : -1.0, 0.0, 0.0)));
  }
  s = SmoothnessLosses(alternating, dt, t);
  EXPECT_NEAR(t.ScalarValue(s.jerk), 3600.0, 1e-9);

  std::vector<NodeRef> zeros(3, t.Constant(Vec3::Zero()));
  s = SmoothnessLosses(zeros, dt, t);
  EXPECT_EQ(t.ScalarValue(s.accel), 0.0);
  EXPECT_EQ(t.ScalarValue(s.jerk), 0.0);

  std::vector<NodeRef> one(1, t.Constant(Vec3::Zero()));
  EXPECT_THROW(SmoothnessLosses(one, dt, t), std::invalid_argument);
}

TEST(LossesTest, SmoothnessMaskedHorizonDividesByConfiguredLength) {
  Tape t;
  std::vector<NodeRef> accels(4, t.Constant(Vec3(2.0, 0.0, 0.0)));
  const SmoothnessTerms s = SmoothnessLosses(accels, 0.1, t, 10);
  EXPECT_DOUBLE_EQ(t.ScalarValue(s.accel), 4.0 * 4.0 / 10.0);
}

TEST(LossesTest, SmoothnessGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(15);
  for (double& e : x) e = n(rng);
  const Build f = [](Tape& t, NodeRef in) {
    std::vector<NodeRef> accels;
    for (int k = 0; k < 5; ++k) accels.push_back(t.Slice(in, 3 * k, 3));
    const SmoothnessTerms s = SmoothnessLosses(accels, 1.0 / 30.0, t);
    return t.Add(s.accel, t.Affine(s.jerk, 1e-3));
  };
  EXPECT_LT(GradientError(f, x), 1e-6);
}

TEST(LossesTest, ProgressValues) {
  auto progress = [](const Vec3& v, const Vec3& p) {
    Tape t;
    return t.ScalarValue(ProgressLoss(t.Constant(v), t.Constant(p), t));
  };
  EXPECT_NEAR(progress(Vec3(3.0, 0.0, 0.0), Vec3(5.0, 0.0, 0.0)), -3.0, 1e-15);
  EXPECT_NEAR(progress(Vec3(0.0, 3.0, 0.0), Vec3(5.0, 0.0, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(progress(Vec3(-2.0, 0.0, 0.0), Vec3(5.0, 0.0, 0.0)), 2.0, 1e-15);
  const Vec3 v(1.0, 2.0, -0.5), p(2.0, -1.0, 3.0);
  EXPECT_NEAR(progress(v, p), -v.norm() * v.normalized().dot(p.normalized()), 1e-14);
  EXPECT_THROW(progress(v, Vec3::Zero()), std::invalid_argument);
}

TEST(LossesTest, NormalizedProgressValues) {
  auto progress = [](const Vec3& v, const Vec3& p) {
    Tape t;
    return t.ScalarValue(ProgressLossNormalized(t.Constant(v), t.Constant(p), t));
  };
  const Vec3 p(2.0, 1.0, 0.0);
  EXPECT_NEAR(progress(p * 0.3, p), -1.0, 1e-15);
  EXPECT_NEAR(progress(-p, p), 1.0, 1e-15);
  EXPECT_NEAR(progress(Vec3(-1.0, 2.0, 0.0), p), 0.0, 1e-15);
  const Vec3 v(0.4, -0.7, 0.2);
  EXPECT_NEAR(progress(v, p), progress(10.0 * v, p), 1e-15);
  EXPECT_EQ(progress(Vec3::Zero(), p), 0.0);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double c = progress(Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng)));
    EXPECT_LE(std::abs(c), 1.0 + 1e-15);
  }
}

TEST(LossesTest, ProgressGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> x(6);
    for (double& e : x) e = n(rng);
    EXPECT_LT(GradientError(
                  [](Tape& t, NodeRef in) {
                    return ProgressLoss(t.Slice(in, 0, 3), t.Slice(in, 3, 3), t);
                  },
                  x),
              1e-6);
    EXPECT_LT(GradientError(
                  [](Tape& t, NodeRef in) {
                    return ProgressLossNormalized(t.Slice(in, 0, 3), t.Slice(in, 3, 3), t);
                  },
                  x),
              1e-6);
  }
}

TEST(LossesTest, ProjectionValuesAndGradient) {
  LossWeights w;
  auto projection = [&](const Vec3& p, double d) {
    Tape t;
    return t.ScalarValue(ProjectionLoss(t.Constant(p), t.Constant(d), w, t));
  };
  EXPECT_EQ(projection(Vec3(2.0, 0.0, 0.0), 1.0), 0.0);
  EXPECT_NEAR(projection(Vec3(0.0, 1.0, 0.0), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(projection(Vec3(0.0, 1.0, 0.0), std::log(4.0) / w.beta3), 0.25, 1e-15);
  EXPECT_LT(GradientError(
                [&](Tape& t, NodeRef in) {
                  return ProjectionLoss(in, t.Constant(0.7), w, t);
                },
                {0.3, -0.8, 1.1}),
            1e-6);
}

TEST(LossesTest, TotalLossIsWeightedSum) {
  Tape t;
  LossTerms terms;
  terms.clearance = t.Constant(0.5);
  terms.collide = t.Constant(0.25);
  terms.accel = t.Constant(2.0);
  terms.jerk = t.Constant(40.0);
  terms.progress = t.Constant(-1.5);
  LossWeights w;
  EXPECT_NEAR(t.ScalarValue(TotalLoss(terms, w, t)),
              3.0 * 0.75 + 1e-2 * 2.0 + 1e-3 * 40.0 + 0.4 * -1.5, 1e-15);
  LossWeights only_p;
  only_p.lambda_c = only_p.lambda_a = only_p.lambda_j = 0.0;
  EXPECT_NEAR(t.ScalarValue(TotalLoss(terms, only_p, t)), 0.4 * -1.5, 1e-15);
  EXPECT_EQ(t.ScalarValue(TotalLoss(LossTerms(), w, t)), 0.0);
}

TEST(LossesTest, TotalGradientIsWeightedSumOfComponentGradients) {
  LossWeights w;
  w.lambda_proj = 3.0;
  w.lambda_p_norm = 0.7;
  std::vector<double> x = {0.6, 1.0, -0.5, 0.2, 3.0, 0.4, -0.3, 0.8, 1.1, -0.2};
  auto components = [&](Tape& t, NodeRef in) {
    LossTerms terms;
    const NodeRef d = t.Slice(in, 0, 1);
    const NodeRef v = t.Slice(in, 1, 3);
    const NodeRef p = t.Slice(in, 4, 3);
    terms.clearance = ClearanceLoss(d, w, t);
    terms.collide = CollideLoss(d, t.Constant(1.5), w, t);
    const std::vector<NodeRef> accels = {t.Slice(in, 1, 3), t.Slice(in, 7, 3)};
    const SmoothnessTerms s = SmoothnessLosses(accels, 1.0 / 30.0, t);
    terms.accel = s.accel;
    terms.jerk = s.jerk;
    terms.progress = ProgressLoss(v, p, t);
    terms.progress_norm = ProgressLossNormalized(v, p, t);
    terms.projection = ProjectionLoss(p, t.Constant(0.5), w, t);
    return terms;
  };
  Tape t;
  const NodeRef in = t.Input(x);
  const LossTerms terms = components(t, in);
  const GradientTable total = t.Backward(TotalLoss(terms, w, t));
  std::vector<double> expected(x.size(), 0.0);
  const std::vector<std::pair<NodeRef, double>> parts = {
      {terms.clearance, w.lambda_c}, {terms.collide, w.lambda_c},
      {terms.accel, w.lambda_a},     {terms.jerk, w.lambda_j},
      {terms.progress, w.lambda_p},  {terms.progress_norm, w.lambda_p_norm},
      {terms.projection, w.lambda_proj}};
  for (const auto& [node, weight] : parts) {
    const GradientTable g = t.Backward(node);
    for (std::size_t i = 0; i < x.size(); ++i) expected[i] += weight * g[in][i];
  }
  EXPECT_LT(testing::RelativeError(total[in], expected), 1e-14);
  EXPECT_LT(GradientError(
                [&](Tape& tt, NodeRef xin) { return TotalLoss(components(tt, xin), w, tt); },
                x),
            1e-6);
}

TEST(LossesTest, RewardExamples) {
  RewardWeights rw;
  LossWeights lw;
  StepSample collision;
  collision.d_norm = 0.1;
  EXPECT_EQ(StepReward(collision, rw, lw).collision, -30.0);

  StepSample pass;
  pass.has_gate = true;
  pass.p_gate_body = Vec3(0.2, 0.0, 0.0);
  EXPECT_EQ(StepReward(pass, rw, lw).pass, 110.0);

  StepSample cruise;
  cruise.d_norm = 50.0;
  cruise.has_gate = true;
  cruise.v_body = Vec3(3.0, 0.0, 0.0);
  cruise.p_gate_body = Vec3(6.0, 0.0, 0.0);
  cruise.accel = Vec3(0.5, 0.0, 0.0);
  cruise.prev_accel = Vec3(0.5, 0.0, 0.0);
  const RewardBreakdown r = StepReward(cruise, rw, lw);
  EXPECT_NEAR(r.progress, 1.2, 1e-15);
  EXPECT_EQ(r.pass, 0.0);
  EXPECT_EQ(r.collision, 0.0);
  EXPECT_NEAR(r.smooth, -1e-2 * 0.25, 1e-15);
  EXPECT_NEAR(r.total(), r.collision + r.avoid + r.smooth + r.pass + r.progress, 1e-15);
}

TEST(LossesTest, WeightValidation) {
  LossWeights w;
  w.lambda_p = -1.0;
  EXPECT_THROW(w.Validate(), ConfigError);
  w = LossWeights();
  w.r_q = 0.0;
  EXPECT_THROW(w.Validate(), ConfigError);
  RewardWeights rw;
  rw.pass = -1.0;
  EXPECT_THROW(rw.Validate(), ConfigError);
}

}  // namespace
}  // namespace gaterace
