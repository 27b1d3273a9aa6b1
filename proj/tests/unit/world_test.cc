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

#include "gaterace/world.h"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "testing/world_oracles.h"

namespace gaterace {
namespace {

TrackSpec EmptyTrack() {
  TrackSpec t;
  t.gates.push_back(
      GateSpec::Rectangle(Vec3(50.0, 0.0, 2.0), Vec3::UnitX(), Vec3::UnitZ(), 1.5, 1.5));
  t.bounds_lo = Vec3(-100.0, -100.0, -100.0);
  t.bounds_hi = Vec3(100.0, 100.0, 100.0);
  return t;
}

void ExpectSameTrack(const TrackSpec& a, const TrackSpec& b) {
  ASSERT_EQ(a.gates.size(), b.gates.size());
  ASSERT_EQ(a.obstacles.size(), b.obstacles.size());
  for (std::size_t i = 0; i < a.gates.size(); ++i) {
    EXPECT_EQ(a.gates[i].center, b.gates[i].center);
    EXPECT_EQ(a.gates[i].normal, b.gates[i].normal);
    EXPECT_EQ(a.gates[i].loop, b.gates[i].loop);
  }
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    EXPECT_EQ(a.obstacles[i].kind, b.obstacles[i].kind);
    EXPECT_EQ(a.obstacles[i].center, b.obstacles[i].center);
    EXPECT_EQ(a.obstacles[i].radius, b.obstacles[i].radius);
    EXPECT_EQ(a.obstacles[i].height, b.obstacles[i].height);
  }
  EXPECT_EQ(a.start, b.start);
  EXPECT_EQ(a.bounds_lo, b.bounds_lo);
  EXPECT_EQ(a.bounds_hi, b.bounds_hi);
}

TEST(WorldTest, DifficultyZeroHasNoObstacles) {
  for (auto family : {TrackFamily::kZigzag, TrackFamily::kCircular, TrackFamily::kEllipse}) {
    EXPECT_TRUE(GenerateTrack(family, 0, 5, TrackGeometry()).obstacles.empty());
  }
}

TEST(WorldTest, ObstacleCountFollowsDifficultyLadder) {
  TrackGeometry geo;
  for (int level : {1, 3, 6, 9}) {
    const TrackSpec t = GenerateTrack(TrackFamily::kZigzag, level, 9, geo);
    EXPECT_EQ(static_cast<int>(t.obstacles.size()),
              geo.obstacles_base + geo.obstacles_per_level * level);
  }
}

TEST(WorldTest, GenerationIsDeterministicInSeed) {
  const TrackSpec a = GenerateTrack(TrackFamily::kEllipse, 6, 42, TrackGeometry());
  const TrackSpec b = GenerateTrack(TrackFamily::kEllipse, 6, 42, TrackGeometry());
  ExpectSameTrack(a, b);
  const TrackSpec c = GenerateTrack(TrackFamily::kEllipse, 6, 43, TrackGeometry());
  EXPECT_NE(a.obstacles.front().center, c.obstacles.front().center);
}

TEST(WorldTest, ZigzagLayout) {
  TrackGeometry geo;
  const TrackSpec t = GenerateTrack(TrackFamily::kZigzag, 0, 1, geo);
  ASSERT_EQ(t.gates.size(), 4u);
  for (std::size_t i = 0; i < t.gates.size(); ++i) {
    EXPECT_DOUBLE_EQ(t.gates[i].center.y(), (i % 2 == 0 ? 1.0 : -1.0) * geo.lateral_offset);
    EXPECT_EQ(t.gates[i].normal, Vec3::UnitX());
  }
  EXPECT_EQ(t.TotalGatesToPass(), 4);
}

TEST(WorldTest, RingNormalsAreTangent) {
  for (auto family : {TrackFamily::kCircular, TrackFamily::kEllipse}) {
    const TrackSpec t = GenerateTrack(family, 0, 1, TrackGeometry());
    const std::size_t n = t.gates.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GateSpec& g = t.gates[i];
      const Vec3 to_next = t.gates[(i + 1) % n].center - g.center;
      const Vec3 from_prev = g.center - t.gates[(i + n - 1) % n].center;
      EXPECT_GT(g.normal.dot(to_next), 0.0);
      EXPECT_GT(g.normal.dot(from_prev), 0.0);
      EXPECT_NEAR(g.normal.z(), 0.0, 1e-15);
    }
  }
}

TEST(WorldTest, InfeasibleSpacingIsRejected) {
  TrackGeometry geo;
  geo.gate_spacing = 1.0;
  geo.lateral_offset = 0.5;
  EXPECT_THROW(GenerateTrack(TrackFamily::kZigzag, 0, 1, geo), ConfigError);
  EXPECT_THROW(GenerateTrack(TrackFamily::kZigzag, 10, 1, TrackGeometry()), ConfigError);
  TrackGeometry crowded;
  crowded.obstacle_radius_min = 6.0;
  crowded.obstacle_radius_max = 6.0;
  EXPECT_THROW(GenerateTrack(TrackFamily::kZigzag, 9, 1, crowded), ConfigError);
}

// Brute-force audit: a dense lattice over every aperture (and a slab around
// it) must lie outside all obstacles, and consecutive gates keep their spacing.
TEST(WorldTest, HardestCircularTracksKeepAperturesClear) {
  TrackGeometry geo;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TrackSpec t = GenerateTrack(TrackFamily::kCircular, 9, seed, geo);
    const std::size_t n = t.gates.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GateSpec& g = t.gates[i];
      EXPECT_GE((t.gates[(i + 1) % n].center - g.center).norm(), geo.min_gate_spacing);
      for (double a = -0.5; a <= 0.5; a += 0.25) {
        for (double s = -0.5; s <= 0.5; s += 0.05) {
          for (double w = -0.5; w <= 0.5; w += 0.05) {
            const Vec3 p = g.center + a * g.normal + s * g.width * g.side() +
                           w * g.height * g.up;
            for (const auto& o : t.obstacles) {
              ASSERT_GT(testing::PrimitiveDistance(o, p), 0.0) << "seed " << seed;
            }
          }
        }
      }
    }
    for (const auto& o : t.obstacles) {
      EXPECT_GT(testing::PrimitiveDistance(o, t.start), 1.5);
    }
  }
}

TEST(WorldTest, NearestOffsetsMatchExhaustiveSearch) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int scene = 0; scene < 300; ++scene) {
    const TrackSpec t = testing::RandomScene(rng);
    const auto bars = t.FrameBars();
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 v(u(rng), u(rng), u(rng));
    const CollisionInfo c = CheckCollision(p, v, t, 0.2);
    const double oracle = testing::SceneDistance(t, bars, p);
    EXPECT_NEAR(c.distance, oracle, 1e-12) << "scene " << scene;
    EXPECT_NEAR(c.offset.norm(), oracle, 1e-12);
    EXPECT_LT(testing::SceneDistance(t, bars, p + c.offset), 1e-12);
    EXPECT_EQ(c.collided, oracle < 0.2);
    if (oracle > 0.0) {
      EXPECT_NEAR(c.v_c, std::max(0.0, v.dot(c.offset) / oracle), 1e-12);
    }
  }
}

TEST(WorldTest, CollisionCases) {
  const TrackSpec empty = EmptyTrack();
  TrackSpec no_frames = empty;
  no_frames.gates.clear();
  const CollisionInfo far = CheckCollision(Vec3::Zero(), Vec3::UnitX(), no_frames, 0.2);
  EXPECT_FALSE(far.collided);
  EXPECT_EQ(far.distance, kFarDistance);

  TrackSpec one = no_frames;
  one.obstacles.push_back({Obstacle::Kind::kSphere, Vec3(3.0, 0.0, 0.0), 1.0, 0.0});
  const CollisionInfo touch = CheckCollision(Vec3(1.9, 0.0, 0.0), Vec3(2.0, 0.0, 0.0), one, 0.2);
  EXPECT_TRUE(touch.collided);
  EXPECT_NEAR(touch.distance, 0.1, 1e-15);
  EXPECT_NEAR(touch.v_c, 2.0, 1e-15);
  const CollisionInfo away = CheckCollision(Vec3(1.0, 0.0, 0.0), Vec3(-2.0, 0.0, 0.0), one, 0.2);
  EXPECT_FALSE(away.collided);
  EXPECT_EQ(away.v_c, 0.0);
}

TEST(WorldTest, GatePassMatchesSegmentPlaneOracle) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int crossings = 0;
  for (int i = 0; i < 2000; ++i) {
    const TrackSpec scene = testing::RandomScene(rng);
    const GateSpec& g = scene.gates[i % scene.gates.size()];
    const Vec3 mid = g.center + u(rng) * g.side() + u(rng) * g.up;
    const Vec3 step = 0.3 * g.normal + 0.2 * Vec3(u(rng), u(rng), u(rng));
    const double lead = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Vec3 p0 = mid - lead * step;
    const Vec3 p1 = mid + (1.0 - lead) * step;
    const bool oracle = testing::GatePassOracle(p0, p1, g, 0.2);
    crossings += oracle;
    EXPECT_EQ(CheckGatePass(p0, p1, g, 0.2), oracle) << "sample " << i;
    EXPECT_EQ(CheckGatePass(p1, p0, g, 0.2), testing::GatePassOracle(p1, p0, g, 0.2));
  }
  EXPECT_GT(crossings, 200);
}

TEST(WorldTest, GatePassExamples) {
  const GateSpec g = GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 1.5, 1.5);
  EXPECT_TRUE(CheckGatePass(Vec3(-0.1, 0.0, 0.0), Vec3(0.1, 0.0, 0.0), g, 0.2));
  EXPECT_FALSE(CheckGatePass(Vec3(-0.1, 1.75, 0.0), Vec3(0.1, 1.75, 0.0), g, 0.2));
  EXPECT_FALSE(CheckGatePass(Vec3(0.1, 0.0, 0.0), Vec3(-0.1, 0.0, 0.0), g, 0.2));
  // The shrunk aperture excludes a pass grazing the frame.
  EXPECT_FALSE(CheckGatePass(Vec3(-0.1, 0.7, 0.0), Vec3(0.1, 0.7, 0.0), g, 0.2));
}

TEST(WorldTest, GatePassFiresOncePerTraversal) {
  const GateSpec g = GateSpec::Rectangle(Vec3(1.0, 2.0, 3.0), Vec3(0.6, 0.8, 0.0),
                                         Vec3::UnitZ(), 1.5, 1.5);
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.001, 0.2);
  for (int trial = 0; trial < 100; ++trial) {
    const double ds = u(rng);
    int passes = 0;
    Vec3 p = g.center - 3.0 * g.normal + 0.1 * g.up;
    for (int k = 0; k < 10000 && (p - g.center).dot(g.normal) < 3.0; ++k) {
      const Vec3 next = p + ds * g.normal;
      passes += CheckGatePass(p, next, g, 0.2);
      p = next;
    }
    EXPECT_EQ(passes, 1) << "step " << ds;
  }
}

TEST(WorldTest, DepthMatchesSphereTracing) {
  std::mt19937_64 rng(34);
  CameraConfig cam;
  int hits = 0;
  for (int scene = 0; scene < 20; ++scene) {
    TrackSpec t = testing::RandomScene(rng);
    const auto bars = t.FrameBars();
    Vec3 origin;
    do {
      origin = Vec3(std::uniform_real_distribution<double>(-8.0, -6.0)(rng),
                    std::uniform_real_distribution<double>(-1.0, 1.0)(rng),
                    std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
    } while (testing::SceneDistance(t, bars, origin) < 0.05);
    const Mat3 r = Eigen::AngleAxisd(std::uniform_real_distribution<double>(-0.5, 0.5)(rng),
                                     Vec3::UnitZ())
                       .toRotationMatrix();
    const auto depth = RenderDepth(origin, r, t, cam);
    ASSERT_EQ(depth.size(), static_cast<std::size_t>(kDepthRows * kDepthCols));
    for (int row = 0; row < kDepthRows; ++row) {
      for (int col = 0; col < kDepthCols; ++col) {
        const Vec3 ray = r * PixelRay(row, col, cam);
        const double s = testing::SphereTrace(t, bars, origin, ray.normalized(),
                                              cam.far_clip * ray.norm() + 1.0);
        const double want = std::clamp(s / ray.norm(), cam.near_clip, cam.far_clip);
        hits += want < cam.far_clip;
        EXPECT_NEAR(depth[row * kDepthCols + col], want, 1e-9)
            << "scene " << scene << " pixel " << row << "," << col;
      }
    }
  }
  EXPECT_GT(hits, 100);
}

TEST(WorldTest, DepthExamples) {
  const TrackSpec empty = EmptyTrack();
  CameraConfig cam;
  for (double d : RenderDepth(Vec3(0.0, 0.0, 2.0), Mat3::Identity(), empty, cam)) {
    EXPECT_EQ(d, cam.far_clip);
  }
  TrackSpec ball = empty;
  ball.obstacles.push_back({Obstacle::Kind::kSphere, Vec3(5.0, 0.0, 2.0), 1.0, 0.0});
  const auto depth = RenderDepth(Vec3(0.0, 0.0, 2.0), Mat3::Identity(), ball, cam);
  EXPECT_NEAR(depth[12 * kDepthCols + 16], 4.0, 1e-12);
  for (double d : depth) {
    EXPECT_GE(d, cam.near_clip);
    EXPECT_LE(d, cam.far_clip);
  }
  EXPECT_EQ(PixelRay(12, 16, cam), Vec3(1.0, 0.0, 0.0));
}

TEST(WorldTest, ObserveHoverFacingGate) {
  TrackSpec t = EmptyTrack();
  t.gates.front() =
      GateSpec::Rectangle(Vec3(5.0, 0.0, 0.0), Vec3::UnitX(), Vec3::UnitZ(), 1.5, 1.5);
  DroneState s = DroneState::Hover(Vec3::Zero());
  s.velocity = Vec3(1.0, 0.0, 0.0);
  ObserveConfig cfg;
  const Observation o = Observe(s, t, 0, Vec3(0.1, 0.2, 0.3), cfg);
  EXPECT_NEAR((o.p_gate_body - Vec3(5.0, 0.0, 0.0)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((o.v_body - Vec3(1.0, 0.0, 0.0)).norm(), 0.0, 1e-14);
  EXPECT_EQ(o.prev_cmd, Vec3(0.1, 0.2, 0.3));
  EXPECT_EQ(o.depth.size(), static_cast<std::size_t>(kDepthRows * kDepthCols));
  const auto sv = o.StateVector();
  EXPECT_EQ(sv[6], o.p_gate_body.x());
  EXPECT_EQ(sv[11], 0.3);

  // A gate to the side rotates the body frame toward it.
  t.gates.front() =
      GateSpec::Rectangle(Vec3(0.0, 5.0, 0.0), Vec3::UnitY(), Vec3::UnitZ(), 1.5, 1.5);
  const Observation side = Observe(s, t, 0, Vec3::Zero(), cfg);
  EXPECT_NEAR((side.p_gate_body - Vec3(5.0, 0.0, 0.0)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((side.v_body - Vec3(0.0, -1.0, 0.0)).norm(), 0.0, 1e-14);
  EXPECT_THROW(Observe(s, t, 3, Vec3::Zero(), cfg), std::invalid_argument);
}

TEST(WorldTest, TrackFileRoundTrip) {
  const TrackSpec t = GenerateTrack(TrackFamily::kCircular, 6, 17, TrackGeometry());
  std::stringstream ss;
  WriteTrack(ss, t);
  const TrackSpec back = ReadTrack(ss);
  ExpectSameTrack(t, back);
  EXPECT_EQ(back.family, t.family);
  EXPECT_EQ(back.difficulty, 6);
  EXPECT_EQ(back.seed, 17u);
}

TEST(WorldTest, TrackFileErrorsCarryLineNumbers) {
  std::stringstream ss("[track]\nfamily = zigzag\nbogus = 3\n");
  try {
    ReadTrack(ss);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::stringstream bad_family("[track]\nfamily = spiral\n");
  EXPECT_THROW(ReadTrack(bad_family), ConfigError);
  std::stringstream no_gates("[track]\nfamily = zigzag\n");
  EXPECT_THROW(ReadTrack(no_gates), ConfigError);
}

TEST(WorldTest, FamilyNamesRoundTrip) {
  for (auto f : {TrackFamily::kZigzag, TrackFamily::kCircular, TrackFamily::kEllipse}) {
    EXPECT_EQ(ParseTrackFamily(TrackFamilyName(f)), f);
  }
}

}  // namespace
}  // namespace gaterace
