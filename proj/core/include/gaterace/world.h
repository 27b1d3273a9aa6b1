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

#ifndef GATERACE_WORLD_H_
#define GATERACE_WORLD_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gaterace/common.h"
#include "gaterace/dynamics.h"
#include "gaterace/field.h"

namespace gaterace {

enum class TrackFamily { kZigzag, kCircular, kEllipse };

std::string_view TrackFamilyName(TrackFamily family);
TrackFamily ParseTrackFamily(std::string_view name);

struct Obstacle {
  enum class Kind { kSphere, kCylinder };
  Kind kind = Kind::kSphere;
  Vec3 center = Vec3::Zero();  // cylinders: axis midpoint, axis along +z
  double radius = 0.5;
  double height = 0.0;         // cylinders only
};

// Oriented box; `axes` columns are the local x, y, z directions.
struct Box {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();
  Vec3 half = Vec3::Ones();
};

struct TrackGeometry {
  int zigzag_gates = 4;
  double gate_spacing = 5.0;     // m, along the course for zigzag
  double lateral_offset = 1.5;   // m, alternating zigzag offset
  int ring_gates = 6;
  double ring_radius = 8.0;      // m, circular tracks
  double semi_major = 12.0;      // m, ellipse tracks
  double semi_minor = 7.0;
  double gate_width = 1.5;
  double gate_height = 1.5;
  double gate_altitude = 2.0;
  double frame_thickness = 0.1;
  double min_gate_spacing = 3.0;
  double start_distance = 4.0;   // m before the first gate
  int obstacles_base = 0;
  int obstacles_per_level = 2;
  double obstacle_radius_min = 0.3;
  double obstacle_radius_max = 0.6;
  double corridor_halfwidth = 2.5;
  double arena_length = 40.0;
  double arena_width = 20.0;
  double arena_height = 8.0;
  int laps = 1;

  void Validate() const;
};

struct TrackSpec {
  TrackFamily family = TrackFamily::kZigzag;
  std::vector<GateSpec> gates;
  std::vector<Obstacle> obstacles;
  int difficulty = 0;
  std::uint64_t seed = 0;
  Vec3 bounds_lo = Vec3(-20.0, -10.0, 0.0);
  Vec3 bounds_hi = Vec3(20.0, 10.0, 8.0);
  Vec3 start = Vec3::Zero();
  double start_yaw = 0.0;
  double frame_thickness = 0.1;
  int laps = 1;

  // Frame bars of every gate (four per rectangle, one per polygon edge).
  std::vector<Box> FrameBars() const;
  int TotalGatesToPass() const { return static_cast<int>(gates.size()) * laps; }
  bool InBounds(const Vec3& p) const;
};

// Deterministic in `seed`. Throws ConfigError when the spacing constraint or
// obstacle placement cannot be satisfied.
TrackSpec GenerateTrack(TrackFamily family, int difficulty, std::uint64_t seed,
                        const TrackGeometry& geometry);

void WriteTrack(std::ostream& out, const TrackSpec& track);
TrackSpec ReadTrack(std::istream& in);

inline constexpr int kDepthRows = 24;
inline constexpr int kDepthCols = 32;
inline constexpr double kFarDistance = 100.0;  // nearest-obstacle sentinel

struct CameraConfig {
  double hfov_deg = 87.0;
  double vfov_deg = 58.0;
  double near_clip = 0.1;
  double far_clip = 10.0;
};

struct ObserveConfig {
  bool render_depth = true;
  CameraConfig camera;
};

struct Observation {
  Vec3 v_body = Vec3::Zero();
  Vec3 body_z = Vec3::UnitZ();
  Vec3 p_gate_body = Vec3::Zero();
  Vec3 prev_cmd = Vec3::Zero();
  std::vector<double> depth;  // kDepthRows x kDepthCols, row-major

  std::array<double, 12> StateVector() const;
};

// Heading from p toward the gate center projected on the horizontal plane;
// falls back to the gate normal's heading when directly above or below it.
double YawToward(const Vec3& p, const GateSpec& gate);

// Body frame used for observations and commands while chasing `gate`.
Mat3 BodyFrame(const DroneState& state, const GateSpec& gate);

Observation Observe(const DroneState& state, const TrackSpec& track,
                    int target_gate, const Vec3& prev_cmd, const ObserveConfig& cfg);

// Camera ray (body frame, x component 1) through pixel (row, col); the
// principal point sits on pixel (12, 16).
Vec3 PixelRay(int row, int col, const CameraConfig& cam);

// z-depth image rendered by exact ray/primitive intersection.
std::vector<double> RenderDepth(const Vec3& origin, const Mat3& body_to_world,
                                const TrackSpec& track, const CameraConfig& cam);

// Nearest positive ray parameter hitting any obstacle or frame bar; nullopt
// when nothing is hit. `dir` need not be unit length.
std::optional<double> RayCast(const Vec3& origin, const Vec3& dir,
                              const TrackSpec& track);

// Gate coordinates (along normal, side, up) of a world point.
Vec3 ToGateFrame(const GateSpec& gate, const Vec3& p);

// True iff the segment crosses the gate plane toward +normal inside the
// aperture shrunk by r_q on every side.
bool CheckGatePass(const Vec3& p_prev, const Vec3& p_next, const GateSpec& gate,
                   double r_q);

struct CollisionInfo {
  bool collided = false;
  Vec3 offset = Vec3(kFarDistance, 0.0, 0.0);  // nearest point minus p
  double distance = kFarDistance;
  double v_c = 0.0;  // closing speed toward the nearest point
};

CollisionInfo CheckCollision(const Vec3& p, const Vec3& v, const TrackSpec& track,
                             double r_q);

// Closest point of each primitive (the point itself when inside).
Vec3 NearestPointOnObstacle(const Obstacle& o, const Vec3& p);
Vec3 NearestPointOnBox(const Box& b, const Vec3& p);

}  // namespace gaterace

#endif  // GATERACE_WORLD_H_
