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

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gaterace/csv.h"
#include "gaterace/rng.h"

namespace gaterace {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double RaySphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 f = o - c;
  const double cc = f.squaredNorm() - r * r;
  if (cc <= 0.0) return 0.0;
  const double a = d.squaredNorm();
  const double b = 2.0 * f.dot(d);
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return kInf;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  return t > 0.0 ? t : kInf;
}

double RayCylinder(const Vec3& o, const Vec3& d, const Obstacle& cyl) {
  const double half = 0.5 * cyl.height;
  const double fx = o.x() - cyl.center.x(), fy = o.y() - cyl.center.y();
  const double r2 = cyl.radius * cyl.radius;
  const double rel_z = o.z() - cyl.center.z();
  if (fx * fx + fy * fy <= r2 && std::abs(rel_z) <= half) return 0.0;
  double best = kInf;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 0.0) {
    const double b = 2.0 * (fx * d.x() + fy * d.y());
    const double cc = fx * fx + fy * fy - r2;
    const double disc = b * b - 4.0 * a * cc;
    if (disc >= 0.0) {
      const double t = (-b - std::sqrt(disc)) / (2.0 * a);
      if (t > 0.0 && std::abs(rel_z + t * d.z()) <= half) best = t;
    }
  }
  if (d.z() != 0.0) {
    for (double cap : {-half, half}) {
      const double t = (cap - rel_z) / d.z();
      if (t <= 0.0 || t >= best) continue;
      const double x = fx + t * d.x(), y = fy + t * d.y();
      if (x * x + y * y <= r2) best = t;
    }
  }
  return best;
}

double RayBox(const Vec3& o, const Vec3& d, const Box& box) {
  const Vec3 lo = box.axes.transpose() * (o - box.center);
  const Vec3 ld = box.axes.transpose() * d;
  double t_near = -kInf, t_far = kInf;
  for (int i = 0; i < 3; ++i) {
    if (ld[i] == 0.0) {
      if (std::abs(lo[i]) > box.half[i]) return kInf;
      continue;
    }
    double t1 = (-box.half[i] - lo[i]) / ld[i];
    double t2 = (box.half[i] - lo[i]) / ld[i];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_far < t_near || t_far <= 0.0) return kInf;
  return t_near > 0.0 ? t_near : 0.0;
}

double DistanceToBox(const Box& b, const Vec3& p) {
  return (NearestPointOnBox(b, p) - p).norm();
}

// Region around a gate aperture kept free of generated obstacles.
Box KeepOutBox(const GateSpec& g) {
  Box b;
  b.center = g.center;
  b.axes.col(0) = g.normal;
  b.axes.col(1) = g.side();
  b.axes.col(2) = g.up;
  b.half = Vec3(1.5, 0.5 * g.width + 0.3, 0.5 * g.height + 0.3);
  return b;
}

double ObstacleToBox(const Obstacle& o, const Box& box) {
  if (o.kind == Obstacle::Kind::kSphere) return DistanceToBox(box, o.center) - o.radius;
  const double half = 0.5 * o.height;
  const double z = std::clamp(box.center.z(), o.center.z() - half, o.center.z() + half);
  return DistanceToBox(box, Vec3(o.center.x(), o.center.y(), z)) - o.radius;
}

double ObstacleToPoint(const Obstacle& o, const Vec3& p) {
  return (NearestPointOnObstacle(o, p) - p).norm();
}

std::vector<Vec3> CourseWaypoints(const TrackSpec& t) {
  std::vector<Vec3> pts = {t.start};
  for (const auto& g : t.gates) pts.push_back(g.center);
  if (t.family != TrackFamily::kZigzag) pts.push_back(t.gates.front().center);
  return pts;
}

void CheckSpacing(const std::vector<GateSpec>& gates, bool closed, double min_spacing) {
  const std::size_t n = gates.size();
  const std::size_t pairs = closed ? n : n - 1;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double d = (gates[(i + 1) % n].center - gates[i].center).norm();
    if (d < min_spacing) {
      std::ostringstream msg;
      msg << "track generation: gates " << i << " and " << (i + 1) % n << " are "
          << d << " m apart, below the " << min_spacing << " m minimum";
      throw ConfigError(msg.str());
    }
  }
}

}  // namespace

std::string_view TrackFamilyName(TrackFamily family) {
  switch (family) {
    case TrackFamily::kZigzag: return "zigzag";
    case TrackFamily::kCircular: return "circular";
    case TrackFamily::kEllipse: return "ellipse";
  }
  return "zigzag";
}

TrackFamily ParseTrackFamily(std::string_view name) {
  if (name == "zigzag") return TrackFamily::kZigzag;
  if (name == "circular") return TrackFamily::kCircular;
  if (name == "ellipse") return TrackFamily::kEllipse;
  throw ConfigError("unknown track family '" + std::string(name) + "'");
}

void TrackGeometry::Validate() const {
  if (zigzag_gates < 1 || ring_gates < 3) throw ConfigError("track: too few gates");
  if (!(gate_width > 0 && gate_height > 0 && frame_thickness > 0)) {
    throw ConfigError("track: gate dimensions must be > 0");
  }
  if (!(obstacle_radius_min > 0 && obstacle_radius_max >= obstacle_radius_min)) {
    throw ConfigError("track: bad obstacle radius range");
  }
  if (obstacles_base < 0 || obstacles_per_level < 0 || laps < 1) {
    throw ConfigError("track: counts must be non-negative, laps >= 1");
  }
}

std::vector<Box> TrackSpec::FrameBars() const {
  std::vector<Box> bars;
  const double t = frame_thickness;
  for (const auto& g : gates) {
    const std::size_t n = g.loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 a = g.loop[i], b = g.loop[(i + 1) % n];
      const Vec3 e = (b - a).normalized();
      const Vec3 outward = e.cross(g.normal);
      Box box;
      box.center = 0.5 * (a + b) + 0.5 * t * outward;
      box.axes.col(0) = e;
      box.axes.col(1) = outward;
      box.axes.col(2) = g.normal;
      box.half = Vec3(0.5 * (b - a).norm() + t, 0.5 * t, 0.5 * t);
      bars.push_back(box);
    }
  }
  return bars;
}

bool TrackSpec::InBounds(const Vec3& p) const {
  return (p.array() >= bounds_lo.array()).all() && (p.array() <= bounds_hi.array()).all();
}

TrackSpec GenerateTrack(TrackFamily family, int difficulty, std::uint64_t seed,
                        const TrackGeometry& geo) {
  if (difficulty < 0 || difficulty > 9) {
    throw ConfigError("track generation: difficulty must lie in [0, 9]");
  }
  geo.Validate();
  TrackSpec t;
  t.family = family;
  t.difficulty = difficulty;
  t.seed = seed;
  t.frame_thickness = geo.frame_thickness;
  t.laps = family == TrackFamily::kZigzag ? 1 : geo.laps;
  const Vec3 up = Vec3::UnitZ();

  switch (family) {
    case TrackFamily::kZigzag: {
      for (int i = 0; i < geo.zigzag_gates; ++i) {
        const double y = (i % 2 == 0 ? 1.0 : -1.0) * geo.lateral_offset;
        t.gates.push_back(GateSpec::Rectangle(
            Vec3(i * geo.gate_spacing, y, geo.gate_altitude), Vec3::UnitX(), up,
            geo.gate_width, geo.gate_height));
      }
      t.start = Vec3(-geo.start_distance, 0.0, geo.gate_altitude);
      t.start_yaw = 0.0;
      break;
    }
    case TrackFamily::kCircular:
    case TrackFamily::kEllipse: {
      const bool circle = family == TrackFamily::kCircular;
      const double a = circle ? geo.ring_radius : geo.semi_major;
      const double b = circle ? geo.ring_radius : geo.semi_minor;
      for (int i = 0; i < geo.ring_gates; ++i) {
        const double s = 2.0 * std::numbers::pi * i / geo.ring_gates;
        const Vec3 c(a * std::cos(s), b * std::sin(s), geo.gate_altitude);
        const Vec3 tangent = Vec3(-a * std::sin(s), b * std::cos(s), 0.0).normalized();
        t.gates.push_back(
            GateSpec::Rectangle(c, tangent, up, geo.gate_width, geo.gate_height));
      }
      // Start on the curve, start_distance of arc length before gate 0.
      const double s0 = -geo.start_distance / b;
      t.start = Vec3(a * std::cos(s0), b * std::sin(s0), geo.gate_altitude);
      const Vec3 tangent = Vec3(-a * std::sin(s0), b * std::cos(s0), 0.0);
      t.start_yaw = std::atan2(tangent.y(), tangent.x());
      break;
    }
  }
  CheckSpacing(t.gates, family != TrackFamily::kZigzag, geo.min_gate_spacing);

  Vec3 lo = t.start, hi = t.start;
  for (const auto& g : t.gates) {
    lo = lo.cwiseMin(g.center);
    hi = hi.cwiseMax(g.center);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  const Vec3 half_arena(0.5 * geo.arena_length, 0.5 * geo.arena_width, 0.0);
  t.bounds_lo = Vec3(mid.x() - half_arena.x(), mid.y() - half_arena.y(), 0.0);
  t.bounds_hi = Vec3(mid.x() + half_arena.x(), mid.y() + half_arena.y(), geo.arena_height);
  if (!t.InBounds(lo) || !t.InBounds(hi)) {
    throw ConfigError("track generation: course does not fit inside the arena");
  }

  const int count = geo.obstacles_base + geo.obstacles_per_level * difficulty;
  if (count == 0) return t;
  Rng rng = Substream(seed, "track.obstacles");
  const auto waypoints = CourseWaypoints(t);
  std::vector<Box> keep_out;
  for (const auto& g : t.gates) keep_out.push_back(KeepOutBox(g));
  const auto frames = t.FrameBars();
  constexpr int kMaxAttempts = 20000;
  int attempts = 0;
  while (static_cast<int>(t.obstacles.size()) < count) {
    if (++attempts > kMaxAttempts) {
      std::ostringstream msg;
      msg << "track generation: placed only " << t.obstacles.size() << " of " << count
          << " obstacles after " << kMaxAttempts << " attempts";
      throw ConfigError(msg.str());
    }
    const std::size_t leg = std::uniform_int_distribution<std::size_t>(
        0, waypoints.size() - 2)(rng);
    const Vec3 a = waypoints[leg], b = waypoints[leg + 1];
    Vec3 dir = b - a;
    dir.z() = 0.0;
    if (dir.norm() < 1e-9) continue;
    dir.normalize();
    const Vec3 lateral(-dir.y(), dir.x(), 0.0);
    const Vec3 along = a + Uniform(rng, 0.15, 0.85) * (b - a);
    Obstacle o;
    o.radius = Uniform(rng, geo.obstacle_radius_min, geo.obstacle_radius_max);
    const double offset = Uniform(rng, -geo.corridor_halfwidth, geo.corridor_halfwidth);
    if (Uniform(rng, 0.0, 1.0) < 0.5) {
      o.kind = Obstacle::Kind::kSphere;
      o.center = along + offset * lateral;
      o.center.z() = geo.gate_altitude + Uniform(rng, -1.0, 1.0);
    } else {
      o.kind = Obstacle::Kind::kCylinder;
      o.height = geo.arena_height * Uniform(rng, 0.6, 1.0);
      o.center = along + offset * lateral;
      o.center.z() = 0.5 * o.height;
    }
    bool ok = ObstacleToPoint(o, t.start) > 1.5;
    for (const auto& box : keep_out) ok = ok && ObstacleToBox(o, box) > 0.0;
    for (const auto& box : frames) ok = ok && ObstacleToBox(o, box) > 0.2;
    Vec3 extent_lo = o.center - Vec3::Constant(o.radius);
    Vec3 extent_hi = o.center + Vec3::Constant(o.radius);
    ok = ok && t.InBounds(Vec3(extent_lo.x(), extent_lo.y(), t.bounds_lo.z())) &&
         t.InBounds(Vec3(extent_hi.x(), extent_hi.y(), t.bounds_lo.z()));
    if (ok) t.obstacles.push_back(o);
  }
  return t;
}

void WriteTrack(std::ostream& out, const TrackSpec& t) {
  auto v3 = [](const Vec3& v) {
    return FormatDouble(v.x()) + " " + FormatDouble(v.y()) + " " + FormatDouble(v.z());
  };
  out << "[track]\n";
  out << "family = " << TrackFamilyName(t.family) << "\n";
  out << "difficulty = " << t.difficulty << "\n";
  out << "seed = " << t.seed << "\n";
  out << "laps = " << t.laps << "\n";
  out << "frame_thickness = " << FormatDouble(t.frame_thickness) << "\n";
  out << "bounds_lo = " << v3(t.bounds_lo) << "\n";
  out << "bounds_hi = " << v3(t.bounds_hi) << "\n";
  out << "start = " << v3(t.start) << "\n";
  out << "start_yaw = " << FormatDouble(t.start_yaw) << "\n";
  out << "# gate = shape center normal up width height segments\n";
  for (const auto& g : t.gates) {
    out << "gate = " << (g.shape == GateShape::kRectangle ? "rectangle" : "circle") << " "
        << v3(g.center) << " " << v3(g.normal) << " " << v3(g.up) << " "
        << FormatDouble(g.width) << " " << FormatDouble(g.height) << " " << g.loop.size()
        << "\n";
  }
  for (const auto& o : t.obstacles) {
    if (o.kind == Obstacle::Kind::kSphere) {
      out << "sphere = " << v3(o.center) << " " << FormatDouble(o.radius) << "\n";
    } else {
      out << "cylinder = " << v3(o.center) << " " << FormatDouble(o.radius) << " "
          << FormatDouble(o.height) << "\n";
    }
  }
}

TrackSpec ReadTrack(std::istream& in) {
  TrackSpec t;
  t.gates.clear();
  std::string line;
  int line_no = 0;
  bool in_section = false;
  auto fail = [&](const std::string& what) -> void {
    throw ConfigError("track file line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    line = line.substr(first);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == "[track]") {
      in_section = true;
      continue;
    }
    if (!in_section) fail("expected [track] section header");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    std::istringstream vs(line.substr(eq + 1));
    std::vector<std::string> tok;
    for (std::string s; vs >> s;) tok.push_back(s);
    auto num = [&](std::size_t i) {
      if (i >= tok.size()) fail("missing value for '" + key + "'");
      try {
        return ParseDouble(tok[i], line_no);
      } catch (const IoError& e) {
        fail(e.what());
      }
      return 0.0;
    };
    auto vec = [&](std::size_t i) { return Vec3(num(i), num(i + 1), num(i + 2)); };
    auto expect = [&](std::size_t n) {
      if (tok.size() != n) fail("'" + key + "' expects " + std::to_string(n) + " values");
    };
    try {
      if (key == "family") {
        expect(1);
        t.family = ParseTrackFamily(tok[0]);
      } else if (key == "difficulty") {
        expect(1);
        t.difficulty = static_cast<int>(num(0));
      } else if (key == "seed") {
        expect(1);
        t.seed = std::stoull(tok[0]);
      } else if (key == "laps") {
        expect(1);
        t.laps = static_cast<int>(num(0));
      } else if (key == "frame_thickness") {
        expect(1);
        t.frame_thickness = num(0);
      } else if (key == "bounds_lo") {
        expect(3);
        t.bounds_lo = vec(0);
      } else if (key == "bounds_hi") {
        expect(3);
        t.bounds_hi = vec(0);
      } else if (key == "start") {
        expect(3);
        t.start = vec(0);
      } else if (key == "start_yaw") {
        expect(1);
        t.start_yaw = num(0);
      } else if (key == "gate") {
        expect(13);
        const Vec3 c = vec(1), n = vec(4), u = vec(7);
        if (tok[0] == "rectangle") {
          t.gates.push_back(GateSpec::Rectangle(c, n, u, num(10), num(11)));
        } else if (tok[0] == "circle") {
          t.gates.push_back(GateSpec::Circle(c, n, u, num(10), static_cast<int>(num(12))));
        } else {
          fail("unknown gate shape '" + tok[0] + "'");
        }
      } else if (key == "sphere") {
        expect(4);
        t.obstacles.push_back({Obstacle::Kind::kSphere, vec(0), num(3), 0.0});
      } else if (key == "cylinder") {
        expect(5);
        t.obstacles.push_back({Obstacle::Kind::kCylinder, vec(0), num(3), num(4)});
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    } catch (const std::out_of_range& e) {
      fail(e.what());
    }
  }
  if (t.gates.empty()) throw ConfigError("track file: no gates");
  return t;
}

std::array<double, 12> Observation::StateVector() const {
  return {v_body.x(),      v_body.y(),      v_body.z(),      body_z.x(),
          body_z.y(),      body_z.z(),      p_gate_body.x(), p_gate_body.y(),
          p_gate_body.z(), prev_cmd.x(),    prev_cmd.y(),    prev_cmd.z()};
}

double YawToward(const Vec3& p, const GateSpec& gate) {
  const Vec3 d = gate.center - p;
  if (std::hypot(d.x(), d.y()) < 1e-6) return std::atan2(gate.normal.y(), gate.normal.x());
  return std::atan2(d.y(), d.x());
}

Mat3 BodyFrame(const DroneState& state, const GateSpec& gate) {
  return RotationFromR3(state.body_z, YawToward(state.position, gate));
}

Observation Observe(const DroneState& state, const TrackSpec& track, int target_gate,
                    const Vec3& prev_cmd, const ObserveConfig& cfg) {
  if (target_gate < 0 || target_gate >= static_cast<int>(track.gates.size())) {
    throw std::invalid_argument("Observe: target gate index out of range");
  }
  const GateSpec& gate = track.gates[target_gate];
  const Mat3 r = BodyFrame(state, gate);
  Observation obs;
  obs.v_body = r.transpose() * state.velocity;
  obs.body_z = state.body_z;
  obs.p_gate_body = r.transpose() * (gate.center - state.position);
  obs.prev_cmd = prev_cmd;
  if (cfg.render_depth) {
    obs.depth = RenderDepth(state.position, r, track, cfg.camera);
  } else {
    obs.depth.assign(kDepthRows * kDepthCols, cfg.camera.far_clip);
  }
  return obs;
}

Vec3 PixelRay(int row, int col, const CameraConfig& cam) {
  const double deg = std::numbers::pi / 180.0;
  const double tx = std::tan(0.5 * cam.hfov_deg * deg) / (0.5 * kDepthCols);
  const double ty = std::tan(0.5 * cam.vfov_deg * deg) / (0.5 * kDepthRows);
  return Vec3(1.0, -(col - kDepthCols / 2) * tx, -(row - kDepthRows / 2) * ty);
}

std::optional<double> RayCast(const Vec3& origin, const Vec3& dir,
                              const TrackSpec& track) {
  double best = kInf;
  for (const auto& o : track.obstacles) {
    const double t = o.kind == Obstacle::Kind::kSphere
                         ? RaySphere(origin, dir, o.center, o.radius)
                         : RayCylinder(origin, dir, o);
    best = std::min(best, t);
  }
  for (const auto& b : track.FrameBars()) best = std::min(best, RayBox(origin, dir, b));
  if (best == kInf) return std::nullopt;
  return best;
}

std::vector<double> RenderDepth(const Vec3& origin, const Mat3& body_to_world,
                                const TrackSpec& track, const CameraConfig& cam) {
  std::vector<double> depth(kDepthRows * kDepthCols, cam.far_clip);
  const auto bars = track.FrameBars();
  for (int r = 0; r < kDepthRows; ++r) {
    for (int c = 0; c < kDepthCols; ++c) {
      const Vec3 dir = body_to_world * PixelRay(r, c, cam);
      double best = kInf;
      for (const auto& o : track.obstacles) {
        const double t = o.kind == Obstacle::Kind::kSphere
                             ? RaySphere(origin, dir, o.center, o.radius)
                             : RayCylinder(origin, dir, o);
        best = std::min(best, t);
      }
      for (const auto& b : bars) best = std::min(best, RayBox(origin, dir, b));
      // The ray's body-x component is 1, so t is the z-depth.
      depth[r * kDepthCols + c] = std::clamp(best, cam.near_clip, cam.far_clip);
    }
  }
  return depth;
}

Vec3 ToGateFrame(const GateSpec& gate, const Vec3& p) {
  const Vec3 rel = p - gate.center;
  return Vec3(gate.normal.dot(rel), gate.side().dot(rel), gate.up.dot(rel));
}

bool CheckGatePass(const Vec3& p_prev, const Vec3& p_next, const GateSpec& gate,
                   double r_q) {
  const double s0 = gate.normal.dot(p_prev - gate.center);
  const double s1 = gate.normal.dot(p_next - gate.center);
  if (!(s0 < 0.0 && s1 >= 0.0)) return false;
  const Vec3 x = p_prev + (s0 / (s0 - s1)) * (p_next - p_prev);
  const Vec3 local = ToGateFrame(gate, x);
  if (gate.shape == GateShape::kCircle) {
    return std::hypot(local.y(), local.z()) <= 0.5 * gate.width - r_q;
  }
  return std::abs(local.y()) <= 0.5 * gate.width - r_q &&
         std::abs(local.z()) <= 0.5 * gate.height - r_q;
}

Vec3 NearestPointOnObstacle(const Obstacle& o, const Vec3& p) {
  if (o.kind == Obstacle::Kind::kSphere) {
    const Vec3 rel = p - o.center;
    const double n = rel.norm();
    return n <= o.radius ? p : Vec3(o.center + rel * (o.radius / n));
  }
  const double half = 0.5 * o.height;
  Vec3 q = p;
  q.z() = std::clamp(p.z(), o.center.z() - half, o.center.z() + half);
  const double dx = p.x() - o.center.x(), dy = p.y() - o.center.y();
  const double radial = std::hypot(dx, dy);
  if (radial > o.radius) {
    q.x() = o.center.x() + dx * (o.radius / radial);
    q.y() = o.center.y() + dy * (o.radius / radial);
  }
  return q;
}

Vec3 NearestPointOnBox(const Box& b, const Vec3& p) {
  Vec3 local = b.axes.transpose() * (p - b.center);
  for (int i = 0; i < 3; ++i) local[i] = std::clamp(local[i], -b.half[i], b.half[i]);
  return b.center + b.axes * local;
}

CollisionInfo CheckCollision(const Vec3& p, const Vec3& v, const TrackSpec& track,
                             double r_q) {
  CollisionInfo info;
  double best = kInf;
  Vec3 best_offset = Vec3::Zero();
  auto consider = [&](const Vec3& q) {
    const Vec3 off = q - p;
    const double d = off.norm();
    if (d < best) {
      best = d;
      best_offset = off;
    }
  };
  for (const auto& o : track.obstacles) consider(NearestPointOnObstacle(o, p));
  for (const auto& b : track.FrameBars()) consider(NearestPointOnBox(b, p));
  if (best < kFarDistance) {
    info.offset = best_offset;
    info.distance = best;
    info.v_c = best > 0.0 ? std::max(0.0, v.dot(best_offset / best)) : v.norm();
  }
  info.collided = info.distance < r_q;
  return info;
}

}  // namespace gaterace
