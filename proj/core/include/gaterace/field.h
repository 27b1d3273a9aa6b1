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

#ifndef GATERACE_FIELD_H_
#define GATERACE_FIELD_H_

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "gaterace/common.h"

namespace gaterace {

enum class GateShape { kRectangle, kCircle };

// A gate modelled as a closed current loop. `loop` holds the polygon
// vertices, ordered so the circulation produces a field along +normal at the
// center (counter-clockwise seen from the +normal side).
struct GateSpec {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  Vec3 up = Vec3::UnitZ();
  double width = 1.5;   // m, for circles the diameter
  double height = 1.5;  // m
  GateShape shape = GateShape::kRectangle;
  std::vector<Vec3> loop;

  // In-plane axis completing (normal, side, up) as a right-handed frame.
  Vec3 side() const { return up.cross(normal); }

  static GateSpec Rectangle(const Vec3& center, const Vec3& normal,
                            const Vec3& up, double width, double height);
  static GateSpec Circle(const Vec3& center, const Vec3& normal, const Vec3& up,
                         double diameter, int segments = 16);

  // Throws std::invalid_argument if the frame is not orthonormal or the loop
  // is degenerate.
  void Validate() const;
};

struct FieldConfig {
  double c_i = 2e-5;       // field-strength constant
  double lambda_a = 0.3;   // magnitude tempering exponent, in (0, 1)
  double epsilon = 1e-5;   // alignment denominator guard

  void Validate() const;
};

struct FieldSample {
  Vec3 b = Vec3::Zero();
  bool singular = false;
};

// Radius around a wire's supporting line inside which the field is not
// evaluated.
inline constexpr double kWireGuard = 1e-9;

// Field of the straight wire r1 -> r2 at p (finite-wire Biot-Savart form).
FieldSample SegmentField(const Vec3& p, const Vec3& r1, const Vec3& r2, double c_i);

// Superposition over the gate's loop segments.
FieldSample GateField(const Vec3& p, const GateSpec& gate, const FieldConfig& cfg);

// Guidance vector from a field value: alignment-attenuated and tempered by
// ||B||^{-lambda_a}. Zero when the field vanishes.
Vec3 AttractiveVector(const Vec3& b, const Vec3& v, const FieldConfig& cfg);

Vec3 AttractiveField(const Vec3& p, const Vec3& v, const GateSpec& gate,
                     const FieldConfig& cfg);

struct GridBounds {
  Vec3 lo = Vec3(-2.0, -2.0, -2.0);
  Vec3 hi = Vec3(2.0, 2.0, 2.0);
};

struct FieldGridRow {
  Vec3 p;
  Vec3 b;
  Vec3 a;  // attractive vector at zero velocity
  bool singular = false;
};

// Samples the superposed field of all gates on a regular grid. Rows are
// ordered x-major, z fastest.
std::vector<FieldGridRow> DumpGrid(std::span<const GateSpec> gates,
                                   const FieldConfig& cfg, const GridBounds& bounds,
                                   std::array<int, 3> resolution);

// CSV with header x,y,z,bx,by,bz,ax,ay,az. Lines starting with '#' are
// comments.
void WriteFieldCsv(std::ostream& out, std::span<const FieldGridRow> rows);
std::vector<FieldGridRow> ReadFieldCsv(std::istream& in);

}  // namespace gaterace

#endif  // GATERACE_FIELD_H_
