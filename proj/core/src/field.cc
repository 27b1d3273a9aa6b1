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

#include "gaterace/field.h"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "gaterace/csv.h"

namespace gaterace {

GateSpec GateSpec::Rectangle(const Vec3& center, const Vec3& normal,
                             const Vec3& up, double width, double height) {
  GateSpec g;
  g.center = center;
  g.normal = normal.normalized();
  g.up = up.normalized();
  g.width = width;
  g.height = height;
  g.shape = GateShape::kRectangle;
  const Vec3 s = g.side() * (0.5 * width);
  const Vec3 u = g.up * (0.5 * height);
  g.loop = {center - s - u, center + s - u, center + s + u, center - s + u};
  g.Validate();
  return g;
}

GateSpec GateSpec::Circle(const Vec3& center, const Vec3& normal, const Vec3& up,
                          double diameter, int segments) {
  if (segments < 3) throw std::invalid_argument("GateSpec::Circle: need >= 3 segments");
  GateSpec g;
  g.center = center;
  g.normal = normal.normalized();
  g.up = up.normalized();
  g.width = diameter;
  g.height = diameter;
  g.shape = GateShape::kCircle;
  const Vec3 s = g.side();
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    g.loop.push_back(center + 0.5 * diameter * (std::cos(t) * s + std::sin(t) * g.up));
  }
  g.Validate();
  return g;
}

void GateSpec::Validate() const {
  if (std::abs(normal.norm() - 1.0) > 1e-9 || std::abs(up.norm() - 1.0) > 1e-9 ||
      std::abs(normal.dot(up)) > 1e-9) {
    throw std::invalid_argument("GateSpec: normal and up must be orthonormal");
  }
  if (!(width > 0.0 && height > 0.0) || loop.size() < 3) {
    throw std::invalid_argument("GateSpec: degenerate aperture");
  }
  for (const auto& v : loop) {
    if (std::abs(normal.dot(v - center)) > 1e-9) {
      throw std::invalid_argument("GateSpec: loop vertices not coplanar");
    }
  }
}

void FieldConfig::Validate() const {
  if (!(c_i > 0.0)) throw ConfigError("field.c_i must be > 0");
  if (!(lambda_a > 0.0 && lambda_a < 1.0)) {
    throw ConfigError("field.lambda_a must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("field.epsilon must be > 0");
}

FieldSample SegmentField(const Vec3& p, const Vec3& r1, const Vec3& r2, double c_i) {
  const Vec3 seg = r2 - r1;
  const Vec3 l = seg.normalized();
  // d: from p to the foot of the perpendicular on the supporting line.
  const Vec3 foot = r1 + l * l.dot(p - r1);
  const Vec3 d = foot - p;
  const double d2 = d.squaredNorm();
  if (d2 <= kWireGuard * kWireGuard) return {Vec3::Zero(), true};
  const Vec3 e1 = r1 - p;
  const Vec3 e2 = r2 - p;
  const double scalar = l.dot(e1 / e1.norm() - e2 / e2.norm());
  return {c_i * scalar * l.cross(d) / d2, false};
}

FieldSample GateField(const Vec3& p, const GateSpec& gate, const FieldConfig& cfg) {
  FieldSample total;
  const std::size_t n = gate.loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const FieldSample s = SegmentField(p, gate.loop[i], gate.loop[(i + 1) % n], cfg.c_i);
    total.b += s.b;
    total.singular = total.singular || s.singular;
  }
  return total;
}

Vec3 AttractiveVector(const Vec3& b, const Vec3& v, const FieldConfig& cfg) {
  const double bn = b.norm();
  if (!(bn > 0.0)) return Vec3::Zero();
  const double attenuation = 1.0 - v.dot(b) / (v.norm() * bn + cfg.epsilon);
  return attenuation * b / std::pow(bn, cfg.lambda_a);
}

Vec3 AttractiveField(const Vec3& p, const Vec3& v, const GateSpec& gate,
                     const FieldConfig& cfg) {
  return AttractiveVector(GateField(p, gate, cfg).b, v, cfg);
}

std::vector<FieldGridRow> DumpGrid(std::span<const GateSpec> gates,
                                   const FieldConfig& cfg, const GridBounds& bounds,
                                   std::array<int, 3> resolution) {
  for (int r : resolution) {
    if (r < 2) throw std::invalid_argument("DumpGrid: resolution must be >= 2 per axis");
  }
  std::vector<FieldGridRow> rows;
  rows.reserve(static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2]);
  auto coord = [&](int axis, int i) {
    return bounds.lo[axis] +
           (bounds.hi[axis] - bounds.lo[axis]) * i / (resolution[axis] - 1);
  };
  for (int i = 0; i < resolution[0]; ++i) {
    for (int j = 0; j < resolution[1]; ++j) {
      for (int k = 0; k < resolution[2]; ++k) {
        FieldGridRow row;
        row.p = Vec3(coord(0, i), coord(1, j), coord(2, k));
        row.b = Vec3::Zero();
        for (const auto& g : gates) {
          const FieldSample s = GateField(row.p, g, cfg);
          row.b += s.b;
          row.singular = row.singular || s.singular;
        }
        row.a = AttractiveVector(row.b, Vec3::Zero(), cfg);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void WriteFieldCsv(std::ostream& out, std::span<const FieldGridRow> rows) {
  out << "x,y,z,bx,by,bz,ax,ay,az\n";
  for (const auto& r : rows) {
    out << FormatDouble(r.p.x()) << ',' << FormatDouble(r.p.y()) << ','
        << FormatDouble(r.p.z()) << ',' << FormatDouble(r.b.x()) << ','
        << FormatDouble(r.b.y()) << ',' << FormatDouble(r.b.z()) << ','
        << FormatDouble(r.a.x()) << ',' << FormatDouble(r.a.y()) << ','
        << FormatDouble(r.a.z()) << '\n';
  }
}

std::vector<FieldGridRow> ReadFieldCsv(std::istream& in) {
  std::vector<FieldGridRow> rows;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "x,y,z,bx,by,bz,ax,ay,az") {
        throw IoError("field csv line " + std::to_string(line_no) +
                      ": unexpected header '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    const auto cells = SplitCsvLine(line);
    if (cells.size() != 9) {
      throw IoError("field csv line " + std::to_string(line_no) + ": expected 9 columns");
    }
    double v[9];
    for (int i = 0; i < 9; ++i) v[i] = ParseDouble(cells[i], line_no);
    FieldGridRow r;
    r.p = Vec3(v[0], v[1], v[2]);
    r.b = Vec3(v[3], v[4], v[5]);
    r.a = Vec3(v[6], v[7], v[8]);
    rows.push_back(r);
  }
  if (!header_seen) throw IoError("field csv: missing header");
  return rows;
}

}  // namespace gaterace
