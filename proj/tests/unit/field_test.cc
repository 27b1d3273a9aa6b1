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
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "testing/biot_savart.h"

namespace gaterace {
namespace {

constexpr double kCi = 2e-5;

GateSpec UnitSquare() {
  return GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 1.0, 1.0);
}

Vec3 RandomPoint(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

TEST(FieldTest, SquareLoopCenterMatchesClosedForm) {
  const GateSpec g = UnitSquare();
  FieldConfig cfg;
  cfg.c_i = kCi;
  const FieldSample s = GateField(g.center, g, cfg);
  ASSERT_FALSE(s.singular);
  EXPECT_NEAR(s.b.norm(), 8.0 * std::numbers::sqrt2 * kCi, 1e-12);
  EXPECT_NEAR(s.b.normalized().dot(g.normal), 1.0, 1e-15);
  for (std::size_t i = 0; i < g.loop.size(); ++i) {
    const Vec3 b = SegmentField(g.center, g.loop[i], g.loop[(i + 1) % 4], kCi).b;
    EXPECT_NEAR(b.norm(), 2.0 * std::numbers::sqrt2 * kCi, 1e-15);
  }
}

TEST(FieldTest, SegmentMatchesNumericalLineIntegral) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r1 = RandomPoint(rng, 1.0);
    const Vec3 r2 = RandomPoint(rng, 1.0);
    const Vec3 p = RandomPoint(rng, 2.0);
    const FieldSample s = SegmentField(p, r1, r2, kCi);
    if (s.singular) continue;
    const Vec3 oracle = testing::LineIntegralField(p, r1, r2, kCi);
    EXPECT_LT((s.b - oracle).norm(), 1e-8 * oracle.norm() + 1e-18) << "sample " << i;
  }
}

TEST(FieldTest, GateMatchesNumericalLineIntegral) {
  const GateSpec g = GateSpec::Rectangle(Vec3(1.0, 2.0, 1.5), Vec3(0.6, 0.8, 0.0),
                                         Vec3::UnitZ(), 1.4, 1.0);
  FieldConfig cfg;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = g.center + RandomPoint(rng, 1.5);
    const Vec3 oracle = testing::LoopLineIntegralField(p, g.loop, cfg.c_i);
    EXPECT_LT((GateField(p, g, cfg).b - oracle).norm(), 1e-8 * oracle.norm());
  }
}

TEST(FieldTest, FieldIsPerpendicularToWireAndOffset) {
  const Vec3 r1(0.0, -0.5, 0.0), r2(0.0, 0.5, 0.0);
  const Vec3 p(3.0, 0.0, 4.0);  // on the perpendicular bisector plane
  const Vec3 b = SegmentField(p, r1, r2, kCi).b;
  EXPECT_NEAR(b.dot(Vec3::UnitY()), 0.0, 1e-20);
  EXPECT_NEAR(b.dot(p), 0.0, 1e-20);
}

TEST(FieldTest, SingularOnTheWireLine) {
  const FieldSample s = SegmentField(Vec3(2.0, 0.0, 0.0), Vec3::Zero(), Vec3::UnitX(), kCi);
  EXPECT_TRUE(s.singular);
  EXPECT_EQ(s.b, Vec3::Zero());
  EXPECT_EQ(AttractiveVector(s.b, Vec3::UnitX(), FieldConfig()), Vec3::Zero());
}

TEST(FieldTest, AxisFieldPointsAlongNormal) {
  const GateSpec g = GateSpec::Rectangle(Vec3(0.0, 0.0, 2.0), Vec3::UnitY(), Vec3::UnitZ(),
                                         1.5, 1.0);
  FieldConfig cfg;
  for (double x = -20.0; x <= 20.0; x += 0.25) {
    const Vec3 b = GateField(g.center + x * g.normal, g, cfg).b;
    EXPECT_GT(b.dot(g.normal), 0.0);
    EXPECT_LT((b - b.dot(g.normal) * g.normal).norm(), 1e-12 * b.norm()) << x;
  }
}

TEST(FieldTest, MirrorSymmetryAcrossGatePlane) {
  const GateSpec g = UnitSquare();
  FieldConfig cfg;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = RandomPoint(rng, 2.0);
    const Vec3 q(-p.x(), p.y(), p.z());
    const Vec3 bp = GateField(p, g, cfg).b;
    const Vec3 bq = GateField(q, g, cfg).b;
    const double tol = 1e-10 * bp.norm();
    EXPECT_NEAR(bp.x(), bq.x(), tol);
    EXPECT_NEAR(bp.y(), -bq.y(), tol);
    EXPECT_NEAR(bp.z(), -bq.z(), tol);
  }
}

TEST(FieldTest, FarFieldDecaysAsInverseCube) {
  const GateSpec g = UnitSquare();
  FieldConfig cfg;
  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const Vec3 dir = RandomPoint(rng, 1.0).normalized();
    const double r = 50.0 * g.width;
    const double ratio = GateField(2.0 * r * dir, g, cfg).b.norm() /
                         GateField(r * dir, g, cfg).b.norm();
    EXPECT_NEAR(ratio, 0.125, 0.05 * 0.125);
  }
}

TEST(FieldTest, DivergenceVanishes) {
  const GateSpec g = GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 1.5,
                                         1.0);
  FieldConfig cfg;
  const double h = 1e-4;
  std::mt19937_64 rng(15);
  int checked = 0;
  while (checked < 100) {
    const Vec3 p = RandomPoint(rng, 2.0);
    bool near_wire = false;
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec3 a = g.loop[i], b = g.loop[(i + 1) % 4];
      const Vec3 l = (b - a).normalized();
      const Vec3 rel = p - a;
      near_wire = near_wire || (rel - l * l.dot(rel)).norm() < 0.05;
    }
    if (near_wire) continue;
    double div = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      const Vec3 e = Vec3::Unit(axis) * h;
      div += (GateField(p + e, g, cfg).b[axis] - GateField(p - e, g, cfg).b[axis]) /
             (2.0 * h);
    }
    EXPECT_LT(std::abs(div), 1e-6 * GateField(p, g, cfg).b.norm() / h);
    ++checked;
  }
}

TEST(FieldTest, StreamlinesThreadTheAperture) {
  const GateSpec g = GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 1.5,
                                         1.5);
  FieldConfig cfg;
  auto dir = [&](const Vec3& p) { return Vec3(GateField(p, g, cfg).b.normalized()); };
  for (double y : {-0.5, -0.2, 0.0, 0.3, 0.6}) {
    for (double z : {-0.6, 0.0, 0.4}) {
      Vec3 p(-0.5, y, z);
      const double ds = 1e-3;
      int steps = 0;
      while (p.x() < 0.0 && steps++ < 100000) {
        const Vec3 k1 = dir(p);
        const Vec3 k2 = dir(p + 0.5 * ds * k1);
        const Vec3 k3 = dir(p + 0.5 * ds * k2);
        const Vec3 k4 = dir(p + ds * k3);
        p += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      ASSERT_GE(p.x(), 0.0);
      EXPECT_LT(std::abs(p.y()), 0.75) << y << "," << z;
      EXPECT_LT(std::abs(p.z()), 0.75) << y << "," << z;
    }
  }
}

TEST(FieldTest, LinearInFieldConstant) {
  const GateSpec g = UnitSquare();
  FieldConfig a, b;
  a.c_i = 2e-5;
  b.c_i = 8e-5;
  const Vec3 p(0.4, -0.3, 0.9), v(1.0, 0.5, 0.0);
  const Vec3 ba = GateField(p, g, a).b, bb = GateField(p, g, b).b;
  EXPECT_LT((bb - 4.0 * ba).norm(), 1e-14 * bb.norm());
  const Vec3 ua = AttractiveField(p, Vec3::Zero(), g, a);
  const Vec3 ub = AttractiveField(p, Vec3::Zero(), g, b);
  EXPECT_NEAR(ua.normalized().dot(ub.normalized()), 1.0, 1e-12);
  EXPECT_NEAR(ub.norm() / ua.norm(), std::pow(4.0, 1.0 - a.lambda_a), 1e-10);
  (void)v;
}

TEST(FieldTest, AttractiveVectorAttenuation) {
  FieldConfig cfg;
  const Vec3 b(3e-5, 0.0, 0.0);
  const Vec3 base = b / std::pow(b.norm(), cfg.lambda_a);
  EXPECT_LT((AttractiveVector(b, Vec3::Zero(), cfg) - base).norm(), 1e-15 * base.norm());
  EXPECT_LT(AttractiveVector(b, Vec3(100.0, 0.0, 0.0), cfg).norm(), 1e-2 * base.norm());
  EXPECT_NEAR(AttractiveVector(b, Vec3(-100.0, 0.0, 0.0), cfg).norm() / base.norm(), 2.0,
              1e-2);
  EXPECT_NEAR(AttractiveVector(b, Vec3(0.0, 5.0, 0.0), cfg).norm() / base.norm(), 1.0,
              1e-12);
}

TEST(FieldTest, AttractiveMagnitudeBound) {
  const GateSpec g = UnitSquare();
  FieldConfig cfg;
  std::mt19937_64 rng(16);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = RandomPoint(rng, 3.0);
    const Vec3 v = RandomPoint(rng, 5.0);
    const Vec3 b = GateField(p, g, cfg).b;
    EXPECT_LE(AttractiveVector(b, v, cfg).norm(),
              2.0 * std::pow(b.norm(), 1.0 - cfg.lambda_a) * (1.0 + 1e-12));
  }
}

TEST(FieldTest, PolygonCircleMatchesInscribedPolygonFormula) {
  const double diameter = 1.5;
  const double radius = 0.5 * diameter;
  FieldConfig cfg;
  const double ring = 2.0 * std::numbers::pi * cfg.c_i / radius;
  for (int n : {8, 16, 32, 64}) {
    const GateSpec g =
        GateSpec::Circle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), diameter, n);
    const Vec3 b = GateField(g.center, g, cfg).b;
    const double polygon = n * std::tan(std::numbers::pi / n) / std::numbers::pi;
    EXPECT_NEAR(b.norm() / ring, polygon, 1e-12) << n;
    EXPECT_NEAR(b.normalized().dot(g.normal), 1.0, 1e-12);
  }
}

TEST(FieldTest, GateSpecValidation) {
  EXPECT_THROW(GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitX(), 1.0, 1.0),
               std::invalid_argument);
  EXPECT_THROW(GateSpec::Rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitZ(), 0.0, 1.0),
               std::invalid_argument);
  FieldConfig cfg;
  cfg.lambda_a = 1.0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
}

TEST(FieldTest, DumpGridShapeAndSuperposition) {
  const GateSpec g1 = UnitSquare();
  const GateSpec g2 =
      GateSpec::Rectangle(Vec3(3.0, 0.5, 0.0), Vec3::UnitY(), Vec3::UnitZ(), 1.0, 1.0);
  FieldConfig cfg;
  GridBounds bounds;
  const std::vector<GateSpec> one = {g1};
  const auto small = DumpGrid(one, cfg, bounds, {2, 2, 2});
  ASSERT_EQ(small.size(), 8u);
  for (const auto& r : small) EXPECT_TRUE(r.b.allFinite() && r.a.allFinite());

  const std::vector<GateSpec> only2 = {g2};
  const std::vector<GateSpec> both = {g1, g2};
  const auto a = DumpGrid(one, cfg, bounds, {4, 3, 5});
  const auto b = DumpGrid(only2, cfg, bounds, {4, 3, 5});
  const auto ab = DumpGrid(both, cfg, bounds, {4, 3, 5});
  ASSERT_EQ(ab.size(), 60u);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    EXPECT_LT((ab[i].b - (a[i].b + b[i].b)).norm(), 1e-15);
  }
  EXPECT_THROW(DumpGrid(one, cfg, bounds, {1, 2, 2}), std::invalid_argument);
}

TEST(FieldTest, DumpGridReflectionSymmetry) {
  const GateSpec g = UnitSquare();
  FieldConfig cfg;
  const std::vector<GateSpec> gates = {g};
  const int n = 5;
  const auto rows = DumpGrid(gates, cfg, GridBounds(), {n, n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const auto& r = rows[(i * n + j) * n + k];
        const auto& m = rows[((n - 1 - i) * n + j) * n + k];
        ASSERT_DOUBLE_EQ(r.p.x(), -m.p.x());
        const double tol = 1e-12 * r.b.norm() + 1e-20;
        EXPECT_NEAR(r.b.x(), m.b.x(), tol);
        EXPECT_NEAR(r.b.y(), -m.b.y(), tol);
        EXPECT_NEAR(r.b.z(), -m.b.z(), tol);
      }
    }
  }
}

TEST(FieldTest, CsvRoundTripIsExact) {
  const GateSpec g = UnitSquare();
  const std::vector<GateSpec> gates = {g};
  const auto rows = DumpGrid(gates, FieldConfig(), GridBounds(), {3, 4, 3});
  std::stringstream ss;
  WriteFieldCsv(ss, rows);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "x,y,z,bx,by,bz,ax,ay,az");
  ss.seekg(0);
  const auto back = ReadFieldCsv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].p, rows[i].p);
    EXPECT_EQ(back[i].b, rows[i].b);
    EXPECT_EQ(back[i].a, rows[i].a);
  }
}

TEST(FieldTest, CsvRejectsMalformedInput) {
  std::stringstream bad_header("x,y\n1,2\n");
  EXPECT_THROW(ReadFieldCsv(bad_header), IoError);
  std::stringstream short_row("x,y,z,bx,by,bz,ax,ay,az\n1,2,3\n");
  EXPECT_THROW(ReadFieldCsv(short_row), IoError);
  std::stringstream bad_number("x,y,z,bx,by,bz,ax,ay,az\n1,2,3,4,5,6,7,8,oops\n");
  EXPECT_THROW(ReadFieldCsv(bad_number), IoError);
}

}  // namespace
}  // namespace gaterace
