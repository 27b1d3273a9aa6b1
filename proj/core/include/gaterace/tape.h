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

#ifndef GATERACE_TAPE_H_
#define GATERACE_TAPE_H_

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gaterace/common.h"

namespace gaterace {

// Primitive operations understood by the tape. Each has a hand-written
// reverse rule in tape.cc.
enum class OpKind : std::uint8_t {
  kInput,       // leaf holding constant data
  kParameter,   // leaf holding a flat parameter block
  kAdd,         // a + b
  kSub,         // a - b
  kMul,         // elementwise a * b
  kScale,       // vector a times scalar node s
  kAffine,      // scalar * a + constants (+ scalar2)
  kSum,         // sum of entries -> scalar
  kDot,         // a . b -> scalar
  kNorm,        // ||a|| -> scalar
  kNormalize,   // a / ||a||
  kSoftplus,    // ln(1 + e^a)
  kRelu,        // max(a, 0)
  kLeakyRelu,   // a > 0 ? a : slope * a
  kExp,
  kLog,
  kSigmoid,
  kTanh,
  kSquare,      // elementwise a^2
  kMatVec,      // constant row-major matrix times a
  kLinear,      // W a + b with W, b read from a parameter leaf
  kConv2d,      // 3x3 (configurable) strided valid convolution from a parameter leaf
  kConcat,
  kSlice,
  kDetach,      // identity forward, zero backward
  kCarry,       // identity forward, decayed backward across step boundaries
  kClampNorm,   // smooth norm saturation at a bound
};

std::string_view OpName(OpKind op);

// Handle to a node. Only meaningful for the tape that issued it.
struct NodeRef {
  std::int32_t index = -1;
  std::int32_t size = 0;
  std::uint32_t tape_id = 0;

  bool valid() const { return index >= 0; }
  bool is_scalar() const { return size == 1; }
  bool is_vec3() const { return size == 3; }
};

// Constant data attached to a recorded node. `ints` meaning is per-op:
//   kSlice:     {offset, length}
//   kMatVec:    {rows, cols}
//   kLinear:    {w_offset, b_offset or -1, rows, cols}
//   kConv2d:    {w_offset, b_offset, in_ch, height, width, out_ch, kernel, stride}
struct Payload {
  std::span<const double> constants;
  std::array<std::int64_t, 8> ints{};
  double scalar = 0.0;
  double scalar2 = 0.0;
};

// External vector subtracted from a position node's adjoint during backward.
struct GradientInjection {
  NodeRef node;
  Vec3 vector = Vec3::Zero();
};

class Tape;

// Adjoints of every node after a backward pass.
class GradientTable {
 public:
  std::span<const double> operator[](NodeRef node) const;
  std::span<const double> raw() const { return adjoints_; }

 private:
  friend class Tape;
  GradientTable(const Tape* tape, std::vector<double> adjoints)
      : tape_(tape), adjoints_(std::move(adjoints)) {}

  const Tape* tape_;
  std::vector<double> adjoints_;
};

// Append-only reverse-mode computation graph over one rollout.
//
// Nodes are grouped into steps by MarkStep(). A kCarry node whose input was
// recorded k steps earlier scales the adjoint flowing back through it by
// decay_factor^k; all other edges are undecayed. Spans returned by Value()
// are invalidated by the next Record().
class Tape {
 public:
  explicit Tape(double decay_factor = 1.0);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeRef Record(OpKind op, std::span<const NodeRef> inputs,
                 const Payload& payload = {});

  // Starts a new step; returns its index.
  int MarkStep();
  int current_step() const { return current_step_; }
  std::span<const std::int32_t> step_marks() const { return step_marks_; }

  // Flags a vec3 node as a position state, making it a legal injection target.
  void MarkPosition(NodeRef node);
  bool IsPosition(NodeRef node) const;

  GradientTable Backward(NodeRef loss,
                         std::span<const GradientInjection> injections = {}) const;

  double decay_factor() const { return decay_factor_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::uint32_t id() const { return id_; }

  std::span<const double> Value(NodeRef node) const;
  double ScalarValue(NodeRef node) const;
  Vec3 Vec3Value(NodeRef node) const;

  // Leaves.
  NodeRef Input(std::span<const double> values);
  NodeRef Constant(double value);
  NodeRef Constant(const Vec3& value);
  NodeRef Parameters(std::span<const double> values);

  // Shorthands over Record().
  NodeRef Add(NodeRef a, NodeRef b);
  NodeRef Sub(NodeRef a, NodeRef b);
  NodeRef Mul(NodeRef a, NodeRef b);
  NodeRef Scale(NodeRef a, NodeRef s);
  NodeRef Affine(NodeRef a, double mult, double add = 0.0);
  NodeRef AddConstant(NodeRef a, std::span<const double> c);
  NodeRef AddConstant(NodeRef a, const Vec3& c);
  NodeRef Sum(NodeRef a);
  NodeRef Dot(NodeRef a, NodeRef b);
  NodeRef Norm(NodeRef a);
  NodeRef Normalize(NodeRef a);
  NodeRef Softplus(NodeRef a);
  NodeRef Relu(NodeRef a);
  NodeRef LeakyRelu(NodeRef a, double slope);
  NodeRef Exp(NodeRef a);
  NodeRef Log(NodeRef a);
  NodeRef Sigmoid(NodeRef a);
  NodeRef Tanh(NodeRef a);
  NodeRef Square(NodeRef a);
  NodeRef MatVec(std::span<const double> row_major, int rows, int cols,
                 NodeRef a);
  NodeRef MatVec(const Mat3& m, NodeRef a);
  NodeRef Linear(NodeRef params, std::int64_t w_offset, std::int64_t b_offset,
                 int rows, int cols, NodeRef a);
  NodeRef Conv2d(NodeRef params, std::int64_t w_offset, std::int64_t b_offset,
                 int in_channels, int height, int width, int out_channels,
                 int kernel, int stride, NodeRef a);
  NodeRef Concat(std::span<const NodeRef> parts);
  NodeRef Slice(NodeRef a, int offset, int length);
  NodeRef Detach(NodeRef a);
  NodeRef Carry(NodeRef a);
  NodeRef ClampNorm(NodeRef a, double bound, double knee);

 private:
  struct Node {
    OpKind op;
    std::int32_t step;
    std::int32_t size;
    std::int32_t input_begin;
    std::int32_t input_count;
    std::int64_t value_offset;
    std::int64_t const_offset;
    std::int64_t const_size;
    std::array<std::int64_t, 8> ints;
    double scalar;
    double scalar2;
    bool position;
  };

  friend class GradientTable;

  void CheckRef(NodeRef ref) const;
  static std::int32_t OutputSize(OpKind op, std::span<const NodeRef> inputs,
                                 const Payload& payload,
                                 const std::vector<Node>& nodes);
  void Forward(const Node& node, double* out) const;
  void Reverse(const Node& node, const double* adj, double* adjoints) const;

  double decay_factor_;
  std::uint32_t id_;
  int current_step_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> inputs_;
  std::vector<double> values_;
  std::vector<double> constants_;
  std::vector<std::int32_t> step_marks_;
};

// Output length of a valid, strided convolution.
inline int ConvOutputSize(int input, int kernel, int stride) {
  return (input - kernel) / stride + 1;
}

}  // namespace gaterace

#endif  // GATERACE_TAPE_H_
