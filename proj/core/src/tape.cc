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

#include "gaterace/tape.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string>

namespace gaterace {
namespace {

std::atomic<std::uint32_t> next_tape_id{1};

[[noreturn]] void ShapeError(OpKind op, std::span<const NodeRef> inputs,
                             const std::string& what) {
  std::ostringstream msg;
  msg << "Tape::Record(" << OpName(op) << "): " << what << "; input sizes [";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    msg << (i ? ", " : "") << inputs[i].size;
  }
  msg << "]";
  throw std::invalid_argument(msg.str());
}

double SigmoidValue(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double SoftplusValue(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Saturating norm map used by kClampNorm: identity up to the knee, then a
// tanh blend that approaches (never reaches) the bound.
double ClampedLength(double n, double bound, double knee) {
  if (n <= knee) return n;
  const double span = bound - knee;
  return knee + span * std::tanh((n - knee) / span);
}

double ClampedLengthSlope(double n, double bound, double knee) {
  if (n <= knee) return 1.0;
  const double span = bound - knee;
  const double t = std::tanh((n - knee) / span);
  return 1.0 - t * t;
}

}  // namespace

std::string_view OpName(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAffine: return "affine";
    case OpKind::kSum: return "sum";
    case OpKind::kDot: return "dot";
    case OpKind::kNorm: return "norm";
    case OpKind::kNormalize: return "normalize";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSquare: return "square";
    case OpKind::kMatVec: return "matvec";
    case OpKind::kLinear: return "linear";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kDetach: return "detach";
    case OpKind::kCarry: return "carry";
    case OpKind::kClampNorm: return "clamp_norm";
  }
  return "unknown";
}

std::span<const double> GradientTable::operator[](NodeRef node) const {
  tape_->CheckRef(node);
  const auto& n = tape_->nodes_[node.index];
  return {adjoints_.data() + n.value_offset, static_cast<std::size_t>(n.size)};
}

Tape::Tape(double decay_factor)
    : decay_factor_(decay_factor), id_(next_tape_id.fetch_add(1)) {
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("Tape: decay_factor must lie in (0, 1]");
  }
}

void Tape::CheckRef(NodeRef ref) const {
  if (ref.tape_id != id_ || ref.index < 0 ||
      ref.index >= static_cast<std::int32_t>(nodes_.size())) {
    throw std::invalid_argument("Tape: node handle does not belong to this tape");
  }
}

std::int32_t Tape::OutputSize(OpKind op, std::span<const NodeRef> in,
                              const Payload& p,
                              const std::vector<Node>& nodes) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      ShapeError(op, in, "expected " + std::to_string(n) + " inputs");
    }
  };
  switch (op) {
    case OpKind::kInput:
    case OpKind::kParameter:
      arity(0);
      if (p.constants.empty()) ShapeError(op, in, "empty leaf");
      return static_cast<std::int32_t>(p.constants.size());
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
      arity(2);
      if (in[0].size != in[1].size) ShapeError(op, in, "shape mismatch");
      return in[0].size;
    case OpKind::kScale:
      arity(2);
      if (in[1].size != 1) ShapeError(op, in, "scale factor must be scalar");
      return in[0].size;
    case OpKind::kAffine:
      arity(1);
      if (!p.constants.empty() &&
          p.constants.size() != static_cast<std::size_t>(in[0].size)) {
        ShapeError(op, in, "constant offset length mismatch");
      }
      return in[0].size;
    case OpKind::kSum:
    case OpKind::kNorm:
      arity(1);
      return 1;
    case OpKind::kDot:
      arity(2);
      if (in[0].size != in[1].size) ShapeError(op, in, "shape mismatch");
      return 1;
    case OpKind::kNormalize:
    case OpKind::kSoftplus:
    case OpKind::kRelu:
    case OpKind::kLeakyRelu:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSigmoid:
    case OpKind::kTanh:
    case OpKind::kSquare:
    case OpKind::kDetach:
    case OpKind::kCarry:
      arity(1);
      return in[0].size;
    case OpKind::kClampNorm:
      arity(1);
      if (!(p.scalar > p.scalar2 && p.scalar2 > 0.0)) {
        ShapeError(op, in, "require bound > knee > 0");
      }
      return in[0].size;
    case OpKind::kMatVec: {
      arity(1);
      const auto rows = p.ints[0], cols = p.ints[1];
      if (rows <= 0 || cols != in[0].size ||
          static_cast<std::int64_t>(p.constants.size()) != rows * cols) {
        ShapeError(op, in, "matrix " + std::to_string(rows) + "x" +
                               std::to_string(cols) + " incompatible");
      }
      return static_cast<std::int32_t>(rows);
    }
    case OpKind::kLinear: {
      arity(2);
      if (nodes[in[0].index].op != OpKind::kParameter) {
        ShapeError(op, in, "first input must be a parameter leaf");
      }
      const auto w = p.ints[0], b = p.ints[1], rows = p.ints[2], cols = p.ints[3];
      if (rows <= 0 || cols != in[1].size || w < 0 ||
          w + rows * cols > in[0].size || (b >= 0 && b + rows > in[0].size)) {
        ShapeError(op, in, "weight block " + std::to_string(rows) + "x" +
                               std::to_string(cols) + " out of range");
      }
      return static_cast<std::int32_t>(rows);
    }
    case OpKind::kConv2d: {
      arity(2);
      if (nodes[in[0].index].op != OpKind::kParameter) {
        ShapeError(op, in, "first input must be a parameter leaf");
      }
      const auto w = p.ints[0], b = p.ints[1], cin = p.ints[2], h = p.ints[3],
                 wd = p.ints[4], cout = p.ints[5], k = p.ints[6], s = p.ints[7];
      if (cin <= 0 || cout <= 0 || k <= 0 || s <= 0 || h < k || wd < k ||
          cin * h * wd != in[1].size) {
        ShapeError(op, in, "input is not in_ch*height*width");
      }
      if (w < 0 || w + cout * cin * k * k > in[0].size || b < 0 ||
          b + cout > in[0].size) {
        ShapeError(op, in, "kernel block out of range");
      }
      const auto ho = (h - k) / s + 1, wo = (wd - k) / s + 1;
      return static_cast<std::int32_t>(cout * ho * wo);
    }
    case OpKind::kConcat: {
      if (in.empty()) ShapeError(op, in, "needs at least one input");
      std::int32_t total = 0;
      for (const auto& r : in) total += r.size;
      return total;
    }
    case OpKind::kSlice: {
      arity(1);
      const auto off = p.ints[0], len = p.ints[1];
      if (off < 0 || len <= 0 || off + len > in[0].size) {
        ShapeError(op, in, "slice [" + std::to_string(off) + ", +" +
                               std::to_string(len) + ") out of range");
      }
      return static_cast<std::int32_t>(len);
    }
  }
  ShapeError(op, in, "unknown op");
}

NodeRef Tape::Record(OpKind op, std::span<const NodeRef> inputs,
                     const Payload& payload) {
  for (const auto& r : inputs) CheckRef(r);
  const std::int32_t size = OutputSize(op, inputs, payload, nodes_);

  Node node{};
  node.op = op;
  node.step = current_step_;
  node.size = size;
  node.input_begin = static_cast<std::int32_t>(inputs_.size());
  node.input_count = static_cast<std::int32_t>(inputs.size());
  node.value_offset = static_cast<std::int64_t>(values_.size());
  node.ints = payload.ints;
  node.scalar = payload.scalar;
  node.scalar2 = payload.scalar2;
  node.position = false;
  node.const_offset = static_cast<std::int64_t>(constants_.size());
  node.const_size = static_cast<std::int64_t>(payload.constants.size());
  if (op != OpKind::kInput && op != OpKind::kParameter) {
    constants_.insert(constants_.end(), payload.constants.begin(),
                      payload.constants.end());
  } else {
    node.const_size = 0;
  }
  for (const auto& r : inputs) inputs_.push_back(r.index);

  values_.resize(values_.size() + size);
  double* out = values_.data() + node.value_offset;
  if (op == OpKind::kInput || op == OpKind::kParameter) {
    std::copy(payload.constants.begin(), payload.constants.end(), out);
  } else {
    Forward(node, out);
  }
  nodes_.push_back(node);
  return NodeRef{static_cast<std::int32_t>(nodes_.size() - 1), size, id_};
}

void Tape::Forward(const Node& node, double* out) const {
  const std::int32_t* in = inputs_.data() + node.input_begin;
  auto val = [&](int i) { return values_.data() + nodes_[in[i]].value_offset; };
  auto len = [&](int i) { return nodes_[in[i]].size; };
  const double* c = constants_.data() + node.const_offset;
  const int n = node.size;

  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kParameter:
      break;
    case OpKind::kAdd: {
      const double *a = val(0), *b = val(1);
      for (int i = 0; i < n; ++i) out[i] = a[i] + b[i];
      break;
    }
    case OpKind::kSub: {
      const double *a = val(0), *b = val(1);
      for (int i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    }
    case OpKind::kMul: {
      const double *a = val(0), *b = val(1);
      for (int i = 0; i < n; ++i) out[i] = a[i] * b[i];
      break;
    }
    case OpKind::kScale: {
      const double* a = val(0);
      const double s = val(1)[0];
      for (int i = 0; i < n; ++i) out[i] = a[i] * s;
      break;
    }
    case OpKind::kAffine: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) {
        out[i] = node.scalar * a[i] + node.scalar2;
        if (node.const_size > 0) out[i] += c[i];
      }
      break;
    }
    case OpKind::kSum: {
      const double* a = val(0);
      double s = 0.0;
      for (int i = 0; i < len(0); ++i) s += a[i];
      out[0] = s;
      break;
    }
    case OpKind::kDot: {
      const double *a = val(0), *b = val(1);
      double s = 0.0;
      for (int i = 0; i < len(0); ++i) s += a[i] * b[i];
      out[0] = s;
      break;
    }
    case OpKind::kNorm: {
      const double* a = val(0);
      double s = 0.0;
      for (int i = 0; i < len(0); ++i) s += a[i] * a[i];
      out[0] = std::sqrt(s);
      break;
    }
    case OpKind::kNormalize: {
      const double* a = val(0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += a[i] * a[i];
      const double norm = std::sqrt(s);
      for (int i = 0; i < n; ++i) out[i] = norm > 0.0 ? a[i] / norm : 0.0;
      break;
    }
    case OpKind::kSoftplus: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = SoftplusValue(a[i]);
      break;
    }
    case OpKind::kRelu: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case OpKind::kLeakyRelu: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : node.scalar * a[i];
      break;
    }
    case OpKind::kExp: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = std::exp(a[i]);
      break;
    }
    case OpKind::kLog: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = std::log(a[i]);
      break;
    }
    case OpKind::kSigmoid: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = SigmoidValue(a[i]);
      break;
    }
    case OpKind::kTanh: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
      break;
    }
    case OpKind::kSquare: {
      const double* a = val(0);
      for (int i = 0; i < n; ++i) out[i] = a[i] * a[i];
      break;
    }
    case OpKind::kMatVec: {
      const double* a = val(0);
      const auto cols = node.ints[1];
      for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::int64_t k = 0; k < cols; ++k) s += c[r * cols + k] * a[k];
        out[r] = s;
      }
      break;
    }
    case OpKind::kLinear: {
      const double* p = val(0);
      const double* a = val(1);
      const double* w = p + node.ints[0];
      const auto cols = node.ints[3];
      for (int r = 0; r < n; ++r) {
        const double* row = w + r * cols;
        double s = node.ints[1] >= 0 ? p[node.ints[1] + r] : 0.0;
        for (std::int64_t k = 0; k < cols; ++k) s += row[k] * a[k];
        out[r] = s;
      }
      break;
    }
    case OpKind::kConv2d: {
      const double* p = val(0);
      const double* x = val(1);
      const auto cin = node.ints[2], h = node.ints[3], wd = node.ints[4],
                 cout = node.ints[5], k = node.ints[6], s = node.ints[7];
      const auto ho = (h - k) / s + 1, wo = (wd - k) / s + 1;
      const double* w = p + node.ints[0];
      const double* b = p + node.ints[1];
      for (std::int64_t o = 0; o < cout; ++o) {
        for (std::int64_t i = 0; i < ho; ++i) {
          for (std::int64_t j = 0; j < wo; ++j) {
            double acc = b[o];
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              const double* kw = w + ((o * cin + ci) * k) * k;
              const double* xc = x + ci * h * wd;
              for (std::int64_t u = 0; u < k; ++u) {
                const double* xr = xc + (i * s + u) * wd + j * s;
                for (std::int64_t v = 0; v < k; ++v) acc += kw[u * k + v] * xr[v];
              }
            }
            out[(o * ho + i) * wo + j] = acc;
          }
        }
      }
      break;
    }
    case OpKind::kConcat: {
      int pos = 0;
      for (int i = 0; i < node.input_count; ++i) {
        const double* a = val(i);
        std::copy(a, a + len(i), out + pos);
        pos += len(i);
      }
      break;
    }
    case OpKind::kSlice: {
      const double* a = val(0) + node.ints[0];
      std::copy(a, a + n, out);
      break;
    }
    case OpKind::kDetach:
    case OpKind::kCarry: {
      const double* a = val(0);
      std::copy(a, a + n, out);
      break;
    }
    case OpKind::kClampNorm: {
      const double* a = val(0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += a[i] * a[i];
      const double norm = std::sqrt(s);
      const double scale =
          norm > node.scalar2 ? ClampedLength(norm, node.scalar, node.scalar2) / norm
                              : 1.0;
      for (int i = 0; i < n; ++i) out[i] = scale == 1.0 ? a[i] : a[i] * scale;
      break;
    }
  }
}

void Tape::Reverse(const Node& node, const double* adj, double* adjoints) const {
  const std::int32_t* in = inputs_.data() + node.input_begin;
  auto val = [&](int i) { return values_.data() + nodes_[in[i]].value_offset; };
  auto grad = [&](int i) { return adjoints + nodes_[in[i]].value_offset; };
  auto len = [&](int i) { return nodes_[in[i]].size; };
  const double* y = values_.data() + node.value_offset;
  const double* c = constants_.data() + node.const_offset;
  const int n = node.size;

  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kParameter:
    case OpKind::kDetach:
      break;
    case OpKind::kAdd: {
      double *ga = grad(0), *gb = grad(1);
      for (int i = 0; i < n; ++i) ga[i] += adj[i];
      for (int i = 0; i < n; ++i) gb[i] += adj[i];
      break;
    }
    case OpKind::kSub: {
      double *ga = grad(0), *gb = grad(1);
      for (int i = 0; i < n; ++i) ga[i] += adj[i];
      for (int i = 0; i < n; ++i) gb[i] -= adj[i];
      break;
    }
    case OpKind::kMul: {
      const double *a = val(0), *b = val(1);
      double *ga = grad(0), *gb = grad(1);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] * b[i];
      for (int i = 0; i < n; ++i) gb[i] += adj[i] * a[i];
      break;
    }
    case OpKind::kScale: {
      const double* a = val(0);
      const double s = val(1)[0];
      double* ga = grad(0);
      double gs = 0.0;
      for (int i = 0; i < n; ++i) {
        ga[i] += adj[i] * s;
        gs += adj[i] * a[i];
      }
      grad(1)[0] += gs;
      break;
    }
    case OpKind::kAffine: {
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += node.scalar * adj[i];
      break;
    }
    case OpKind::kSum: {
      double* ga = grad(0);
      for (int i = 0; i < len(0); ++i) ga[i] += adj[0];
      break;
    }
    case OpKind::kDot: {
      const double *a = val(0), *b = val(1);
      double *ga = grad(0), *gb = grad(1);
      for (int i = 0; i < len(0); ++i) ga[i] += adj[0] * b[i];
      for (int i = 0; i < len(0); ++i) gb[i] += adj[0] * a[i];
      break;
    }
    case OpKind::kNorm: {
      if (y[0] <= 0.0) break;  // subgradient 0 at the origin
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < len(0); ++i) ga[i] += adj[0] * a[i] / y[0];
      break;
    }
    case OpKind::kNormalize: {
      const double* a = val(0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += a[i] * a[i];
      const double norm = std::sqrt(s);
      if (norm <= 0.0) break;
      double proj = 0.0;
      for (int i = 0; i < n; ++i) proj += y[i] * adj[i];
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += (adj[i] - y[i] * proj) / norm;
      break;
    }
    case OpKind::kSoftplus: {
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] * SigmoidValue(a[i]);
      break;
    }
    case OpKind::kRelu: {
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) {
        if (a[i] > 0.0) ga[i] += adj[i];
      }
      break;
    }
    case OpKind::kLeakyRelu: {
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += a[i] > 0.0 ? adj[i] : node.scalar * adj[i];
      break;
    }
    case OpKind::kExp: {
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] * y[i];
      break;
    }
    case OpKind::kLog: {
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] / a[i];
      break;
    }
    case OpKind::kSigmoid: {
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case OpKind::kTanh: {
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += adj[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case OpKind::kSquare: {
      const double* a = val(0);
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += 2.0 * a[i] * adj[i];
      break;
    }
    case OpKind::kMatVec: {
      double* ga = grad(0);
      const auto cols = node.ints[1];
      for (int r = 0; r < n; ++r) {
        for (std::int64_t k = 0; k < cols; ++k) ga[k] += c[r * cols + k] * adj[r];
      }
      break;
    }
    case OpKind::kLinear: {
      const double* p = val(0);
      const double* a = val(1);
      double* gp = grad(0);
      double* ga = grad(1);
      const auto cols = node.ints[3];
      const double* w = p + node.ints[0];
      double* gw = gp + node.ints[0];
      for (int r = 0; r < n; ++r) {
        const double g = adj[r];
        if (g == 0.0) continue;
        const double* row = w + r * cols;
        double* grow = gw + r * cols;
        for (std::int64_t k = 0; k < cols; ++k) {
          grow[k] += g * a[k];
          ga[k] += g * row[k];
        }
      }
      if (node.ints[1] >= 0) {
        double* gb = gp + node.ints[1];
        for (int r = 0; r < n; ++r) gb[r] += adj[r];
      }
      break;
    }
    case OpKind::kConv2d: {
      const double* p = val(0);
      const double* x = val(1);
      double* gp = grad(0);
      double* gx = grad(1);
      const auto cin = node.ints[2], h = node.ints[3], wd = node.ints[4],
                 cout = node.ints[5], k = node.ints[6], s = node.ints[7];
      const auto ho = (h - k) / s + 1, wo = (wd - k) / s + 1;
      const double* w = p + node.ints[0];
      double* gw = gp + node.ints[0];
      double* gb = gp + node.ints[1];
      for (std::int64_t o = 0; o < cout; ++o) {
        for (std::int64_t i = 0; i < ho; ++i) {
          for (std::int64_t j = 0; j < wo; ++j) {
            const double g = adj[(o * ho + i) * wo + j];
            gb[o] += g;
            if (g == 0.0) continue;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              const std::int64_t kbase = ((o * cin + ci) * k) * k;
              const std::int64_t xbase = ci * h * wd;
              for (std::int64_t u = 0; u < k; ++u) {
                const std::int64_t xrow = xbase + (i * s + u) * wd + j * s;
                for (std::int64_t v = 0; v < k; ++v) {
                  gw[kbase + u * k + v] += g * x[xrow + v];
                  gx[xrow + v] += g * w[kbase + u * k + v];
                }
              }
            }
          }
        }
      }
      break;
    }
    case OpKind::kConcat: {
      int pos = 0;
      for (int i = 0; i < node.input_count; ++i) {
        double* ga = grad(i);
        for (int j = 0; j < len(i); ++j) ga[j] += adj[pos + j];
        pos += len(i);
      }
      break;
    }
    case OpKind::kSlice: {
      double* ga = grad(0) + node.ints[0];
      for (int i = 0; i < n; ++i) ga[i] += adj[i];
      break;
    }
    case OpKind::kCarry: {
      const int crossed = node.step - nodes_[in[0]].step;
      const double factor = crossed > 0 ? std::pow(decay_factor_, crossed) : 1.0;
      double* ga = grad(0);
      for (int i = 0; i < n; ++i) ga[i] += factor * adj[i];
      break;
    }
    case OpKind::kClampNorm: {
      const double* a = val(0);
      double* ga = grad(0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += a[i] * a[i];
      const double norm = std::sqrt(s);
      if (norm <= node.scalar2) {
        for (int i = 0; i < n; ++i) ga[i] += adj[i];
        break;
      }
      const double len_out = ClampedLength(norm, node.scalar, node.scalar2);
      const double slope = ClampedLengthSlope(norm, node.scalar, node.scalar2);
      const double ratio = len_out / norm;
      double radial = 0.0;
      for (int i = 0; i < n; ++i) radial += a[i] * adj[i];
      radial /= norm;
      for (int i = 0; i < n; ++i) {
        ga[i] += ratio * adj[i] + (slope - ratio) * radial * a[i] / norm;
      }
      break;
    }
  }
}

int Tape::MarkStep() {
  ++current_step_;
  step_marks_.push_back(static_cast<std::int32_t>(nodes_.size()));
  return current_step_;
}

void Tape::MarkPosition(NodeRef node) {
  CheckRef(node);
  if (node.size != 3) {
    throw std::invalid_argument("Tape::MarkPosition: position nodes must be vec3");
  }
  nodes_[node.index].position = true;
}

bool Tape::IsPosition(NodeRef node) const {
  CheckRef(node);
  return nodes_[node.index].position;
}

GradientTable Tape::Backward(NodeRef loss,
                             std::span<const GradientInjection> injections) const {
  CheckRef(loss);
  if (loss.size != 1) {
    throw std::invalid_argument("Tape::Backward: loss must be a scalar node");
  }
  std::vector<std::pair<std::int32_t, Vec3>> pending;
  pending.reserve(injections.size());
  for (const auto& inj : injections) {
    CheckRef(inj.node);
    if (inj.node.size != 3 || !nodes_[inj.node.index].position) {
      throw std::invalid_argument(
          "Tape::Backward: injection target is not a vec3 position node");
    }
    pending.emplace_back(inj.node.index, inj.vector);
  }
  // Stable so that several injections at one node apply in caller order.
  std::stable_sort(pending.begin(), pending.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<double> adjoints(values_.size(), 0.0);
  adjoints[nodes_[loss.index].value_offset] = 1.0;
  std::size_t next = 0;
  const std::int32_t start =
      pending.empty() ? loss.index : std::max(loss.index, pending.front().first);

  for (std::int32_t i = start; i >= 0; --i) {
    const Node& node = nodes_[i];
    double* adj = adjoints.data() + node.value_offset;
    while (next < pending.size() && pending[next].first == i) {
      for (int k = 0; k < 3; ++k) adj[k] -= pending[next].second[k];
      ++next;
    }
    bool any = false;
    for (int k = 0; k < node.size && !any; ++k) any = adj[k] != 0.0;
    if (any) Reverse(node, adj, adjoints.data());
  }
  return GradientTable(this, std::move(adjoints));
}

std::span<const double> Tape::Value(NodeRef node) const {
  CheckRef(node);
  const auto& n = nodes_[node.index];
  return {values_.data() + n.value_offset, static_cast<std::size_t>(n.size)};
}

double Tape::ScalarValue(NodeRef node) const {
  auto v = Value(node);
  if (v.size() != 1) throw std::invalid_argument("Tape::ScalarValue: not a scalar");
  return v[0];
}

Vec3 Tape::Vec3Value(NodeRef node) const {
  auto v = Value(node);
  if (v.size() != 3) throw std::invalid_argument("Tape::Vec3Value: not a vec3");
  return Vec3(v[0], v[1], v[2]);
}

NodeRef Tape::Input(std::span<const double> values) {
  Payload p;
  p.constants = values;
  return Record(OpKind::kInput, {}, p);
}

NodeRef Tape::Constant(double value) { return Input(std::span<const double>(&value, 1)); }

NodeRef Tape::Constant(const Vec3& value) {
  return Input(std::span<const double>(value.data(), 3));
}

NodeRef Tape::Parameters(std::span<const double> values) {
  Payload p;
  p.constants = values;
  return Record(OpKind::kParameter, {}, p);
}

namespace {
template <typename... R>
std::array<NodeRef, sizeof...(R)> Refs(R... r) {
  return {r...};
}
}  // namespace

NodeRef Tape::Add(NodeRef a, NodeRef b) { return Record(OpKind::kAdd, Refs(a, b)); }
NodeRef Tape::Sub(NodeRef a, NodeRef b) { return Record(OpKind::kSub, Refs(a, b)); }
NodeRef Tape::Mul(NodeRef a, NodeRef b) { return Record(OpKind::kMul, Refs(a, b)); }
NodeRef Tape::Scale(NodeRef a, NodeRef s) { return Record(OpKind::kScale, Refs(a, s)); }

NodeRef Tape::Affine(NodeRef a, double mult, double add) {
  Payload p;
  p.scalar = mult;
  p.scalar2 = add;
  return Record(OpKind::kAffine, Refs(a), p);
}

NodeRef Tape::AddConstant(NodeRef a, std::span<const double> c) {
  Payload p;
  p.scalar = 1.0;
  p.constants = c;
  return Record(OpKind::kAffine, Refs(a), p);
}

NodeRef Tape::AddConstant(NodeRef a, const Vec3& c) {
  return AddConstant(a, std::span<const double>(c.data(), 3));
}

NodeRef Tape::Sum(NodeRef a) { return Record(OpKind::kSum, Refs(a)); }
NodeRef Tape::Dot(NodeRef a, NodeRef b) { return Record(OpKind::kDot, Refs(a, b)); }
NodeRef Tape::Norm(NodeRef a) { return Record(OpKind::kNorm, Refs(a)); }
NodeRef Tape::Normalize(NodeRef a) { return Record(OpKind::kNormalize, Refs(a)); }
NodeRef Tape::Softplus(NodeRef a) { return Record(OpKind::kSoftplus, Refs(a)); }
NodeRef Tape::Relu(NodeRef a) { return Record(OpKind::kRelu, Refs(a)); }

NodeRef Tape::LeakyRelu(NodeRef a, double slope) {
  Payload p;
  p.scalar = slope;
  return Record(OpKind::kLeakyRelu, Refs(a), p);
}

NodeRef Tape::Exp(NodeRef a) { return Record(OpKind::kExp, Refs(a)); }
NodeRef Tape::Log(NodeRef a) { return Record(OpKind::kLog, Refs(a)); }
NodeRef Tape::Sigmoid(NodeRef a) { return Record(OpKind::kSigmoid, Refs(a)); }
NodeRef Tape::Tanh(NodeRef a) { return Record(OpKind::kTanh, Refs(a)); }
NodeRef Tape::Square(NodeRef a) { return Record(OpKind::kSquare, Refs(a)); }

NodeRef Tape::MatVec(std::span<const double> row_major, int rows, int cols,
                     NodeRef a) {
  Payload p;
  p.constants = row_major;
  p.ints[0] = rows;
  p.ints[1] = cols;
  return Record(OpKind::kMatVec, Refs(a), p);
}

NodeRef Tape::MatVec(const Mat3& m, NodeRef a) {
  const std::array<double, 9> rm = {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1),
                                    m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
  return MatVec(rm, 3, 3, a);
}

NodeRef Tape::Linear(NodeRef params, std::int64_t w_offset, std::int64_t b_offset,
                     int rows, int cols, NodeRef a) {
  Payload p;
  p.ints = {w_offset, b_offset, rows, cols, 0, 0, 0, 0};
  return Record(OpKind::kLinear, Refs(params, a), p);
}

NodeRef Tape::Conv2d(NodeRef params, std::int64_t w_offset, std::int64_t b_offset,
                     int in_channels, int height, int width, int out_channels,
                     int kernel, int stride, NodeRef a) {
  Payload p;
  p.ints = {w_offset, b_offset, in_channels, height, width, out_channels, kernel, stride};
  return Record(OpKind::kConv2d, Refs(params, a), p);
}

NodeRef Tape::Concat(std::span<const NodeRef> parts) {
  return Record(OpKind::kConcat, parts);
}

NodeRef Tape::Slice(NodeRef a, int offset, int length) {
  Payload p;
  p.ints[0] = offset;
  p.ints[1] = length;
  return Record(OpKind::kSlice, Refs(a), p);
}

NodeRef Tape::Detach(NodeRef a) { return Record(OpKind::kDetach, Refs(a)); }
NodeRef Tape::Carry(NodeRef a) { return Record(OpKind::kCarry, Refs(a)); }

NodeRef Tape::ClampNorm(NodeRef a, double bound, double knee) {
  Payload p;
  p.scalar = bound;
  p.scalar2 = knee;
  return Record(OpKind::kClampNorm, Refs(a), p);
}

}  // namespace gaterace
