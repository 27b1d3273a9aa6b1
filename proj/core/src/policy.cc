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

#include "gaterace/policy.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gaterace/csv.h"
#include "gaterace/rng.h"

namespace gaterace {
namespace {

constexpr char kCheckpointTag[] = "gaterace-checkpoint v1";

// Fixed input scaling of the 12-entry state vector.
constexpr double kVelocityScale = 0.2;
constexpr double kGateScale = 0.2;
constexpr double kCommandScale = 0.1;

int ConvRows(const NetArch& a) {
  return ConvOutputSize(ConvOutputSize(kDepthRows, a.kernel, a.stride), a.kernel,
                        a.stride);
}

int ConvCols(const NetArch& a) {
  return ConvOutputSize(ConvOutputSize(kDepthCols, a.kernel, a.stride), a.kernel,
                        a.stride);
}

int HeadInput(const NetArch& a) { return a.head_hidden > 0 ? a.head_hidden : a.core(); }

}  // namespace

NetArch NetArch::Policy() { return NetArch{}; }

NetArch NetArch::StateOnlyPolicy(int embed, int head_hidden) {
  NetArch a;
  a.depth_embed = 0;
  a.state_embed = embed;
  a.hidden = 0;
  a.head_hidden = head_hidden;
  return a;
}

NetArch NetArch::Delta() {
  NetArch a;
  a.depth_embed = 0;
  a.state_in = 9;
  a.state_embed = 32;
  a.hidden = 32;
  a.head_hidden = 0;
  a.zero_head = true;
  return a;
}

void NetArch::Validate() const {
  if (depth_embed < 0 || hidden < 0 || head_hidden < 0) {
    throw ConfigError("network: layer sizes must be non-negative");
  }
  if (state_in <= 0 || state_embed <= 0 || out <= 0) {
    throw ConfigError("network: state_in, state_embed and out must be positive");
  }
  if (depth_embed > 0) {
    if (conv1 <= 0 || conv2 <= 0 || kernel <= 0 || stride <= 0) {
      throw ConfigError("network: conv sizes must be positive");
    }
    if (ConvRows(*this) <= 0 || ConvCols(*this) <= 0) {
      throw ConfigError("network: conv stack collapses the depth image");
    }
  }
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("network: slope must lie in [0, 1)");
}

std::string NetArch::Serialize() const {
  std::ostringstream s;
  s << "depth_embed=" << depth_embed << " conv1=" << conv1 << " conv2=" << conv2
    << " kernel=" << kernel << " stride=" << stride << " state_in=" << state_in
    << " state_embed=" << state_embed << " hidden=" << hidden
    << " head_hidden=" << head_hidden << " out=" << out
    << " slope=" << FormatDouble(slope) << " zero_head=" << (zero_head ? 1 : 0);
  return s.str();
}

NetArch NetArch::Parse(const std::string& line) {
  NetArch a;
  std::istringstream s(line);
  std::map<std::string, int*> ints = {
      {"depth_embed", &a.depth_embed}, {"conv1", &a.conv1},
      {"conv2", &a.conv2},             {"kernel", &a.kernel},
      {"stride", &a.stride},           {"state_in", &a.state_in},
      {"state_embed", &a.state_embed}, {"hidden", &a.hidden},
      {"head_hidden", &a.head_hidden}, {"out", &a.out}};
  for (std::string tok; s >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError("network arch: bad token '" + tok + "'");
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "slope") {
      a.slope = ParseDouble(value, 0);
    } else if (key == "zero_head") {
      a.zero_head = value == "1";
    } else if (auto it = ints.find(key); it != ints.end()) {
      *it->second = static_cast<int>(ParseDouble(value, 0));
    } else {
      throw IoError("network arch: unknown key '" + key + "'");
    }
  }
  return a;
}

void ParamManifest::Add(std::string name, std::vector<int> shape) {
  LayerSpec spec;
  spec.name = std::move(name);
  spec.shape = std::move(shape);
  spec.offset = total_;
  spec.size = 1;
  for (int d : spec.shape) spec.size *= d;
  total_ += spec.size;
  index_[spec.name] = layers_.size();
  layers_.push_back(std::move(spec));
}

ParamManifest ParamManifest::Build(const NetArch& a) {
  a.Validate();
  ParamManifest m;
  if (a.depth_embed > 0) {
    m.Add("depth.conv1.w", {a.conv1, 1, a.kernel, a.kernel});
    m.Add("depth.conv1.b", {a.conv1});
    m.Add("depth.conv2.w", {a.conv2, a.conv1, a.kernel, a.kernel});
    m.Add("depth.conv2.b", {a.conv2});
    m.Add("depth.fc.w", {a.depth_embed, a.conv2 * ConvRows(a) * ConvCols(a)});
    m.Add("depth.fc.b", {a.depth_embed});
  }
  m.Add("state.fc.w", {a.state_embed, a.state_in});
  m.Add("state.fc.b", {a.state_embed});
  if (a.hidden > 0) {
    m.Add("gru.wx", {3 * a.hidden, a.fused()});
    m.Add("gru.bx", {3 * a.hidden});
    m.Add("gru.wh", {3 * a.hidden, a.hidden});
    m.Add("gru.bh", {3 * a.hidden});
  }
  if (a.head_hidden > 0) {
    m.Add("head.fc.w", {a.head_hidden, a.core()});
    m.Add("head.fc.b", {a.head_hidden});
  }
  m.Add("head.out.w", {a.out, HeadInput(a)});
  m.Add("head.out.b", {a.out});
  return m;
}

bool ParamManifest::Has(const std::string& name) const { return index_.count(name) > 0; }

const LayerSpec& ParamManifest::Find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no layer named '" + name + "'");
  return layers_[it->second];
}

Network Network::Zeros(const NetArch& arch) {
  Network net;
  net.arch = arch;
  net.manifest = ParamManifest::Build(arch);
  net.params.assign(net.manifest.total_size(), 0.0);
  return net;
}

Network Network::Init(const NetArch& arch, std::uint64_t seed) {
  Network net = Zeros(arch);
  Rng rng = Substream(seed, "init");
  for (const auto& layer : net.manifest.layers()) {
    const bool weight = layer.shape.size() >= 2;
    if (!weight) continue;
    if (arch.zero_head && layer.name == "head.out.w") continue;
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < layer.shape.size(); ++i) fan_in *= layer.shape[i];
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < layer.size; ++i) {
      net.params[layer.offset + i] = Uniform(rng, -bound, bound);
    }
  }
  if (arch.hidden > 0) {
    // Gate order in the GRU blocks is (reset, update, candidate).
    const auto& bx = net.manifest.Find("gru.bx");
    for (int i = 0; i < arch.hidden; ++i) net.params[bx.offset + arch.hidden + i] = 1.0;
  }
  return net;
}

NetOutput NetForward(const Network& net, NodeRef params,
                     std::span<const double> state_input,
                     std::span<const double> depth, NodeRef hidden, Tape& tape) {
  const NetArch& a = net.arch;
  const ParamManifest& m = net.manifest;
  if (params.size != m.total_size()) {
    throw std::invalid_argument("NetForward: parameter node size does not match manifest");
  }
  if (static_cast<int>(state_input.size()) != a.state_in) {
    throw std::invalid_argument("NetForward: state input has " +
                                std::to_string(state_input.size()) + " entries, expected " +
                                std::to_string(a.state_in));
  }
  const std::size_t depth_size = a.depth_embed > 0 ? kDepthRows * kDepthCols : 0;
  if (depth.size() != depth_size) {
    throw std::invalid_argument("NetForward: depth input has " + std::to_string(depth.size()) +
                                " entries, expected " + std::to_string(depth_size));
  }
  auto linear = [&](const std::string& layer, NodeRef x) {
    const auto& w = m.Find(layer + ".w");
    return tape.Linear(params, w.offset, m.Find(layer + ".b").offset, w.shape[0], w.shape[1],
                       x);
  };
  auto leaky = [&](NodeRef x) { return tape.LeakyRelu(x, a.slope); };

  std::vector<NodeRef> parts;
  if (a.depth_embed > 0) {
    NodeRef x = tape.Input(depth);
    const int h1 = ConvOutputSize(kDepthRows, a.kernel, a.stride);
    const int w1 = ConvOutputSize(kDepthCols, a.kernel, a.stride);
    x = leaky(tape.Conv2d(params, m.Find("depth.conv1.w").offset,
                          m.Find("depth.conv1.b").offset, 1, kDepthRows, kDepthCols,
                          a.conv1, a.kernel, a.stride, x));
    x = leaky(tape.Conv2d(params, m.Find("depth.conv2.w").offset,
                          m.Find("depth.conv2.b").offset, a.conv1, h1, w1, a.conv2,
                          a.kernel, a.stride, x));
    parts.push_back(leaky(linear("depth.fc", x)));
  }
  parts.push_back(leaky(linear("state.fc", tape.Input(state_input))));
  NodeRef core = parts.size() == 1 ? parts[0] : tape.Concat(parts);

  NetOutput result;
  if (a.hidden > 0) {
    const int n = a.hidden;
    NodeRef h;
    if (hidden.valid()) {
      if (hidden.size != n) throw std::invalid_argument("NetForward: hidden size mismatch");
      h = tape.Carry(hidden);
    } else {
      const std::vector<double> zeros(n, 0.0);
      h = tape.Input(zeros);
    }
    const auto& wx = m.Find("gru.wx");
    const NodeRef gx = tape.Linear(params, wx.offset, m.Find("gru.bx").offset, 3 * n,
                                   wx.shape[1], core);
    const auto& wh = m.Find("gru.wh");
    const NodeRef gh =
        tape.Linear(params, wh.offset, m.Find("gru.bh").offset, 3 * n, n, h);
    const NodeRef r = tape.Sigmoid(tape.Add(tape.Slice(gx, 0, n), tape.Slice(gh, 0, n)));
    const NodeRef z = tape.Sigmoid(tape.Add(tape.Slice(gx, n, n), tape.Slice(gh, n, n)));
    const NodeRef cand = tape.Tanh(
        tape.Add(tape.Slice(gx, 2 * n, n), tape.Mul(r, tape.Slice(gh, 2 * n, n))));
    // h' = (1 - z) * cand + z * h
    core = tape.Add(cand, tape.Mul(z, tape.Sub(h, cand)));
    result.hidden = core;
  }
  if (a.head_hidden > 0) core = leaky(linear("head.fc", core));
  result.output = linear("head.out", core);
  return result;
}

std::vector<double> PolicyStateInput(const Observation& obs) {
  auto s = obs.StateVector();
  for (int i = 0; i < 3; ++i) {
    s[i] *= kVelocityScale;
    s[6 + i] *= kGateScale;
    s[9 + i] *= kCommandScale;
  }
  return std::vector<double>(s.begin(), s.end());
}

std::vector<double> DepthInput(const Observation& obs, double far_clip) {
  if (obs.depth.size() != static_cast<std::size_t>(kDepthRows * kDepthCols)) {
    throw std::invalid_argument("DepthInput: depth image must be 24x32");
  }
  std::vector<double> x(obs.depth.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 - obs.depth[i] / far_clip;
  return x;
}

NetOutput PolicyForward(const Network& net, NodeRef params, const Observation& obs,
                        NodeRef hidden, Tape& tape) {
  const auto state = PolicyStateInput(obs);
  std::vector<double> depth;
  if (net.arch.depth_embed > 0) depth = DepthInput(obs);
  return NetForward(net, params, state, depth, hidden, tape);
}

NetOutput DeltaForward(const Network& net, NodeRef params, const Vec3& v_body,
                       const Vec3& body_z, const Vec3& action, NodeRef hidden,
                       Tape& tape) {
  const std::vector<double> input = {
      kVelocityScale * v_body.x(), kVelocityScale * v_body.y(), kVelocityScale * v_body.z(),
      body_z.x(),                  body_z.y(),                  body_z.z(),
      kCommandScale * action.x(),  kCommandScale * action.y(),  kCommandScale * action.z()};
  return NetForward(net, params, input, {}, hidden, tape);
}

void WriteCheckpoint(std::ostream& out, const Checkpoint& ckpt,
                     const std::vector<std::string>& comments) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint payload is written as little-endian doubles");
  const Network& net = ckpt.net;
  if (static_cast<std::int64_t>(net.params.size()) != net.manifest.total_size()) {
    throw std::invalid_argument("WriteCheckpoint: parameter count does not match manifest");
  }
  out << kCheckpointTag << "\n";
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "kind " << ckpt.kind << "\n";
  out << "arch " << net.arch.Serialize() << "\n";
  for (const auto& l : net.manifest.layers()) {
    out << "layer " << l.name << " ";
    for (std::size_t i = 0; i < l.shape.size(); ++i) out << (i ? "x" : "") << l.shape[i];
    out << " " << l.offset << " " << l.size << "\n";
  }
  out << "payload " << net.params.size() << "\n";
  out.write(reinterpret_cast<const char*>(net.params.data()),
            static_cast<std::streamsize>(net.params.size() * sizeof(double)));
  if (!out) throw IoError("WriteCheckpoint: write failed");
}

Checkpoint ReadCheckpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointTag) {
    throw IoError("checkpoint: missing '" + std::string(kCheckpointTag) + "' header");
  }
  Checkpoint ckpt;
  bool have_arch = false;
  std::vector<LayerSpec> layers;
  std::int64_t count = -1;
  int line_no = 1;
  while (count < 0 && std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    std::string key;
    s >> key;
    if (key == "kind") {
      s >> ckpt.kind;
    } else if (key == "arch") {
      std::string rest;
      std::getline(s, rest);
      ckpt.net.arch = NetArch::Parse(rest);
      have_arch = true;
    } else if (key == "layer") {
      LayerSpec l;
      std::string shape;
      s >> l.name >> shape >> l.offset >> l.size;
      std::istringstream dims(shape);
      for (std::string d; std::getline(dims, d, 'x');) l.shape.push_back(std::stoi(d));
      layers.push_back(l);
    } else if (key == "payload") {
      s >> count;
    } else {
      throw IoError("checkpoint line " + std::to_string(line_no) + ": unknown record '" +
                    key + "'");
    }
    if (s.fail()) {
      throw IoError("checkpoint line " + std::to_string(line_no) + ": malformed record");
    }
  }
  if (!have_arch || count < 0) throw IoError("checkpoint: truncated header");
  try {
    ckpt.net.manifest = ParamManifest::Build(ckpt.net.arch);
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: invalid arch: ") + e.what());
  }
  const auto& expected = ckpt.net.manifest.layers();
  bool match = expected.size() == layers.size();
  for (std::size_t i = 0; match && i < layers.size(); ++i) {
    match = expected[i].name == layers[i].name && expected[i].shape == layers[i].shape &&
            expected[i].offset == layers[i].offset && expected[i].size == layers[i].size;
  }
  if (!match || count != ckpt.net.manifest.total_size()) {
    throw IoError("checkpoint: layer manifest does not match the declared arch");
  }
  ckpt.net.params.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.net.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
    throw IoError("checkpoint: payload truncated");
  }
  for (double v : ckpt.net.params) {
    if (!std::isfinite(v)) throw IoError("checkpoint: non-finite parameter");
  }
  return ckpt;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt,
                    const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  WriteCheckpoint(out, ckpt, comments);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return ReadCheckpoint(in);
}

}  // namespace gaterace
