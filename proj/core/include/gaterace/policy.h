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

#ifndef GATERACE_POLICY_H_
#define GATERACE_POLICY_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gaterace/common.h"
#include "gaterace/tape.h"
#include "gaterace/world.h"

namespace gaterace {

// Layer sizes of a policy-style network:
//   [depth encoder] conv(1->conv1) -> conv(conv1->conv2) -> linear(depth_embed)
//   [state branch]  linear(state_in -> state_embed)
//   [core]          GRU over the fused embedding (skipped when hidden == 0)
//   [head]          linear(head_hidden) -> linear(out); single linear when
//                   head_hidden == 0
// Every hidden linear/conv layer is followed by a leaky rectifier.
struct NetArch {
  int depth_embed = 96;  // 0 disables the depth encoder
  int conv1 = 8;
  int conv2 = 16;
  int kernel = 3;
  int stride = 2;
  int state_in = 12;
  int state_embed = 96;
  int hidden = 192;
  int head_hidden = 64;
  int out = 3;
  double slope = 0.05;
  // Initialize the final layer to zero so the untrained network outputs 0.
  bool zero_head = false;

  static NetArch Policy();
  static NetArch StateOnlyPolicy(int embed = 64, int head_hidden = 64);
  static NetArch Delta();

  int fused() const { return (depth_embed > 0 ? depth_embed : 0) + state_embed; }
  int core() const { return hidden > 0 ? hidden : fused(); }
  void Validate() const;

  // One line of space separated key=value pairs; Parse inverts it.
  std::string Serialize() const;
  static NetArch Parse(const std::string& line);
  bool operator==(const NetArch&) const = default;
};

struct LayerSpec {
  std::string name;
  std::vector<int> shape;
  std::int64_t offset = 0;
  std::int64_t size = 0;
};

// Named, contiguous partition of the flat parameter array.
class ParamManifest {
 public:
  static ParamManifest Build(const NetArch& arch);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::int64_t total_size() const { return total_; }
  bool Has(const std::string& name) const;
  // Throws std::out_of_range for unknown names.
  const LayerSpec& Find(const std::string& name) const;

 private:
  void Add(std::string name, std::vector<int> shape);

  std::vector<LayerSpec> layers_;
  std::map<std::string, std::size_t> index_;
  std::int64_t total_ = 0;
};

struct Network {
  NetArch arch;
  ParamManifest manifest;
  std::vector<double> params;

  // Fan-in scaled uniform weights, zero biases, GRU update-gate bias +1.
  static Network Init(const NetArch& arch, std::uint64_t seed);
  static Network Zeros(const NetArch& arch);
};

struct NetOutput {
  NodeRef output;  // length arch.out
  NodeRef hidden;  // invalid when the network has no recurrent core
};

// Generic forward pass. `params` must be a tape leaf holding the network's
// parameter array. `hidden` may be invalid (episode start -> zeros); a valid
// hidden node from an earlier step is passed through a carry node. `depth`
// must have kDepthRows * kDepthCols entries iff the depth encoder is on.
NetOutput NetForward(const Network& net, NodeRef params,
                     std::span<const double> state_input,
                     std::span<const double> depth, NodeRef hidden, Tape& tape);

// Body-frame acceleration command from an observation. Inputs are detached;
// the raw head output is returned (the dynamics step applies the clamp).
NetOutput PolicyForward(const Network& net, NodeRef params, const Observation& obs,
                        NodeRef hidden, Tape& tape);

// Action-space correction from (v_body, r3, action).
NetOutput DeltaForward(const Network& net, NodeRef params, const Vec3& v_body,
                       const Vec3& body_z, const Vec3& action, NodeRef hidden,
                       Tape& tape);

// Policy input vector (12 entries) after fixed per-component scaling.
std::vector<double> PolicyStateInput(const Observation& obs);
// Depth image mapped to nearness 1 - d / far_clip.
std::vector<double> DepthInput(const Observation& obs, double far_clip = 10.0);

// Checkpoint file: text header (format tag, kind, arch, one line per layer,
// free comments) followed by the raw little-endian doubles.
struct Checkpoint {
  std::string kind;  // "policy" or "delta"
  Network net;
};

void WriteCheckpoint(std::ostream& out, const Checkpoint& ckpt,
                     const std::vector<std::string>& comments = {});
Checkpoint ReadCheckpoint(std::istream& in);
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt,
                    const std::vector<std::string>& comments = {});
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace gaterace

#endif  // GATERACE_POLICY_H_
