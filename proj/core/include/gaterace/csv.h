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

#ifndef GATERACE_CSV_H_
#define GATERACE_CSV_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gaterace {

// Shortest decimal text that parses back to exactly `value`.
std::string FormatDouble(double value);

std::vector<std::string> SplitCsvLine(std::string_view line, char sep = ',');

// Parses a full-string double; throws IoError naming `line_no` on failure.
double ParseDouble(std::string_view text, int line_no);

// 64-bit FNV-1a, used to tag artifacts with the configuration that produced
// them.
std::uint64_t Fnv1a64(std::string_view bytes);
std::string HexDigest(std::uint64_t value);

}  // namespace gaterace

#endif  // GATERACE_CSV_H_
