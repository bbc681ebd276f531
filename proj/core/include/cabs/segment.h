// Copyright 2026 The CABS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CABS_SEGMENT_H_
#define CABS_SEGMENT_H_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cabs/corpus.h"
#include "cabs/vocabulary.h"

namespace cabs {

// One `key... <SEP> value... <END>` unit, addressed by inclusive token
// indices into the generated stream.
struct SubStructureSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<TokenId> key_ids;
  std::vector<TokenId> value_ids;
  bool well_formed = false;

  std::size_t size() const { return end - start + 1; }
  friend bool operator==(const SubStructureSpan&, const SubStructureSpan&) = default;
};

// Splits a generated stream at every <END>. eos tokens are excluded from
// spans and close any open segment. A segment is well formed when it ends
// with <END>, holds exactly one <SEP>, and has non-empty key and value;
// anything else (truncation, missing or repeated <SEP>, empty side) is
// returned with well_formed = false. Never throws.
std::vector<SubStructureSpan> segment(std::span<const TokenId> tokens, const Vocabulary& vocab);

// (key, value) strings, words joined by single spaces. ContractError for
// malformed spans.
std::pair<std::string, std::string> render(const SubStructureSpan& span, const Vocabulary& vocab);

// Rendered pairs of the well-formed spans, in order.
std::vector<Attribute> render_well_formed(std::span<const SubStructureSpan> spans,
                                          const Vocabulary& vocab);

// `key words <SEP> value words <END>` for each attribute.
std::vector<TokenId> serialize(std::span<const Attribute> attributes, const Vocabulary& vocab);

}  // namespace cabs

#endif  // CABS_SEGMENT_H_
