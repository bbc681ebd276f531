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

#include "cabs/segment.h"

#include "cabs/error.h"

namespace cabs {

std::vector<SubStructureSpan> segment(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::vector<SubStructureSpan> spans;
  std::size_t open = 0;
  bool has_open = false;

  auto close = [&](std::size_t last, bool terminated) {
    SubStructureSpan span;
    span.start = open;
    span.end = last;
    std::size_t seps = 0;
    std::size_t first_sep = last + 1;
    const std::size_t body_end = terminated ? last : last + 1;  // exclusive
    for (std::size_t i = open; i < body_end; ++i) {
      if (tokens[i] == vocab.sep_id()) {
        if (seps++ == 0) first_sep = i;
      }
    }
    if (seps == 0) {
      span.key_ids.assign(tokens.begin() + static_cast<std::ptrdiff_t>(open),
                          tokens.begin() + static_cast<std::ptrdiff_t>(body_end));
    } else {
      span.key_ids.assign(tokens.begin() + static_cast<std::ptrdiff_t>(open),
                          tokens.begin() + static_cast<std::ptrdiff_t>(first_sep));
      span.value_ids.assign(tokens.begin() + static_cast<std::ptrdiff_t>(first_sep + 1),
                            tokens.begin() + static_cast<std::ptrdiff_t>(body_end));
    }
    span.well_formed = terminated && seps == 1 && !span.key_ids.empty() && !span.value_ids.empty();
    spans.push_back(std::move(span));
    has_open = false;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t == vocab.eos_id()) {
      if (has_open) close(i - 1, false);
      continue;
    }
    if (!has_open) {
      open = i;
      has_open = true;
    }
    if (t == vocab.end_id()) close(i, true);
  }
  if (has_open) close(tokens.size() - 1, false);
  return spans;
}

std::pair<std::string, std::string> render(const SubStructureSpan& span, const Vocabulary& vocab) {
  if (!span.well_formed) {
    throw ContractError("render: span [" + std::to_string(span.start) + ", " +
                        std::to_string(span.end) + "] is malformed");
  }
  return {vocab.decode(span.key_ids), vocab.decode(span.value_ids)};
}

std::vector<Attribute> render_well_formed(std::span<const SubStructureSpan> spans,
                                          const Vocabulary& vocab) {
  std::vector<Attribute> out;
  for (const SubStructureSpan& s : spans) {
    if (!s.well_formed) continue;
    auto [k, v] = render(s, vocab);
    out.push_back({std::move(k), std::move(v)});
  }
  return out;
}

std::vector<TokenId> serialize(std::span<const Attribute> attributes, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const Attribute& a : attributes) {
    for (TokenId t : vocab.encode_words(a.key)) ids.push_back(t);
    ids.push_back(vocab.sep_id());
    for (TokenId t : vocab.encode_words(a.value)) ids.push_back(t);
    ids.push_back(vocab.end_id());
  }
  return ids;
}

}  // namespace cabs
