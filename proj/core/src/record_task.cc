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

#include "cabs/record_task.h"

#include <algorithm>

#include "cabs/error.h"
#include "cabs/rng.h"
#include "cabs/segment.h"

namespace cabs {

Vocabulary build_vocabulary(const Schema& schema) {
  std::vector<std::string> words;
  for (const AttributeSchema& a : schema.attributes()) {
    for (std::string& w : split_words(a.name)) words.push_back(std::move(w));
    for (const std::string& v : a.value_domain) {
      for (std::string& w : split_words(v)) words.push_back(std::move(w));
    }
  }
  return Vocabulary(words);
}

std::vector<TokenId> encode_prompt(std::span<const Attribute> retained, const Vocabulary& vocab) {
  std::vector<TokenId> ids = serialize(retained, vocab);
  ids.push_back(vocab.bos_id());
  return ids;
}

std::vector<TokenId> encode_target(std::span<const Attribute> attributes, const Vocabulary& vocab) {
  std::vector<TokenId> ids = serialize(attributes, vocab);
  ids.push_back(vocab.eos_id());
  return ids;
}

std::vector<Attribute> deleted_attributes(const CorruptedRecord& corrupted) {
  std::vector<Attribute> out;
  for (const Attribute& a : corrupted.base.attributes) {
    if (std::find(corrupted.deleted_keys.begin(), corrupted.deleted_keys.end(), a.key) !=
        corrupted.deleted_keys.end()) {
      out.push_back(a);
    }
  }
  return out;
}

LmExample make_example(const CorruptedRecord& corrupted, const Vocabulary& vocab) {
  return {encode_prompt(corrupted.retained, vocab), encode_target(deleted_attributes(corrupted), vocab)};
}

std::vector<LmExample> build_lm_corpus(std::span<const Record> records, std::span<const double> rates,
                                       std::uint64_t seed, const Vocabulary& vocab) {
  if (rates.empty()) throw ContractError("build_lm_corpus: no deletion rates");
  std::vector<LmExample> corpus;
  corpus.reserve(records.size());
  Rng pick(mix_seed(seed, 0));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double rate = rates[pick.below(rates.size())];
    corpus.push_back(make_example(corrupt(records[i], rate, mix_seed(seed, i + 1)), vocab));
  }
  return corpus;
}

LabeledGeneration label_trace(const Record& reference, GenerationTrace trace, const Vocabulary& vocab) {
  const std::vector<SubStructureSpan> spans = segment(trace.token_ids(), vocab);
  const std::vector<Attribute> generated = render_well_formed(spans, vocab);
  LabeledGeneration out;
  out.record_id = reference.record_id;
  out.labels = label_generation(reference, generated);
  out.trace = std::move(trace);
  return out;
}

}  // namespace cabs
