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

#ifndef CABS_RECORD_TASK_H_
#define CABS_RECORD_TASK_H_

#include <cstdint>
#include <span>
#include <vector>

#include "cabs/confidence.h"
#include "cabs/corpus.h"
#include "cabs/neural_lm.h"
#include "cabs/vocabulary.h"

namespace cabs {

// Every word of every attribute name and value, in schema order.
Vocabulary build_vocabulary(const Schema& schema);

// Retained attributes serialised as spans, then bos. The model continues
// with the attributes missing from the prompt.
std::vector<TokenId> encode_prompt(std::span<const Attribute> retained, const Vocabulary& vocab);

// `attributes` serialised in order, then eos.
std::vector<TokenId> encode_target(std::span<const Attribute> attributes, const Vocabulary& vocab);

// The deleted attributes of a corrupted record, in base order.
std::vector<Attribute> deleted_attributes(const CorruptedRecord& corrupted);

LmExample make_example(const CorruptedRecord& corrupted, const Vocabulary& vocab);

// One example per record, with the deletion rate drawn per record from
// `rates` and the corruption seeded by (seed, record index).
std::vector<LmExample> build_lm_corpus(std::span<const Record> records, std::span<const double> rates,
                                       std::uint64_t seed, const Vocabulary& vocab);

// Segments a generation and labels its well-formed spans against the
// reference record.
LabeledGeneration label_trace(const Record& reference, GenerationTrace trace, const Vocabulary& vocab);

}  // namespace cabs

#endif  // CABS_RECORD_TASK_H_
