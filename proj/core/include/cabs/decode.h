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

#ifndef CABS_DECODE_H_
#define CABS_DECODE_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cabs/confidence.h"
#include "cabs/lm.h"
#include "cabs/segment.h"

namespace cabs {

enum class DecodeMethod { kGreedy, kTokenBeam, kCabs };

std::string_view to_string(DecodeMethod method);
// "greedy", "beam" (or "token_beam"), "cabs".
DecodeMethod parse_decode_method(std::string_view name);

struct DecodeConfig {
  DecodeMethod method = DecodeMethod::kGreedy;
  std::size_t beam_size = 1;
  // Inner token beam width for CABS candidates; 0 means beam_size.
  std::size_t inner_beam_size = 0;
  std::size_t max_tokens = 128;
  std::size_t max_spans = 32;
  // Candidate spans longer than this are cut and count as malformed.
  std::size_t max_span_tokens = 16;
  // Rank CABS hypotheses by cum_log_conf / number of spans.
  bool normalize_by_spans = false;
};

struct ScoredSpan {
  SubStructureSpan span;
  ConfidenceScore score;
};

// A partial path. Spans index into token_ids.
struct Hypothesis {
  StatePtr state;
  std::vector<TokenId> token_ids;
  double cum_logprob = 0.0;
  std::vector<ScoredSpan> completed_spans;
  double cum_log_conf = 0.0;
  bool finished = false;   // eos emitted
  bool exhausted = false;  // max_tokens reached without eos
  bool degraded = false;   // kept a malformed span because nothing else was left
};

// Candidate continuations of one hypothesis for one sub-structure step.
struct Candidate {
  StatePtr state;
  std::vector<TokenId> token_ids;
  double logprob = 0.0;
  std::vector<TokenStep> steps;
};
using CandidateSet = std::vector<Candidate>;

struct CabsResult {
  GenerationTrace trace;
  std::vector<ScoredSpan> spans;
  double cum_log_conf = 0.0;
  double cum_logprob = 0.0;
  bool degraded = false;
};

// Argmax at every step, lowest id on ties; stops at eos or max_tokens.
GenerationTrace greedy_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                              const DecodeConfig& config);

// Beam over cumulative log-probability without length normalisation.
// Hypotheses that emit eos leave the beam for a completed pool. Completed
// hypotheses come first in the result, then truncated ones; each group is
// ranked by log-probability, then by the lexicographically smaller token
// sequence.
std::vector<GenerationTrace> token_beam_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                                               const DecodeConfig& config);

// Token beam of width `width` from `from`, following each path until it
// emits <END> or eos or reaches `max_len` tokens. Returns at most `width`
// paths, best first.
CandidateSet generate_candidates(const LanguageModel& model, const StatePtr& from, std::size_t width,
                                 std::size_t max_len);

// Beam search stepped one sub-structure at a time. Each live hypothesis is
// expanded with generate_candidates; each candidate span is scored by the
// estimator and contributes ln conf to cum_log_conf (a malformed span
// contributes -inf; a bare eos contributes ln p(eos)). The top beam_size
// children overall survive. Finished hypotheses stay in the beam unchanged.
CabsResult cabs_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                       const DecodeConfig& config, const Estimator& estimator);

// One score per segment of the trace; malformed spans score 0.
std::vector<ScoredSpan> score_existing(const GenerationTrace& trace, const Estimator& estimator,
                                       const Vocabulary& vocab);

}  // namespace cabs

#endif  // CABS_DECODE_H_
