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

#include "cabs/lm.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cabs/error.h"

namespace cabs {

StatePtr LanguageModel::advance(std::span<const TokenId> prompt,
                                std::span<const TokenId> generated) const {
  StatePtr state = start(prompt);
  for (TokenId t : generated) state = extend(state, t);
  return state;
}

std::vector<double> LanguageModel::next_distribution(std::span<const TokenId> prompt,
                                                     std::span<const TokenId> generated) const {
  const StatePtr state = advance(prompt, generated);
  std::vector<double> probs(state->log_probs().size());
  std::transform(state->log_probs().begin(), state->log_probs().end(), probs.begin(),
                 [](double lp) { return std::exp(lp); });
  return probs;
}

LayerStates LanguageModel::hidden_states(std::span<const TokenId> prompt,
                                         std::span<const TokenId> generated) const {
  return advance(prompt, generated)->hidden();
}

std::vector<TokenId> GenerationTrace::token_ids() const {
  std::vector<TokenId> ids;
  ids.reserve(steps.size());
  for (const TokenStep& s : steps) ids.push_back(s.token);
  return ids;
}

double GenerationTrace::total_logprob() const {
  double total = 0.0;
  for (const TokenStep& s : steps) total += s.logprob;
  return total;
}

GenerationTrace trace_from_state(const StatePtr& last, std::span<const TokenId> prompt) {
  GenerationTrace trace;
  trace.prompt_ids.assign(prompt.begin(), prompt.end());
  trace.steps.resize(last->generated());
  const LmState* node = last.get();
  for (std::size_t i = trace.steps.size(); i-- > 0;) {
    const LmState* parent = node->parent().get();
    if (parent == nullptr) throw ContractError("trace_from_state: broken state chain");
    TokenStep& step = trace.steps[i];
    step.token = node->token();
    step.logprob = parent->log_probs()[static_cast<std::size_t>(node->token())];
    step.hidden = node->hidden();
    node = parent;
  }
  return trace;
}

GenerationTrace teacher_force(const LanguageModel& model, std::span<const TokenId> prompt,
                              std::span<const TokenId> continuation) {
  StatePtr state = model.start(prompt);
  for (TokenId t : continuation) state = model.extend(state, t);
  GenerationTrace trace = trace_from_state(state, prompt);
  trace.truncated = continuation.empty() || continuation.back() != model.vocab().eos_id();
  return trace;
}

TokenId greedy_choice(std::span<const double> log_probs) {
  if (log_probs.empty()) throw ContractError("greedy_choice: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log_probs.size(); ++i) {
    if (log_probs[i] > log_probs[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

GenerationTrace generate(const LanguageModel& model, std::span<const TokenId> prompt,
                         const TokenPolicy& policy, std::size_t max_tokens) {
  if (max_tokens == 0) throw ContractError("generate: max_tokens must be >= 1");
  const TokenId eos = model.vocab().eos_id();
  StatePtr state = model.start(prompt);
  bool finished = false;
  while (state->generated() < max_tokens) {
    const TokenId next = policy(state->log_probs());
    if (!model.vocab().contains(next)) throw ContractError("generate: policy chose an invalid token");
    state = model.extend(state, next);
    if (next == eos) {
      finished = true;
      break;
    }
  }
  GenerationTrace trace = trace_from_state(state, prompt);
  trace.truncated = !finished;
  return trace;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double max = -std::numeric_limits<double>::infinity();
  for (double z : logits) max = std::max(max, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  const double log_z = max + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace cabs
