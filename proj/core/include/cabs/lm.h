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

#ifndef CABS_LM_H_
#define CABS_LM_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cabs/vocabulary.h"

namespace cabs {

// Per-layer hidden vectors at one position; entry l has width layer_width(l).
using LayerStates = std::vector<Eigen::VectorXd>;

// Immutable model state after consuming a prompt and zero or more generated
// tokens. States form a tree through parent(): beams that share a prefix
// share the states of that prefix.
class LmState {
 public:
  virtual ~LmState() = default;

  // Natural-log next-token distribution over the vocabulary. Entries may be
  // -infinity for impossible tokens.
  const std::vector<double>& log_probs() const { return log_probs_; }
  // Hidden states at the position of token().
  const LayerStates& hidden() const { return hidden_; }
  // Last consumed token; pad for a state built from an empty prompt.
  TokenId token() const { return token_; }
  // Null for the state that closes the prompt.
  const std::shared_ptr<const LmState>& parent() const { return parent_; }
  std::size_t generated() const { return generated_; }
  std::size_t position() const { return position_; }

 protected:
  LmState() = default;

  std::vector<double> log_probs_;
  LayerStates hidden_;
  TokenId token_ = Vocabulary::kPad;
  std::shared_ptr<const LmState> parent_;
  std::size_t generated_ = 0;
  std::size_t position_ = 0;
};

using StatePtr = std::shared_ptr<const LmState>;

// Autoregressive language model: next-token distribution plus per-layer
// hidden states. Implementations are immutable after construction and are
// safe to query from several threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual std::size_t n_layers() const = 0;
  virtual std::size_t layer_width(std::size_t layer) const = 0;

  virtual StatePtr start(std::span<const TokenId> prompt) const = 0;
  virtual StatePtr extend(const StatePtr& state, TokenId token) const = 0;

  // Probabilities (summing to 1) of the token following prompt + generated.
  std::vector<double> next_distribution(std::span<const TokenId> prompt,
                                        std::span<const TokenId> generated) const;
  // Hidden states at the last position of prompt + generated.
  LayerStates hidden_states(std::span<const TokenId> prompt,
                            std::span<const TokenId> generated) const;

  StatePtr advance(std::span<const TokenId> prompt, std::span<const TokenId> generated) const;
};

struct TokenStep {
  TokenId token = Vocabulary::kPad;
  double logprob = 0.0;
  LayerStates hidden;
};

struct GenerationTrace {
  std::vector<TokenId> prompt_ids;
  std::vector<TokenStep> steps;
  // max_tokens reached without eos.
  bool truncated = false;

  std::vector<TokenId> token_ids() const;
  double total_logprob() const;
};

// Materialises the generated steps between the prompt state and `last`.
GenerationTrace trace_from_state(const StatePtr& last, std::span<const TokenId> prompt);

// Runs `model` over a fixed continuation and records what generation would
// have recorded (log-probabilities and hidden states per step).
GenerationTrace teacher_force(const LanguageModel& model, std::span<const TokenId> prompt,
                              std::span<const TokenId> continuation);

// Chooses the next token from a log-probability vector.
using TokenPolicy = std::function<TokenId(std::span<const double> log_probs)>;

// Argmax; ties go to the lowest token id.
TokenId greedy_choice(std::span<const double> log_probs);

// Queries the model token by token until eos or max_tokens (truncated).
GenerationTrace generate(const LanguageModel& model, std::span<const TokenId> prompt,
                         const TokenPolicy& policy, std::size_t max_tokens);

// Numerically stable log-softmax.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace cabs

#endif  // CABS_LM_H_
