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

#ifndef CABS_NEURAL_LM_H_
#define CABS_NEURAL_LM_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cabs/jsonl.h"
#include "cabs/lm.h"

namespace cabs {

enum class LmOptimizer { kSgd, kAdam };

LmOptimizer parse_optimizer(std::string_view name);

struct NeuralLmConfig {
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t context_window = 64;
  int epochs = 20;
  LmOptimizer optimizer = LmOptimizer::kAdam;
  // Adam uses beta1 0.9, beta2 0.999, epsilon 1e-8.
  double learning_rate = 3e-3;
  std::size_t batch_size = 32;
  // Gradients are rescaled to at most this global L2 norm; 0 disables.
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
};

// Conditioning prompt and the continuation the model should produce.
struct LmExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;
};

// Small autoregressive network. The input at position i is the sum of
//   token embedding of t_i, embeddings of t_{i-1} and t_{i-2},
//   a learned position embedding (positions clamp at context_window - 1),
//   and the mean of a pooled-context embedding over t_0..t_i;
// it then passes through `depth` residual ReLU blocks of equal width, whose
// outputs are the exposed hidden layers, and a softmax readout.
class NeuralLm final : public LanguageModel {
 public:
  // All parameters as dense matrices (biases are single columns).
  // Embeddings are stored one column per token/position.
  struct Params {
    Eigen::MatrixXd token;     // d x V
    Eigen::MatrixXd prev1;     // d x V
    Eigen::MatrixXd prev2;     // d x V
    Eigen::MatrixXd position;  // d x W
    Eigen::MatrixXd pooled;    // d x V
    std::vector<Eigen::MatrixXd> block_weight;  // d x d
    std::vector<Eigen::MatrixXd> block_bias;    // d x 1
    Eigen::MatrixXd out_weight;                 // V x d
    Eigen::MatrixXd out_bias;                   // V x 1

    void for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn);
    void for_each(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const;
    Params zeros_like() const;
  };

  struct TrainResult;

  // Randomly initialised from config.seed.
  NeuralLm(Vocabulary vocab, NeuralLmConfig config);

  // Mini-batch training on mean token cross-entropy over the target
  // tokens. ContractError for an empty corpus or depth < 2;
  // DivergenceError naming the epoch on a non-finite loss.
  static TrainResult train(std::span<const LmExample> corpus, Vocabulary vocab, NeuralLmConfig config);

  const Vocabulary& vocab() const override { return vocab_; }
  std::size_t n_layers() const override { return config_.depth; }
  std::size_t layer_width(std::size_t layer) const override;
  // ContractError for an empty prompt.
  StatePtr start(std::span<const TokenId> prompt) const override;
  StatePtr extend(const StatePtr& state, TokenId token) const override;

  const NeuralLmConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  // Mean cross-entropy over every target token of `batch`; fills `grad`
  // (shaped like params()) when non-null.
  double loss(std::span<const LmExample> batch, Params* grad = nullptr) const;

  Json to_json() const;
  static NeuralLm from_json(const Json& json);

 private:
  LayerStates forward_position(const Eigen::VectorXd& input, std::vector<double>* log_probs) const;

  Vocabulary vocab_;
  NeuralLmConfig config_;
  Params params_;
};

struct NeuralLm::TrainResult {
  NeuralLm model;
  // [0] before training, [e] after epoch e.
  std::vector<double> epoch_losses;
};

}  // namespace cabs

#endif  // CABS_NEURAL_LM_H_
