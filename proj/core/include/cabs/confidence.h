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

#ifndef CABS_CONFIDENCE_H_
#define CABS_CONFIDENCE_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cabs/corpus.h"
#include "cabs/jsonl.h"
#include "cabs/lm.h"
#include "cabs/segment.h"

namespace cabs {

enum class ConfidenceMethod { kCp, kCpLn, kCn };

std::string_view to_string(ConfidenceMethod method);

// Confidence of one sub-structure. log_value is kept alongside value so
// that products of many scores can be accumulated without underflow.
struct ConfidenceScore {
  double value = 0.0;
  double log_value = 0.0;
  ConfidenceMethod method = ConfidenceMethod::kCp;
};

// Product of the conditional probabilities of every span token, <SEP> and
// <END> included. ContractError if the span does not fit in `steps`.
ConfidenceScore cp(const SubStructureSpan& span, std::span<const TokenStep> steps);
// Geometric mean of the same probabilities.
ConfidenceScore cp_ln(const SubStructureSpan& span, std::span<const TokenStep> steps);

enum class ReprKind { kLast, kExtreme, kSumDiff };

std::string_view to_string(ReprKind kind);
ReprKind parse_repr_kind(std::string_view name);

// Which hidden layer, and how the first/last token states are combined.
struct ReprConfig {
  ReprKind kind = ReprKind::kExtreme;
  std::size_t layer = 0;

  std::size_t width(std::size_t layer_width) const {
    return kind == ReprKind::kLast ? layer_width : 2 * layer_width;
  }
  friend bool operator==(const ReprConfig&, const ReprConfig&) = default;
};

// Last: h_last. Extreme: [h_first; h_last]. SumDiff: [h_first + h_last;
// h_first - h_last]. First is the span's first token, last its <END>.
Eigen::VectorXd build_repr(const SubStructureSpan& span, std::span<const TokenStep> steps,
                           const ReprConfig& config);

struct ConfidenceSample {
  Eigen::VectorXd repr;
  int label = 0;
};

// Three affine layers: ReLU, ReLU, logistic.
class ConfidenceNetwork {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  // widths = {input, hidden1, hidden2, 1}. He-initialised from `seed`.
  ConfidenceNetwork(std::vector<std::size_t> widths, ReprConfig repr, std::uint64_t seed);
  // Same shape, every weight and bias zero.
  static ConfidenceNetwork zeros(std::vector<std::size_t> widths, ReprConfig repr);

  std::size_t input_width() const { return widths_.front(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const ReprConfig& repr() const { return repr_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  double logit(const Eigen::VectorXd& repr) const;
  // Strictly inside (0, 1). ContractError on width mismatch.
  ConfidenceScore forward(const Eigen::VectorXd& repr) const;

  // Mean (optionally positive-weighted) binary cross-entropy over `batch`.
  // When `grad` is non-null it receives d loss / d parameters, shaped like
  // layers().
  double loss(std::span<const ConfidenceSample> batch, double positive_weight = 1.0,
              std::vector<Layer>* grad = nullptr) const;
  // Same loss over column-major inputs: x is input_width() x n, y holds 0/1
  // labels and w per-sample weights.
  double loss(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y, const Eigen::RowVectorXd& w,
              std::vector<Layer>* grad = nullptr) const;

  Json to_json() const;
  static ConfidenceNetwork from_json(const Json& json);

 private:
  ConfidenceNetwork(std::vector<std::size_t> widths, ReprConfig repr);

  std::vector<std::size_t> widths_;
  ReprConfig repr_;
  std::uint64_t seed_ = 0;
  std::vector<Layer> layers_;
};

ConfidenceScore cn_forward(const ConfidenceNetwork& net, const Eigen::VectorXd& repr);

// Per-sample BCE, -[y ln p + (1 - y) ln(1 - p)].
double binary_cross_entropy(double p, int label);

struct CnTrainConfig {
  std::vector<std::size_t> hidden{128, 64};
  int epochs = 200;
  double learning_rate = 1e-2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double positive_weight = 1.0;
};

struct CnTrainResult {
  ConfidenceNetwork network;
  // [0] before training, [e] after epoch e; full-set mean loss.
  std::vector<double> epoch_losses;
};

// Plain mini-batch gradient descent on mean BCE. Requires a non-empty set
// containing both labels; DivergenceError on a non-finite loss.
CnTrainResult cn_train(std::span<const ConfidenceSample> samples, const ReprConfig& repr,
                       const CnTrainConfig& config);

double accuracy(const ConfidenceNetwork& net, std::span<const ConfidenceSample> samples);

// Output of the attribute-deletion pass for one record: what the model
// generated and the labels of its well-formed spans, in span order.
struct LabeledGeneration {
  std::string record_id;
  GenerationTrace trace;
  std::vector<FaithfulnessLabel> labels;
};

struct TrainingSet {
  std::vector<ConfidenceSample> samples;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_unreferenced = 0;
};

// One sample per well-formed span whose key exists in the reference.
TrainingSet build_training_set(std::span<const LabeledGeneration> generations,
                               const Vocabulary& vocab, const ReprConfig& repr);

// Scores a span addressed into a step sequence.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual ConfidenceMethod method() const = 0;
  virtual ConfidenceScore score(const SubStructureSpan& span,
                                std::span<const TokenStep> steps) const = 0;
};

class CpEstimator final : public Estimator {
 public:
  ConfidenceMethod method() const override { return ConfidenceMethod::kCp; }
  ConfidenceScore score(const SubStructureSpan& span, std::span<const TokenStep> steps) const override {
    return cp(span, steps);
  }
};

class CpLnEstimator final : public Estimator {
 public:
  ConfidenceMethod method() const override { return ConfidenceMethod::kCpLn; }
  ConfidenceScore score(const SubStructureSpan& span, std::span<const TokenStep> steps) const override {
    return cp_ln(span, steps);
  }
};

class CnEstimator final : public Estimator {
 public:
  explicit CnEstimator(std::shared_ptr<const ConfidenceNetwork> net) : net_(std::move(net)) {}
  ConfidenceMethod method() const override { return ConfidenceMethod::kCn; }
  ConfidenceScore score(const SubStructureSpan& span, std::span<const TokenStep> steps) const override;
  const ConfidenceNetwork& network() const { return *net_; }

 private:
  std::shared_ptr<const ConfidenceNetwork> net_;
};

// Checks that a CN estimator fits the model's layer widths; ContractError
// otherwise.
void check_compatible(const ConfidenceNetwork& net, const LanguageModel& model);

Json sample_to_json(const ConfidenceSample& sample);

}  // namespace cabs

#endif  // CABS_CONFIDENCE_H_
