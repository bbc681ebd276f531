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

#ifndef CABS_EVAL_H_
#define CABS_EVAL_H_

#include <span>
#include <string>
#include <vector>

#include "cabs/jsonl.h"

namespace cabs {

struct ScoredPrediction {
  std::string record_id;
  std::string key;
  std::string generated_value;
  double score = 0.0;  // in [0, 1]
  int label = 0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// One point per distinct score, thresholds descending; tied scores form one
// group. UndefinedRecallError without positives, ContractError for scores
// outside [0, 1] or labels other than 0/1.
std::vector<PrPoint> pr_curve(std::span<const ScoredPrediction> preds);

// Step integration: sum over points of (R_k - R_{k-1}) * P_k, R_0 = 0.
double average_precision(std::span<const ScoredPrediction> preds);

// Largest recall over threshold groups with precision >= tau; 0 if none.
// ContractError unless 0 < tau <= 1.
double recall_at_precision(std::span<const ScoredPrediction> preds, double tau);

// Predictions of one decoding run under one scorer.
struct RunPredictions {
  std::string method;
  std::string scorer;
  std::vector<ScoredPrediction> predictions;
};

struct MethodMetrics {
  std::string method;
  std::string scorer;
  double ap = 0.0;
  double r_at_p = 0.0;
  double tau = 0.9;
  std::size_t count = 0;
  std::size_t positives = 0;
  std::vector<PrPoint> curve;
};

struct ComparisonReport {
  double tau = 0.9;
  std::vector<MethodMetrics> rows;

  const MethodMetrics* find(const std::string& method, const std::string& scorer) const;
  // {"tau", "rows": [{method, scorer, ap, r_at_p, tau, count, positives}]}.
  Json to_json() const;
  // Method rows by scorer columns, "AP / R@P" cells.
  std::string to_text() const;
};

// Metrics for every run in input order. ContractError for an empty run.
ComparisonReport compare_methods(std::span<const RunPredictions> runs, double tau);

// "threshold,precision,recall" header and one row per point.
std::string pr_csv(std::span<const PrPoint> curve);

// Shortest round-trip decimal form, used for every number written to text
// reports.
std::string format_double(double value);

Json to_json(const ScoredPrediction& pred);
ScoredPrediction prediction_from_json(const Json& json);

}  // namespace cabs

#endif  // CABS_EVAL_H_
