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

#include <gtest/gtest.h>

#include <cmath>

#include "cabs/error.h"
#include "cabs/eval.h"
#include "oracles.h"

namespace cabs {
namespace {

std::vector<ScoredPrediction> preds(const std::vector<std::pair<double, int>>& items) {
  std::vector<ScoredPrediction> out;
  for (const auto& [score, label] : items) out.push_back({"r" + std::to_string(out.size()), "k", "v", score, label});
  return out;
}

TEST(PrCurve, ThreePointExample) {
  const auto p = preds({{0.9, 1}, {0.8, 0}, {0.7, 1}});
  const auto curve = pr_curve(p);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].threshold, 0.9);
  EXPECT_EQ(curve[0].precision, 1.0);
  EXPECT_EQ(curve[0].recall, 0.5);
  EXPECT_EQ(curve[1].precision, 0.5);
  EXPECT_EQ(curve[1].recall, 0.5);
  EXPECT_NEAR(curve[2].precision, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(curve[2].recall, 1.0);
  EXPECT_NEAR(average_precision(p), 0.5 * 1.0 + 0.5 * 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(average_precision(p), 0.8333, 1e-4);
}

TEST(PrCurve, TiedScoresFormOneGroup) {
  const auto p = preds({{0.5, 1}, {0.5, 0}, {0.2, 1}});
  const auto curve = pr_curve(p);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_EQ(curve[0].precision, 0.5);
  EXPECT_EQ(curve[0].recall, 0.5);
}

TEST(RecallAtPrecision, Example) {
  const auto p = preds({{0.9, 1}, {0.8, 1}, {0.7, 0}, {0.6, 1}});
  EXPECT_NEAR(recall_at_precision(p, 0.9), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(recall_at_precision(p, 0.75), 1.0);
  EXPECT_EQ(recall_at_precision(preds({{0.9, 0}, {0.8, 1}}), 0.9), 0.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(pr_curve(preds({{0.9, 0}, {0.1, 0}})), UndefinedRecallError);
  EXPECT_THROW(average_precision(preds({})), UndefinedRecallError);
  EXPECT_THROW(pr_curve(preds({{1.5, 1}})), ContractError);
  EXPECT_THROW(pr_curve(preds({{-0.1, 1}})), ContractError);
  EXPECT_THROW(pr_curve(preds({{0.5, 2}})), ContractError);
  EXPECT_THROW(pr_curve(preds({{std::nan(""), 1}})), ContractError);
  const auto ok = preds({{0.5, 1}});
  EXPECT_THROW(recall_at_precision(ok, 0.0), ContractError);
  EXPECT_THROW(recall_at_precision(ok, 1.1), ContractError);
  EXPECT_EQ(recall_at_precision(ok, 1.0), 1.0);
}

TEST(Metrics, MatchBruteForceCounting) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = oracle::random_predictions(seed);
    const auto expected = oracle::brute_force_pr(p);
    const auto curve = pr_curve(p);
    ASSERT_EQ(curve.size(), expected.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
      EXPECT_NEAR(curve[i].precision, expected[i].first, 1e-12);
      EXPECT_NEAR(curve[i].recall, expected[i].second, 1e-12);
    }
    EXPECT_EQ(average_precision(p), oracle::brute_force_ap(p));
    EXPECT_EQ(recall_at_precision(p, 0.9), oracle::brute_force_rp(p, 0.9));
  }
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = oracle::random_predictions(1000 + seed, 300);
    auto q = p;
    for (auto& x : q) x.score = std::pow(x.score, 3.0) * 0.5 + 0.1;
    EXPECT_NEAR(average_precision(p), average_precision(q), 1e-12);
    EXPECT_NEAR(recall_at_precision(p, 0.8), recall_at_precision(q, 0.8), 1e-12);
  }
}

TEST(Metrics, RangesAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = oracle::random_predictions(2000 + seed, 300);
    const double ap = average_precision(p);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0 + 1e-12);
    double previous = 1.0;
    for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
      const double r = recall_at_precision(p, tau);
      EXPECT_LE(r, previous + 1e-15);
      previous = r;
    }
    for (std::size_t i = 1; i < pr_curve(p).size(); ++i) {
      EXPECT_GE(pr_curve(p)[i].recall, pr_curve(p)[i - 1].recall);
    }
  }
}

// Raising one positive above every score cannot lower AP.
TEST(Metrics, PromotingAPositiveDoesNotHurt) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = oracle::random_predictions(3000 + seed, 300);
    const double before = average_precision(p);
    for (auto& x : p) x.score *= 0.9;
    for (auto& x : p) {
      if (x.label == 1 && x.score < 0.85) {
        x.score = 1.0;
        break;
      }
    }
    EXPECT_GE(average_precision(p) + 1e-12, before);
  }
  EXPECT_EQ(average_precision(preds({{0.9, 1}, {0.8, 1}, {0.1, 0}})), 1.0);
}

TEST(Compare, IdenticalRunsGiveIdenticalRows) {
  const auto p = oracle::random_predictions(7, 200);
  const std::vector<RunPredictions> runs{{"beam", "cp", p}, {"cabs", "cp", p}};
  const ComparisonReport report = compare_methods(runs, 0.9);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].ap, report.rows[1].ap);
  EXPECT_EQ(report.rows[0].r_at_p, report.rows[1].r_at_p);
  EXPECT_EQ(report.rows[0].count, p.size());
  EXPECT_NE(report.find("cabs", "cp"), nullptr);
  EXPECT_EQ(report.find("cabs", "cn"), nullptr);
  const Json j = report.to_json();
  EXPECT_EQ(j.at("rows").size(), 2u);
  EXPECT_EQ(j.at("rows")[1].at("method"), "cabs");
  EXPECT_NE(report.to_text().find("cabs"), std::string::npos);
  const std::vector<RunPredictions> empty{{"beam", "cp", {}}};
  EXPECT_THROW(compare_methods(empty, 0.9), ContractError);
}

TEST(Format, CsvAndDoubles) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(std::stod(format_double(2.0 / 3.0)), 2.0 / 3.0);
  const auto curve = pr_curve(preds({{0.9, 1}, {0.8, 0}}));
  EXPECT_EQ(pr_csv(curve), "threshold,precision,recall\n0.9,1,1\n0.8,0.5,1\n");
}

TEST(Format, PredictionJson) {
  const ScoredPrediction p{"r1", "Color", "Red", 0.25, 1};
  const ScoredPrediction back = prediction_from_json(to_json(p));
  EXPECT_EQ(back.record_id, "r1");
  EXPECT_EQ(back.key, "Color");
  EXPECT_EQ(back.generated_value, "Red");
  EXPECT_EQ(back.score, 0.25);
  EXPECT_EQ(back.label, 1);
  EXPECT_THROW(prediction_from_json(Json{{"key", "x"}}), FormatError);
}

}  // namespace
}  // namespace cabs
