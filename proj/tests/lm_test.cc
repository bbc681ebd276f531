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
#include <numeric>

#include "cabs/error.h"
#include "cabs/table_lm.h"
#include "oracles.h"

namespace cabs {
namespace {

// P(a|bos)=0.6, P(b|bos)=0.4; P(eos|a)=0.55, P(b|a)=0.45; P(eos|b)=1.
TableLm branching_table() {
  return TableLm::from_json(Json::parse(R"({
    "context_order": 1,
    "rows": {"<bos>": {"a": 0.6, "b": 0.4}, "a": {"<eos>": 0.55, "b": 0.45}, "b": {"<eos>": 1.0}}
  })"));
}

TEST(TableLm, DeterministicChain) {
  const TableLm lm = TableLm::from_json(
      Json::parse(R"({"context_order": 1, "rows": {"<bos>": {"a": 1.0}, "a": {"<eos>": 1.0}}})"));
  const TokenId bos = Vocabulary::kBos;
  const GenerationTrace t = generate(lm, std::vector<TokenId>{bos}, greedy_choice, 10);
  EXPECT_EQ(t.token_ids(), (std::vector<TokenId>{lm.vocab().id("a"), Vocabulary::kEos}));
  EXPECT_EQ(t.total_logprob(), 0.0);
  EXPECT_FALSE(t.truncated);
}

TEST(TableLm, SequenceProbabilitiesByEnumeration) {
  const TableLm lm = branching_table();
  const TokenId a = lm.vocab().id("a");
  const TokenId b = lm.vocab().id("b");
  const auto all = oracle::enumerate(lm, {Vocabulary::kBos}, 3);
  std::map<std::vector<TokenId>, double> prob;
  for (const auto& s : all) prob[s.tokens] = std::exp(s.logprob);
  EXPECT_NEAR((prob[{a, Vocabulary::kEos}]), 0.33, 1e-12);
  EXPECT_NEAR((prob[{b, Vocabulary::kEos}]), 0.40, 1e-12);
  EXPECT_NEAR((prob[{a, b, Vocabulary::kEos}]), 0.27, 1e-12);
  double total = 0.0;
  for (const auto& s : all) total += std::exp(s.logprob);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(TableLm, GreedyIsNotTheGlobalOptimum) {
  const TableLm lm = branching_table();
  const GenerationTrace t = generate(lm, std::vector<TokenId>{Vocabulary::kBos}, greedy_choice, 10);
  EXPECT_EQ(t.token_ids(), (std::vector<TokenId>{lm.vocab().id("a"), Vocabulary::kEos}));
  EXPECT_NEAR(std::exp(t.total_logprob()), 0.33, 1e-12);
  const auto best = oracle::beam_target(oracle::enumerate(lm, {Vocabulary::kBos}, 3));
  EXPECT_NEAR(std::exp(best.logprob), 0.40, 1e-12);
}

TEST(TableLm, TruncationFlag) {
  const TableLm lm = TableLm::from_json(
      Json::parse(R"({"context_order": 1, "rows": {}, "default": {"a": 0.7, "<eos>": 0.3}})"));
  const GenerationTrace t = generate(lm, std::vector<TokenId>{Vocabulary::kBos}, greedy_choice, 5);
  EXPECT_EQ(t.steps.size(), 5u);
  EXPECT_TRUE(t.truncated);
  EXPECT_THROW(generate(lm, std::vector<TokenId>{Vocabulary::kBos}, greedy_choice, 0), ContractError);
}

TEST(TableLm, RowErrors) {
  EXPECT_THROW(TableLm::from_json(Json::parse(R"({"context_order": 1, "rows": {"<bos>": {"a": 0.6}}})")),
               TableError);
  const TableLm lm = TableLm::from_json(
      Json::parse(R"({"context_order": 1, "rows": {"<bos>": {"a": 1.0}}})"));
  const std::vector<TokenId> missing{lm.vocab().id("a")};
  EXPECT_THROW(lm.row(missing), TableError);
  EXPECT_THROW(lm.start(std::vector<TokenId>{lm.vocab().id("a")}), TableError);
}

TEST(TableLm, DefaultRowFallback) {
  const TableLm lm = TableLm::from_json(Json::parse(
      R"({"context_order": 1, "rows": {"<bos>": {"a": 1.0}}, "default": {"<eos>": 1.0}})"));
  const auto dist = lm.next_distribution(std::vector<TokenId>{Vocabulary::kBos},
                                         std::vector<TokenId>{lm.vocab().id("a")});
  EXPECT_EQ(dist[Vocabulary::kEos], 1.0);
}

TEST(TableLm, JsonRoundTrip) {
  const TableLm lm = oracle::random_table(3);
  const TableLm back = TableLm::from_json(lm.to_json());
  EXPECT_EQ(back.to_json().dump(), lm.to_json().dump());
}

TEST(TableLm, DistributionsAndHiddenStatesProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    Rng rng(seed);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<TokenId> gen;
      const std::size_t len = rng.below(6);
      for (std::size_t i = 0; i < len; ++i) gen.push_back(static_cast<TokenId>(3 + rng.below(4)));
      const std::vector<TokenId> prompt{Vocabulary::kBos};
      const auto dist = lm.next_distribution(prompt, gen);
      double sum = 0.0;
      for (double p : dist) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      const LayerStates h1 = lm.hidden_states(prompt, gen);
      const LayerStates h2 = lm.hidden_states(prompt, gen);
      ASSERT_EQ(h1.size(), lm.n_layers());
      for (std::size_t l = 0; l < h1.size(); ++l) {
        EXPECT_EQ(static_cast<std::size_t>(h1[l].size()), lm.layer_width(l));
        EXPECT_TRUE(h1[l] == h2[l]);
      }
      EXPECT_EQ(lm.next_distribution(prompt, gen), dist);
    }
  }
}

TEST(TableLm, HiddenStatesSeparateContexts) {
  const TableLm lm = oracle::random_table(5);
  const std::vector<TokenId> prompt{Vocabulary::kBos};
  const LayerStates a = lm.hidden_states(prompt, std::vector<TokenId>{5, 3});
  const LayerStates b = lm.hidden_states(prompt, std::vector<TokenId>{6, 3});
  EXPECT_FALSE(a[0] == b[0]);
}

TEST(TableLm, TraceLogprobMatchesTableProduct) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    const std::vector<TokenId> prompt{Vocabulary::kBos};
    const GenerationTrace t = generate(lm, prompt, greedy_choice, 8);
    const std::vector<TokenId> ids = t.token_ids();
    EXPECT_NEAR(t.total_logprob(), oracle::table_logprob(lm, prompt, ids), 1e-12);
    for (const TokenStep& s : t.steps) EXPECT_LE(s.logprob, 0.0);
    if (!t.truncated) EXPECT_EQ(ids.back(), Vocabulary::kEos);
  }
}

TEST(Lm, TeacherForceMatchesGeneration) {
  const TableLm lm = oracle::random_table(9);
  const std::vector<TokenId> prompt{Vocabulary::kBos};
  const GenerationTrace g = generate(lm, prompt, greedy_choice, 8);
  const GenerationTrace f = teacher_force(lm, prompt, g.token_ids());
  ASSERT_EQ(f.steps.size(), g.steps.size());
  for (std::size_t i = 0; i < f.steps.size(); ++i) {
    EXPECT_EQ(f.steps[i].token, g.steps[i].token);
    EXPECT_EQ(f.steps[i].logprob, g.steps[i].logprob);
    for (std::size_t l = 0; l < f.steps[i].hidden.size(); ++l) EXPECT_TRUE(f.steps[i].hidden[l] == g.steps[i].hidden[l]);
  }
}

TEST(Lm, GreedyChoiceTiesGoToLowestId) {
  const std::vector<double> lp{std::log(0.25), std::log(0.5), std::log(0.5), -INFINITY};
  EXPECT_EQ(greedy_choice(lp), 1);
}

TEST(Lm, LogSoftmaxIsStable) {
  const auto out = log_softmax(std::vector<double>{1000.0, 1000.0});
  EXPECT_NEAR(out[0], -std::log(2.0), 1e-12);
  EXPECT_NEAR(out[1], -std::log(2.0), 1e-12);
}

}  // namespace
}  // namespace cabs
