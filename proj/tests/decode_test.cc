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

#include "cabs/decode.h"
#include "cabs/error.h"
#include "cabs/table_lm.h"
#include "oracles.h"

namespace cabs {
namespace {

const std::vector<TokenId> kPrompt{Vocabulary::kBos};

DecodeConfig beam_config(DecodeMethod method, std::size_t beam, std::size_t max_tokens = 8) {
  DecodeConfig c;
  c.method = method;
  c.beam_size = beam;
  c.max_tokens = max_tokens;
  c.max_spans = max_tokens;
  c.max_span_tokens = max_tokens;
  return c;
}

TableLm branching_table() {
  return TableLm::from_json(Json::parse(R"({
    "context_order": 1,
    "rows": {"<bos>": {"a": 0.6, "b": 0.4}, "a": {"<eos>": 0.55, "b": 0.45}, "b": {"<eos>": 1.0}}
  })"));
}

TEST(Greedy, Examples) {
  const TableLm chain = TableLm::from_json(
      Json::parse(R"({"context_order": 1, "rows": {"<bos>": {"a": 1.0}, "a": {"<eos>": 1.0}}})"));
  const auto c = greedy_decode(chain, kPrompt, beam_config(DecodeMethod::kGreedy, 1));
  EXPECT_EQ(c.token_ids(), (std::vector<TokenId>{chain.vocab().id("a"), Vocabulary::kEos}));

  const TableLm branch = branching_table();
  const auto g = greedy_decode(branch, kPrompt, beam_config(DecodeMethod::kGreedy, 1));
  EXPECT_EQ(g.token_ids().front(), branch.vocab().id("a"));

  const TableLm tie = TableLm::from_json(
      Json::parse(R"({"context_order": 1, "rows": {"<bos>": {"b": 0.5, "a": 0.5}}, "default": {"<eos>": 1.0}})"));
  const TokenId low = std::min(tie.vocab().id("a"), tie.vocab().id("b"));
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(greedy_decode(tie, kPrompt, beam_config(DecodeMethod::kGreedy, 1)).token_ids().front(), low);
  }
  DecodeConfig zero = beam_config(DecodeMethod::kGreedy, 1);
  zero.max_tokens = 0;
  EXPECT_THROW(greedy_decode(branch, kPrompt, zero), ContractError);
}

TEST(TokenBeam, FindsTheBetterBranch) {
  const TableLm lm = branching_table();
  const auto out = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 2));
  EXPECT_EQ(out.front().token_ids(), (std::vector<TokenId>{lm.vocab().id("b"), Vocabulary::kEos}));
  EXPECT_NEAR(std::exp(out.front().total_logprob()), 0.40, 1e-12);
  EXPECT_THROW(token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 0)), ContractError);
}

TEST(TokenBeam, ResultsAreRankedAndCompletedFirst) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    const auto out = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 5, 6));
    bool seen_truncated = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].truncated) seen_truncated = true;
      if (!out[i].truncated) {
        EXPECT_FALSE(seen_truncated);
        EXPECT_EQ(out[i].token_ids().back(), Vocabulary::kEos);
      }
      EXPECT_LE(out[i].total_logprob(), 0.0);
      if (i > 0 && out[i].truncated == out[i - 1].truncated) {
        EXPECT_GE(out[i - 1].total_logprob(), out[i].total_logprob());
      }
    }
  }
}

TEST(TokenBeam, BeamOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    const auto g = greedy_decode(lm, kPrompt, beam_config(DecodeMethod::kGreedy, 1));
    const auto b = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 1));
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b.front().token_ids(), g.token_ids());
    EXPECT_EQ(b.front().truncated, g.truncated);
  }
}

TEST(TokenBeam, SaturatedBeamMatchesEnumeration) {
  oracle::RandomTableSpec spec;
  spec.n_words = 1;  // support of four tokens
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TableLm lm = oracle::random_table(100 + seed, spec);
    const auto out = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 256, 5));
    const oracle::Sequence best = oracle::beam_target(oracle::enumerate(lm, kPrompt, 5));
    EXPECT_EQ(out.front().token_ids(), best.tokens);
    EXPECT_NEAR(out.front().total_logprob(), best.logprob, 1e-12);
  }
}

// A wider beam can return a worse sequence: at beam 2 the b-branch crowds
// the a-branch out at step two and then only reaches poor completions.
TEST(TokenBeam, WiderBeamIsNotMonotone) {
  const TableLm lm = TableLm::from_json(Json::parse(R"({
    "context_order": 2,
    "rows": {
      "<bos> <bos>": {"a": 0.55, "b": 0.45},
      "<bos> a": {"c": 0.34, "d": 0.33, "e": 0.33},
      "<bos> b": {"c": 0.5, "d": 0.5},
      "b c": {"<eos>": 0.6, "c": 0.4},
      "b d": {"<eos>": 0.6, "d": 0.4}
    },
    "default": {"<eos>": 1.0}
  })"));
  const auto one = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 1, 3));
  const auto two = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 2, 3));
  ASSERT_FALSE(one.front().truncated);
  ASSERT_FALSE(two.front().truncated);
  EXPECT_NEAR(std::exp(one.front().total_logprob()), 0.55 * 0.34, 1e-12);
  EXPECT_NEAR(std::exp(two.front().total_logprob()), 0.45 * 0.5 * 0.6, 1e-12);
  EXPECT_LT(two.front().total_logprob(), one.front().total_logprob());
}

// What does hold: once the beam covers every path, no narrower beam finds a
// better complete sequence.
TEST(TokenBeam, SaturatedBeamDominatesNarrowerBeams) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TableLm lm = oracle::random_table(200 + seed);
    const auto best = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 4096, 6)).front();
    ASSERT_FALSE(best.truncated);
    for (std::size_t beam = 1; beam <= 8; ++beam) {
      const auto top = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, beam, 6)).front();
      if (!top.truncated) EXPECT_GE(best.total_logprob(), top.total_logprob());
    }
  }
}

TEST(Candidates, EndAtStructuralTokens) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    const StatePtr root = lm.start(kPrompt);
    const CandidateSet set = generate_candidates(lm, root, 3, 16);
    EXPECT_LE(set.size(), 3u);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Candidate& c = set[i];
      const TokenId last = c.token_ids.back();
      EXPECT_TRUE(last == Vocabulary::kEnd || last == Vocabulary::kEos || c.token_ids.size() == 16);
      for (std::size_t k = 0; k + 1 < c.token_ids.size(); ++k) {
        EXPECT_NE(c.token_ids[k], Vocabulary::kEnd);
        EXPECT_NE(c.token_ids[k], Vocabulary::kEos);
      }
      EXPECT_NEAR(c.logprob, oracle::table_logprob(lm, kPrompt, c.token_ids), 1e-12);
      ASSERT_EQ(c.steps.size(), c.token_ids.size());
      if (i > 0) EXPECT_GE(set[i - 1].logprob, c.logprob);
    }
  }
  const TableLm lm = oracle::random_table(0);
  EXPECT_THROW(generate_candidates(lm, lm.start(kPrompt), 0, 4), ContractError);
}

TEST(Cabs, BeamOneCpIsGreedy) {
  const CpEstimator cp_est;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TableLm lm = oracle::random_table(seed);
    const auto g = greedy_decode(lm, kPrompt, beam_config(DecodeMethod::kGreedy, 1, 10));
    const CabsResult r = cabs_decode(lm, kPrompt, beam_config(DecodeMethod::kCabs, 1, 10), cp_est);
    EXPECT_EQ(r.trace.token_ids(), g.token_ids()) << "seed " << seed;
    EXPECT_EQ(r.trace.truncated, g.truncated);
  }
}

TEST(Cabs, SaturatedCpMaximisesSpanConfidenceProduct) {
  const CpEstimator cp_est;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TableLm lm = oracle::random_table(300 + seed);
    DecodeConfig cfg = beam_config(DecodeMethod::kCabs, 4096, 6);
    const CabsResult r = cabs_decode(lm, kPrompt, cfg, cp_est);
    const oracle::Sequence best = oracle::structured_target(oracle::enumerate(lm, kPrompt, 6));
    ASSERT_FALSE(best.tokens.empty());
    EXPECT_EQ(r.trace.token_ids(), best.tokens) << "seed " << seed;
    EXPECT_NEAR(r.cum_log_conf, best.logprob, 1e-9);
    EXPECT_NEAR(r.cum_log_conf, r.cum_logprob, 1e-9);
    EXPECT_FALSE(r.degraded);
  }
}

TEST(Cabs, CpObjectiveTelescopesToSequenceLogprob) {
  const CpEstimator cp_est;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const TableLm lm = oracle::random_table(400 + seed);
    for (std::size_t beam : {1, 2, 3}) {
      const CabsResult r = cabs_decode(lm, kPrompt, beam_config(DecodeMethod::kCabs, beam, 12), cp_est);
      if (r.trace.truncated || r.degraded) continue;
      EXPECT_NEAR(r.cum_log_conf, r.cum_logprob, 1e-9);
      EXPECT_NEAR(r.cum_logprob, r.trace.total_logprob(), 1e-12);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(Cabs, ReturnedHypothesesRespectInvariants) {
  auto net = std::make_shared<const ConfidenceNetwork>(ConfidenceNetwork({16, 8, 4, 1}, {ReprKind::kExtreme, 1}, 3));
  const CnEstimator cn(net);
  const CpEstimator cp_est;
  const CpLnEstimator cp_ln_est;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const TableLm lm = oracle::random_table(500 + seed);
    for (const Estimator* est : std::initializer_list<const Estimator*>{&cp_est, &cp_ln_est, &cn}) {
      const DecodeConfig cfg = beam_config(DecodeMethod::kCabs, 3, 12);
      const CabsResult r = cabs_decode(lm, kPrompt, cfg, *est);
      EXPECT_LE(r.cum_logprob, 0.0);
      EXPECT_LE(r.cum_log_conf, 0.0);
      EXPECT_LE(r.trace.steps.size(), cfg.max_tokens);
      if (!r.degraded) {
        for (const ScoredSpan& s : r.spans) EXPECT_TRUE(s.span.well_formed);
      }
      const CabsResult again = cabs_decode(lm, kPrompt, cfg, *est);
      EXPECT_EQ(again.trace.token_ids(), r.trace.token_ids());
      EXPECT_EQ(again.cum_log_conf, r.cum_log_conf);
    }
  }
}

TEST(Cabs, AllMalformedStepKeepsBestAndFlagsDegraded) {
  const TableLm lm = TableLm::from_json(Json::parse(R"({
    "context_order": 1,
    "rows": {"<bos>": {"a": 0.7, "b": 0.3}, "a": {"<END>": 1.0}, "b": {"<END>": 1.0}, "<END>": {"<eos>": 1.0}}
  })"));
  const CabsResult r = cabs_decode(lm, kPrompt, beam_config(DecodeMethod::kCabs, 2), CpEstimator());
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.trace.token_ids(), (std::vector<TokenId>{lm.vocab().id("a"), Vocabulary::kEnd, Vocabulary::kEos}));
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_FALSE(r.spans[0].span.well_formed);
  EXPECT_EQ(r.spans[0].score.value, 0.0);
}

// The table prefers "Plastic"; a network that distrusts that span steers
// CABS to "Metal" while token-level beam search keeps "Plastic".
TEST(Cabs, ConfidenceNetworkOverridesTokenProbabilities) {
  const TableLm lm = TableLm::from_json(Json::parse(R"({
    "context_order": 2,
    "rows": {
      "<bos> <bos>": {"Material": 1.0},
      "<bos> Material": {"<SEP>": 1.0},
      "Material <SEP>": {"Plastic": 0.6, "Metal": 0.4},
      "<SEP> Plastic": {"<END>": 1.0},
      "<SEP> Metal": {"<END>": 1.0},
      "Plastic <END>": {"<eos>": 1.0},
      "Metal <END>": {"<eos>": 1.0}
    }
  })"));
  const Vocabulary& v = lm.vocab();
  const auto plastic = v.encode_words("Material <SEP> Plastic <END> <eos>");
  const auto metal = v.encode_words("Material <SEP> Metal <END> <eos>");
  const ReprConfig repr{ReprKind::kExtreme, 0};
  const GenerationTrace tp = teacher_force(lm, kPrompt, plastic);
  const GenerationTrace tm = teacher_force(lm, kPrompt, metal);
  const auto sp = segment(tp.token_ids(), v);
  const auto sm = segment(tm.token_ids(), v);
  std::vector<ConfidenceSample> samples;
  for (int i = 0; i < 16; ++i) {
    samples.push_back({build_repr(sp[0], tp.steps, repr), 0});
    samples.push_back({build_repr(sm[0], tm.steps, repr), 1});
  }
  CnTrainConfig cfg;
  cfg.hidden = {8, 4};
  cfg.epochs = 100;
  auto net = std::make_shared<const ConfidenceNetwork>(cn_train(samples, repr, cfg).network);
  const CnEstimator cn(net);
  const double conf_plastic = score_existing(tp, cn, v)[0].score.value;
  const double conf_metal = score_existing(tm, cn, v)[0].score.value;
  ASSERT_LT(conf_plastic, conf_metal);

  const auto beam = token_beam_decode(lm, kPrompt, beam_config(DecodeMethod::kTokenBeam, 2));
  EXPECT_EQ(beam.front().token_ids(), plastic);
  const CabsResult r = cabs_decode(lm, kPrompt, beam_config(DecodeMethod::kCabs, 2), cn);
  EXPECT_EQ(r.trace.token_ids(), metal);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_NEAR(r.spans[0].score.value, conf_metal, 1e-15);
}

TEST(Cabs, NormalisedObjectiveIsSelectable) {
  const CpEstimator cp_est;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TableLm lm = oracle::random_table(600 + seed);
    DecodeConfig cfg = beam_config(DecodeMethod::kCabs, 3, 12);
    cfg.normalize_by_spans = true;
    const CabsResult r = cabs_decode(lm, kPrompt, cfg, cp_est);
    EXPECT_LE(r.cum_log_conf, 0.0);
  }
}

TEST(ScoreExisting, Examples) {
  const TableLm lm = TableLm::from_json(Json::parse(R"({
    "context_order": 1,
    "rows": {
      "<bos>": {"a": 0.5, "b": 0.5}, "a": {"<SEP>": 0.8, "<END>": 0.2}, "b": {"<END>": 0.9, "<SEP>": 0.1},
      "<SEP>": {"b": 0.7, "a": 0.3}, "<END>": {"a": 0.6, "<eos>": 0.4}
    }
  })"));
  const Vocabulary& v = lm.vocab();
  const auto ids = v.encode_words("a <SEP> b <END> a <SEP> a <SEP> b <END> a <SEP> b <END> <eos>");
  const GenerationTrace t = teacher_force(lm, kPrompt, ids);
  const auto scored = score_existing(t, CpEstimator(), v);
  ASSERT_EQ(scored.size(), 3u);
  EXPECT_NEAR(scored[0].score.value, 0.5 * 0.8 * 0.7 * 0.9, 1e-15);
  EXPECT_FALSE(scored[1].span.well_formed);
  EXPECT_EQ(scored[1].score.value, 0.0);
  EXPECT_NEAR(scored[2].score.value, 0.6 * 0.8 * 0.7 * 0.9, 1e-15);

  const auto clean = v.encode_words("a <SEP> b <END> a <SEP> b <END> a <SEP> a <END> <eos>");
  const GenerationTrace tc = teacher_force(lm, kPrompt, clean);
  const auto three = score_existing(tc, CpEstimator(), v);
  ASSERT_EQ(three.size(), 3u);
  for (const ScoredSpan& s : three) {
    std::vector<TokenId> prefix(clean.begin(), clean.begin() + static_cast<long>(s.span.start));
    std::vector<TokenId> upto(clean.begin(), clean.begin() + static_cast<long>(s.span.end) + 1);
    const double expected = oracle::table_logprob(lm, kPrompt, upto) - oracle::table_logprob(lm, kPrompt, prefix);
    EXPECT_NEAR(s.score.log_value, expected, 1e-12);
  }
  auto zeros = std::make_shared<const ConfidenceNetwork>(
      ConfidenceNetwork::zeros({16, 4, 4, 1}, {ReprKind::kExtreme, 0}));
  for (const ScoredSpan& s : score_existing(tc, CnEstimator(zeros), v)) EXPECT_EQ(s.score.value, 0.5);
}

TEST(DecodeMethod, Names) {
  EXPECT_EQ(parse_decode_method("token_beam"), DecodeMethod::kTokenBeam);
  EXPECT_EQ(parse_decode_method("beam"), DecodeMethod::kTokenBeam);
  EXPECT_EQ(to_string(DecodeMethod::kCabs), "cabs");
  EXPECT_THROW(parse_decode_method("sample"), ContractError);
}

}  // namespace
}  // namespace cabs
