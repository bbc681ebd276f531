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

#include "cabs/decode.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cabs/error.h"

namespace cabs {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Path {
  StatePtr state;
  std::vector<TokenId> tokens;
  double logprob = 0.0;
};

// Higher log-probability first, then the lexicographically smaller sequence.
bool path_before(const Path& a, const Path& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

struct Expansion {
  std::size_t parent;
  TokenId token;
  double logprob;
};

// The best `width` one-token extensions of the live paths, best first.
// All live paths have the same length, so comparing (parent prefix, token)
// is the lexicographic order on the extended sequences.
std::vector<Expansion> expand(const std::vector<Path>& live, std::size_t width) {
  std::vector<Expansion> all;
  std::vector<TokenId> ids;
  for (std::size_t p = 0; p < live.size(); ++p) {
    const std::vector<double>& lp = live[p].state->log_probs();
    ids.resize(lp.size());
    for (std::size_t v = 0; v < lp.size(); ++v) ids[v] = static_cast<TokenId>(v);
    const std::size_t k = std::min(width, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                      [&](TokenId a, TokenId b) {
                        if (lp[a] != lp[b]) return lp[a] > lp[b];
                        return a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) {
      const double l = lp[static_cast<std::size_t>(ids[i])];
      if (l == kNegInf) break;
      all.push_back({p, ids[i], live[p].logprob + l});
    }
  }
  auto before = [&](const Expansion& a, const Expansion& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    if (a.parent != b.parent) {
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
    }
    return a.token < b.token;
  };
  const std::size_t k = std::min(width, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
  all.resize(k);
  return all;
}

Path extend_path(const LanguageModel& model, const Path& parent, const Expansion& e) {
  Path child{model.extend(parent.state, e.token), parent.tokens, e.logprob};
  child.tokens.push_back(e.token);
  return child;
}

std::vector<TokenStep> steps_between(const StatePtr& from, const StatePtr& to, std::size_t n) {
  std::vector<TokenStep> steps(n);
  const LmState* node = to.get();
  for (std::size_t i = n; i-- > 0;) {
    const LmState* parent = node->parent().get();
    if (parent == nullptr) throw ContractError("candidate state chain is broken");
    steps[i].token = node->token();
    steps[i].logprob = parent->log_probs()[static_cast<std::size_t>(node->token())];
    steps[i].hidden = node->hidden();
    node = parent;
  }
  if (node != from.get()) throw ContractError("candidate does not descend from its parent state");
  return steps;
}

double objective(const Hypothesis& h, bool normalize) {
  if (!normalize || h.completed_spans.empty()) return h.cum_log_conf;
  return h.cum_log_conf / static_cast<double>(h.completed_spans.size());
}

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b, bool normalize) {
  const double oa = objective(a, normalize);
  const double ob = objective(b, normalize);
  if (oa != ob) return oa > ob;
  if (a.cum_logprob != b.cum_logprob) return a.cum_logprob > b.cum_logprob;
  return std::lexicographical_compare(a.token_ids.begin(), a.token_ids.end(), b.token_ids.begin(),
                                      b.token_ids.end());
}

void check_config(const DecodeConfig& config) {
  if (config.max_tokens == 0) throw ContractError("max_tokens must be >= 1");
  if (config.method != DecodeMethod::kGreedy && config.beam_size == 0) {
    throw ContractError("beam_size must be >= 1");
  }
}

}  // namespace

std::string_view to_string(DecodeMethod method) {
  switch (method) {
    case DecodeMethod::kGreedy:
      return "greedy";
    case DecodeMethod::kTokenBeam:
      return "beam";
    case DecodeMethod::kCabs:
      return "cabs";
  }
  return "?";
}

DecodeMethod parse_decode_method(std::string_view name) {
  if (name == "greedy") return DecodeMethod::kGreedy;
  if (name == "beam" || name == "token_beam") return DecodeMethod::kTokenBeam;
  if (name == "cabs") return DecodeMethod::kCabs;
  throw ContractError("unknown decode method '" + std::string(name) + "'");
}

GenerationTrace greedy_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                              const DecodeConfig& config) {
  check_config(config);
  return generate(model, prompt, greedy_choice, config.max_tokens);
}

std::vector<GenerationTrace> token_beam_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                                               const DecodeConfig& config) {
  check_config(config);
  const TokenId eos = model.vocab().eos_id();
  std::vector<Path> live{Path{model.start(prompt), {}, 0.0}};
  std::vector<Path> completed;
  for (std::size_t step = 0; step < config.max_tokens && !live.empty(); ++step) {
    std::vector<Path> next;
    for (const Expansion& e : expand(live, config.beam_size)) {
      Path child = extend_path(model, live[e.parent], e);
      (e.token == eos ? completed : next).push_back(std::move(child));
    }
    live = std::move(next);
  }
  std::sort(completed.begin(), completed.end(), path_before);
  std::sort(live.begin(), live.end(), path_before);
  std::vector<GenerationTrace> out;
  out.reserve(completed.size() + live.size());
  for (const Path& p : completed) out.push_back(trace_from_state(p.state, prompt));
  for (const Path& p : live) {
    out.push_back(trace_from_state(p.state, prompt));
    out.back().truncated = true;
  }
  return out;
}

CandidateSet generate_candidates(const LanguageModel& model, const StatePtr& from, std::size_t width,
                                 std::size_t max_len) {
  if (width == 0 || max_len == 0) throw ContractError("candidate beam needs width and length >= 1");
  const TokenId eos = model.vocab().eos_id();
  const TokenId end = model.vocab().end_id();
  std::vector<Path> live{Path{from, {}, 0.0}};
  std::vector<Path> pool;
  for (std::size_t len = 0; len < max_len && !live.empty(); ++len) {
    // No live path can still enter the top `width`.
    if (pool.size() >= width) {
      std::sort(pool.begin(), pool.end(), path_before);
      const double best_live =
          std::max_element(live.begin(), live.end(), [](const Path& a, const Path& b) {
            return a.logprob < b.logprob;
          })->logprob;
      if (pool[width - 1].logprob > best_live) {
        live.clear();
        break;
      }
    }
    std::vector<Path> next;
    for (const Expansion& e : expand(live, width)) {
      Path child = extend_path(model, live[e.parent], e);
      (e.token == eos || e.token == end ? pool : next).push_back(std::move(child));
    }
    live = std::move(next);
  }
  for (Path& p : live) pool.push_back(std::move(p));
  std::sort(pool.begin(), pool.end(), path_before);
  if (pool.size() > width) pool.resize(width);
  CandidateSet out;
  out.reserve(pool.size());
  for (Path& p : pool) {
    std::vector<TokenStep> steps = steps_between(from, p.state, p.tokens.size());
    out.push_back({std::move(p.state), std::move(p.tokens), p.logprob, std::move(steps)});
  }
  return out;
}

CabsResult cabs_decode(const LanguageModel& model, std::span<const TokenId> prompt,
                       const DecodeConfig& config, const Estimator& estimator) {
  check_config(config);
  const Vocabulary& vocab = model.vocab();
  const TokenId eos = vocab.eos_id();
  const std::size_t inner = config.inner_beam_size == 0 ? config.beam_size : config.inner_beam_size;
  const bool norm = config.normalize_by_spans;
  auto before = [norm](const Hypothesis& a, const Hypothesis& b) { return hypothesis_before(a, b, norm); };

  Hypothesis root;
  root.state = model.start(prompt);
  std::vector<Hypothesis> beam{std::move(root)};

  for (std::size_t step = 0; step < config.max_spans; ++step) {
    if (std::all_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.finished || h.exhausted; })) {
      break;
    }
    std::vector<Hypothesis> valid;
    std::vector<Hypothesis> malformed;
    for (const Hypothesis& h : beam) {
      if (h.finished || h.exhausted) {
        valid.push_back(h);
        continue;
      }
      const std::size_t offset = h.token_ids.size();
      const std::size_t cap = std::min(config.max_span_tokens, config.max_tokens - offset);
      for (Candidate& c : generate_candidates(model, h.state, inner, cap)) {
        Hypothesis child = h;
        child.state = c.state;
        child.token_ids.insert(child.token_ids.end(), c.token_ids.begin(), c.token_ids.end());
        child.cum_logprob += c.logprob;
        child.finished = c.token_ids.back() == eos;
        child.exhausted = !child.finished && child.token_ids.size() >= config.max_tokens;
        if (c.token_ids.size() == 1 && child.finished) {
          child.cum_log_conf += c.logprob;
          valid.push_back(std::move(child));
          continue;
        }
        const std::vector<SubStructureSpan> segs = segment(c.token_ids, vocab);
        SubStructureSpan span = segs.front();
        ScoredSpan scored;
        if (span.well_formed) {
          scored.score = estimator.score(span, c.steps);
        } else {
          scored.score = {0.0, kNegInf, estimator.method()};
        }
        child.cum_log_conf += scored.score.log_value;
        span.start += offset;
        span.end += offset;
        scored.span = std::move(span);
        child.completed_spans.push_back(std::move(scored));
        (child.completed_spans.back().span.well_formed ? valid : malformed).push_back(std::move(child));
      }
    }
    if (valid.empty()) {
      if (malformed.empty()) break;
      auto best = std::min_element(malformed.begin(), malformed.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.cum_logprob != b.cum_logprob) return a.cum_logprob > b.cum_logprob;
        return std::lexicographical_compare(a.token_ids.begin(), a.token_ids.end(), b.token_ids.begin(),
                                            b.token_ids.end());
      });
      Hypothesis kept = std::move(*best);
      kept.degraded = true;
      beam = {std::move(kept)};
      continue;
    }
    const std::size_t k = std::min(config.beam_size, valid.size());
    std::partial_sort(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(k), valid.end(), before);
    valid.resize(k);
    beam = std::move(valid);
  }

  const bool any_finished = std::any_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.finished; });
  const Hypothesis* best = nullptr;
  for (const Hypothesis& h : beam) {
    if (any_finished && !h.finished) continue;
    if (best == nullptr || before(h, *best)) best = &h;
  }
  CabsResult result;
  result.trace = trace_from_state(best->state, prompt);
  result.trace.truncated = !best->finished;
  result.spans = best->completed_spans;
  result.cum_log_conf = best->cum_log_conf;
  result.cum_logprob = best->cum_logprob;
  result.degraded = best->degraded;
  return result;
}

std::vector<ScoredSpan> score_existing(const GenerationTrace& trace, const Estimator& estimator,
                                       const Vocabulary& vocab) {
  std::vector<ScoredSpan> out;
  for (SubStructureSpan& span : segment(trace.token_ids(), vocab)) {
    ScoredSpan s;
    s.score = span.well_formed ? estimator.score(span, trace.steps)
                               : ConfidenceScore{0.0, kNegInf, estimator.method()};
    s.span = std::move(span);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cabs
