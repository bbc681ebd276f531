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

#include "cabs/table_lm.h"

#include <cmath>
#include <limits>
#include <string>

#include "cabs/error.h"
#include "cabs/rng.h"

namespace cabs {
namespace {

constexpr double kRowTolerance = 1e-9;

class TableState final : public LmState {
 public:
  TableState(std::vector<TokenId> context, TokenId token, StatePtr parent, std::size_t generated,
             std::size_t position)
      : context_(std::move(context)) {
    token_ = token;
    parent_ = std::move(parent);
    generated_ = generated;
    position_ = position;
  }
  const std::vector<TokenId>& context() const { return context_; }
  std::vector<double>& mutable_log_probs() { return log_probs_; }
  LayerStates& mutable_hidden() { return hidden_; }

 private:
  std::vector<TokenId> context_;
};

void check_row(const TableLm::Row& row, std::size_t vocab_size, const std::string& where) {
  if (row.size() != vocab_size) {
    throw TableError(where + ": row has " + std::to_string(row.size()) + " entries, vocabulary has " +
                     std::to_string(vocab_size));
  }
  double total = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw TableError(where + ": negative or non-finite probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kRowTolerance) {
    throw TableError(where + ": row sums to " + std::to_string(total));
  }
}

std::string context_string(const Vocabulary& vocab, std::span<const TokenId> ctx) {
  return vocab.decode(ctx);
}

}  // namespace

TableLm::TableLm(Vocabulary vocab, std::size_t context_order, std::map<Context, Row> rows,
                 std::optional<Row> default_row, TableLmOptions options)
    : vocab_(std::move(vocab)),
      order_(context_order),
      rows_(std::move(rows)),
      default_row_(std::move(default_row)),
      options_(std::move(options)) {
  if (order_ == 0) throw TableError("context_order must be >= 1");
  if (options_.layer_widths.empty()) throw TableError("table model needs at least one layer");
  for (const auto& [ctx, row] : rows_) {
    if (ctx.size() != order_) throw TableError("context length differs from context_order");
    for (TokenId t : ctx) {
      if (!vocab_.contains(t)) throw TableError("context token out of range");
    }
    check_row(row, vocab_.size(), "row '" + context_string(vocab_, ctx) + "'");
  }
  if (default_row_) check_row(*default_row_, vocab_.size(), "default row");

  Rng rng(options_.projection_seed);
  const std::size_t in = order_ * vocab_.size();
  for (std::size_t width : options_.layer_widths) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(in));
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      for (Eigen::Index r = 0; r < p.rows(); ++r) p(r, c) = rng.normal();
    }
    projections_.push_back(std::move(p));
  }
}

std::size_t TableLm::layer_width(std::size_t layer) const {
  if (layer >= options_.layer_widths.size()) throw ContractError("layer index out of range");
  return options_.layer_widths[layer];
}

const TableLm::Row& TableLm::row(std::span<const TokenId> context) const {
  const Context key(context.begin(), context.end());
  if (auto it = rows_.find(key); it != rows_.end()) return it->second;
  if (default_row_) return *default_row_;
  throw TableError("no row for context '" + context_string(vocab_, context) + "' and no default row");
}

StatePtr TableLm::make_state(Context context, TokenId token, StatePtr parent, std::size_t generated,
                             std::size_t position) const {
  auto state = std::make_shared<TableState>(context, token, std::move(parent), generated, position);
  auto& lp = state->mutable_log_probs();
  if (token == vocab_.eos_id() && !rows_.count(context) && !default_row_) {
    // Nothing follows eos; without an explicit row the state is absorbing.
    lp.assign(vocab_.size(), -std::numeric_limits<double>::infinity());
    lp[static_cast<std::size_t>(vocab_.eos_id())] = 0.0;
  } else {
    const Row& r = row(context);
    lp.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) lp[i] = std::log(r[i]);
  }
  auto& hidden = state->mutable_hidden();
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  for (const Eigen::MatrixXd& p : projections_) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.rows());
    for (std::size_t k = 0; k < context.size(); ++k) {
      h += p.col(static_cast<Eigen::Index>(k) * v + context[k]);
    }
    hidden.push_back(std::move(h));
  }
  return state;
}

StatePtr TableLm::start(std::span<const TokenId> prompt) const {
  Context ctx(order_, vocab_.bos_id());
  const std::size_t take = std::min(order_, prompt.size());
  for (std::size_t i = 0; i < take; ++i) {
    const TokenId t = prompt[prompt.size() - take + i];
    if (!vocab_.contains(t)) throw ContractError("prompt token out of range");
    ctx[order_ - take + i] = t;
  }
  const TokenId last = prompt.empty() ? vocab_.pad_id() : prompt.back();
  return make_state(std::move(ctx), last, nullptr, 0, prompt.size());
}

StatePtr TableLm::extend(const StatePtr& state, TokenId token) const {
  if (!vocab_.contains(token)) throw ContractError("token out of range");
  const auto* s = dynamic_cast<const TableState*>(state.get());
  if (s == nullptr) throw ContractError("state does not belong to a table model");
  Context ctx(s->context().begin() + 1, s->context().end());
  ctx.push_back(token);
  return make_state(std::move(ctx), token, state, s->generated() + 1, s->position() + 1);
}

TableLm TableLm::from_json(const Json& spec) {
  try {
    const auto order = spec.at("context_order").get<std::size_t>();
    // Collect tokens in a deterministic order: row contexts then row entries
    // (object keys are sorted by the JSON library).
    Vocabulary vocab;
    auto add_words = [&](const std::string& text) {
      for (const std::string& w : split_words(text)) vocab.add(w);
    };
    for (const auto& [ctx, dist] : spec.at("rows").items()) {
      add_words(ctx);
      for (const auto& [tok, p] : dist.items()) add_words(tok);
    }
    if (spec.contains("default")) {
      for (const auto& [tok, p] : spec.at("default").items()) add_words(tok);
    }
    auto parse_row = [&](const Json& dist) {
      Row row(vocab.size(), 0.0);
      for (const auto& [tok, p] : dist.items()) row[static_cast<std::size_t>(vocab.id(tok))] = p.get<double>();
      return row;
    };
    std::map<Context, Row> rows;
    for (const auto& [ctx, dist] : spec.at("rows").items()) {
      Context key = vocab.encode_words(ctx);
      if (key.size() != order) {
        throw TableError("context '" + ctx + "' does not have " + std::to_string(order) + " tokens");
      }
      rows.emplace(std::move(key), parse_row(dist));
    }
    std::optional<Row> def;
    if (spec.contains("default")) def = parse_row(spec.at("default"));
    TableLmOptions options;
    if (spec.contains("layer_widths")) options.layer_widths = spec.at("layer_widths").get<std::vector<std::size_t>>();
    if (spec.contains("projection_seed")) options.projection_seed = spec.at("projection_seed").get<std::uint64_t>();
    return TableLm(std::move(vocab), order, std::move(rows), std::move(def), std::move(options));
  } catch (const Json::exception& e) {
    throw TableError(std::string("table spec: ") + e.what());
  }
}

Json TableLm::to_json() const {
  auto row_json = [&](const Row& row) {
    Json j = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] > 0.0) j[vocab_.str(static_cast<TokenId>(i))] = row[i];
    }
    return j;
  };
  Json rows = Json::object();
  for (const auto& [ctx, row] : rows_) rows[context_string(vocab_, ctx)] = row_json(row);
  Json j{{"context_order", order_},
         {"rows", std::move(rows)},
         {"layer_widths", options_.layer_widths},
         {"projection_seed", options_.projection_seed}};
  if (default_row_) j["default"] = row_json(*default_row_);
  return j;
}

}  // namespace cabs
