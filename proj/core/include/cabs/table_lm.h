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

#ifndef CABS_TABLE_LM_H_
#define CABS_TABLE_LM_H_

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cabs/jsonl.h"
#include "cabs/lm.h"

namespace cabs {

struct TableLmOptions {
  std::vector<std::size_t> layer_widths{8, 8};
  std::uint64_t projection_seed = 7;
};

// Exact reference model: next-token probabilities read from an explicit
// table keyed by the last `context_order` tokens (left-padded with bos).
// Hidden states are fixed seeded random projections of the concatenated
// one-hot context, so they are a deterministic, injective-in-practice
// function of the context window.
class TableLm final : public LanguageModel {
 public:
  using Row = std::vector<double>;
  using Context = std::vector<TokenId>;

  // Throws TableError unless every row (and the default row) has one entry
  // per vocabulary token, non-negative, summing to 1 within 1e-9.
  TableLm(Vocabulary vocab, std::size_t context_order, std::map<Context, Row> rows,
          std::optional<Row> default_row = std::nullopt, TableLmOptions options = {});

  // {"context_order": k, "rows": {"<bos> a": {"b": 0.5, "<eos>": 0.5}, ...},
  //  "default": {...}, "layer_widths": [...], "projection_seed": s}
  static TableLm from_json(const Json& spec);
  Json to_json() const;

  const Vocabulary& vocab() const override { return vocab_; }
  std::size_t n_layers() const override { return options_.layer_widths.size(); }
  std::size_t layer_width(std::size_t layer) const override;
  StatePtr start(std::span<const TokenId> prompt) const override;
  // A state reached by eos with no row of its own (and no default row) is
  // absorbing: it puts all mass on eos.
  StatePtr extend(const StatePtr& state, TokenId token) const override;

  std::size_t context_order() const { return order_; }
  // Row used for `context` (exactly context_order tokens); falls back to the
  // default row, else throws TableError.
  const Row& row(std::span<const TokenId> context) const;
  const std::map<Context, Row>& rows() const { return rows_; }

 private:
  StatePtr make_state(Context context, TokenId token, StatePtr parent, std::size_t generated,
                      std::size_t position) const;

  Vocabulary vocab_;
  std::size_t order_;
  std::map<Context, Row> rows_;
  std::optional<Row> default_row_;
  TableLmOptions options_;
  std::vector<Eigen::MatrixXd> projections_;
};

}  // namespace cabs

#endif  // CABS_TABLE_LM_H_
