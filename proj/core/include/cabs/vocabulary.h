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

#ifndef CABS_VOCABULARY_H_
#define CABS_VOCABULARY_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cabs {

using TokenId = std::int32_t;

// Word-level token inventory. The five reserved tokens always occupy the
// first ids, in the order pad, bos, eos, <SEP>, <END>.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kEnd = 4;
  static constexpr std::size_t kNumReserved = 5;

  static constexpr std::string_view kPadString = "<pad>";
  static constexpr std::string_view kBosString = "<bos>";
  static constexpr std::string_view kEosString = "<eos>";
  static constexpr std::string_view kSepString = "<SEP>";
  static constexpr std::string_view kEndString = "<END>";

  Vocabulary();

  // Reserved tokens followed by `words` in order. Duplicates (including
  // reserved strings) are ignored; empty strings and strings containing
  // whitespace are rejected.
  explicit Vocabulary(std::span<const std::string> words);

  std::size_t size() const { return tokens_.size(); }

  TokenId pad_id() const { return kPad; }
  TokenId bos_id() const { return kBos; }
  TokenId eos_id() const { return kEos; }
  TokenId sep_id() const { return kSep; }
  TokenId end_id() const { return kEnd; }

  // Throws ContractError for unknown strings / out-of-range ids.
  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& str(TokenId id) const;

  bool contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Splits `text` on whitespace and maps each word to its id.
  std::vector<TokenId> encode_words(std::string_view text) const;
  // Joins token strings with single spaces.
  std::string decode(std::span<const TokenId> ids) const;

  TokenId add(std::string_view token);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Whitespace tokenisation shared by the vocabulary and the record encoder.
std::vector<std::string> split_words(std::string_view text);

}  // namespace cabs

#endif  // CABS_VOCABULARY_H_
