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

#ifndef CABS_CORPUS_H_
#define CABS_CORPUS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cabs/jsonl.h"

namespace cabs {

// One enumerable attribute. Values of a root attribute are drawn from
// `prior` (uniform when empty). A dependent attribute names its parent and
// supplies one distribution per parent value; parent values without an entry
// fall back to the prior.
struct AttributeSchema {
  std::string name;
  std::vector<std::string> value_domain;
  std::vector<double> prior;
  std::optional<std::string> parent;
  std::map<std::string, std::vector<double>> conditional;

  std::size_t value_index(std::string_view value) const;  // npos if absent
};

struct Attribute {
  std::string key;
  std::string value;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

struct Record {
  std::string record_id;
  std::vector<Attribute> attributes;

  const Attribute* find(std::string_view key) const;
  friend bool operator==(const Record&, const Record&) = default;
};

// A record with some attributes removed from the prompt.
struct CorruptedRecord {
  Record base;
  std::vector<std::string> deleted_keys;  // in base order
  std::vector<Attribute> retained;        // base order preserved
};

struct FaithfulnessLabel {
  std::string key;
  std::string generated_value;
  std::string reference_value;  // empty when the key is not in the reference
  bool reference_found = false;
  int label = 0;
};

// Validated attribute schema.
class Schema {
 public:
  // Throws SchemaError on empty domains, duplicate names, dangling or cyclic
  // dependencies, and distributions that are negative, of the wrong length,
  // or do not sum to 1 within 1e-9.
  explicit Schema(std::vector<AttributeSchema> attributes);

  const std::vector<AttributeSchema>& attributes() const { return attributes_; }
  const AttributeSchema* find(std::string_view name) const;
  // Parents before children.
  const std::vector<std::size_t>& sampling_order() const { return order_; }

  // Distribution of `attribute` given the record sampled so far.
  std::span<const double> distribution(std::size_t attribute, const Record& partial) const;

  // Exact marginal distribution of every attribute, by propagation along
  // the dependency tree.
  std::vector<std::vector<double>> marginals() const;

  // Throws SchemaError when a record has unknown/duplicate keys or values
  // outside their domain.
  void validate(const Record& record) const;

  static Schema from_json(const Json& json);
  Json to_json() const;

  // Six-attribute product schema (Brand, Department, Style, Size, Color,
  // Material) with brand/department/style dependencies and multi-word
  // values sharing prefixes.
  static Schema default_catalog();

 private:
  std::vector<AttributeSchema> attributes_;
  std::vector<std::vector<double>> priors_;
  std::vector<std::size_t> order_;
  std::vector<std::optional<std::size_t>> parent_index_;
};

std::vector<Record> generate_world(const Schema& schema, std::size_t n_records, std::uint64_t seed,
                                   std::string_view id_prefix = "r");

// max(1, round-half-up(n * rate)).
std::size_t deletion_count(std::size_t n_attributes, double rate);

// Removes deletion_count(n, rate) attributes chosen uniformly without
// replacement. Throws EmptyInputError for records without attributes and
// ContractError unless 0 < rate < 1.
CorruptedRecord corrupt(const Record& record, double deletion_rate, std::uint64_t seed);

// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_value(std::string_view value);

// Labels each generated pair against the reference: 1 iff the key exists in
// the reference and the normalised values are equal. Keys missing from the
// reference get label 0 and reference_found = false.
std::vector<FaithfulnessLabel> label_generation(const Record& reference,
                                                std::span<const Attribute> generated);

// Replaces each value with its attribute's first domain value with
// probability `rate`. Models a catalog where sellers leave form defaults in
// place.
Record apply_default_fill_noise(const Record& record, const Schema& schema, double rate,
                                std::uint64_t seed);

Json to_json(const Record& record);
Record record_from_json(const Json& json);
Json to_json(const Attribute& attribute);
Attribute attribute_from_json(const Json& json);
Json label_to_json(const std::string& record_id, const FaithfulnessLabel& label);

}  // namespace cabs

#endif  // CABS_CORPUS_H_
