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

#include "cabs/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "cabs/error.h"
#include "cabs/rng.h"

namespace cabs {
namespace {

constexpr double kSumTolerance = 1e-9;

void check_distribution(const std::vector<double>& dist, std::size_t expected_size,
                        const std::string& where) {
  if (dist.size() != expected_size) {
    throw SchemaError(where + ": expected " + std::to_string(expected_size) + " weights, got " +
                      std::to_string(dist.size()));
  }
  double total = 0.0;
  for (double w : dist) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw SchemaError(where + ": negative or non-finite weight");
    total += w;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw SchemaError(where + ": weights sum to " + std::to_string(total));
  }
}

}  // namespace

std::size_t AttributeSchema::value_index(std::string_view value) const {
  for (std::size_t i = 0; i < value_domain.size(); ++i) {
    if (value_domain[i] == value) return i;
  }
  return std::string::npos;
}

const Attribute* Record::find(std::string_view key) const {
  for (const Attribute& a : attributes) {
    if (a.key == key) return &a;
  }
  return nullptr;
}

Schema::Schema(std::vector<AttributeSchema> attributes) : attributes_(std::move(attributes)) {
  if (attributes_.empty()) throw SchemaError("schema declares no attributes");
  std::set<std::string> names;
  for (const AttributeSchema& a : attributes_) {
    if (a.name.empty()) throw SchemaError("attribute with empty name");
    if (!names.insert(a.name).second) throw SchemaError("duplicate attribute '" + a.name + "'");
    if (a.value_domain.empty()) throw SchemaError("attribute '" + a.name + "' has an empty value domain");
    std::set<std::string> values(a.value_domain.begin(), a.value_domain.end());
    if (values.size() != a.value_domain.size()) {
      throw SchemaError("attribute '" + a.name + "' repeats a value");
    }
  }

  parent_index_.resize(attributes_.size());
  priors_.resize(attributes_.size());
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    const AttributeSchema& a = attributes_[i];
    const std::size_t k = a.value_domain.size();
    if (a.prior.empty()) {
      priors_[i].assign(k, 1.0 / static_cast<double>(k));
    } else {
      check_distribution(a.prior, k, "prior of '" + a.name + "'");
      priors_[i] = a.prior;
    }
    if (!a.parent) {
      if (!a.conditional.empty()) {
        throw SchemaError("attribute '" + a.name + "' has a conditional table but no parent");
      }
      continue;
    }
    const AttributeSchema* parent = find(*a.parent);
    if (parent == nullptr) {
      throw SchemaError("attribute '" + a.name + "' depends on undeclared attribute '" + *a.parent + "'");
    }
    if (parent == &a) throw SchemaError("attribute '" + a.name + "' depends on itself");
    parent_index_[i] = static_cast<std::size_t>(parent - attributes_.data());
    for (const auto& [parent_value, dist] : a.conditional) {
      if (parent->value_index(parent_value) == std::string::npos) {
        throw SchemaError("attribute '" + a.name + "': dependency key '" + parent_value +
                          "' is not a value of '" + parent->name + "'");
      }
      check_distribution(dist, k, "'" + a.name + "' given " + parent->name + "=" + parent_value);
    }
  }

  // Topological order; every attribute has at most one parent.
  std::vector<int> state(attributes_.size(), 0);
  auto visit = [&](auto&& self, std::size_t i) -> void {
    if (state[i] == 2) return;
    if (state[i] == 1) throw SchemaError("cyclic dependency through '" + attributes_[i].name + "'");
    state[i] = 1;
    if (parent_index_[i]) self(self, *parent_index_[i]);
    state[i] = 2;
    order_.push_back(i);
  };
  for (std::size_t i = 0; i < attributes_.size(); ++i) visit(visit, i);
}

const AttributeSchema* Schema::find(std::string_view name) const {
  for (const AttributeSchema& a : attributes_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::span<const double> Schema::distribution(std::size_t attribute, const Record& partial) const {
  const AttributeSchema& a = attributes_.at(attribute);
  if (parent_index_[attribute]) {
    const Attribute* p = partial.find(attributes_[*parent_index_[attribute]].name);
    if (p != nullptr) {
      if (auto it = a.conditional.find(p->value); it != a.conditional.end()) return it->second;
    }
  }
  return priors_[attribute];
}

std::vector<std::vector<double>> Schema::marginals() const {
  std::vector<std::vector<double>> out(attributes_.size());
  for (std::size_t i : order_) {
    const AttributeSchema& a = attributes_[i];
    if (!parent_index_[i]) {
      out[i] = priors_[i];
      continue;
    }
    const std::size_t p = *parent_index_[i];
    out[i].assign(a.value_domain.size(), 0.0);
    for (std::size_t pv = 0; pv < attributes_[p].value_domain.size(); ++pv) {
      const auto it = a.conditional.find(attributes_[p].value_domain[pv]);
      const std::vector<double>& cond = it != a.conditional.end() ? it->second : priors_[i];
      for (std::size_t v = 0; v < cond.size(); ++v) out[i][v] += out[p][pv] * cond[v];
    }
  }
  return out;
}

void Schema::validate(const Record& record) const {
  std::set<std::string> seen;
  for (const Attribute& attr : record.attributes) {
    const AttributeSchema* a = find(attr.key);
    if (a == nullptr) throw SchemaError(record.record_id + ": unknown attribute '" + attr.key + "'");
    if (!seen.insert(attr.key).second) {
      throw SchemaError(record.record_id + ": duplicate attribute '" + attr.key + "'");
    }
    if (a->value_index(attr.value) == std::string::npos) {
      throw SchemaError(record.record_id + ": value '" + attr.value + "' not in domain of '" +
                        attr.key + "'");
    }
  }
}

Schema Schema::from_json(const Json& json) {
  try {
    std::vector<AttributeSchema> attrs;
    for (const Json& j : json.at("attributes")) {
      AttributeSchema a;
      a.name = j.at("name").get<std::string>();
      a.value_domain = j.at("values").get<std::vector<std::string>>();
      if (j.contains("prior")) a.prior = j.at("prior").get<std::vector<double>>();
      if (j.contains("depends_on")) a.parent = j.at("depends_on").get<std::string>();
      if (j.contains("conditional")) {
        a.conditional = j.at("conditional").get<std::map<std::string, std::vector<double>>>();
      }
      attrs.push_back(std::move(a));
    }
    return Schema(std::move(attrs));
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("schema json: ") + e.what());
  }
}

Json Schema::to_json() const {
  Json attrs = Json::array();
  for (const AttributeSchema& a : attributes_) {
    Json j;
    j["name"] = a.name;
    j["values"] = a.value_domain;
    if (!a.prior.empty()) j["prior"] = a.prior;
    if (a.parent) {
      j["depends_on"] = *a.parent;
      j["conditional"] = a.conditional;
    }
    attrs.push_back(std::move(j));
  }
  return Json{{"attributes", std::move(attrs)}};
}

Schema Schema::default_catalog() {
  // Some conditionals give the first value zero mass while a sibling shares
  // a leading token with a likely value ("Light ...", "Faux ..."), so greedy
  // token choices can commit to a prefix whose completions are all weak.
  std::vector<AttributeSchema> attrs;
  attrs.push_back({"Brand",
                   {"Acme", "Northwind", "Zenith", "Lumen", "Orion", "Vela"},
                   {0.25, 0.2, 0.2, 0.15, 0.1, 0.1},
                   std::nullopt,
                   {}});
  attrs.push_back(
      {"Department", {"Men", "Women", "Kids", "Unisex"}, {0.35, 0.35, 0.15, 0.15}, std::nullopt, {}});
  attrs.push_back({"Style",
                   {"Casual", "Formal", "Sport", "Outdoor", "Vintage"},
                   {},
                   "Brand",
                   {{"Acme", {0.85, 0.05, 0.04, 0.03, 0.03}},
                    {"Northwind", {0.04, 0.02, 0.06, 0.85, 0.03}},
                    {"Zenith", {0.05, 0.85, 0.02, 0.02, 0.06}},
                    {"Lumen", {0.06, 0.06, 0.02, 0.02, 0.84}},
                    {"Orion", {0.05, 0.02, 0.88, 0.03, 0.02}},
                    {"Vela", {0.5, 0.05, 0.02, 0.03, 0.4}}}});
  attrs.push_back({"Size",
                   {"X-Small", "Small", "Medium", "Large", "X-Large", "XX-Large"},
                   {},
                   "Department",
                   {{"Men", {0.01, 0.03, 0.12, 0.65, 0.14, 0.05}},
                    {"Women", {0.06, 0.68, 0.2, 0.04, 0.01, 0.01}},
                    {"Kids", {0.8, 0.15, 0.03, 0.01, 0.005, 0.005}},
                    {"Unisex", {0.02, 0.08, 0.5, 0.3, 0.08, 0.02}}}});
  attrs.push_back({"Color",
                   {"Black", "White", "Red", "Light Blue", "Light Gray", "Light Green", "Navy Blue",
                    "Dark Green"},
                   {},
                   "Style",
                   {{"Casual", {0.0, 0.4, 0.03, 0.19, 0.18, 0.15, 0.03, 0.02}},
                    {"Formal", {0.7, 0.05, 0.02, 0.01, 0.02, 0.0, 0.2, 0.0}},
                    {"Sport", {0.05, 0.25, 0.55, 0.05, 0.04, 0.04, 0.01, 0.01}},
                    {"Outdoor", {0.04, 0.01, 0.02, 0.02, 0.04, 0.22, 0.05, 0.6}},
                    {"Vintage", {0.0, 0.05, 0.4, 0.18, 0.17, 0.15, 0.03, 0.02}}}});
  attrs.push_back({"Material",
                   {"Cotton", "Polyester", "Wool", "Faux Leather", "Faux Suede", "Nylon"},
                   {},
                   "Style",
                   {{"Casual", {0.82, 0.08, 0.03, 0.01, 0.01, 0.05}},
                    {"Formal", {0.0, 0.04, 0.42, 0.27, 0.25, 0.02}},
                    {"Sport", {0.03, 0.62, 0.01, 0.01, 0.01, 0.32}},
                    {"Outdoor", {0.04, 0.2, 0.04, 0.01, 0.01, 0.7}},
                    {"Vintage", {0.0, 0.04, 0.4, 0.28, 0.26, 0.02}}}});
  return Schema(std::move(attrs));
}

std::vector<Record> generate_world(const Schema& schema, std::size_t n_records, std::uint64_t seed,
                                   std::string_view id_prefix) {
  if (n_records == 0) throw ContractError("generate_world: n_records must be >= 1");
  const auto& attrs = schema.attributes();
  std::vector<Record> records;
  records.reserve(n_records);
  Rng rng(seed);
  for (std::size_t r = 0; r < n_records; ++r) {
    char id[32];
    std::snprintf(id, sizeof(id), "%06zu", r);
    Record sampled;
    for (std::size_t i : schema.sampling_order()) {
      const std::size_t v = rng.categorical(schema.distribution(i, sampled));
      sampled.attributes.push_back({attrs[i].name, attrs[i].value_domain[v]});
    }
    Record rec;
    rec.record_id = std::string(id_prefix) + id;
    for (const AttributeSchema& a : attrs) rec.attributes.push_back(*sampled.find(a.name));
    records.push_back(std::move(rec));
  }
  return records;
}

std::size_t deletion_count(std::size_t n_attributes, double rate) {
  const auto rounded = static_cast<std::size_t>(std::floor(static_cast<double>(n_attributes) * rate + 0.5));
  return std::min(n_attributes, std::max<std::size_t>(1, rounded));
}

CorruptedRecord corrupt(const Record& record, double deletion_rate, std::uint64_t seed) {
  if (record.attributes.empty()) {
    throw EmptyInputError("corrupt: record '" + record.record_id + "' has no attributes");
  }
  if (!(deletion_rate > 0.0 && deletion_rate < 1.0)) {
    throw ContractError("corrupt: deletion rate must lie in (0, 1)");
  }
  const std::size_t n = record.attributes.size();
  const std::size_t k = deletion_count(n, deletion_rate);

  // Partial Fisher-Yates over attribute positions.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  std::vector<bool> deleted(n, false);
  for (std::size_t i = 0; i < k; ++i) deleted[idx[i]] = true;

  CorruptedRecord out;
  out.base = record;
  for (std::size_t i = 0; i < n; ++i) {
    if (deleted[i]) {
      out.deleted_keys.push_back(record.attributes[i].key);
    } else {
      out.retained.push_back(record.attributes[i]);
    }
  }
  return out;
}

std::string normalize_value(std::string_view value) {
  std::string out;
  bool pending_space = false;
  for (char c : value) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<FaithfulnessLabel> label_generation(const Record& reference,
                                                std::span<const Attribute> generated) {
  std::vector<FaithfulnessLabel> labels;
  labels.reserve(generated.size());
  for (const Attribute& g : generated) {
    FaithfulnessLabel l;
    l.key = g.key;
    l.generated_value = g.value;
    if (const Attribute* ref = reference.find(g.key)) {
      l.reference_found = true;
      l.reference_value = ref->value;
      l.label = normalize_value(g.value) == normalize_value(ref->value) ? 1 : 0;
    }
    labels.push_back(std::move(l));
  }
  return labels;
}

Record apply_default_fill_noise(const Record& record, const Schema& schema, double rate,
                                std::uint64_t seed) {
  Record out = record;
  Rng rng(seed);
  for (Attribute& a : out.attributes) {
    const AttributeSchema* s = schema.find(a.key);
    if (s == nullptr) throw SchemaError("unknown attribute '" + a.key + "'");
    if (rng.uniform() < rate) a.value = s->value_domain.front();
  }
  return out;
}

Json to_json(const Attribute& attribute) {
  return Json{{"key", attribute.key}, {"value", attribute.value}};
}

Attribute attribute_from_json(const Json& json) {
  return {json.at("key").get<std::string>(), json.at("value").get<std::string>()};
}

Json to_json(const Record& record) {
  Json attrs = Json::array();
  for (const Attribute& a : record.attributes) attrs.push_back(to_json(a));
  return Json{{"record_id", record.record_id}, {"attributes", std::move(attrs)}};
}

Record record_from_json(const Json& json) {
  try {
    Record r;
    r.record_id = json.at("record_id").get<std::string>();
    for (const Json& a : json.at("attributes")) r.attributes.push_back(attribute_from_json(a));
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("record json: ") + e.what());
  }
}

Json label_to_json(const std::string& record_id, const FaithfulnessLabel& label) {
  Json j{{"record_id", record_id},
         {"key", label.key},
         {"generated", label.generated_value},
         {"label", label.label}};
  j["reference"] = label.reference_found ? Json(label.reference_value) : Json(nullptr);
  return j;
}

}  // namespace cabs
