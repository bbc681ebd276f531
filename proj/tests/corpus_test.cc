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
#include <set>

#include "cabs/corpus.h"
#include "cabs/error.h"

namespace cabs {
namespace {

Record make_record(const std::string& id, std::size_t n) {
  Record r{id, {}};
  for (std::size_t i = 0; i < n; ++i) r.attributes.push_back({"K" + std::to_string(i), "v" + std::to_string(i)});
  return r;
}

Schema size_by_department() {
  return Schema({{"Department", {"Men", "Women"}, {0.5, 0.5}, std::nullopt, {}},
                 {"Size", {"Small", "Large"}, {}, "Department", {{"Men", {0.0, 1.0}}, {"Women", {0.7, 0.3}}}}});
}

TEST(GenerateWorld, SingletonDomainForcesValue) {
  const Schema schema({{"Color", {"Red"}, {}, std::nullopt, {}}});
  const auto records = generate_world(schema, 3, 7);
  ASSERT_EQ(records.size(), 3u);
  for (const Record& r : records) {
    ASSERT_EQ(r.attributes.size(), 1u);
    EXPECT_EQ(r.attributes[0], (Attribute{"Color", "Red"}));
  }
}

TEST(GenerateWorld, DegenerateConditionalIsRespected) {
  const auto records = generate_world(size_by_department(), 100, 1);
  std::size_t men = 0;
  for (const Record& r : records) {
    if (r.find("Department")->value == "Men") {
      ++men;
      EXPECT_EQ(r.find("Size")->value, "Large");
    }
  }
  EXPECT_GT(men, 0u);
}

// Marginals propagated by hand along the dependency tree.
std::map<std::string, std::vector<double>> hand_marginals(const Schema& schema) {
  std::map<std::string, std::vector<double>> out;
  std::vector<const AttributeSchema*> pending;
  for (const AttributeSchema& a : schema.attributes()) pending.push_back(&a);
  while (!pending.empty()) {
    for (auto it = pending.begin(); it != pending.end();) {
      const AttributeSchema& a = **it;
      const std::size_t n = a.value_domain.size();
      if (!a.parent) {
        out[a.name] = a.prior.empty() ? std::vector<double>(n, 1.0 / static_cast<double>(n)) : a.prior;
      } else if (out.count(*a.parent)) {
        const AttributeSchema& parent = *schema.find(*a.parent);
        std::vector<double> m(n, 0.0);
        for (std::size_t pv = 0; pv < parent.value_domain.size(); ++pv) {
          auto c = a.conditional.find(parent.value_domain[pv]);
          const std::vector<double> dist =
              c != a.conditional.end() ? c->second
                                       : (a.prior.empty() ? std::vector<double>(n, 1.0 / static_cast<double>(n))
                                                          : a.prior);
          for (std::size_t v = 0; v < n; ++v) m[v] += out[*a.parent][pv] * dist[v];
        }
        out[a.name] = m;
      } else {
        ++it;
        continue;
      }
      it = pending.erase(it);
    }
  }
  return out;
}

TEST(GenerateWorld, DefaultSchemaMarginalsWithinThreeSigma) {
  const Schema schema = Schema::default_catalog();
  ASSERT_EQ(schema.attributes().size(), 6u);
  const auto expected = hand_marginals(schema);
  const auto library = schema.marginals();
  const std::size_t n = 1000;
  const auto records = generate_world(schema, n, 42);
  for (std::size_t i = 0; i < schema.attributes().size(); ++i) {
    const AttributeSchema& a = schema.attributes()[i];
    const std::vector<double>& p = expected.at(a.name);
    for (std::size_t v = 0; v < p.size(); ++v) EXPECT_NEAR(library[i][v], p[v], 1e-12);
    for (std::size_t v = 0; v < p.size(); ++v) {
      std::size_t count = 0;
      for (const Record& r : records) count += r.find(a.name)->value == a.value_domain[v];
      const double mean = static_cast<double>(n) * p[v];
      const double sigma = std::sqrt(static_cast<double>(n) * p[v] * (1.0 - p[v]));
      EXPECT_LE(std::abs(static_cast<double>(count) - mean), 3.0 * sigma + 1e-9)
          << a.name << "=" << a.value_domain[v];
    }
  }
}

TEST(GenerateWorld, ReproducibleAndSchemaValid) {
  const Schema schema = Schema::default_catalog();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = generate_world(schema, 50, seed);
    const auto b = generate_world(schema, 50, seed);
    ASSERT_EQ(a, b);
    for (const Record& r : a) EXPECT_NO_THROW(schema.validate(r));
    std::string bytes_a;
    std::string bytes_b;
    for (const Record& r : a) bytes_a += to_json(r).dump() + "\n";
    for (const Record& r : b) bytes_b += to_json(r).dump() + "\n";
    EXPECT_EQ(bytes_a, bytes_b);
  }
}

TEST(GenerateWorld, RejectsZeroRecords) {
  EXPECT_THROW(generate_world(size_by_department(), 0, 1), ContractError);
}

TEST(Schema, RejectsInvalidSchemas) {
  EXPECT_THROW(Schema({{"Color", {}, {}, std::nullopt, {}}}), SchemaError);
  EXPECT_THROW(Schema({{"Size", {"S"}, {}, "Department", {}}}), SchemaError);
  EXPECT_THROW(Schema({{"Color", {"Red", "Blue"}, {0.5, 0.6}, std::nullopt, {}}}), SchemaError);
  EXPECT_THROW(Schema({{"Color", {"Red"}, {}, std::nullopt, {}}, {"Color", {"Blue"}, {}, std::nullopt, {}}}),
               SchemaError);
  EXPECT_THROW(Schema({{"A", {"x"}, {}, "B", {}}, {"B", {"y"}, {}, "A", {}}}), SchemaError);
}

TEST(Schema, JsonRoundTrip) {
  const Schema schema = Schema::default_catalog();
  const Schema back = Schema::from_json(schema.to_json());
  EXPECT_EQ(back.to_json().dump(), schema.to_json().dump());
}

TEST(Schema, ValidateRejectsForeignValues) {
  const Schema schema = size_by_department();
  EXPECT_THROW(schema.validate(Record{"r", {{"Department", "Pets"}, {"Size", "Large"}}}), SchemaError);
  EXPECT_THROW(schema.validate(Record{"r", {{"Colour", "Red"}}}), SchemaError);
}

TEST(Corrupt, TenAttributesLoseTwo) {
  const CorruptedRecord c = corrupt(make_record("r", 10), 0.2, 3);
  EXPECT_EQ(c.deleted_keys.size(), 2u);
  EXPECT_EQ(c.retained.size(), 8u);
}

TEST(Corrupt, MinimumOfOne) {
  const CorruptedRecord c = corrupt(make_record("r", 2), 0.2, 0);
  EXPECT_EQ(c.deleted_keys.size(), 1u);
}

TEST(Corrupt, RetainedKeepOriginalOrder) {
  const Record base = make_record("r", 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CorruptedRecord c = corrupt(base, 0.2, seed);
    ASSERT_EQ(c.deleted_keys.size(), 1u);
    ASSERT_EQ(c.retained.size(), 4u);
    std::vector<Attribute> expected;
    for (const Attribute& a : base.attributes) {
      if (a.key != c.deleted_keys[0]) expected.push_back(a);
    }
    EXPECT_EQ(c.retained, expected);
  }
}

TEST(Corrupt, CountRuleAndDeterminismProperty) {
  for (std::size_t n = 1; n <= 30; ++n) {
    for (double rate : {0.1, 0.2, 0.25, 0.5, 0.9}) {
      const Record base = make_record("r", n);
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const CorruptedRecord c = corrupt(base, rate, seed);
        const auto expected =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * rate + 0.5)));
        EXPECT_EQ(c.deleted_keys.size(), std::min(expected, n));
        EXPECT_EQ(c.deleted_keys.size() + c.retained.size(), n);
        const std::set<std::string> unique(c.deleted_keys.begin(), c.deleted_keys.end());
        EXPECT_EQ(unique.size(), c.deleted_keys.size());
        const CorruptedRecord again = corrupt(base, rate, seed);
        EXPECT_EQ(again.deleted_keys, c.deleted_keys);
        EXPECT_EQ(again.retained, c.retained);
      }
    }
  }
}

TEST(Corrupt, DeletionIsRoughlyUniform) {
  const Record base = make_record("r", 5);
  std::map<std::string, int> hits;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) ++hits[corrupt(base, 0.2, seed).deleted_keys[0]];
  for (const auto& [key, count] : hits) EXPECT_NEAR(count, 1000, 4 * std::sqrt(5000 * 0.2 * 0.8)) << key;
}

TEST(Corrupt, Errors) {
  EXPECT_THROW(corrupt(Record{"r", {}}, 0.2, 1), EmptyInputError);
  EXPECT_THROW(corrupt(make_record("r", 3), 0.0, 1), ContractError);
  EXPECT_THROW(corrupt(make_record("r", 3), 1.0, 1), ContractError);
}

TEST(LabelGeneration, PaperExamples) {
  const Record ref{"r", {{"Size", "X-Large"}, {"Material", "Polyester"}}};
  const std::vector<Attribute> gen{{"Size", "X-Large"}, {"Material", "Cotton"}, {"Size", "  x-large "}};
  const auto labels = label_generation(ref, gen);
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0].label, 1);
  EXPECT_EQ(labels[1].label, 0);
  EXPECT_EQ(labels[1].reference_value, "Polyester");
  EXPECT_EQ(labels[2].label, 1);
}

TEST(LabelGeneration, UnreferencedKeysGetZero) {
  const Record ref{"r", {{"Size", "Large"}}};
  const auto labels = label_generation(ref, std::vector<Attribute>{{"Color", "Red"}});
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].label, 0);
  EXPECT_FALSE(labels[0].reference_found);
  EXPECT_EQ(labels[0].reference_value, "");
}

TEST(LabelGeneration, SymmetricUnderNormalization) {
  const std::vector<std::string> variants{"light blue", "Light Blue", "  LIGHT   blue", "light\tblue ", "Light  Blue"};
  for (const std::string& ref_value : variants) {
    for (const std::string& gen_value : variants) {
      const Record ref{"r", {{"Color", ref_value}}};
      const auto labels = label_generation(ref, std::vector<Attribute>{{"Color", gen_value}});
      EXPECT_EQ(labels[0].label, 1) << ref_value << " vs " << gen_value;
    }
  }
  EXPECT_EQ(normalize_value("  A \t b  "), "a b");
}

TEST(DefaultFillNoise, ReplacesWithFirstValue) {
  const Schema schema = size_by_department();
  const Record r{"r", {{"Department", "Women"}, {"Size", "Large"}}};
  const Record all = apply_default_fill_noise(r, schema, 0.999999, 1);
  EXPECT_EQ(all.find("Department")->value, "Men");
  EXPECT_EQ(all.find("Size")->value, "Small");
  EXPECT_EQ(apply_default_fill_noise(r, schema, 0.0, 1), r);
}

TEST(RecordJson, RoundTrip) {
  const Record r{"r7", {{"Color", "Light Blue"}, {"Size", "M"}}};
  EXPECT_EQ(record_from_json(to_json(r)), r);
  const Json label = label_to_json("r7", FaithfulnessLabel{"Color", "Red", "Light Blue", true, 0});
  EXPECT_EQ(label.at("record_id"), "r7");
  EXPECT_EQ(label.at("generated"), "Red");
  EXPECT_EQ(label.at("reference"), "Light Blue");
  EXPECT_EQ(label.at("label"), 0);
}

}  // namespace
}  // namespace cabs
