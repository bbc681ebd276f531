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

#ifndef CABS_PIPELINE_H_
#define CABS_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cabs/confidence.h"
#include "cabs/decode.h"
#include "cabs/jsonl.h"
#include "cabs/neural_lm.h"

namespace cabs {

enum class Stage { kGenWorld, kTrainLm, kGenConfData, kTrainCn, kDecode, kEvaluate, kCompare };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);
// Every stage in pipeline order.
std::span<const Stage> all_stages();

struct StageSeeds {
  std::uint64_t world = 1;
  std::uint64_t lm = 2;
  std::uint64_t conf_data = 3;
  std::uint64_t cn = 4;
  std::uint64_t decode = 5;
};

struct WorldConfig {
  std::size_t catalog_records = 3000;
  std::size_t audited_records = 2000;
  std::size_t test_records = 1000;
  // Probability that a catalog value was left at its attribute's default.
  double catalog_noise = 0.2;
};

// One decoding run over the test prompts.
struct RunConfig {
  std::string name;
  DecodeConfig decode;
  ConfidenceMethod estimator = ConfidenceMethod::kCp;
};

// A row of the cross-scored comparison: which run feeds each scorer column.
struct CompareRow {
  std::string method;
  std::string cp_run;
  std::string cn_run;
};

struct PipelineConfig {
  std::filesystem::path workspace = "workspace";
  // Default product schema when unset.
  std::optional<std::filesystem::path> schema_path;
  StageSeeds seeds;
  WorldConfig world;
  double deletion_rate = 0.2;
  double test_deletion_rate = 0.2;
  // Confidence data labels the top `conf_beams` token-beam hypotheses of
  // each corrupted record (1 = greedy output only).
  std::size_t conf_beams = 4;
  std::vector<double> lm_deletion_rates{0.2, 0.35, 0.5};
  NeuralLmConfig lm;
  CnTrainConfig cn;
  ReprConfig repr;
  bool export_samples = false;
  // Limits shared by every decode (confidence data and runs).
  std::size_t max_tokens = 64;
  std::size_t max_spans = 16;
  std::size_t max_span_tokens = 16;
  std::vector<RunConfig> runs;
  std::vector<CompareRow> compare;
  double tau = 0.9;

  // The four standard runs (greedy, beam4, cabs-cp4, cabs-cn4) and their
  // comparison rows.
  static PipelineConfig defaults();
  // Missing keys keep their defaults; unknown top-level keys are rejected.
  static PipelineConfig from_json(const Json& json);
  Json to_json() const;

  const RunConfig* find_run(std::string_view name) const;
};

// Fixed artifact locations under the workspace.
struct WorkspacePaths {
  std::filesystem::path root;

  std::filesystem::path schema() const { return root / "corpus" / "schema.json"; }
  std::filesystem::path catalog() const { return root / "corpus" / "catalog.jsonl"; }
  std::filesystem::path audited() const { return root / "corpus" / "audited.jsonl"; }
  std::filesystem::path test() const { return root / "corpus" / "test.jsonl"; }
  std::filesystem::path test_prompts() const { return root / "corpus" / "test_prompts.jsonl"; }
  std::filesystem::path lm() const { return root / "models" / "lm.json"; }
  std::filesystem::path lm_log() const { return root / "models" / "lm_train.json"; }
  std::filesystem::path cn() const { return root / "models" / "cn.json"; }
  std::filesystem::path cn_log() const { return root / "models" / "cn_train.json"; }
  std::filesystem::path conf_generations() const { return root / "confdata" / "generations.jsonl"; }
  std::filesystem::path conf_labels() const { return root / "confdata" / "labels.jsonl"; }
  std::filesystem::path conf_samples() const { return root / "confdata" / "samples.jsonl"; }
  std::filesystem::path run(std::string_view name) const {
    return root / "runs" / (std::string(name) + ".jsonl");
  }
  std::filesystem::path metrics() const { return root / "reports" / "metrics.json"; }
  std::filesystem::path predictions(std::string_view run, std::string_view scorer) const {
    return root / "reports" / ("preds_" + std::string(run) + "_" + std::string(scorer) + ".jsonl");
  }
  std::filesystem::path pr(std::string_view run, std::string_view scorer) const {
    return root / "reports" / ("pr_" + std::string(run) + "_" + std::string(scorer) + ".csv");
  }
  std::filesystem::path compare_json() const { return root / "reports" / "compare.json"; }
  std::filesystem::path compare_text() const { return root / "reports" / "compare.txt"; }
  std::filesystem::path manifest(Stage stage) const {
    return root / "manifests" / (std::string(to_string(stage)) + ".json");
  }
};

// Hash of everything a stage's outputs depend on: its own config section
// and, transitively, its upstream stages' hashes.
std::string stage_config_hash(Stage stage, const PipelineConfig& config);

// Stages whose artifacts `stage` reads, in pipeline order.
std::vector<Stage> upstream_stages(Stage stage, const PipelineConfig& config);

struct StageResult {
  Stage stage = Stage::kGenWorld;
  bool skipped = false;
  std::vector<std::filesystem::path> outputs;
};

// Runs one stage. MissingArtifactError (naming the upstream stage) when an
// input is absent; StaleArtifactError when an upstream manifest was written
// under a different configuration or its files changed since. A stage whose
// manifest, inputs and outputs all match is skipped unless `force`.
StageResult run_stage(Stage stage, const PipelineConfig& config, bool force = false);

std::vector<StageResult> run_all(const PipelineConfig& config, bool force = false);

// Decodes every prompt row ({record_id, retained}) and returns generation
// rows {record_id, spans: [{key, value, conf}], malformed_spans, degraded,
// truncated, tokens}. `network` is required for CN runs.
std::vector<Json> decode_prompts(const LanguageModel& model, std::span<const Json> prompts,
                                 const RunConfig& run,
                                 std::shared_ptr<const ConfidenceNetwork> network);

}  // namespace cabs

#endif  // CABS_PIPELINE_H_
