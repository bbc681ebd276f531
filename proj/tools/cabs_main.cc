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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cabs/decode.h"
#include "cabs/error.h"
#include "cabs/jsonl.h"
#include "cabs/neural_lm.h"
#include "cabs/pipeline.h"

namespace {

struct Options {
  std::string config_path;
  std::string workspace;
  bool force = false;
  std::optional<std::uint64_t> seed;

  // gen-world, gen-conf-data
  std::optional<std::size_t> n_records;
  std::optional<std::size_t> catalog_records;
  std::optional<std::size_t> audited_records;
  std::optional<std::string> schema;
  std::optional<double> deletion_rate;

  // train-cn
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<double> positive_weight;
  std::optional<std::size_t> layer;
  std::optional<std::string> repr;

  // decode
  std::optional<std::string> method;
  std::size_t beam_size = 4;
  std::size_t inner_beam_size = 0;
  std::string estimator = "cp";
  std::string cn_checkpoint;
  std::string lm_checkpoint;
  std::optional<std::size_t> max_tokens;
  std::string prompts;
  std::string out;
  std::string name;
};

cabs::PipelineConfig load_config(const Options& o) {
  cabs::PipelineConfig c = o.config_path.empty() ? cabs::PipelineConfig::defaults()
                                                 : cabs::PipelineConfig::from_json(cabs::read_json(o.config_path));
  if (!o.workspace.empty()) c.workspace = o.workspace;
  if (o.epochs) c.cn.epochs = *o.epochs;
  if (o.learning_rate) c.cn.learning_rate = *o.learning_rate;
  if (o.positive_weight) c.cn.positive_weight = *o.positive_weight;
  if (o.layer) c.repr.layer = *o.layer;
  if (o.repr) c.repr.kind = cabs::parse_repr_kind(*o.repr);
  if (o.max_tokens) c.max_tokens = *o.max_tokens;
  if (o.n_records) c.world.test_records = *o.n_records;
  if (o.catalog_records) c.world.catalog_records = *o.catalog_records;
  if (o.audited_records) c.world.audited_records = *o.audited_records;
  if (o.schema) c.schema_path = *o.schema;
  return c;
}

void set_stage_seed(cabs::Stage stage, std::uint64_t seed, cabs::PipelineConfig& c) {
  switch (stage) {
    case cabs::Stage::kGenWorld:
      c.seeds.world = seed;
      break;
    case cabs::Stage::kTrainLm:
      c.seeds.lm = seed;
      break;
    case cabs::Stage::kGenConfData:
      c.seeds.conf_data = seed;
      break;
    case cabs::Stage::kTrainCn:
      c.seeds.cn = seed;
      break;
    default:
      c.seeds.decode = seed;
      break;
  }
}

void report(const cabs::StageResult& r) {
  std::cout << cabs::to_string(r.stage) << (r.skipped ? ": up to date" : ": done") << "\n";
  for (const auto& p : r.outputs) std::cout << "  " << p.generic_string() << "\n";
}

// decode with explicit flags: one run, no manifest.
void ad_hoc_decode(const Options& o, const cabs::PipelineConfig& c) {
  const cabs::WorkspacePaths ws{c.workspace};
  cabs::RunConfig run;
  run.decode.method = cabs::parse_decode_method(*o.method);
  run.decode.beam_size = o.beam_size;
  run.decode.inner_beam_size = o.inner_beam_size;
  run.decode.max_tokens = c.max_tokens;
  run.decode.max_spans = c.max_spans;
  run.decode.max_span_tokens = c.max_span_tokens;
  run.name = o.name.empty() ? std::string(cabs::to_string(run.decode.method)) : o.name;
  if (o.estimator == "cp") {
    run.estimator = cabs::ConfidenceMethod::kCp;
  } else if (o.estimator == "cp-ln") {
    run.estimator = cabs::ConfidenceMethod::kCpLn;
  } else if (o.estimator == "cn") {
    run.estimator = cabs::ConfidenceMethod::kCn;
  } else {
    throw cabs::ContractError("unknown estimator '" + o.estimator + "'");
  }

  const std::filesystem::path lm_path = o.lm_checkpoint.empty() ? ws.lm() : std::filesystem::path(o.lm_checkpoint);
  if (!std::filesystem::exists(lm_path)) {
    throw cabs::MissingArtifactError("no language model at " + lm_path.generic_string() + "; run 'train-lm' first",
                                     "train-lm");
  }
  const cabs::NeuralLm lm = cabs::NeuralLm::from_json(cabs::read_json(lm_path));

  std::shared_ptr<const cabs::ConfidenceNetwork> net;
  if (run.estimator == cabs::ConfidenceMethod::kCn) {
    const std::filesystem::path cn_path =
        o.cn_checkpoint.empty() ? ws.cn() : std::filesystem::path(o.cn_checkpoint);
    if (!std::filesystem::exists(cn_path)) {
      throw cabs::MissingArtifactError("no confidence network at " + cn_path.generic_string() +
                                           "; run 'train-cn' first",
                                       "train-cn");
    }
    net = std::make_shared<const cabs::ConfidenceNetwork>(
        cabs::ConfidenceNetwork::from_json(cabs::read_json(cn_path)));
    if ((o.layer && *o.layer != net->repr().layer) ||
        (o.repr && cabs::parse_repr_kind(*o.repr) != net->repr().kind)) {
      throw cabs::ContractError("--layer/--repr disagree with the checkpoint's representation");
    }
  }
  const std::filesystem::path prompts = o.prompts.empty() ? ws.test_prompts() : std::filesystem::path(o.prompts);
  if (!std::filesystem::exists(prompts)) {
    throw cabs::MissingArtifactError("no prompts at " + prompts.generic_string() + "; run 'gen-world' first",
                                     "gen-world");
  }
  const std::filesystem::path out = o.out.empty() ? ws.run(run.name) : std::filesystem::path(o.out);
  cabs::write_jsonl(out, cabs::decode_prompts(lm, cabs::read_jsonl(prompts), run, net));
  std::cout << "decode: wrote " << out.generic_string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-aware sub-structure beam search: pipeline stages and decoding."};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--workspace", o.workspace, "Workspace directory (overrides the config)");
    sub->add_flag("--force", o.force, "Rerun even when outputs are up to date");
  };

  for (cabs::Stage stage : cabs::all_stages()) {
    const std::string name(cabs::to_string(stage));
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " stage");
    common(sub);
    sub->add_option("--seed", o.seed, "Seed for this stage (overrides the config)");
    if (stage == cabs::Stage::kGenWorld) {
      sub->add_option("--n-records", o.n_records, "Test records")->check(CLI::PositiveNumber);
      sub->add_option("--catalog-records", o.catalog_records, "Catalog records")->check(CLI::PositiveNumber);
      sub->add_option("--audited-records", o.audited_records, "Audited records")->check(CLI::PositiveNumber);
      sub->add_option("--schema", o.schema, "Attribute schema (JSON)")->check(CLI::ExistingFile);
      sub->add_option("--deletion-rate", o.deletion_rate, "Deletion rate of the test prompts")
          ->check(CLI::Range(0.0, 1.0));
    }
    if (stage == cabs::Stage::kGenConfData) {
      sub->add_option("--deletion-rate", o.deletion_rate, "Deletion rate of the audited records")
          ->check(CLI::Range(0.0, 1.0));
    }
    if (stage == cabs::Stage::kTrainCn) {
      sub->add_option("--epochs", o.epochs, "Training epochs");
      sub->add_option("--lr", o.learning_rate, "Learning rate");
      sub->add_option("--positive-weight", o.positive_weight, "Weight of the positive class in the loss");
      sub->add_option("--layer", o.layer, "Hidden layer read by the network");
      sub->add_option("--repr", o.repr, "Span representation")->check(CLI::IsMember({"last", "extreme", "sumdiff"}));
    }
    if (stage == cabs::Stage::kDecode) {
      sub->add_option("--method", o.method, "Decode one run with these flags instead of the configured runs")
          ->check(CLI::IsMember({"greedy", "beam", "cabs"}));
      sub->add_option("--beam-size", o.beam_size, "Beam width")->check(CLI::PositiveNumber);
      sub->add_option("--inner-beam-size", o.inner_beam_size, "Candidate beam width for cabs (0: beam size)");
      sub->add_option("--estimator", o.estimator, "Span confidence estimator")
          ->check(CLI::IsMember({"cp", "cp-ln", "cn"}));
      sub->add_option("--cn-checkpoint", o.cn_checkpoint, "Confidence network checkpoint");
      sub->add_option("--lm", o.lm_checkpoint, "Language model checkpoint");
      sub->add_option("--layer", o.layer, "Expected layer of the confidence network");
      sub->add_option("--repr", o.repr, "Expected representation of the confidence network")
          ->check(CLI::IsMember({"last", "extreme", "sumdiff"}));
      sub->add_option("--max-tokens", o.max_tokens, "Token limit per generation")->check(CLI::PositiveNumber);
      sub->add_option("--prompts", o.prompts, "Prompts JSONL");
      sub->add_option("--out", o.out, "Generations JSONL");
      sub->add_option("--name", o.name, "Run name used for the default output path");
    }
  }
  CLI::App* all = app.add_subcommand("run-all", "Run every stage in order, skipping up-to-date ones");
  common(all);

  CLI11_PARSE(app, argc, argv);

  try {
    cabs::PipelineConfig config = load_config(o);
    if (all->parsed()) {
      for (const cabs::StageResult& r : cabs::run_all(config, o.force)) report(r);
      return 0;
    }
    for (cabs::Stage stage : cabs::all_stages()) {
      if (!app.got_subcommand(std::string(cabs::to_string(stage)))) continue;
      if (o.seed) set_stage_seed(stage, *o.seed, config);
      if (o.deletion_rate) {
        (stage == cabs::Stage::kGenWorld ? config.test_deletion_rate : config.deletion_rate) = *o.deletion_rate;
      }
      if (stage == cabs::Stage::kDecode && o.method) {
        ad_hoc_decode(o, config);
      } else {
        report(cabs::run_stage(stage, config, o.force));
      }
    }
    return 0;
  } catch (const cabs::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cabs::StaleArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
