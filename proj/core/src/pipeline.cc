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

#include "cabs/pipeline.h"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <set>

#include "cabs/corpus.h"
#include "cabs/digest.h"
#include "cabs/error.h"
#include "cabs/eval.h"
#include "cabs/record_task.h"
#include "cabs/rng.h"

namespace cabs {
namespace fs = std::filesystem;
namespace {

constexpr std::array<Stage, 7> kStages{Stage::kGenWorld,    Stage::kTrainLm,  Stage::kGenConfData,
                                       Stage::kTrainCn,     Stage::kDecode,   Stage::kEvaluate,
                                       Stage::kCompare};

constexpr std::array<ConfidenceMethod, 3> kScorers{ConfidenceMethod::kCp, ConfidenceMethod::kCpLn,
                                                   ConfidenceMethod::kCn};

ConfidenceMethod parse_method(std::string_view name) {
  if (name == "cp") return ConfidenceMethod::kCp;
  if (name == "cp-ln") return ConfidenceMethod::kCpLn;
  if (name == "cn") return ConfidenceMethod::kCn;
  throw ContractError("unknown estimator '" + std::string(name) + "'");
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Json run_to_json(const RunConfig& r) {
  return Json{{"name", r.name},
              {"method", to_string(r.decode.method)},
              {"beam_size", r.decode.beam_size},
              {"inner_beam_size", r.decode.inner_beam_size},
              {"estimator", to_string(r.estimator)},
              {"normalize_by_spans", r.decode.normalize_by_spans}};
}

RunConfig run_from_json(const Json& j) {
  RunConfig r;
  r.name = j.at("name").get<std::string>();
  if (r.name.empty() || r.name.find_first_of("/\\ ") != std::string::npos) {
    throw FormatError("run name '" + r.name + "' must be a plain file stem");
  }
  r.decode.method = parse_decode_method(j.at("method").get<std::string>());
  read_opt(j, "beam_size", r.decode.beam_size);
  read_opt(j, "inner_beam_size", r.decode.inner_beam_size);
  read_opt(j, "normalize_by_spans", r.decode.normalize_by_spans);
  if (j.contains("estimator")) r.estimator = parse_method(j.at("estimator").get<std::string>());
  return r;
}

Schema load_schema_source(const PipelineConfig& config) {
  return config.schema_path ? Schema::from_json(read_json(*config.schema_path)) : Schema::default_catalog();
}

std::string rel(const fs::path& root, const fs::path& p) { return fs::relative(p, root).generic_string(); }

// ---- stage inputs --------------------------------------------------------

std::vector<Record> load_records(const fs::path& path) {
  std::vector<Record> out;
  for (const Json& j : read_jsonl(path)) out.push_back(record_from_json(j));
  return out;
}

std::vector<Attribute> attributes_from_json(const Json& j) {
  std::vector<Attribute> out;
  for (const Json& a : j) out.push_back(attribute_from_json(a));
  return out;
}

std::vector<TokenId> ids_from_json(const Json& j, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const Json& t : j) ids.push_back(vocab.id(t.get<std::string>()));
  return ids;
}

Json tokens_to_json(std::span<const TokenId> ids, const Vocabulary& vocab) {
  Json out = Json::array();
  for (TokenId t : ids) out.push_back(vocab.str(t));
  return out;
}

NeuralLm load_lm(const WorkspacePaths& ws) { return NeuralLm::from_json(read_json(ws.lm())); }

std::shared_ptr<const ConfidenceNetwork> load_cn(const WorkspacePaths& ws, const LanguageModel& lm) {
  auto net = std::make_shared<const ConfidenceNetwork>(ConfidenceNetwork::from_json(read_json(ws.cn())));
  check_compatible(*net, lm);
  return net;
}

std::unique_ptr<Estimator> make_estimator(ConfidenceMethod method, std::shared_ptr<const ConfidenceNetwork> net) {
  switch (method) {
    case ConfidenceMethod::kCp:
      return std::make_unique<CpEstimator>();
    case ConfidenceMethod::kCpLn:
      return std::make_unique<CpLnEstimator>();
    case ConfidenceMethod::kCn:
      if (!net) throw ContractError("the cn estimator needs a confidence network checkpoint");
      return std::make_unique<CnEstimator>(std::move(net));
  }
  throw ContractError("unknown estimator");
}

// ---- stages --------------------------------------------------------------

std::vector<fs::path> gen_world(const PipelineConfig& config, const WorkspacePaths& ws) {
  const Schema schema = load_schema_source(config);
  const std::uint64_t seed = config.seeds.world;
  const WorldConfig& w = config.world;

  std::vector<Record> catalog = generate_world(schema, w.catalog_records, mix_seed(seed, 0), "c");
  const std::uint64_t noise_seed = mix_seed(seed, 1);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    catalog[i] = apply_default_fill_noise(catalog[i], schema, w.catalog_noise, mix_seed(noise_seed, i));
  }
  const std::vector<Record> audited = generate_world(schema, w.audited_records, mix_seed(seed, 2), "a");
  const std::vector<Record> test = generate_world(schema, w.test_records, mix_seed(seed, 3), "t");

  auto rows = [](const std::vector<Record>& records) {
    std::vector<Json> out;
    out.reserve(records.size());
    for (const Record& r : records) out.push_back(to_json(r));
    return out;
  };
  std::vector<Json> prompts;
  const std::uint64_t prompt_seed = mix_seed(seed, 4);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const CorruptedRecord c = corrupt(test[i], config.test_deletion_rate, mix_seed(prompt_seed, i));
    Json retained = Json::array();
    for (const Attribute& a : c.retained) retained.push_back(to_json(a));
    prompts.push_back(Json{{"record_id", test[i].record_id}, {"retained", std::move(retained)},
                           {"deleted_keys", c.deleted_keys}});
  }
  write_json(ws.schema(), schema.to_json());
  write_jsonl(ws.catalog(), rows(catalog));
  write_jsonl(ws.audited(), rows(audited));
  write_jsonl(ws.test(), rows(test));
  write_jsonl(ws.test_prompts(), prompts);
  return {ws.schema(), ws.catalog(), ws.audited(), ws.test(), ws.test_prompts()};
}

std::vector<fs::path> train_lm(const PipelineConfig& config, const WorkspacePaths& ws) {
  const Schema schema = Schema::from_json(read_json(ws.schema()));
  const Vocabulary vocab = build_vocabulary(schema);
  const std::vector<Record> catalog = load_records(ws.catalog());
  const std::vector<LmExample> corpus =
      build_lm_corpus(catalog, config.lm_deletion_rates, mix_seed(config.seeds.lm, 1), vocab);
  NeuralLmConfig lm_config = config.lm;
  lm_config.seed = config.seeds.lm;
  const NeuralLm::TrainResult trained = NeuralLm::train(corpus, vocab, lm_config);
  write_json(ws.lm(), trained.model.to_json());
  write_json(ws.lm_log(), Json{{"examples", corpus.size()}, {"epoch_losses", trained.epoch_losses}});
  return {ws.lm(), ws.lm_log()};
}

std::vector<fs::path> gen_conf_data(const PipelineConfig& config, const WorkspacePaths& ws) {
  const NeuralLm lm = load_lm(ws);
  const Vocabulary& vocab = lm.vocab();
  const std::vector<Record> audited = load_records(ws.audited());
  DecodeConfig decode;
  decode.max_tokens = config.max_tokens;
  decode.beam_size = config.conf_beams;
  if (decode.beam_size == 0) throw ContractError("conf_beams must be >= 1");

  std::vector<Json> generations;
  std::vector<Json> labels;
  const std::uint64_t seed = config.seeds.conf_data;
  for (std::size_t i = 0; i < audited.size(); ++i) {
    const Record& record = audited[i];
    const CorruptedRecord c = corrupt(record, config.deletion_rate, mix_seed(seed, i));
    const std::vector<TokenId> prompt = encode_prompt(c.retained, vocab);
    std::vector<GenerationTrace> traces;
    if (decode.beam_size == 1) {
      traces.push_back(greedy_decode(lm, prompt, decode));
    } else {
      traces = token_beam_decode(lm, prompt, decode);
      if (traces.size() > decode.beam_size) traces.resize(decode.beam_size);
    }
    Json retained = Json::array();
    for (const Attribute& a : c.retained) retained.push_back(to_json(a));
    for (std::size_t rank = 0; rank < traces.size(); ++rank) {
      const LabeledGeneration g = label_trace(record, std::move(traces[rank]), vocab);
      generations.push_back(Json{{"record_id", record.record_id},
                                 {"rank", rank},
                                 {"n_attributes", record.attributes.size()},
                                 {"deleted_keys", c.deleted_keys},
                                 {"retained", retained},
                                 {"tokens", tokens_to_json(g.trace.token_ids(), vocab)},
                                 {"truncated", g.trace.truncated}});
      for (const FaithfulnessLabel& l : g.labels) {
        Json row = label_to_json(record.record_id, l);
        row["rank"] = rank;
        labels.push_back(std::move(row));
      }
    }
  }
  write_jsonl(ws.conf_generations(), generations);
  write_jsonl(ws.conf_labels(), labels);
  return {ws.conf_generations(), ws.conf_labels()};
}

std::vector<fs::path> train_cn(const PipelineConfig& config, const WorkspacePaths& ws) {
  const NeuralLm lm = load_lm(ws);
  const Vocabulary& vocab = lm.vocab();
  std::map<std::string, Record> audited;
  for (Record& r : load_records(ws.audited())) audited.emplace(r.record_id, std::move(r));

  std::vector<LabeledGeneration> generations;
  for (const Json& row : read_jsonl(ws.conf_generations())) {
    const std::string id = row.at("record_id").get<std::string>();
    const auto it = audited.find(id);
    if (it == audited.end()) throw FormatError("confidence data names unknown record '" + id + "'");
    const std::vector<TokenId> prompt = encode_prompt(attributes_from_json(row.at("retained")), vocab);
    const std::vector<TokenId> tokens = ids_from_json(row.at("tokens"), vocab);
    generations.push_back(label_trace(it->second, teacher_force(lm, prompt, tokens), vocab));
  }
  const TrainingSet set = build_training_set(generations, vocab, config.repr);
  CnTrainConfig cn_config = config.cn;
  cn_config.seed = config.seeds.cn;
  const CnTrainResult trained = cn_train(set.samples, config.repr, cn_config);
  check_compatible(trained.network, lm);

  std::size_t positives = 0;
  for (const ConfidenceSample& s : set.samples) positives += static_cast<std::size_t>(s.label);
  write_json(ws.cn(), trained.network.to_json());
  write_json(ws.cn_log(), Json{{"samples", set.samples.size()},
                               {"positives", positives},
                               {"skipped_malformed", set.skipped_malformed},
                               {"skipped_unreferenced", set.skipped_unreferenced},
                               {"train_accuracy", accuracy(trained.network, set.samples)},
                               {"epoch_losses", trained.epoch_losses}});
  std::vector<fs::path> outputs{ws.cn(), ws.cn_log()};
  if (config.export_samples) {
    std::vector<Json> rows;
    rows.reserve(set.samples.size());
    for (const ConfidenceSample& s : set.samples) rows.push_back(sample_to_json(s));
    write_jsonl(ws.conf_samples(), rows);
    outputs.push_back(ws.conf_samples());
  }
  return outputs;
}

bool uses_cn(const PipelineConfig& config) {
  return std::any_of(config.runs.begin(), config.runs.end(),
                     [](const RunConfig& r) { return r.estimator == ConfidenceMethod::kCn; });
}

RunConfig with_limits(RunConfig run, const PipelineConfig& config) {
  run.decode.max_tokens = config.max_tokens;
  run.decode.max_spans = config.max_spans;
  run.decode.max_span_tokens = config.max_span_tokens;
  return run;
}

std::vector<fs::path> decode_runs(const PipelineConfig& config, const WorkspacePaths& ws) {
  const NeuralLm lm = load_lm(ws);
  const std::shared_ptr<const ConfidenceNetwork> net = uses_cn(config) ? load_cn(ws, lm) : nullptr;
  const std::vector<Json> prompts = read_jsonl(ws.test_prompts());
  std::vector<fs::path> outputs;
  for (const RunConfig& run : config.runs) {
    write_jsonl(ws.run(run.name), decode_prompts(lm, prompts, with_limits(run, config), net));
    outputs.push_back(ws.run(run.name));
  }
  return outputs;
}

std::vector<fs::path> evaluate(const PipelineConfig& config, const WorkspacePaths& ws) {
  const NeuralLm lm = load_lm(ws);
  const Vocabulary& vocab = lm.vocab();
  const std::shared_ptr<const ConfidenceNetwork> net = load_cn(ws, lm);
  std::map<std::string, Record> test;
  for (Record& r : load_records(ws.test())) test.emplace(r.record_id, std::move(r));
  std::map<std::string, std::vector<TokenId>> prompts;
  for (const Json& row : read_jsonl(ws.test_prompts())) {
    prompts.emplace(row.at("record_id").get<std::string>(),
                    encode_prompt(attributes_from_json(row.at("retained")), vocab));
  }
  std::vector<std::unique_ptr<Estimator>> scorers;
  for (ConfidenceMethod m : kScorers) scorers.push_back(make_estimator(m, net));

  std::vector<RunPredictions> all;
  std::vector<fs::path> outputs;
  for (const RunConfig& run : config.runs) {
    std::vector<RunPredictions> per_scorer;
    for (const auto& s : scorers) per_scorer.push_back({run.name, std::string(to_string(s->method())), {}});
    for (const Json& row : read_jsonl(ws.run(run.name))) {
      const std::string id = row.at("record_id").get<std::string>();
      const auto rec = test.find(id);
      const auto prompt = prompts.find(id);
      if (rec == test.end() || prompt == prompts.end()) {
        throw FormatError("run '" + run.name + "' names unknown record '" + id + "'");
      }
      const GenerationTrace trace = teacher_force(lm, prompt->second, ids_from_json(row.at("tokens"), vocab));
      for (std::size_t k = 0; k < scorers.size(); ++k) {
        std::vector<Attribute> generated;
        std::vector<double> scores;
        for (const ScoredSpan& s : score_existing(trace, *scorers[k], vocab)) {
          if (!s.span.well_formed) continue;
          auto [key, value] = render(s.span, vocab);
          generated.push_back({std::move(key), std::move(value)});
          scores.push_back(s.score.value);
        }
        const std::vector<FaithfulnessLabel> labels = label_generation(rec->second, generated);
        for (std::size_t i = 0; i < labels.size(); ++i) {
          per_scorer[k].predictions.push_back(
              {id, labels[i].key, labels[i].generated_value, scores[i], labels[i].label});
        }
      }
    }
    for (RunPredictions& p : per_scorer) {
      std::vector<Json> rows;
      rows.reserve(p.predictions.size());
      for (const ScoredPrediction& s : p.predictions) rows.push_back(to_json(s));
      write_jsonl(ws.predictions(p.method, p.scorer), rows);
      outputs.push_back(ws.predictions(p.method, p.scorer));
      all.push_back(std::move(p));
    }
  }
  const ComparisonReport report = compare_methods(all, config.tau);
  for (const MethodMetrics& m : report.rows) {
    write_text(ws.pr(m.method, m.scorer), pr_csv(m.curve));
    outputs.push_back(ws.pr(m.method, m.scorer));
  }
  write_json(ws.metrics(), report.to_json());
  outputs.push_back(ws.metrics());
  return outputs;
}

std::vector<fs::path> compare(const PipelineConfig& config, const WorkspacePaths& ws) {
  const Json metrics = read_json(ws.metrics());
  auto lookup = [&](const std::string& run, const std::string& scorer) {
    for (const Json& row : metrics.at("rows")) {
      if (row.at("method") == run && row.at("scorer") == scorer) return row;
    }
    throw MissingArtifactError("metrics have no row for run '" + run + "' scored by " + scorer, "evaluate");
  };
  ComparisonReport grid;
  grid.tau = config.tau;
  Json rows = Json::array();
  for (const CompareRow& row : config.compare) {
    Json out{{"method", row.method}};
    for (const auto& [scorer, run] : {std::pair{std::string("cp"), row.cp_run}, std::pair{std::string("cn"), row.cn_run}}) {
      const Json m = lookup(run, scorer);
      MethodMetrics cell;
      cell.method = row.method;
      cell.scorer = scorer;
      cell.tau = config.tau;
      cell.ap = m.at("ap").get<double>();
      cell.r_at_p = m.at("r_at_p").get<double>();
      grid.rows.push_back(cell);
      out[scorer] = Json{{"run", run}, {"ap", cell.ap}, {"r_at_p", cell.r_at_p}};
    }
    rows.push_back(std::move(out));
  }
  write_json(ws.compare_json(), Json{{"tau", config.tau}, {"rows", std::move(rows)}});
  write_text(ws.compare_text(), grid.to_text());
  return {ws.compare_json(), ws.compare_text()};
}

// ---- manifests -----------------------------------------------------------

Json section(Stage stage, const PipelineConfig& config) {
  const Json full = config.to_json();
  switch (stage) {
    case Stage::kGenWorld:
      return Json{{"seed", config.seeds.world},
                  {"world", full.at("world")},
                  {"schema", load_schema_source(config).to_json()},
                  {"test_deletion_rate", config.test_deletion_rate}};
    case Stage::kTrainLm:
      return Json{{"seed", config.seeds.lm}, {"lm", full.at("lm")}, {"lm_deletion_rates", config.lm_deletion_rates}};
    case Stage::kGenConfData:
      return Json{{"seed", config.seeds.conf_data},
                  {"deletion_rate", config.deletion_rate},
                  {"conf_beams", config.conf_beams},
                  {"max_tokens", config.max_tokens}};
    case Stage::kTrainCn:
      return Json{{"seed", config.seeds.cn}, {"cn", full.at("cn")}};
    case Stage::kDecode:
      return Json{{"seed", config.seeds.decode}, {"decode", full.at("decode")}, {"runs", full.at("runs")}};
    case Stage::kEvaluate:
      return Json{{"runs", full.at("runs")}, {"tau", config.tau}};
    case Stage::kCompare:
      return Json{{"compare", full.at("compare")}, {"tau", config.tau}};
  }
  return Json();
}

std::uint64_t stage_seed(Stage stage, const PipelineConfig& config) {
  switch (stage) {
    case Stage::kGenWorld:
      return config.seeds.world;
    case Stage::kTrainLm:
      return config.seeds.lm;
    case Stage::kGenConfData:
      return config.seeds.conf_data;
    case Stage::kTrainCn:
      return config.seeds.cn;
    default:
      return config.seeds.decode;
  }
}

using Digests = std::map<std::string, std::string>;

Digests digests(const fs::path& root, std::span<const fs::path> files) {
  Digests out;
  for (const fs::path& f : files) out[rel(root, f)] = file_sha256(f);
  return out;
}

// Upstream outputs, verified against their manifests.
Digests verified_inputs(Stage stage, const PipelineConfig& config, const WorkspacePaths& ws) {
  Digests inputs;
  for (Stage up : upstream_stages(stage, config)) {
    const std::string name(to_string(up));
    const fs::path mpath = ws.manifest(up);
    if (!fs::exists(mpath)) {
      throw MissingArtifactError("stage '" + std::string(to_string(stage)) + "' needs the outputs of '" + name +
                                     "'; run '" + name + "' first",
                                 name);
    }
    const Json manifest = read_json(mpath);
    if (manifest.at("config_hash").get<std::string>() != stage_config_hash(up, config)) {
      throw StaleArtifactError("outputs of '" + name + "' were produced under a different configuration; rerun '" +
                                   name + "'",
                               name);
    }
    for (const auto& [path, digest] : manifest.at("outputs").items()) {
      const fs::path file = ws.root / path;
      if (!fs::exists(file)) {
        throw MissingArtifactError("'" + path + "' is missing; rerun '" + name + "'", name);
      }
      if (file_sha256(file) != digest.get<std::string>()) {
        throw StaleArtifactError("'" + path + "' changed since '" + name + "' wrote it; rerun '" + name + "'", name);
      }
      inputs[path] = digest.get<std::string>();
    }
  }
  return inputs;
}

bool up_to_date(Stage stage, const std::string& hash, const Digests& inputs, const WorkspacePaths& ws,
                std::vector<fs::path>* outputs) {
  const fs::path mpath = ws.manifest(stage);
  if (!fs::exists(mpath)) return false;
  const Json manifest = read_json(mpath);
  if (manifest.at("config_hash").get<std::string>() != hash) return false;
  if (manifest.at("inputs").get<Digests>() != inputs) return false;
  outputs->clear();
  for (const auto& [path, digest] : manifest.at("outputs").items()) {
    const fs::path file = ws.root / path;
    if (!fs::exists(file) || file_sha256(file) != digest.get<std::string>()) return false;
    outputs->push_back(file);
  }
  return true;
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kGenWorld:
      return "gen-world";
    case Stage::kTrainLm:
      return "train-lm";
    case Stage::kGenConfData:
      return "gen-conf-data";
    case Stage::kTrainCn:
      return "train-cn";
    case Stage::kDecode:
      return "decode";
    case Stage::kEvaluate:
      return "evaluate";
    case Stage::kCompare:
      return "compare";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kStages) {
    if (to_string(s) == name) return s;
  }
  throw ContractError("unknown stage '" + std::string(name) + "'");
}

std::span<const Stage> all_stages() { return kStages; }

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  RunConfig greedy{"greedy", {}, ConfidenceMethod::kCp};
  RunConfig beam{"beam4", {}, ConfidenceMethod::kCp};
  beam.decode.method = DecodeMethod::kTokenBeam;
  beam.decode.beam_size = 4;
  RunConfig cabs_cp{"cabs-cp4", {}, ConfidenceMethod::kCp};
  cabs_cp.decode.method = DecodeMethod::kCabs;
  cabs_cp.decode.beam_size = 4;
  RunConfig cabs_cn = cabs_cp;
  cabs_cn.name = "cabs-cn4";
  cabs_cn.estimator = ConfidenceMethod::kCn;
  c.runs = {greedy, beam, cabs_cp, cabs_cn};
  c.compare = {{"greedy", "greedy", "greedy"}, {"beam-4", "beam4", "beam4"}, {"cabs-4", "cabs-cn4", "cabs-cp4"}};
  return c;
}

PipelineConfig PipelineConfig::from_json(const Json& json) {
  static const std::set<std::string> kKeys{"workspace", "schema", "seeds", "world", "deletion_rate",
                                           "test_deletion_rate", "conf_beams", "lm_deletion_rates", "lm", "cn", "decode",
                                           "runs", "compare", "tau"};
  try {
    for (const auto& [key, value] : json.items()) {
      if (!kKeys.count(key)) throw FormatError("unknown config key '" + key + "'");
    }
    PipelineConfig c = defaults();
    if (json.contains("workspace")) c.workspace = json.at("workspace").get<std::string>();
    if (json.contains("schema") && !json.at("schema").is_null()) c.schema_path = json.at("schema").get<std::string>();
    if (json.contains("seeds")) {
      const Json& s = json.at("seeds");
      read_opt(s, "world", c.seeds.world);
      read_opt(s, "lm", c.seeds.lm);
      read_opt(s, "conf_data", c.seeds.conf_data);
      read_opt(s, "cn", c.seeds.cn);
      read_opt(s, "decode", c.seeds.decode);
    }
    if (json.contains("world")) {
      const Json& w = json.at("world");
      read_opt(w, "catalog_records", c.world.catalog_records);
      read_opt(w, "audited_records", c.world.audited_records);
      read_opt(w, "test_records", c.world.test_records);
      read_opt(w, "catalog_noise", c.world.catalog_noise);
    }
    read_opt(json, "deletion_rate", c.deletion_rate);
    read_opt(json, "test_deletion_rate", c.test_deletion_rate);
    read_opt(json, "conf_beams", c.conf_beams);
    read_opt(json, "lm_deletion_rates", c.lm_deletion_rates);
    if (json.contains("lm")) {
      const Json& l = json.at("lm");
      read_opt(l, "width", c.lm.width);
      read_opt(l, "depth", c.lm.depth);
      read_opt(l, "context_window", c.lm.context_window);
      read_opt(l, "epochs", c.lm.epochs);
      read_opt(l, "learning_rate", c.lm.learning_rate);
      read_opt(l, "batch_size", c.lm.batch_size);
      read_opt(l, "grad_clip", c.lm.grad_clip);
      if (l.contains("optimizer")) c.lm.optimizer = parse_optimizer(l.at("optimizer").get<std::string>());
    }
    if (json.contains("cn")) {
      const Json& n = json.at("cn");
      read_opt(n, "hidden", c.cn.hidden);
      read_opt(n, "epochs", c.cn.epochs);
      read_opt(n, "learning_rate", c.cn.learning_rate);
      read_opt(n, "batch_size", c.cn.batch_size);
      read_opt(n, "positive_weight", c.cn.positive_weight);
      read_opt(n, "layer", c.repr.layer);
      read_opt(n, "export_samples", c.export_samples);
      if (n.contains("repr")) c.repr.kind = parse_repr_kind(n.at("repr").get<std::string>());
    }
    if (json.contains("decode")) {
      const Json& d = json.at("decode");
      read_opt(d, "max_tokens", c.max_tokens);
      read_opt(d, "max_spans", c.max_spans);
      read_opt(d, "max_span_tokens", c.max_span_tokens);
    }
    if (json.contains("runs")) {
      c.runs.clear();
      for (const Json& r : json.at("runs")) c.runs.push_back(run_from_json(r));
    }
    if (json.contains("compare")) {
      c.compare.clear();
      for (const Json& r : json.at("compare")) {
        c.compare.push_back({r.at("method").get<std::string>(), r.at("cp").get<std::string>(),
                             r.at("cn").get<std::string>()});
      }
    }
    read_opt(json, "tau", c.tau);
    std::set<std::string> names;
    for (const RunConfig& r : c.runs) {
      if (!names.insert(r.name).second) throw FormatError("duplicate run name '" + r.name + "'");
    }
    for (const CompareRow& r : c.compare) {
      if (!names.count(r.cp_run) || !names.count(r.cn_run)) {
        throw FormatError("compare row '" + r.method + "' names an unknown run");
      }
    }
    if (!(c.tau > 0.0 && c.tau <= 1.0)) throw FormatError("tau must lie in (0, 1]");
    return c;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("pipeline config: ") + e.what());
  }
}

Json PipelineConfig::to_json() const {
  Json runs_json = Json::array();
  for (const RunConfig& r : runs) runs_json.push_back(run_to_json(r));
  Json compare_json = Json::array();
  for (const CompareRow& r : compare) compare_json.push_back(Json{{"method", r.method}, {"cp", r.cp_run}, {"cn", r.cn_run}});
  return Json{{"workspace", workspace.generic_string()},
              {"schema", schema_path ? Json(schema_path->generic_string()) : Json(nullptr)},
              {"seeds",
               {{"world", seeds.world},
                {"lm", seeds.lm},
                {"conf_data", seeds.conf_data},
                {"cn", seeds.cn},
                {"decode", seeds.decode}}},
              {"world",
               {{"catalog_records", world.catalog_records},
                {"audited_records", world.audited_records},
                {"test_records", world.test_records},
                {"catalog_noise", world.catalog_noise}}},
              {"deletion_rate", deletion_rate},
              {"test_deletion_rate", test_deletion_rate},
              {"conf_beams", conf_beams},
              {"lm_deletion_rates", lm_deletion_rates},
              {"lm",
               {{"width", lm.width},
                {"depth", lm.depth},
                {"context_window", lm.context_window},
                {"epochs", lm.epochs},
                {"learning_rate", lm.learning_rate},
                {"batch_size", lm.batch_size},
                {"grad_clip", lm.grad_clip},
                {"optimizer", lm.optimizer == LmOptimizer::kAdam ? "adam" : "sgd"}}},
              {"cn",
               {{"hidden", cn.hidden},
                {"epochs", cn.epochs},
                {"learning_rate", cn.learning_rate},
                {"batch_size", cn.batch_size},
                {"positive_weight", cn.positive_weight},
                {"repr", to_string(repr.kind)},
                {"layer", repr.layer},
                {"export_samples", export_samples}}},
              {"decode", {{"max_tokens", max_tokens}, {"max_spans", max_spans}, {"max_span_tokens", max_span_tokens}}},
              {"runs", std::move(runs_json)},
              {"compare", std::move(compare_json)},
              {"tau", tau}};
}

const RunConfig* PipelineConfig::find_run(std::string_view name) const {
  for (const RunConfig& r : runs) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<Stage> upstream_stages(Stage stage, const PipelineConfig& config) {
  switch (stage) {
    case Stage::kGenWorld:
      return {};
    case Stage::kTrainLm:
      return {Stage::kGenWorld};
    case Stage::kGenConfData:
      return {Stage::kGenWorld, Stage::kTrainLm};
    case Stage::kTrainCn:
      return {Stage::kGenWorld, Stage::kTrainLm, Stage::kGenConfData};
    case Stage::kDecode:
      if (uses_cn(config)) return {Stage::kGenWorld, Stage::kTrainLm, Stage::kTrainCn};
      return {Stage::kGenWorld, Stage::kTrainLm};
    case Stage::kEvaluate:
      return {Stage::kGenWorld, Stage::kTrainLm, Stage::kTrainCn, Stage::kDecode};
    case Stage::kCompare:
      return {Stage::kEvaluate};
  }
  return {};
}

std::string stage_config_hash(Stage stage, const PipelineConfig& config) {
  std::string material(to_string(stage));
  material += "\n" + section(stage, config).dump() + "\n";
  for (Stage up : upstream_stages(stage, config)) material += stage_config_hash(up, config) + "\n";
  return sha256_hex(material);
}

StageResult run_stage(Stage stage, const PipelineConfig& config, bool force) {
  const WorkspacePaths ws{config.workspace};
  const Digests inputs = verified_inputs(stage, config, ws);
  const std::string hash = stage_config_hash(stage, config);
  StageResult result;
  result.stage = stage;
  if (!force && up_to_date(stage, hash, inputs, ws, &result.outputs)) {
    result.skipped = true;
    return result;
  }
  switch (stage) {
    case Stage::kGenWorld:
      result.outputs = gen_world(config, ws);
      break;
    case Stage::kTrainLm:
      result.outputs = train_lm(config, ws);
      break;
    case Stage::kGenConfData:
      result.outputs = gen_conf_data(config, ws);
      break;
    case Stage::kTrainCn:
      result.outputs = train_cn(config, ws);
      break;
    case Stage::kDecode:
      result.outputs = decode_runs(config, ws);
      break;
    case Stage::kEvaluate:
      result.outputs = evaluate(config, ws);
      break;
    case Stage::kCompare:
      result.outputs = compare(config, ws);
      break;
  }
  write_json(ws.manifest(stage), Json{{"stage", to_string(stage)},
                                      {"config_hash", hash},
                                      {"seed", stage_seed(stage, config)},
                                      {"inputs", inputs},
                                      {"outputs", digests(ws.root, result.outputs)}});
  return result;
}

std::vector<StageResult> run_all(const PipelineConfig& config, bool force) {
  std::vector<StageResult> results;
  for (Stage s : kStages) results.push_back(run_stage(s, config, force));
  return results;
}

std::vector<Json> decode_prompts(const LanguageModel& model, std::span<const Json> prompts, const RunConfig& run,
                                 std::shared_ptr<const ConfidenceNetwork> network) {
  const Vocabulary& vocab = model.vocab();
  if (network) check_compatible(*network, model);
  const std::unique_ptr<Estimator> estimator = make_estimator(run.estimator, network);
  std::vector<Json> rows;
  rows.reserve(prompts.size());
  for (const Json& p : prompts) {
    const std::vector<TokenId> prompt = encode_prompt(attributes_from_json(p.at("retained")), vocab);
    GenerationTrace trace;
    std::vector<ScoredSpan> spans;
    bool degraded = false;
    switch (run.decode.method) {
      case DecodeMethod::kGreedy:
        trace = greedy_decode(model, prompt, run.decode);
        spans = score_existing(trace, *estimator, vocab);
        break;
      case DecodeMethod::kTokenBeam:
        trace = std::move(token_beam_decode(model, prompt, run.decode).front());
        spans = score_existing(trace, *estimator, vocab);
        break;
      case DecodeMethod::kCabs: {
        CabsResult r = cabs_decode(model, prompt, run.decode, *estimator);
        trace = std::move(r.trace);
        spans = std::move(r.spans);
        degraded = r.degraded;
        break;
      }
    }
    Json out_spans = Json::array();
    std::size_t malformed = 0;
    for (const ScoredSpan& s : spans) {
      if (!s.span.well_formed) {
        ++malformed;
        continue;
      }
      const auto [key, value] = render(s.span, vocab);
      out_spans.push_back(Json{{"key", key}, {"value", value}, {"conf", s.score.value}});
    }
    rows.push_back(Json{{"record_id", p.at("record_id")},
                        {"spans", std::move(out_spans)},
                        {"malformed_spans", malformed},
                        {"degraded", degraded},
                        {"truncated", trace.truncated},
                        {"tokens", tokens_to_json(trace.token_ids(), vocab)}});
  }
  return rows;
}

}  // namespace cabs
