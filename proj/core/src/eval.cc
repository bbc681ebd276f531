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

#include "cabs/eval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "cabs/error.h"

namespace cabs {

std::vector<PrPoint> pr_curve(std::span<const ScoredPrediction> preds) {
  std::size_t positives = 0;
  for (const ScoredPrediction& p : preds) {
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw ContractError("prediction score outside [0, 1]");
    if (p.label != 0 && p.label != 1) throw ContractError("prediction label must be 0 or 1");
    positives += static_cast<std::size_t>(p.label);
  }
  if (positives == 0) throw UndefinedRecallError("no positive labels; recall is undefined");

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = preds[order[i]].score;
    for (; i < order.size() && preds[order[i]].score == threshold; ++i) {
      tp += static_cast<std::size_t>(preds[order[i]].label);
      ++seen;
    }
    curve.push_back({threshold, static_cast<double>(tp) / static_cast<double>(seen),
                     static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double average_precision(std::span<const ScoredPrediction> preds) {
  double ap = 0.0;
  double previous_recall = 0.0;
  for (const PrPoint& p : pr_curve(preds)) {
    ap += (p.recall - previous_recall) * p.precision;
    previous_recall = p.recall;
  }
  return ap;
}

double recall_at_precision(std::span<const ScoredPrediction> preds, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("tau must lie in (0, 1]");
  double best = 0.0;
  for (const PrPoint& p : pr_curve(preds)) {
    if (p.precision >= tau) best = std::max(best, p.recall);
  }
  return best;
}

const MethodMetrics* ComparisonReport::find(const std::string& method, const std::string& scorer) const {
  for (const MethodMetrics& m : rows) {
    if (m.method == method && m.scorer == scorer) return &m;
  }
  return nullptr;
}

Json ComparisonReport::to_json() const {
  Json out_rows = Json::array();
  for (const MethodMetrics& m : rows) {
    out_rows.push_back(Json{{"method", m.method},
                            {"scorer", m.scorer},
                            {"ap", m.ap},
                            {"r_at_p", m.r_at_p},
                            {"tau", m.tau},
                            {"count", m.count},
                            {"positives", m.positives}});
  }
  return Json{{"tau", tau}, {"rows", std::move(out_rows)}};
}

std::string ComparisonReport::to_text() const {
  std::vector<std::string> methods;
  std::vector<std::string> scorers;
  for (const MethodMetrics& m : rows) {
    if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);
    if (std::find(scorers.begin(), scorers.end(), m.scorer) == scorers.end()) scorers.push_back(m.scorer);
  }
  std::size_t name_width = 6;
  for (const std::string& m : methods) name_width = std::max(name_width, m.size());
  std::ostringstream out;
  char cell[64];
  out << std::string(name_width, ' ');
  for (const std::string& s : scorers) {
    std::snprintf(cell, sizeof(cell), "  %-16s", (s + " AP / R@P").c_str());
    out << cell;
  }
  out << "\n";
  for (const std::string& method : methods) {
    out << method << std::string(name_width - method.size(), ' ');
    for (const std::string& s : scorers) {
      if (const MethodMetrics* m = find(method, s)) {
        std::snprintf(cell, sizeof(cell), "  %6.2f / %6.2f  ", 100.0 * m->ap, 100.0 * m->r_at_p);
      } else {
        std::snprintf(cell, sizeof(cell), "  %-16s", "-");
      }
      out << cell;
    }
    out << "\n";
  }
  std::snprintf(cell, sizeof(cell), "R@P at precision %.2f\n", tau);
  out << cell;
  return out.str();
}

ComparisonReport compare_methods(std::span<const RunPredictions> runs, double tau) {
  ComparisonReport report;
  report.tau = tau;
  for (const RunPredictions& run : runs) {
    if (run.predictions.empty()) throw ContractError("run '" + run.method + "' has no predictions");
    MethodMetrics m;
    m.method = run.method;
    m.scorer = run.scorer;
    m.tau = tau;
    m.count = run.predictions.size();
    for (const ScoredPrediction& p : run.predictions) m.positives += static_cast<std::size_t>(p.label == 1);
    m.curve = pr_curve(run.predictions);
    m.ap = average_precision(run.predictions);
    m.r_at_p = recall_at_precision(run.predictions, tau);
    report.rows.push_back(std::move(m));
  }
  return report;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string pr_csv(std::span<const PrPoint> curve) {
  std::string out = "threshold,precision,recall\n";
  for (const PrPoint& p : curve) {
    out += format_double(p.threshold) + "," + format_double(p.precision) + "," + format_double(p.recall) + "\n";
  }
  return out;
}

Json to_json(const ScoredPrediction& pred) {
  return Json{{"record_id", pred.record_id},
              {"key", pred.key},
              {"value", pred.generated_value},
              {"score", pred.score},
              {"label", pred.label}};
}

ScoredPrediction prediction_from_json(const Json& json) {
  try {
    return {json.at("record_id").get<std::string>(), json.at("key").get<std::string>(),
            json.at("value").get<std::string>(), json.at("score").get<double>(), json.at("label").get<int>()};
  } catch (const Json::exception& e) {
    throw FormatError(std::string("prediction json: ") + e.what());
  }
}

}  // namespace cabs
