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

#include "cabs/confidence.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cabs/error.h"
#include "cabs/rng.h"

namespace cabs {
namespace {

void check_span(const SubStructureSpan& span, std::span<const TokenStep> steps) {
  if (span.start > span.end || span.end >= steps.size()) {
    throw ContractError("span [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                        "] does not fit a trace of " + std::to_string(steps.size()) + " steps");
  }
}

double span_logprob(const SubStructureSpan& span, std::span<const TokenStep> steps) {
  check_span(span, steps);
  double total = 0.0;
  for (std::size_t i = span.start; i <= span.end; ++i) total += steps[i].logprob;
  return total;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<std::size_t>(rows * cols) != data.size()) throw FormatError("matrix size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

}  // namespace

std::string_view to_string(ConfidenceMethod method) {
  switch (method) {
    case ConfidenceMethod::kCp: return "cp";
    case ConfidenceMethod::kCpLn: return "cp-ln";
    case ConfidenceMethod::kCn: return "cn";
  }
  return "?";
}

std::string_view to_string(ReprKind kind) {
  switch (kind) {
    case ReprKind::kLast: return "last";
    case ReprKind::kExtreme: return "extreme";
    case ReprKind::kSumDiff: return "sumdiff";
  }
  return "?";
}

ReprKind parse_repr_kind(std::string_view name) {
  if (name == "last") return ReprKind::kLast;
  if (name == "extreme") return ReprKind::kExtreme;
  if (name == "sumdiff" || name == "sum-diff") return ReprKind::kSumDiff;
  throw ContractError("unknown representation '" + std::string(name) + "'");
}

ConfidenceScore cp(const SubStructureSpan& span, std::span<const TokenStep> steps) {
  const double lp = span_logprob(span, steps);
  return {std::exp(lp), lp, ConfidenceMethod::kCp};
}

ConfidenceScore cp_ln(const SubStructureSpan& span, std::span<const TokenStep> steps) {
  const double lp = span_logprob(span, steps) / static_cast<double>(span.size());
  return {std::exp(lp), lp, ConfidenceMethod::kCpLn};
}

Eigen::VectorXd build_repr(const SubStructureSpan& span, std::span<const TokenStep> steps,
                           const ReprConfig& config) {
  check_span(span, steps);
  const LayerStates& first_states = steps[span.start].hidden;
  const LayerStates& last_states = steps[span.end].hidden;
  if (config.layer >= last_states.size() || config.layer >= first_states.size()) {
    throw ContractError("representation layer " + std::to_string(config.layer) +
                        " out of range for a model with " + std::to_string(last_states.size()) +
                        " layers");
  }
  const Eigen::VectorXd& first = first_states[config.layer];
  const Eigen::VectorXd& last = last_states[config.layer];
  const Eigen::Index d = last.size();
  switch (config.kind) {
    case ReprKind::kLast:
      return last;
    case ReprKind::kExtreme: {
      Eigen::VectorXd out(2 * d);
      out << first, last;
      return out;
    }
    case ReprKind::kSumDiff: {
      Eigen::VectorXd out(2 * d);
      out << first + last, first - last;
      return out;
    }
  }
  throw ContractError("unknown representation kind");
}

ConfidenceNetwork::ConfidenceNetwork(std::vector<std::size_t> widths, ReprConfig repr)
    : widths_(std::move(widths)), repr_(repr) {
  if (widths_.size() != 4 || widths_.back() != 1) {
    throw ContractError("confidence network widths must be {input, hidden, hidden, 1}");
  }
  for (std::size_t w : widths_) {
    if (w == 0) throw ContractError("confidence network layer width must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
    const auto in = static_cast<Eigen::Index>(widths_[l]);
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

ConfidenceNetwork::ConfidenceNetwork(std::vector<std::size_t> widths, ReprConfig repr,
                                     std::uint64_t seed)
    : ConfidenceNetwork(std::move(widths), repr) {
  seed_ = seed;
  Rng rng(seed);
  for (Layer& layer : layers_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = scale * rng.normal();
    }
  }
}

ConfidenceNetwork ConfidenceNetwork::zeros(std::vector<std::size_t> widths, ReprConfig repr) {
  return ConfidenceNetwork(std::move(widths), repr);
}

double ConfidenceNetwork::logit(const Eigen::VectorXd& repr) const {
  if (static_cast<std::size_t>(repr.size()) != input_width()) {
    throw ContractError("confidence network expects width " + std::to_string(input_width()) +
                        ", got " + std::to_string(repr.size()));
  }
  Eigen::VectorXd a = (layers_[0].weight * repr + layers_[0].bias).cwiseMax(0.0);
  a = (layers_[1].weight * a + layers_[1].bias).cwiseMax(0.0);
  return (layers_[2].weight * a + layers_[2].bias)(0);
}

ConfidenceScore ConfidenceNetwork::forward(const Eigen::VectorXd& repr) const {
  const double p = sigmoid(logit(repr));
  return {p, std::log(p), ConfidenceMethod::kCn};
}

ConfidenceScore cn_forward(const ConfidenceNetwork& net, const Eigen::VectorXd& repr) {
  return net.forward(repr);
}

double binary_cross_entropy(double p, int label) {
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

double ConfidenceNetwork::loss(std::span<const ConfidenceSample> batch, double positive_weight,
                               std::vector<Layer>* grad) const {
  if (batch.empty()) throw ContractError("loss over an empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input_width()), n);
  Eigen::RowVectorXd y(n);
  Eigen::RowVectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ConfidenceSample& s = batch[static_cast<std::size_t>(i)];
    if (static_cast<std::size_t>(s.repr.size()) != input_width()) {
      throw ContractError("sample width " + std::to_string(s.repr.size()) + " != network input " +
                          std::to_string(input_width()));
    }
    x.col(i) = s.repr;
    y(i) = s.label;
    w(i) = s.label == 1 ? positive_weight : 1.0;
  }
  return loss(x, y, w, grad);
}

double ConfidenceNetwork::loss(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                               const Eigen::RowVectorXd& w, std::vector<Layer>* grad) const {
  const Eigen::Index n = x.cols();
  if (n == 0) throw ContractError("loss over an empty batch");
  if (static_cast<std::size_t>(x.rows()) != input_width() || y.size() != n || w.size() != n) {
    throw ContractError("loss: input shape mismatch");
  }
  const Eigen::MatrixXd z1 = (layers_[0].weight * x).colwise() + layers_[0].bias;
  const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
  const Eigen::MatrixXd z2 = (layers_[1].weight * a1).colwise() + layers_[1].bias;
  const Eigen::MatrixXd a2 = z2.cwiseMax(0.0);
  const Eigen::RowVectorXd z3 = ((layers_[2].weight * a2).colwise() + layers_[2].bias).row(0);

  double total = 0.0;
  Eigen::RowVectorXd dz3(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    total += w(i) * (softplus(z3(i)) - y(i) * z3(i));
    const double s = z3(i) >= 0.0 ? 1.0 / (1.0 + std::exp(-z3(i))) : std::exp(z3(i)) / (1.0 + std::exp(z3(i)));
    dz3(i) = w(i) * (s - y(i)) / static_cast<double>(n);
  }
  const double mean = total / static_cast<double>(n);
  if (grad == nullptr) return mean;

  grad->resize(3);
  (*grad)[2].weight = dz3 * a2.transpose();
  (*grad)[2].bias = Eigen::VectorXd::Constant(1, dz3.sum());
  const Eigen::MatrixXd dz2 =
      (layers_[2].weight.transpose() * dz3).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
  (*grad)[1].weight = dz2 * a1.transpose();
  (*grad)[1].bias = dz2.rowwise().sum();
  const Eigen::MatrixXd dz1 =
      (layers_[1].weight.transpose() * dz2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
  (*grad)[0].weight = dz1 * x.transpose();
  (*grad)[0].bias = dz1.rowwise().sum();
  return mean;
}

Json ConfidenceNetwork::to_json() const {
  Json layers = Json::array();
  for (const Layer& l : layers_) {
    layers.push_back({{"weight", matrix_to_json(l.weight)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return Json{{"format", "cabs.confidence_network"},
              {"version", 1},
              {"seed", seed_},
              {"widths", widths_},
              {"repr", {{"kind", to_string(repr_.kind)}, {"layer", repr_.layer}}},
              {"layers", std::move(layers)}};
}

ConfidenceNetwork ConfidenceNetwork::from_json(const Json& json) {
  try {
    if (json.at("format").get<std::string>() != "cabs.confidence_network") {
      throw FormatError("not a confidence network checkpoint");
    }
    if (json.at("version").get<int>() != 1) throw FormatError("unsupported checkpoint version");
    ReprConfig repr{parse_repr_kind(json.at("repr").at("kind").get<std::string>()),
                    json.at("repr").at("layer").get<std::size_t>()};
    ConfidenceNetwork net(json.at("widths").get<std::vector<std::size_t>>(), repr);
    net.seed_ = json.at("seed").get<std::uint64_t>();
    const Json& layers = json.at("layers");
    if (layers.size() != net.layers_.size()) throw FormatError("layer count mismatch");
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      Eigen::MatrixXd w = matrix_from_json(layers[l].at("weight"));
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (w.rows() != net.layers_[l].weight.rows() || w.cols() != net.layers_[l].weight.cols() ||
          b.size() != static_cast<std::size_t>(w.rows())) {
        throw FormatError("layer shape mismatch");
      }
      net.layers_[l].weight = std::move(w);
      net.layers_[l].bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    return net;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("confidence network json: ") + e.what());
  }
}

CnTrainResult cn_train(std::span<const ConfidenceSample> samples, const ReprConfig& repr,
                       const CnTrainConfig& config) {
  if (samples.empty()) throw ContractError("cn_train: no samples");
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 0; });
  if (!has_pos || !has_neg) throw ContractError("cn_train: both labels must be present");
  if (config.hidden.size() != 2) throw ContractError("cn_train: expected two hidden widths");
  if (config.batch_size == 0) throw ContractError("cn_train: batch size must be positive");

  const auto input = static_cast<std::size_t>(samples.front().repr.size());
  CnTrainResult result{ConfidenceNetwork({input, config.hidden[0], config.hidden[1], 1}, repr,
                                         mix_seed(config.seed, 0)),
                       {}};
  ConfidenceNetwork& net = result.network;

  result.epoch_losses.push_back(net.loss(samples, config.positive_weight));
  Rng rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto total = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x_all(static_cast<Eigen::Index>(input), total);
  Eigen::RowVectorXd y_all(total);
  Eigen::RowVectorXd w_all(total);
  for (Eigen::Index i = 0; i < total; ++i) {
    const ConfidenceSample& s = samples[static_cast<std::size_t>(i)];
    if (static_cast<std::size_t>(s.repr.size()) != input) throw ContractError("cn_train: ragged sample widths");
    x_all.col(i) = s.repr;
    y_all(i) = s.label;
    w_all(i) = s.label == 1 ? config.positive_weight : 1.0;
  }
  Eigen::MatrixXd x;
  Eigen::RowVectorXd y;
  Eigen::RowVectorXd w;
  std::vector<ConfidenceNetwork::Layer> grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const auto n = static_cast<Eigen::Index>(end - begin);
      x.resize(x_all.rows(), n);
      y.resize(n);
      w.resize(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto src = static_cast<Eigen::Index>(order[begin + static_cast<std::size_t>(j)]);
        x.col(j) = x_all.col(src);
        y(j) = y_all(src);
        w(j) = w_all(src);
      }
      const double l = net.loss(x, y, w, &grad);
      if (!std::isfinite(l)) throw DivergenceError("confidence network loss is not finite", epoch);
      for (std::size_t k = 0; k < grad.size(); ++k) {
        net.layers()[k].weight -= config.learning_rate * grad[k].weight;
        net.layers()[k].bias -= config.learning_rate * grad[k].bias;
      }
    }
    const double epoch_loss = net.loss(x_all, y_all, w_all);
    if (!std::isfinite(epoch_loss)) throw DivergenceError("confidence network loss is not finite", epoch);
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

double accuracy(const ConfidenceNetwork& net, std::span<const ConfidenceSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const ConfidenceSample& s : samples) {
    const int predicted = net.logit(s.repr) >= 0.0 ? 1 : 0;
    if (predicted == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainingSet build_training_set(std::span<const LabeledGeneration> generations,
                               const Vocabulary& vocab, const ReprConfig& repr) {
  TrainingSet set;
  for (const LabeledGeneration& g : generations) {
    const std::vector<SubStructureSpan> spans = segment(g.trace.token_ids(), vocab);
    std::size_t label_index = 0;
    for (const SubStructureSpan& span : spans) {
      if (!span.well_formed) {
        ++set.skipped_malformed;
        continue;
      }
      if (label_index >= g.labels.size()) {
        throw ContractError("record '" + g.record_id + "': fewer labels than well-formed spans");
      }
      const FaithfulnessLabel& label = g.labels[label_index++];
      if (!label.reference_found) {
        ++set.skipped_unreferenced;
        continue;
      }
      set.samples.push_back({build_repr(span, g.trace.steps, repr), label.label});
    }
  }
  return set;
}

ConfidenceScore CnEstimator::score(const SubStructureSpan& span, std::span<const TokenStep> steps) const {
  return net_->forward(build_repr(span, steps, net_->repr()));
}

void check_compatible(const ConfidenceNetwork& net, const LanguageModel& model) {
  const ReprConfig& repr = net.repr();
  if (repr.layer >= model.n_layers()) {
    throw ContractError("confidence network reads layer " + std::to_string(repr.layer) +
                        " but the model has " + std::to_string(model.n_layers()) + " layers");
  }
  const std::size_t expected = repr.width(model.layer_width(repr.layer));
  if (expected != net.input_width()) {
    throw ContractError("confidence network input width " + std::to_string(net.input_width()) +
                        " does not match representation width " + std::to_string(expected));
  }
}

Json sample_to_json(const ConfidenceSample& sample) {
  return Json{{"repr", std::vector<double>(sample.repr.data(), sample.repr.data() + sample.repr.size())},
              {"label", sample.label}};
}

}  // namespace cabs
