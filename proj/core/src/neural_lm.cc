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

#include "cabs/neural_lm.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "cabs/error.h"
#include "cabs/rng.h"

namespace cabs {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

class NeuralState final : public LmState {
 public:
  NeuralState(TokenId token, TokenId prev, Eigen::VectorXd pooled, StatePtr parent,
              std::size_t generated, std::size_t position)
      : prev_(prev), pooled_(std::move(pooled)) {
    token_ = token;
    parent_ = std::move(parent);
    generated_ = generated;
    position_ = position;
  }
  TokenId prev() const { return prev_; }
  const Eigen::VectorXd& pooled() const { return pooled_; }
  std::vector<double>& mutable_log_probs() { return log_probs_; }
  LayerStates& mutable_hidden() { return hidden_; }

 private:
  TokenId prev_;
  Eigen::VectorXd pooled_;
};

void fill_normal(Eigen::MatrixXd& m, Rng& rng, double scale) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * rng.normal();
  }
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

void matrix_from_json(const Json& j, Eigen::MatrixXd& m, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows != m.rows() || cols != m.cols()) throw FormatError("tensor '" + name + "' has the wrong shape");
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != static_cast<std::size_t>(rows * cols)) {
    throw FormatError("tensor '" + name + "' has the wrong element count");
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
}

// Position indices predicted for one example: the last prompt position
// through the second-to-last target position.
struct Layout {
  std::vector<TokenId> seq;
  std::size_t first = 0;  // first predicting position
  std::size_t last = 0;   // last predicting position (inclusive)
};

Layout layout(const LmExample& ex) {
  Layout l;
  l.seq = ex.prompt;
  l.seq.insert(l.seq.end(), ex.target.begin(), ex.target.end());
  l.first = ex.prompt.size() - 1;
  l.last = l.seq.size() - 2;
  return l;
}

}  // namespace

LmOptimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return LmOptimizer::kAdam;
  if (name == "sgd") return LmOptimizer::kSgd;
  throw ContractError("unknown optimizer '" + std::string(name) + "'");
}

void NeuralLm::Params::for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn) {
  fn("token", token);
  fn("prev1", prev1);
  fn("prev2", prev2);
  fn("position", position);
  fn("pooled", pooled);
  for (std::size_t l = 0; l < block_weight.size(); ++l) {
    fn("block" + std::to_string(l) + ".weight", block_weight[l]);
    fn("block" + std::to_string(l) + ".bias", block_bias[l]);
  }
  fn("out.weight", out_weight);
  fn("out.bias", out_bias);
}

void NeuralLm::Params::for_each(
    const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const {
  const_cast<Params*>(this)->for_each(
      [&](const std::string& name, Eigen::MatrixXd& m) { fn(name, m); });
}

NeuralLm::Params NeuralLm::Params::zeros_like() const {
  Params z = *this;
  z.for_each([](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
  return z;
}

NeuralLm::NeuralLm(Vocabulary vocab, NeuralLmConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.depth < 2) throw ContractError("neural model depth must be >= 2");
  if (config_.width == 0 || config_.context_window == 0) {
    throw ContractError("neural model width and context window must be positive");
  }
  const auto d = static_cast<Eigen::Index>(config_.width);
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  const auto w = static_cast<Eigen::Index>(config_.context_window);
  Rng rng(mix_seed(config_.seed, 0));
  const double embed_scale = 0.1;
  const double dense_scale = 1.0 / std::sqrt(static_cast<double>(d));
  params_.token.resize(d, v);
  params_.prev1.resize(d, v);
  params_.prev2.resize(d, v);
  params_.position.resize(d, w);
  params_.pooled.resize(d, v);
  fill_normal(params_.token, rng, embed_scale);
  fill_normal(params_.prev1, rng, embed_scale);
  fill_normal(params_.prev2, rng, embed_scale);
  fill_normal(params_.position, rng, embed_scale);
  fill_normal(params_.pooled, rng, embed_scale);
  for (std::size_t l = 0; l < config_.depth; ++l) {
    Eigen::MatrixXd wt(d, d);
    fill_normal(wt, rng, dense_scale);
    params_.block_weight.push_back(std::move(wt));
    params_.block_bias.push_back(Eigen::MatrixXd::Zero(d, 1));
  }
  params_.out_weight.resize(v, d);
  fill_normal(params_.out_weight, rng, dense_scale);
  params_.out_bias = Eigen::MatrixXd::Zero(v, 1);
}

std::size_t NeuralLm::layer_width(std::size_t layer) const {
  if (layer >= config_.depth) throw ContractError("layer index out of range");
  return config_.width;
}

LayerStates NeuralLm::forward_position(const Eigen::VectorXd& input, std::vector<double>* log_probs) const {
  LayerStates hidden;
  hidden.reserve(config_.depth);
  Eigen::VectorXd h = input;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const Eigen::VectorXd z = params_.block_weight[l] * h + params_.block_bias[l].col(0);
    h += z.cwiseMax(0.0);
    hidden.push_back(h);
  }
  const Eigen::VectorXd logits = params_.out_weight * h + params_.out_bias.col(0);
  *log_probs = log_softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
  return hidden;
}

StatePtr NeuralLm::start(std::span<const TokenId> prompt) const {
  if (prompt.empty()) throw ContractError("neural model needs a non-empty prompt");
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.width));
  for (TokenId t : prompt) {
    if (!vocab_.contains(t)) throw ContractError("prompt token out of range");
    pooled += params_.pooled.col(t);
  }
  const std::size_t n = prompt.size();
  const TokenId token = prompt[n - 1];
  const TokenId prev = n >= 2 ? prompt[n - 2] : vocab_.pad_id();
  const TokenId prev2 = n >= 3 ? prompt[n - 3] : vocab_.pad_id();
  const auto pos = static_cast<Eigen::Index>(std::min(n - 1, config_.context_window - 1));
  const Eigen::VectorXd input = params_.token.col(token) + params_.prev1.col(prev) +
                                params_.prev2.col(prev2) + params_.position.col(pos) +
                                pooled / static_cast<double>(n);
  auto state = std::make_shared<NeuralState>(token, prev, std::move(pooled), nullptr, 0, n);
  state->mutable_hidden() = forward_position(input, &state->mutable_log_probs());
  return state;
}

StatePtr NeuralLm::extend(const StatePtr& state, TokenId token) const {
  if (!vocab_.contains(token)) throw ContractError("token out of range");
  const auto* s = dynamic_cast<const NeuralState*>(state.get());
  if (s == nullptr) throw ContractError("state does not belong to a neural model");
  Eigen::VectorXd pooled = s->pooled() + params_.pooled.col(token);
  const std::size_t n = s->position() + 1;
  const auto pos = static_cast<Eigen::Index>(std::min(n - 1, config_.context_window - 1));
  const Eigen::VectorXd input = params_.token.col(token) + params_.prev1.col(s->token()) +
                                params_.prev2.col(s->prev()) + params_.position.col(pos) +
                                pooled / static_cast<double>(n);
  auto next = std::make_shared<NeuralState>(token, s->token(), std::move(pooled), state,
                                            s->generated() + 1, n);
  next->mutable_hidden() = forward_position(input, &next->mutable_log_probs());
  return next;
}

double NeuralLm::loss(std::span<const LmExample> batch, Params* grad) const {
  const auto d = static_cast<Eigen::Index>(config_.width);
  const TokenId pad = vocab_.pad_id();

  std::vector<Layout> layouts;
  layouts.reserve(batch.size());
  Eigen::Index n = 0;
  for (const LmExample& ex : batch) {
    if (ex.prompt.empty() || ex.target.empty()) throw ContractError("example needs a prompt and a target");
    for (TokenId t : ex.prompt) {
      if (!vocab_.contains(t)) throw ContractError("example token out of range");
    }
    for (TokenId t : ex.target) {
      if (!vocab_.contains(t)) throw ContractError("example token out of range");
    }
    layouts.push_back(layout(ex));
    n += static_cast<Eigen::Index>(ex.target.size());
  }
  if (n == 0) throw ContractError("empty batch");

  // Inputs for every predicting position.
  Eigen::MatrixXd x(d, n);
  std::vector<TokenId> targets(static_cast<std::size_t>(n));
  std::vector<std::array<Eigen::Index, 4>> where(static_cast<std::size_t>(n));  // tok, prev1, prev2, pos
  {
    Eigen::Index col = 0;
    Eigen::VectorXd pooled(d);
    for (const Layout& l : layouts) {
      pooled.setZero();
      for (std::size_t i = 0; i <= l.last; ++i) {
        pooled += params_.pooled.col(l.seq[i]);
        if (i < l.first) continue;
        const TokenId t = l.seq[i];
        const TokenId p1 = i >= 1 ? l.seq[i - 1] : pad;
        const TokenId p2 = i >= 2 ? l.seq[i - 2] : pad;
        const auto pos = static_cast<Eigen::Index>(std::min(i, config_.context_window - 1));
        x.col(col) = params_.token.col(t) + params_.prev1.col(p1) + params_.prev2.col(p2) +
                     params_.position.col(pos) + pooled / static_cast<double>(i + 1);
        where[static_cast<std::size_t>(col)] = {t, p1, p2, pos};
        targets[static_cast<std::size_t>(col)] = l.seq[i + 1];
        ++col;
      }
    }
  }

  std::vector<Eigen::MatrixXd> hs{x};
  std::vector<Eigen::MatrixXd> zs;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    Eigen::MatrixXd z = (params_.block_weight[l] * hs.back()).colwise() + params_.block_bias[l].col(0);
    hs.push_back(hs.back() + z.cwiseMax(0.0));
    zs.push_back(std::move(z));
  }
  Eigen::MatrixXd logits = (params_.out_weight * hs.back()).colwise() + params_.out_bias.col(0);

  double total = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    auto col = logits.col(c);
    const double max = col.maxCoeff();
    const double log_z = max + std::log((col.array() - max).exp().sum());
    total -= col(targets[static_cast<std::size_t>(c)]) - log_z;
    if (grad != nullptr) {
      col = (col.array() - log_z).exp();  // softmax, reused as d loss / d logits
      col(targets[static_cast<std::size_t>(c)]) -= 1.0;
    }
  }
  const double mean = total / static_cast<double>(n);
  if (grad == nullptr) return mean;

  *grad = params_.zeros_like();
  logits /= static_cast<double>(n);
  grad->out_weight = logits * hs.back().transpose();
  grad->out_bias = logits.rowwise().sum();
  Eigen::MatrixXd dh = params_.out_weight.transpose() * logits;
  for (std::size_t l = config_.depth; l-- > 0;) {
    const Eigen::MatrixXd dz = dh.cwiseProduct((zs[l].array() > 0.0).cast<double>().matrix());
    grad->block_weight[l] = dz * hs[l].transpose();
    grad->block_bias[l] = dz.rowwise().sum();
    dh += params_.block_weight[l].transpose() * dz;
  }

  // Scatter input gradients into the embedding tables.
  Eigen::Index col = 0;
  Eigen::VectorXd running(d);
  for (const Layout& l : layouts) {
    const Eigen::Index begin = col;
    for (std::size_t i = l.first; i <= l.last; ++i, ++col) {
      const auto& w = where[static_cast<std::size_t>(col)];
      grad->token.col(w[0]) += dh.col(col);
      grad->prev1.col(w[1]) += dh.col(col);
      grad->prev2.col(w[2]) += dh.col(col);
      grad->position.col(w[3]) += dh.col(col);
    }
    // Token j feeds the pooled mean of every position i >= j.
    running.setZero();
    for (std::size_t i = l.last + 1; i-- > 0;) {
      if (i >= l.first) {
        running += dh.col(begin + static_cast<Eigen::Index>(i - l.first)) / static_cast<double>(i + 1);
      }
      grad->pooled.col(l.seq[i]) += running;
    }
  }
  return mean;
}

NeuralLm::TrainResult NeuralLm::train(std::span<const LmExample> corpus, Vocabulary vocab,
                                      NeuralLmConfig config) {
  if (corpus.empty()) throw ContractError("train_neural_lm: empty corpus");
  if (config.depth < 2) throw ContractError("train_neural_lm: depth must be >= 2");
  if (config.batch_size == 0) throw ContractError("train_neural_lm: batch size must be positive");
  TrainResult result{NeuralLm(std::move(vocab), config), {}};
  NeuralLm& model = result.model;

  result.epoch_losses.push_back(model.loss(corpus));
  Rng rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LmExample> batch;
  Params grad;
  Params first = model.params_.zeros_like();
  Params second = model.params_.zeros_like();
  long adam_step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(corpus[order[i]]);
      const double l = model.loss(batch, &grad);
      if (!std::isfinite(l)) throw DivergenceError("language model loss is not finite", epoch);
      std::vector<Eigen::MatrixXd*> g;
      double norm2 = 0.0;
      grad.for_each([&](const std::string&, Eigen::MatrixXd& m) {
        g.push_back(&m);
        norm2 += m.squaredNorm();
      });
      if (config.grad_clip > 0.0 && norm2 > config.grad_clip * config.grad_clip) {
        const double scale = config.grad_clip / std::sqrt(norm2);
        for (Eigen::MatrixXd* m : g) *m *= scale;
      }
      std::size_t k = 0;
      if (config.optimizer == LmOptimizer::kSgd) {
        model.params_.for_each([&](const std::string&, Eigen::MatrixXd& m) { m -= config.learning_rate * *g[k++]; });
      } else {
        ++adam_step;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step));
        std::vector<Eigen::MatrixXd*> ms;
        std::vector<Eigen::MatrixXd*> vs;
        first.for_each([&](const std::string&, Eigen::MatrixXd& m) { ms.push_back(&m); });
        second.for_each([&](const std::string&, Eigen::MatrixXd& m) { vs.push_back(&m); });
        model.params_.for_each([&](const std::string&, Eigen::MatrixXd& p) {
          Eigen::MatrixXd& m = *ms[k];
          Eigen::MatrixXd& v = *vs[k];
          const Eigen::MatrixXd& gk = *g[k];
          m = kBeta1 * m + (1.0 - kBeta1) * gk;
          v = kBeta2 * v + (1.0 - kBeta2) * gk.cwiseProduct(gk);
          p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kEpsilon);
          ++k;
        });
      }
    }
    const double epoch_loss = model.loss(corpus);
    if (!std::isfinite(epoch_loss)) throw DivergenceError("language model loss is not finite", epoch);
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

Json NeuralLm::to_json() const {
  Json tensors = Json::object();
  params_.for_each([&](const std::string& name, const Eigen::MatrixXd& m) { tensors[name] = matrix_to_json(m); });
  return Json{{"format", "cabs.neural_lm"},
              {"version", kCheckpointVersion},
              {"seed", config_.seed},
              {"config",
               {{"width", config_.width},
                {"depth", config_.depth},
                {"context_window", config_.context_window},
                {"epochs", config_.epochs},
                {"optimizer", config_.optimizer == LmOptimizer::kAdam ? "adam" : "sgd"},
                {"learning_rate", config_.learning_rate},
                {"batch_size", config_.batch_size},
                {"grad_clip", config_.grad_clip}}},
              {"layer_widths", std::vector<std::size_t>(config_.depth, config_.width)},
              {"vocabulary", vocab_.tokens()},
              {"tensors", std::move(tensors)}};
}

NeuralLm NeuralLm::from_json(const Json& json) {
  try {
    if (json.at("format").get<std::string>() != "cabs.neural_lm") throw FormatError("not a neural model checkpoint");
    if (json.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    const Json& c = json.at("config");
    NeuralLmConfig config;
    config.width = c.at("width").get<std::size_t>();
    config.depth = c.at("depth").get<std::size_t>();
    config.context_window = c.at("context_window").get<std::size_t>();
    config.epochs = c.at("epochs").get<int>();
    config.learning_rate = c.at("learning_rate").get<double>();
    config.optimizer = parse_optimizer(c.at("optimizer").get<std::string>());
    config.batch_size = c.at("batch_size").get<std::size_t>();
    config.grad_clip = c.at("grad_clip").get<double>();
    config.seed = json.at("seed").get<std::uint64_t>();
    const auto tokens = json.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.size() < Vocabulary::kNumReserved) throw FormatError("vocabulary too small");
    Vocabulary vocab(std::span<const std::string>(tokens).subspan(Vocabulary::kNumReserved));
    if (vocab.tokens() != tokens) throw FormatError("vocabulary reserved tokens out of order");
    NeuralLm model(std::move(vocab), config);
    const Json& tensors = json.at("tensors");
    model.params_.for_each([&](const std::string& name, Eigen::MatrixXd& m) {
      matrix_from_json(tensors.at(name), m, name);
    });
    return model;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("neural model json: ") + e.what());
  }
}

}  // namespace cabs
