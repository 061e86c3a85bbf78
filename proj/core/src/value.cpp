#include "vasamp/value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vasamp/errors.hpp"
#include "vasamp/rng.hpp"

namespace vas {
namespace {

constexpr TokenId kPromptSeparator = std::numeric_limits<TokenId>::max();

void check_batch(std::span<const State* const> states, std::span<const double> targets) {
  if (states.size() != targets.size()) throw DimensionMismatchError("batch states/targets size mismatch");
  if (states.empty()) throw EmptyDatasetError("empty training batch");
}

}  // namespace

std::size_t VecHash::operator()(const TokenSeq& s) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.size();
  for (TokenId t : s) h = splitmix64(h ^ t);
  return static_cast<std::size_t>(h);
}

// ---------------------------------------------------------------------------
// TabularValue

TokenSeq TabularValue::key(const State& state) {
  TokenSeq k;
  k.reserve(state.prompt.size() + state.generated.size() + 1);
  k.insert(k.end(), state.prompt.begin(), state.prompt.end());
  k.push_back(kPromptSeparator);
  k.insert(k.end(), state.generated.begin(), state.generated.end());
  return k;
}

double TabularValue::predict(const State& state) const {
  auto it = table_.find(key(state));
  return it == table_.end() ? default_value_ : it->second.value;
}

void TabularValue::initialize(double label_mean) {
  default_value_ = label_mean;
  table_.clear();
}

void TabularValue::begin_epoch() {
  for (auto& [_, e] : table_) e.visits = 0;
}

void TabularValue::set(const State& state, double value) { table_[key(state)].value = value; }

double TabularValue::train_step(std::span<const State* const> states, std::span<const double> targets,
                                double learning_rate) {
  check_batch(states, targets);
  double sq = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double err = predict(*states[i]) - targets[i];
    sq += err * err;
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto [it, inserted] = table_.try_emplace(key(*states[i]));
    if (inserted) it->second.value = default_value_;
    Entry& e = it->second;
    ++e.visits;
    e.value += learning_rate / static_cast<double>(e.visits) * (targets[i] - e.value);
  }
  return sq / static_cast<double>(states.size());
}

nlohmann::json TabularValue::parameters_json() const {
  // Sorted keys keep checkpoints byte-identical across runs.
  std::vector<std::pair<TokenSeq, double>> rows;
  rows.reserve(table_.size());
  for (const auto& [k, e] : table_) rows.emplace_back(k, e.value);
  std::sort(rows.begin(), rows.end());
  nlohmann::json keys = nlohmann::json::array();
  std::vector<double> values;
  for (const auto& [k, v] : rows) {
    nlohmann::json prompt = nlohmann::json::array();
    nlohmann::json generated = nlohmann::json::array();
    bool after = false;
    for (TokenId t : k) {
      if (t == kPromptSeparator) {
        after = true;
      } else {
        (after ? generated : prompt).push_back(t);
      }
    }
    keys.push_back({{"prompt", prompt}, {"generated", generated}});
    values.push_back(v);
  }
  return {{"keys", keys}, {"values", values}};
}

TabularValue TabularValue::from_parameters(const nlohmann::json& hyperparams, const nlohmann::json& parameters) {
  TabularValue t;
  t.default_value_ = hyperparams.at("default_value").get<double>();
  const auto& keys = parameters.at("keys");
  const auto values = parameters.at("values").get<std::vector<double>>();
  if (keys.size() != values.size()) throw FormatError("tabular checkpoint: keys/values length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    State s{keys[i].at("prompt").get<TokenSeq>(), keys[i].at("generated").get<TokenSeq>()};
    t.set(s, values[i]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// NgramFeatures

NgramFeatures::NgramFeatures(std::size_t vocab_size, std::size_t order, std::size_t max_len)
    : vocab_size_(vocab_size), order_(order), max_len_(max_len) {
  if (vocab_size_ == 0) throw InvalidArgumentError("feature vocab must be non-empty");
  std::size_t offset = 1 + (max_len_ + 1);  // bias + length one-hot
  std::size_t block = 1;
  for (std::size_t j = 1; j <= order_; ++j) {
    block *= vocab_size_ + 1;
    block_offset_.push_back(offset);
    offset += block;
  }
  dim_ = offset;
}

std::vector<std::size_t> NgramFeatures::active(const State& state) const {
  std::vector<std::size_t> out;
  out.reserve(2 + order_);
  out.push_back(0);
  out.push_back(1 + std::min(state.generated.size(), max_len_));
  const std::size_t n_prompt = state.prompt.size();
  const std::size_t n = n_prompt + state.generated.size();
  auto token_at = [&](std::size_t pos) -> std::size_t {  // pos counts back from the end, 0 = last
    if (pos >= n) return vocab_size_;                    // BOS
    const std::size_t idx = n - 1 - pos;
    return idx < n_prompt ? state.prompt[idx] : state.generated[idx - n_prompt];
  };
  std::size_t code = 0;
  std::size_t stride = 1;
  for (std::size_t j = 1; j <= order_; ++j) {
    code += token_at(j - 1) * stride;
    stride *= vocab_size_ + 1;
    out.push_back(block_offset_[j - 1] + code);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DifferentiableValue

double DifferentiableValue::train_step(std::span<const State* const> states, std::span<const double> targets,
                                       double learning_rate) {
  std::vector<double> grad;
  const double loss = loss_and_gradient(states, targets, grad);
  auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NonFiniteGradientError("non-finite gradient during training");
    params[i] -= learning_rate * grad[i];
  }
  return 2.0 * loss;
}

// ---------------------------------------------------------------------------
// LinearValue

LinearValue::LinearValue(NgramFeatures features) : features_(std::move(features)), weights_(features_.dim(), 0.0) {}

double LinearValue::predict(const State& state) const {
  double s = 0.0;
  for (std::size_t i : features_.active(state)) s += weights_[i];
  return s;
}

void LinearValue::initialize(double label_mean) {
  std::fill(weights_.begin(), weights_.end(), 0.0);
  weights_[0] = label_mean;
}

double LinearValue::loss_and_gradient(std::span<const State* const> states, std::span<const double> targets,
                                      std::vector<double>& gradient) const {
  check_batch(states, targets);
  gradient.assign(weights_.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(states.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto act = features_.active(*states[b]);
    double pred = 0.0;
    for (std::size_t i : act) pred += weights_[i];
    const double err = pred - targets[b];
    loss += 0.5 * err * err * inv_b;
    for (std::size_t i : act) gradient[i] += err * inv_b;
  }
  return loss;
}

nlohmann::json LinearValue::hyperparams() const {
  return {{"vocab_size", features_.vocab_size()}, {"order", features_.order()}, {"max_len", features_.max_len()}};
}

nlohmann::json LinearValue::parameters_json() const {
  return {{"weights", weights_}, {"shapes", {{"weights", {weights_.size()}}}}};
}

// ---------------------------------------------------------------------------
// MlpValue

MlpValue::MlpValue(NgramFeatures features, std::vector<std::size_t> hidden, std::uint64_t seed, double init_scale)
    : features_(std::move(features)), hidden_(std::move(hidden)), seed_(seed), init_scale_(init_scale) {
  if (hidden_.empty() || hidden_.size() > 2) throw InvalidArgumentError("MlpValue supports 1 or 2 hidden layers");
  std::size_t fan_in = features_.dim();
  std::size_t offset = 0;
  for (std::size_t w : hidden_) {
    if (w == 0) throw InvalidArgumentError("hidden layer width must be positive");
    layers_.push_back(Layer{fan_in, w, offset, offset + w * fan_in});
    offset += w * fan_in + w;
    fan_in = w;
  }
  out_w_offset_ = offset;
  out_b_offset_ = offset + fan_in;
  params_.assign(out_b_offset_ + 1, 0.0);

  Rng rng(derive_seed(seed_, "mlp_init"));
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t in, std::size_t out) {
    const double a = init_scale_ * std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < count; ++i) params_[begin + i] = (2.0 * rng.uniform() - 1.0) * a;
  };
  for (const auto& l : layers_) fill(l.w_offset, l.width * l.fan_in, l.fan_in, l.width);
  fill(out_w_offset_, fan_in, fan_in, 1);
}

std::vector<std::vector<double>> MlpValue::forward(const std::vector<std::size_t>& active) const {
  std::vector<std::vector<double>> h;
  h.reserve(layers_.size());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    std::vector<double> z(l.width);
    for (std::size_t j = 0; j < l.width; ++j) {
      double acc = params_[l.b_offset + j];
      const double* row = &params_[l.w_offset + j * l.fan_in];
      if (li == 0) {
        for (std::size_t a : active) acc += row[a];
      } else {
        const auto& prev = h.back();
        for (std::size_t k = 0; k < l.fan_in; ++k) acc += row[k] * prev[k];
      }
      z[j] = std::tanh(acc);
    }
    h.push_back(std::move(z));
  }
  return h;
}

double MlpValue::output(const std::vector<double>& last_hidden) const {
  double out = params_[out_b_offset_];
  for (std::size_t k = 0; k < last_hidden.size(); ++k) out += params_[out_w_offset_ + k] * last_hidden[k];
  return out;
}

double MlpValue::predict(const State& state) const { return output(forward(features_.active(state)).back()); }

void MlpValue::initialize(double label_mean) { params_[out_b_offset_] = label_mean; }

double MlpValue::loss_and_gradient(std::span<const State* const> states, std::span<const double> targets,
                                   std::vector<double>& gradient) const {
  check_batch(states, targets);
  gradient.assign(params_.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(states.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto active = features_.active(*states[b]);
    const auto h = forward(active);
    const double err = output(h.back()) - targets[b];
    loss += 0.5 * err * err * inv_b;
    const double e = err * inv_b;

    gradient[out_b_offset_] += e;
    const auto& last = h.back();
    std::vector<double> delta(last.size());
    for (std::size_t k = 0; k < last.size(); ++k) {
      gradient[out_w_offset_ + k] += e * last[k];
      delta[k] = e * params_[out_w_offset_ + k] * (1.0 - last[k] * last[k]);
    }
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      for (std::size_t j = 0; j < l.width; ++j) {
        gradient[l.b_offset + j] += delta[j];
        double* grow = &gradient[l.w_offset + j * l.fan_in];
        if (li == 0) {
          for (std::size_t a : active) grow[a] += delta[j];
        } else {
          const auto& prev = h[li - 1];
          for (std::size_t k = 0; k < l.fan_in; ++k) grow[k] += delta[j] * prev[k];
        }
      }
      if (li > 0) {
        const auto& prev = h[li - 1];
        std::vector<double> next(l.fan_in, 0.0);
        for (std::size_t j = 0; j < l.width; ++j) {
          const double* row = &params_[l.w_offset + j * l.fan_in];
          for (std::size_t k = 0; k < l.fan_in; ++k) next[k] += row[k] * delta[j];
        }
        for (std::size_t k = 0; k < l.fan_in; ++k) next[k] *= 1.0 - prev[k] * prev[k];
        delta = std::move(next);
      }
    }
  }
  return loss;
}

nlohmann::json MlpValue::hyperparams() const {
  return {{"vocab_size", features_.vocab_size()},
          {"order", features_.order()},
          {"max_len", features_.max_len()},
          {"hidden", hidden_},
          {"activation", "tanh"},
          {"seed", seed_},
          {"init_scale", init_scale_}};
}

nlohmann::json MlpValue::parameters_json() const {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& l : layers_) {
    shapes.push_back({l.width, l.fan_in});
    shapes.push_back({l.width});
  }
  shapes.push_back({hidden_.back()});
  shapes.push_back({1});
  return {{"flat", params_}, {"shapes", shapes}};
}

}  // namespace vas
