#include "vasamp/q_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vasamp/errors.hpp"

namespace vas {

std::string to_string(BootstrapMode mode) { return mode == BootstrapMode::exact ? "exact" : "sampled"; }

std::string to_string(QParameterization p) { return p == QParameterization::flat ? "flat" : "dueling"; }

BootstrapMode bootstrap_mode_from_string(const std::string& s) {
  if (s == "exact") return BootstrapMode::exact;
  if (s == "sampled") return BootstrapMode::sampled;
  throw InvalidArgumentError("unknown bootstrap mode '" + s + "' (expected exact|sampled)");
}

QParameterization q_parameterization_from_string(const std::string& s) {
  if (s == "flat") return QParameterization::flat;
  if (s == "dueling") return QParameterization::dueling;
  throw InvalidArgumentError("unknown Q parameterization '" + s + "' (expected flat|dueling)");
}

TabularQ::TabularQ(std::size_t vocab_size, QParameterization parameterization, bool center_advantage)
    : vocab_size_(vocab_size), parameterization_(parameterization), center_advantage_(center_advantage) {
  if (vocab_size_ == 0) throw InvalidArgumentError("TabularQ needs a non-empty vocabulary");
}

void TabularQ::initialize(double label_mean) {
  default_value_ = label_mean;
  table_.clear();
}

TabularQ::Entry& TabularQ::entry(const State& state) {
  auto [it, inserted] = table_.try_emplace(TabularValue::key(state));
  if (inserted) {
    if (parameterization_ == QParameterization::flat) {
      it->second.q.assign(vocab_size_, default_value_);
    } else {
      it->second.v = default_value_;
      it->second.q.assign(vocab_size_, 0.0);
    }
  }
  return it->second;
}

std::vector<double> TabularQ::predict_all(const State& state) const {
  auto it = table_.find(TabularValue::key(state));
  if (it == table_.end()) return std::vector<double>(vocab_size_, default_value_);
  if (parameterization_ == QParameterization::flat) return it->second.q;
  std::vector<double> out(vocab_size_);
  for (std::size_t x = 0; x < vocab_size_; ++x) out[x] = it->second.v + it->second.q[x];
  return out;
}

double TabularQ::state_value(const State& state) const {
  auto it = table_.find(TabularValue::key(state));
  if (it == table_.end()) return default_value_;
  if (parameterization_ == QParameterization::dueling) return it->second.v;
  double sum = 0.0;
  for (double q : it->second.q) sum += q;
  return sum / static_cast<double>(vocab_size_);
}

double TabularQ::train_epoch(std::span<const State* const> states, std::span<const TokenId> tokens,
                             std::span<const double> targets, double learning_rate) {
  if (states.size() != targets.size() || tokens.size() != targets.size()) {
    throw DimensionMismatchError("fit_q: states/tokens/targets size mismatch");
  }
  if (states.empty()) throw EmptyDatasetError("fit_q: empty training set");

  double sq = 0.0;
  std::vector<Entry*> entries(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (tokens[i] >= vocab_size_) throw InvalidTokenError("fit_q: token out of range");
    const double err = predict_all(*states[i])[tokens[i]] - targets[i];
    sq += err * err;
  }
  for (std::size_t i = 0; i < states.size(); ++i) entries[i] = &entry(*states[i]);

  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  if (parameterization_ == QParameterization::flat) {
    std::map<std::pair<Entry*, TokenId>, Acc> acc;
    for (std::size_t i = 0; i < states.size(); ++i) {
      auto& a = acc[{entries[i], tokens[i]}];
      a.sum += targets[i];
      ++a.count;
    }
    for (auto& [k, a] : acc) {
      double& q = k.first->q[k.second];
      q += learning_rate * (a.sum / static_cast<double>(a.count) - q);
    }
  } else {
    std::map<Entry*, Acc> v_acc;
    for (std::size_t i = 0; i < states.size(); ++i) {
      auto& a = v_acc[entries[i]];
      a.sum += targets[i] - entries[i]->q[tokens[i]];
      ++a.count;
    }
    for (auto& [e, a] : v_acc) e->v += learning_rate * (a.sum / static_cast<double>(a.count) - e->v);

    std::map<std::pair<Entry*, TokenId>, Acc> a_acc;
    for (std::size_t i = 0; i < states.size(); ++i) {
      auto& a = a_acc[{entries[i], tokens[i]}];
      a.sum += targets[i] - entries[i]->v;
      ++a.count;
    }
    for (auto& [k, a] : a_acc) {
      double& adv = k.first->q[k.second];
      adv += learning_rate * (a.sum / static_cast<double>(a.count) - adv);
    }
    if (center_advantage_) {
      for (auto& [e, _] : v_acc) {
        double mean = 0.0;
        for (double adv : e->q) mean += adv;
        mean /= static_cast<double>(vocab_size_);
        for (double& adv : e->q) adv -= mean;
        e->v += mean;
      }
    }
  }
  return sq / static_cast<double>(states.size());
}

nlohmann::json TabularQ::hyperparams() const {
  return {{"vocab_size", vocab_size_},
          {"parameterization", to_string(parameterization_)},
          {"center_advantage", center_advantage_},
          {"default_value", default_value_}};
}

nlohmann::json TabularQ::parameters_json() const {
  std::vector<std::pair<TokenSeq, const Entry*>> rows;
  rows.reserve(table_.size());
  for (const auto& [k, e] : table_) rows.emplace_back(k, &e);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  nlohmann::json keys = nlohmann::json::array();
  std::vector<double> v;
  std::vector<double> q;
  for (const auto& [k, e] : rows) {
    keys.push_back(k);
    v.push_back(e->v);
    q.insert(q.end(), e->q.begin(), e->q.end());
  }
  nlohmann::json out = {{"keys", keys}, {"shapes", {{"q", {rows.size(), vocab_size_}}}}};
  if (parameterization_ == QParameterization::flat) {
    out["q"] = q;
  } else {
    out["v"] = v;
    out["advantage"] = q;
  }
  return out;
}

TabularQ TabularQ::from_parameters(const nlohmann::json& hyperparams, const nlohmann::json& parameters) {
  TabularQ t(hyperparams.at("vocab_size").get<std::size_t>(),
             q_parameterization_from_string(hyperparams.at("parameterization").get<std::string>()),
             hyperparams.at("center_advantage").get<bool>());
  t.default_value_ = hyperparams.at("default_value").get<double>();
  const auto& keys = parameters.at("keys");
  const bool flat = t.parameterization_ == QParameterization::flat;
  const auto q = parameters.at(flat ? "q" : "advantage").get<std::vector<double>>();
  const auto v = flat ? std::vector<double>(keys.size(), 0.0) : parameters.at("v").get<std::vector<double>>();
  if (q.size() != keys.size() * t.vocab_size_ || v.size() != keys.size()) {
    throw FormatError("tabular_q checkpoint: parameter array sizes do not match keys");
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    Entry e;
    e.v = v[i];
    e.q.assign(q.begin() + static_cast<std::ptrdiff_t>(i * t.vocab_size_),
               q.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.vocab_size_));
    t.table_.emplace(keys[i].get<TokenSeq>(), std::move(e));
  }
  return t;
}

namespace {

QFitResult fit_q_impl(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options,
                      const Policy* base) {
  config.validate();
  if (dataset.empty()) throw EmptyDatasetError("fit_q needs at least one trajectory");
  if (options.mode == BootstrapMode::exact && base == nullptr) {
    throw ModeUnavailableError("exact bootstrapping needs the base policy's full next-token distribution");
  }
  const std::size_t vocab = base ? base->vocab_size() : options.vocab_size;

  double label_sum = 0.0;
  std::size_t max_token = 0;
  for (const auto& t : dataset.trajectories) {
    if (!std::isfinite(t.reward)) throw InvalidArgumentError("dataset contains a non-finite reward");
    label_sum += t.reward;
    for (TokenId x : t.tokens) max_token = std::max<std::size_t>(max_token, x);
  }
  const std::size_t vocab_size = std::max(vocab, max_token + 1);

  QFitResult result{TabularQ(vocab_size, options.parameterization, options.center_advantage), {}};
  TabularQ& q = result.estimator;
  q.initialize(label_sum / static_cast<double>(dataset.size()));

  std::vector<const State*> states;
  std::vector<TokenId> tokens;
  for (const auto& t : dataset.trajectories) {
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      states.push_back(&t.states[i]);
      tokens.push_back(t.tokens[i]);
    }
  }
  std::vector<double> targets(states.size());

  auto bootstrap = [&](const Trajectory& t, std::size_t next) {
    const State& s = t.states[next];
    const auto qs = q.predict_all(s);
    if (options.mode == BootstrapMode::sampled) return qs[t.tokens[next]];
    const auto pi = base->next_dist(s);
    double v = 0.0;
    for (std::size_t x = 0; x < qs.size() && x < pi.size(); ++x) v += pi[x] * qs[x];
    return v;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::size_t k = 0;
    for (const auto& t : dataset.trajectories) {
      const std::size_t n = t.tokens.size();
      std::vector<double> g(n);
      for (std::size_t i = n; i-- > 0;) {
        g[i] = i + 1 == n ? t.reward
                          : config.gamma * ((1.0 - config.lambda) * bootstrap(t, i + 1) + config.lambda * g[i + 1]);
      }
      for (double v : g) targets[k++] = v;
    }
    const double mse = q.train_epoch(states, tokens, targets, config.learning_rate);
    if (!std::isfinite(mse) || mse > 1e6) {
      throw DivergenceError("fit_q diverged in epoch " + std::to_string(epoch));
    }
    result.log.epoch_mse.push_back(mse);
  }
  return result;
}

}  // namespace

QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options,
                 const Policy& base) {
  return fit_q_impl(dataset, config, options, &base);
}

QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options,
                 const RestrictedPolicyView&) {
  if (options.mode == BootstrapMode::exact) {
    throw ModeUnavailableError("exact bootstrapping is unavailable under a top-k-only policy view");
  }
  return fit_q_impl(dataset, config, options, nullptr);
}

QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options) {
  return fit_q_impl(dataset, config, options, nullptr);
}

double QAsValue::predict(const State& state) const {
  if (state.generated.empty()) return q_->state_value(state);
  State parent{state.prompt, {state.generated.begin(), state.generated.end() - 1}};
  return q_->predict(parent, state.generated.back());
}

}  // namespace vas
