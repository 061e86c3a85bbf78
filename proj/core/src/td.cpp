#include "vasamp/td.hpp"

#include <cmath>
#include <numeric>

#include "vasamp/errors.hpp"
#include "vasamp/rng.hpp"

namespace vas {

void TdConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgumentError("td.lambda must be in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgumentError("td.gamma must be in [0, 1]");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgumentError("td.learning_rate must be > 0");
  }
  if (epochs < 1) throw InvalidArgumentError("td.epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgumentError("td.batch_size must be >= 1");
}

nlohmann::json TdConfig::to_json() const {
  return {{"lambda", lambda},         {"gamma", gamma}, {"learning_rate", learning_rate},
          {"epochs", epochs},         {"batch_size", batch_size}, {"seed", seed},
          {"train_terminal_states", train_terminal_states}};
}

TrajectoryDataset collect_dataset(const Policy& policy, const RewardFn& reward, std::span<const TokenSeq> prompts,
                                  std::size_t n_per_prompt, const EpisodeConfig& config, double temperature,
                                  std::uint64_t seed) {
  TrajectoryDataset ds;
  ds.provenance = DatasetProvenance{policy.spec(), reward.spec(), temperature, seed};
  ds.trajectories.reserve(prompts.size() * n_per_prompt);
  std::uint64_t index = 0;
  for (const auto& prompt : prompts) {
    for (std::size_t i = 0; i < n_per_prompt; ++i, ++index) {
      const auto traj_seed = derive_seed(seed, "rollout", index);
      Rng rng(traj_seed);
      auto t = rollout(policy, reward, prompt, config, rng, temperature);
      t.seed = traj_seed;
      ds.trajectories.push_back(std::move(t));
    }
  }
  return ds;
}

std::vector<double> lambda_returns(std::span<const double> values, double reward, double gamma, double lambda) {
  const std::size_t n = values.size();
  std::vector<double> targets(n);
  double advantage = 0.0;  // sum_{i>=t} (gamma lambda)^(i-t) delta_i, built backwards
  for (std::size_t t = n; t-- > 0;) {
    const double next = t + 1 < n ? gamma * values[t + 1] : reward;
    const double delta = next - values[t];
    advantage = t + 1 < n ? delta + gamma * lambda * advantage : delta;
    targets[t] = values[t] + advantage;
  }
  return targets;
}

std::vector<double> td_lambda_targets(const Trajectory& trajectory, const ValueFunction& estimator,
                                      const TdConfig& config) {
  if (trajectory.states.size() < 2) throw NonTerminalError("trajectory has no transitions");
  std::vector<double> values;
  values.reserve(trajectory.states.size() - 1);
  for (std::size_t t = 0; t + 1 < trajectory.states.size(); ++t) {
    values.push_back(estimator.predict(trajectory.states[t]));
  }
  return lambda_returns(values, trajectory.reward, config.gamma, config.lambda);
}

TrainingLog fit_value(ValueEstimator& estimator, const TrajectoryDataset& dataset, const TdConfig& config) {
  config.validate();
  if (dataset.empty()) throw EmptyDatasetError("fit_value needs at least one trajectory");

  double label_sum = 0.0;
  for (const auto& t : dataset.trajectories) {
    if (!std::isfinite(t.reward)) throw InvalidArgumentError("dataset contains a non-finite reward");
    label_sum += t.reward;
  }
  estimator.initialize(label_sum / static_cast<double>(dataset.size()));

  std::vector<const State*> states;
  for (const auto& t : dataset.trajectories) {
    const std::size_t n = t.states.size() - (config.train_terminal_states ? 0 : 1);
    for (std::size_t i = 0; i < n; ++i) states.push_back(&t.states[i]);
  }
  std::vector<double> targets(states.size());
  std::vector<std::size_t> order(states.size());
  std::vector<const State*> batch_states;
  std::vector<double> batch_targets;

  TrainingLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::size_t k = 0;
    for (const auto& t : dataset.trajectories) {
      for (double v : td_lambda_targets(t, estimator, config)) targets[k++] = v;
      if (config.train_terminal_states) targets[k++] = t.reward;
    }

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "fit_value", epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    estimator.begin_epoch();
    double sq_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_states.clear();
      batch_targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_states.push_back(states[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      const double mse = estimator.train_step(batch_states, batch_targets, config.learning_rate);
      sq_sum += mse * static_cast<double>(end - start);
      const double running = sq_sum / static_cast<double>(end);
      if (!std::isfinite(running) || running > 1e6) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                              " (running MSE = " + std::to_string(running) + ")");
      }
    }
    log.epoch_mse.push_back(sq_sum / static_cast<double>(order.size()));
  }
  return log;
}

ValidationSet make_validation_set(const Policy& policy, const RewardFn& reward, std::span<const TokenSeq> prompts,
                                  std::size_t prefix_len, const EpisodeConfig& config,
                                  std::size_t entries_per_prompt, std::size_t completions, std::uint64_t seed,
                                  double temperature) {
  if (prefix_len >= config.max_new_tokens) throw InvalidArgumentError("prefix_len must be < max_new_tokens");
  if (completions < 1) throw InvalidArgumentError("validation needs M >= 1 completions");
  constexpr std::size_t kMaxAttempts = 1000;

  ValidationSet vs;
  vs.completions = completions;
  std::uint64_t entry_index = 0;
  for (const auto& prompt : prompts) {
    for (std::size_t e = 0; e < entries_per_prompt; ++e, ++entry_index) {
      Rng rng(derive_seed(seed, "validation_prefix", entry_index));
      State prefix;
      bool found = false;
      for (std::size_t attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
        prefix = State{prompt, {}};
        while (prefix.generated.size() < prefix_len && !is_terminal(prefix, config)) {
          const auto d = apply_temperature(policy.next_dist(prefix), temperature);
          prefix = transition(prefix, sample_categorical(d, rng), config);
        }
        found = !is_terminal(prefix, config);
      }
      if (!found) throw InvalidArgumentError("could not sample a non-terminal prefix of the requested length");

      double sum = 0.0;
      for (std::size_t m = 0; m < completions; ++m) {
        Rng crng(derive_seed(seed, "validation_completion", entry_index * completions + m));
        State s = prefix;
        while (!is_terminal(s, config)) {
          const auto d = apply_temperature(policy.next_dist(s), temperature);
          s = transition(s, sample_categorical(d, crng), config);
        }
        sum += reward.score(s);
      }
      vs.entries.push_back({std::move(prefix), sum / static_cast<double>(completions)});
    }
  }
  return vs;
}

double validation_mse(const ValueFunction& estimator, const ValidationSet& valset) {
  if (valset.entries.empty()) throw EmptyDatasetError("validation set is empty");
  double sq = 0.0;
  for (const auto& e : valset.entries) {
    const double d = estimator.predict(e.prefix) - e.label;
    sq += d * d;
  }
  return sq / static_cast<double>(valset.entries.size());
}

double grad_check(DifferentiableValue& model, std::span<const State* const> states, std::span<const double> targets,
                  double eps) {
  std::vector<double> analytic;
  model.loss_and_gradient(states, targets, analytic);
  auto params = model.parameters();
  std::vector<double> scratch;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) throw NonFiniteGradientError("non-finite parameter");
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = model.loss_and_gradient(states, targets, scratch);
    params[i] = saved - eps;
    const double down = model.loss_and_gradient(states, targets, scratch);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NonFiniteGradientError("non-finite gradient at parameter " + std::to_string(i));
    }
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace vas
