#pragma once

// Dataset collection from the frozen base policy, TD(lambda) regression
// targets, the training loop, and the held-out validation protocol.

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/rollout.hpp"
#include "vasamp/value.hpp"

namespace vas {

inline constexpr double kDefaultCollectTemperature = 0.7;

struct TdConfig {
  double lambda = 0.95;
  double gamma = 1.0;
  double learning_rate = 1.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // Also regress terminal states onto their reward, so the estimator can be
  // queried on every successor, including eos.
  bool train_terminal_states = true;

  void validate() const;
  nlohmann::json to_json() const;
};

struct DatasetProvenance {
  nlohmann::json policy_spec;
  nlohmann::json reward_spec;
  double temperature = kDefaultCollectTemperature;
  std::uint64_t seed = 0;
};

struct TrajectoryDataset {
  std::vector<Trajectory> trajectories;
  DatasetProvenance provenance;

  bool empty() const noexcept { return trajectories.empty(); }
  std::size_t size() const noexcept { return trajectories.size(); }
};

// n_per_prompt rollouts per prompt. Trajectory i uses seed
// derive_seed(seed, "rollout", i), recorded on the trajectory.
TrajectoryDataset collect_dataset(const Policy& policy, const RewardFn& reward, std::span<const TokenSeq> prompts,
                                  std::size_t n_per_prompt, const EpisodeConfig& config,
                                  double temperature = kDefaultCollectTemperature, std::uint64_t seed = 0);

// Forward-view lambda-returns for an episode whose non-terminal states have
// current estimates values[0..n-1] and whose final transition yields `reward`:
//   delta_i = gamma * values[i+1] - values[i]   (i < n-1)
//   delta_{n-1} = reward - values[n-1]
//   target_t = values[t] + sum_{i>=t} (gamma * lambda)^(i-t) * delta_i
std::vector<double> lambda_returns(std::span<const double> values, double reward, double gamma, double lambda);

// Targets for every non-terminal state of the trajectory, bootstrapping from `estimator`.
std::vector<double> td_lambda_targets(const Trajectory& trajectory, const ValueFunction& estimator,
                                      const TdConfig& config);

struct TrainingLog {
  std::vector<double> epoch_mse;
};

// Mini-batch regression onto TD(lambda) targets, recomputed from the current
// estimator at the start of every epoch. Deterministic per config.seed.
// Throws EmptyDatasetError, DivergenceError (MSE > 1e6 or non-finite).
TrainingLog fit_value(ValueEstimator& estimator, const TrajectoryDataset& dataset, const TdConfig& config);

struct ValidationEntry {
  State prefix;
  double label = 0.0;
};

struct ValidationSet {
  std::vector<ValidationEntry> entries;
  std::size_t completions = 10;
};

// For each prompt, `entries_per_prompt` prefixes of exactly prefix_len
// generated tokens are sampled from the base policy (prefixes that terminate
// early are redrawn), and each is labelled with the mean reward of M
// independent completions.
ValidationSet make_validation_set(const Policy& policy, const RewardFn& reward, std::span<const TokenSeq> prompts,
                                  std::size_t prefix_len, const EpisodeConfig& config,
                                  std::size_t entries_per_prompt, std::size_t completions = 10,
                                  std::uint64_t seed = 0, double temperature = 1.0);

double validation_mse(const ValueFunction& estimator, const ValidationSet& valset);

// Central finite differences on the 0.5 * MSE loss against analytic gradients;
// returns max_i |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-12). Restores parameters.
double grad_check(DifferentiableValue& model, std::span<const State* const> states, std::span<const double> targets,
                  double eps = 1e-5);

}  // namespace vas
