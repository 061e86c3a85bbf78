#pragma once

// Run configuration: a TOML file converted to JSON, with command-line
// overrides applied, validated against a fixed schema (unknown keys are errors).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vasamp/decoder.hpp"
#include "vasamp/eval.hpp"
#include "vasamp/q_estimator.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/suite.hpp"
#include "vasamp/td.hpp"
#include "vasamp/value.hpp"

namespace vas::cli {

inline constexpr int kConfigVersion = 1;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  // "section.key=value" with a TOML value (bare words fall back to strings).
  std::vector<std::string> set;
};

// Parses the TOML file (or an empty document when path is empty) and applies
// overrides. Throws ConfigError.
nlohmann::json load_config_json(const std::string& path, const Overrides& overrides);

struct EstimatorConfig {
  std::string kind = "tabular";  // tabular | linear | mlp | tabular_q
  std::size_t order = 2;
  std::vector<std::size_t> hidden{16};
  double init_scale = 1.0;
  BootstrapMode bootstrap = BootstrapMode::sampled;
  QParameterization parameterization = QParameterization::flat;
  bool center_advantage = false;
};

struct TrainConfig {
  TdConfig td;
  std::size_t n_trajectories = 20000;
  double temperature = kDefaultCollectTemperature;
};

struct DecodeConfig {
  DecodeParams params;
  std::size_t n = 100;
  std::string value = "checkpoint";  // checkpoint | exact
  std::optional<std::string> checkpoint;
};

struct FrontierConfig {
  std::vector<double> betas{0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<std::string> methods{"base", "vas_exact", "tilted_oracle", "bon"};
  std::string estimation = "exact";  // exact | monte_carlo | both
  std::size_t n_samples = 2000;
  std::vector<std::size_t> bon_n{1, 2, 4, 8, 16};
  std::optional<std::string> checkpoint;
};

struct AblateConfig {
  std::string factor = "fallback";  // fallback | lambda | k | dataset_size | capacity
  double beta = 3.0;                // fixed beta of the k and dataset_size studies
  std::vector<double> betas{0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::size_t k = 2;
  std::vector<double> lambdas{0.0, 0.95};
  std::size_t epochs = 1;
  std::vector<std::size_t> k_grid;
  std::string value = "exact";  // exact | learned
  std::vector<std::size_t> sizes{500, 5000, 50000};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> capacities{"tabular", "linear", "mlp"};
};

struct ValidationConfig {
  std::optional<std::size_t> prefix_len;
  std::size_t entries = 300;
  std::size_t completions = 10;
};

struct ComposeConfig {
  std::vector<double> weights;
  std::vector<std::string> checkpoints;
};

class RunConfig {
 public:
  // Validates the schema and every section that has a fixed shape. Throws ConfigError.
  explicit RunConfig(nlohmann::json raw);

  const nlohmann::json& raw() const noexcept { return raw_; }
  // FNV-1a over the canonical JSON of everything except "out" and "jobs".
  const std::string& checksum() const noexcept { return checksum_; }
  std::string header() const { return "# config_checksum: " + checksum_; }

  std::string experiment;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t jobs = 1;

  TrainConfig train;
  EstimatorConfig estimator;
  DecodeConfig decode;
  FrontierConfig frontier;
  AblateConfig ablate;
  CostModel cost;
  ValidationConfig validation;
  ComposeConfig compose;

  // Instance and reward are built on demand; throw ConfigError naming the missing field.
  const SuiteInstance& instance() const;
  const RewardSpec& reward_spec() const;
  std::shared_ptr<const RewardFn> reward() const;
  // Every reward to check in oracle-check: the suite's rewards plus the configured one.
  std::vector<NamedReward> all_rewards() const;

 private:
  nlohmann::json raw_;
  std::string checksum_;
  mutable std::optional<SuiteInstance> instance_;
  mutable std::optional<RewardSpec> reward_spec_;
};

std::unique_ptr<ValueEstimator> make_estimator(const EstimatorConfig& config, const EpisodeConfig& episode,
                                               std::uint64_t seed);

}  // namespace vas::cli
