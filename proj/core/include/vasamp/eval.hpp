#pragma once

// Measurement apparatus: KL-reward frontiers (exact and Monte Carlo), the
// inference cost model, behavioural beta sweeps, estimator accuracy versus
// achieved reward, ablation reports, and a reward-model pairwise judge.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vasamp/decoder.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/oracle.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/td.hpp"
#include "vasamp/value.hpp"

namespace vas {

struct FrontierPoint {
  std::string method;  // vas_exact | vas_learned | tilted_oracle | bon | fudge | base
  // Tilt strength; for Best-of-N points this column holds N.
  double beta = 0.0;
  double reward = 0.0;
  double kl = 0.0;
  std::string estimation = "exact";  // exact | monte_carlo
  std::size_t n_samples = 0;
  std::optional<double> se_reward;
  std::optional<double> se_kl;
  std::uint64_t seed = 0;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads (jobs <= 1 runs inline).
// Results must be written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Exact (reward, KL) of the decoded policy at each beta by enumeration.
std::vector<FrontierPoint> frontier_exact(std::shared_ptr<const Policy> base,
                                          std::shared_ptr<const TokenScorer> scorer, const RewardFn& reward,
                                          std::span<const double> beta_grid, const EpisodeConfig& config,
                                          const DecodeParams& params, const std::string& method,
                                          const TokenSeq& prompt = {}, std::size_t jobs = 1);

// Exact frontier of the sequence-level optimum pi0 exp(beta r) / Z.
std::vector<FrontierPoint> frontier_tilted(const Policy& base, const RewardFn& reward,
                                           std::span<const double> beta_grid, const EpisodeConfig& config,
                                           const TokenSeq& prompt = {}, std::size_t jobs = 1);

// Exact Best-of-N points: E[max of N rewards] and the KL of the BoN sequence
// distribution from pi0.
std::vector<FrontierPoint> frontier_bon_exact(const Policy& base, const RewardFn& reward,
                                              std::span<const std::size_t> n_grid, const EpisodeConfig& config,
                                              const TokenSeq& prompt = {});
double bon_expected_reward(const Policy& base, const RewardFn& reward, std::size_t n, const EpisodeConfig& config,
                           const TokenSeq& prompt = {});

// Monte Carlo frontier from decoded samples. Sample i at every beta uses
// Rng(derive_seed(seed, "frontier_mc", i)). KL is the mean over samples of
// sum_t ln(pi(x_t|s_t) / pi0(x_t|s_t)) with pi the decoder's emitted distribution.
std::vector<FrontierPoint> frontier_mc(const Policy& base, const TokenScorer& scorer, const RewardFn& reward,
                                       std::span<const double> beta_grid, std::size_t n_samples, std::uint64_t seed,
                                       const DecodeParams& params, const EpisodeConfig& config,
                                       const std::string& method, const TokenSeq& prompt = {},
                                       std::size_t jobs = 1);

// Frontier CSV with a "# config_checksum: <hex>" header line.
void write_frontier_csv(std::ostream& os, std::span<const FrontierPoint> points, const std::string& checksum);
std::string frontier_csv_block(std::span<const FrontierPoint> points);

// Fraction of `arm` points P for which the piecewise-linear frontier through
// `reference` reaches reward >= P.reward - tol at some KL <= P.kl.
double dominance_fraction(std::span<const FrontierPoint> arm, std::span<const FrontierPoint> reference,
                          double tol = 1e-12);
bool weakly_dominated(const FrontierPoint& point, std::span<const FrontierPoint> reference, double tol = 1e-12);

enum class CostMethod { policy_only, bon, vas };
std::string to_string(CostMethod m);
CostMethod cost_method_from_string(const std::string& s);

// Abstract compute: m base-model FLOPS per token, n value-model FLOPS per
// token, T response length, k evaluated candidates, N Best-of-N samples.
struct CostModel {
  std::optional<double> m;
  std::optional<double> n;
  std::optional<double> T;
  std::optional<double> k;
  std::optional<double> N;
};

// policy_only: T^2 m; bon: N T^2 (n + m); vas: T^2 (m + k n).
// Throws MissingFieldError naming the absent field, InvalidArgumentError for negative fields.
double cost_flops(const CostModel& model, CostMethod method);

struct CurvePoint {
  double beta = 0.0;
  double value = 0.0;
  std::optional<double> se;
};

// Exact E[metric(s_T)] under make_policy(beta) for each beta.
std::vector<CurvePoint> beta_sweep_exact(const std::function<std::shared_ptr<const Policy>(double)>& make_policy,
                                         const std::function<double(const State&)>& metric,
                                         std::span<const double> beta_grid, const EpisodeConfig& config,
                                         const TokenSeq& prompt = {}, std::size_t jobs = 1);
// Monte Carlo mean and standard error of the metric over decoded samples.
std::vector<CurvePoint> beta_sweep_mc(const Policy& base, const TokenScorer& scorer,
                                      const std::function<double(const State&)>& metric,
                                      std::span<const double> beta_grid, std::size_t n_samples, std::uint64_t seed,
                                      const DecodeParams& params, const EpisodeConfig& config,
                                      const TokenSeq& prompt = {}, std::size_t jobs = 1);
// Number of adjacent pairs where the curve increases by more than se_mult
// combined standard errors (nonincreasing curves have zero).
std::size_t count_inversions(std::span<const CurvePoint> curve, double se_mult = 0.0);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct AccuracyRow {
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  double validation_mse = 0.0;
  double reward = 0.0;
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;
  double spearman_rho = 0.0;
};

struct AccuracyStudy {
  std::vector<std::size_t> dataset_sizes;
  std::vector<std::uint64_t> seeds;
  double beta = 3.0;
  double collect_temperature = kDefaultCollectTemperature;
  TdConfig td;
  DecodeParams decode;
  TokenSeq prompt;
};

// For every (seed, size): collect `size` trajectories with seed
// derive_seed(seed, "dataset", size), fit `make_estimator()`, and record its
// validation MSE and the exact expected reward of the decoded policy at beta.
AccuracyReport accuracy_vs_performance(std::shared_ptr<const Policy> base, const RewardFn& reward,
                                       const ValidationSet& valset, const AccuracyStudy& study,
                                       const EpisodeConfig& config,
                                       const std::function<std::unique_ptr<ValueEstimator>()>& make_estimator,
                                       std::size_t jobs = 1);

struct KReport {
  std::size_t k = 0;
  double mean_tv = 0.0;
  double max_tv = 0.0;
  FrontierPoint point;
};

// Mean total variation between augment_topk(k) and the full-vocabulary tilt
// over every non-terminal state reachable within the horizon, plus the exact
// frontier point of each top-k decoded policy.
std::vector<KReport> varying_k_report(std::shared_ptr<const Policy> base, std::shared_ptr<const TokenScorer> scorer,
                                      const RewardFn& reward, double beta, std::span<const std::size_t> k_grid,
                                      const EpisodeConfig& config, Fallback fallback = Fallback::mean_value,
                                      const TokenSeq& prompt = {});

// Fraction of pairs with judge(a) > judge(b), ties counting one half.
// Throws LengthMismatchError for unequal counts.
double judge_compare(std::span<const Trajectory> a, std::span<const Trajectory> b, const RewardFn& judge);

struct AblationArm {
  std::string name;
  std::vector<FrontierPoint> points;
};

struct AblationReport {
  std::string factor;
  std::vector<double> beta_grid;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationArm> arms;
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json shared_config = nlohmann::json::object();

  nlohmann::json to_json(const std::string& checksum) const;
};

}  // namespace vas
