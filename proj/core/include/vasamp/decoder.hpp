#pragma once

// Value-augmented decoding: the base policy's next-token distribution is
// reweighted by exp(beta * V(s + x)) for candidate tokens x, either over the
// full vocabulary or over the top-k tokens with a fallback for the rest.
// Best-of-N and FUDGE-style classifier decoding are provided as baselines.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/q_estimator.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/rng.hpp"
#include "vasamp/rollout.hpp"
#include "vasamp/value_function.hpp"

namespace vas {

enum class Fallback { mean_value, base_only };
enum class DecodeMode { full, topk, blackbox_rerank };

std::string to_string(Fallback f);
std::string to_string(DecodeMode m);
Fallback fallback_from_string(const std::string& s);
DecodeMode decode_mode_from_string(const std::string& s);

struct DecodeParams {
  double beta = 0.0;
  std::size_t top_k = 1;
  Fallback fallback = Fallback::mean_value;
  double temperature = 1.0;
  DecodeMode mode = DecodeMode::full;
  std::uint64_t seed = 0;
  // Full/topk modes: pick the most probable token instead of sampling.
  bool greedy = false;
  // Blackbox mode: sample from the softmax of the combined scores instead of taking the argmax.
  bool blackbox_sample = false;
  std::size_t provider_cap = 5;

  // Throws InvalidArgumentError (beta < 0, temperature <= 0, top_k outside
  // [1, vocab_size] in full/topk modes, top_k > provider_cap in blackbox mode).
  void validate(std::size_t vocab_size) const;
  nlohmann::json to_json() const;
};

// base_i * exp(beta * values_i), normalized with max-subtraction. beta = 0,
// or equal values over the support, returns `base` unchanged.
// Throws DimensionMismatchError, NonFiniteError.
std::vector<double> augment_full(std::span<const double> base, std::span<const double> values, double beta);

struct AugmentedStep {
  State state;
  std::vector<TokenId> candidates;
  std::vector<double> base_probs;  // base probability of each candidate
  std::vector<double> values;      // value estimate of each candidate
  std::optional<double> mean_value;
  double normalizer = 1.0;  // sum of the max-shifted unnormalized weights
  std::vector<double> dist;
  std::optional<TokenId> token;
};

// Per-token value callback for the current state.
using TokenValueFn = std::function<double(TokenId)>;

// Top-k tokens by base probability (ties to the lowest id) get exp(beta * V);
// the rest get exp(beta * Vbar) with Vbar the arithmetic mean of the k
// evaluated values (mean_value), or keep their base weight (base_only).
AugmentedStep augment_topk(std::span<const double> base, const TokenValueFn& value_fn, double beta, std::size_t k,
                           Fallback fallback);

// Scores candidate successor tokens of a state.
class TokenScorer {
 public:
  virtual ~TokenScorer() = default;
  virtual double score(const State& state, TokenId token, const EpisodeConfig& config) const = 0;
  virtual nlohmann::json describe() const = 0;
};

// V(s + x) from a state-value function.
class StateValueScorer final : public TokenScorer {
 public:
  explicit StateValueScorer(std::shared_ptr<const ValueFunction> value, std::string checksum = {})
      : value_(std::move(value)), checksum_(std::move(checksum)) {}
  double score(const State& state, TokenId token, const EpisodeConfig& config) const override;
  nlohmann::json describe() const override { return {{"kind", "state_value"}, {"checksum", checksum_}}; }

 private:
  std::shared_ptr<const ValueFunction> value_;
  std::string checksum_;
};

// Q(s, x) read directly from a Q estimator.
class QValueScorer final : public TokenScorer {
 public:
  explicit QValueScorer(std::shared_ptr<const QEstimator> q, std::string checksum = {})
      : q_(std::move(q)), checksum_(std::move(checksum)) {}
  double score(const State& state, TokenId token, const EpisodeConfig& config) const override;
  nlohmann::json describe() const override { return {{"kind", "q_value"}, {"checksum", checksum_}}; }

 private:
  std::shared_ptr<const QEstimator> q_;
  std::string checksum_;
};

// Distribution used at `state` in full/topk mode (after the temperature transform).
AugmentedStep decode_step(const Policy& policy, const TokenScorer& scorer, const State& state,
                          const EpisodeConfig& config, const DecodeParams& params);

// argmax over visible candidates of logprob + beta * V(s + x), ties to the
// lowest token id. Throws EmptyCandidateError when the view returns nothing.
TokenId rerank_blackbox(const RestrictedPolicyView& view, const TokenScorer& scorer, double beta, const State& state,
                        std::size_t k, const EpisodeConfig& config);

struct DecodeResult {
  Trajectory trajectory;
  std::vector<AugmentedStep> steps;
};

// Decodes one sequence. The sampling stream is Rng(params.seed); with
// beta = 0 the token stream equals rollout() under the same seed and temperature
// (full/topk), or the base greedy path (blackbox_rerank).
DecodeResult decode_sequence(const Policy& policy, const TokenScorer& scorer, const RewardFn& reward,
                             const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params);
DecodeResult decode_sequence(const Policy& policy, const TokenScorer& scorer, const RewardFn& reward,
                             const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params,
                             Rng& rng);

// The decoded per-state distribution as a Policy, so exact evaluators can
// enumerate it. Blackbox mode yields a point mass on the reranked token.
class DecodedPolicy final : public Policy {
 public:
  DecodedPolicy(std::shared_ptr<const Policy> base, std::shared_ptr<const TokenScorer> scorer, EpisodeConfig config,
                DecodeParams params);
  std::size_t vocab_size() const override { return base_->vocab_size(); }
  std::vector<double> next_dist(const State& state) const override;
  nlohmann::json spec() const override;

 private:
  std::shared_ptr<const Policy> base_;
  std::shared_ptr<const TokenScorer> scorer_;
  EpisodeConfig config_;
  DecodeParams params_;
};

// N independent base rollouts (seeds derive_seed(seed, "best_of_n", i)); the
// highest reward wins, ties to the earliest sample.
Trajectory best_of_n(const Policy& policy, const RewardFn& reward, const TokenSeq& prompt,
                     const EpisodeConfig& config, std::size_t n, std::uint64_t seed, double temperature = 1.0);

// Classifier-weighted decoding: pi0(x|s) * C(s + x), renormalized. When every
// candidate has zero weight the base distribution is used and a warning logged.
// Throws ClassifierRangeError for outputs outside [0, 1].
using Classifier = std::function<double(const State&)>;
std::vector<double> fudge_dist(std::span<const double> base, const Classifier& classifier, const State& state,
                               const EpisodeConfig& config);
Trajectory fudge_decode(const Policy& policy, const Classifier& classifier, const RewardFn& reward,
                        const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params);

// JSONL records: one AugmentedStep per line, and decode results mirroring the
// trajectory format with {beta, k, mode, estimator_checksum}.
nlohmann::json augmented_step_to_json(const AugmentedStep& step);
nlohmann::json decode_result_to_json(const DecodeResult& result, const DecodeParams& params,
                                     const std::string& estimator_checksum);

}  // namespace vas
