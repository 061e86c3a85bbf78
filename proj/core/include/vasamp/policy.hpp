#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"

namespace vas {

// Anything that yields a next-token distribution for a state. Implementations
// are immutable after construction and safe to share across threads.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::size_t vocab_size() const = 0;

  // Entries are >= 0 and sum to 1 within 1e-9.
  virtual std::vector<double> next_dist(const State& state) const = 0;

  // Description recorded in dataset and report metadata.
  virtual nlohmann::json spec() const { return {{"kind", "custom"}}; }
};

// Throws InvalidArgumentError if `dist` has negative/non-finite entries or
// does not sum to one within `tol`.
void validate_distribution(std::span<const double> dist, double tol = 1e-9);

// Temperatures at or below this are treated as the greedy limit.
inline constexpr double kGreedyTemperature = 1e-6;

// p_i^(1/temperature), renormalized. temperature == 1 returns the input
// unchanged; the greedy limit is one-hot on the lowest-index maximum.
std::vector<double> apply_temperature(std::span<const double> dist, double temperature);

// Lowest index attaining the maximum.
TokenId argmax(std::span<const double> values);

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(std::size_t vocab_size);
  std::size_t vocab_size() const override { return n_; }
  std::vector<double> next_dist(const State&) const override;
  nlohmann::json spec() const override;

 private:
  std::size_t n_;
};

class PointMassPolicy final : public Policy {
 public:
  PointMassPolicy(std::size_t vocab_size, TokenId token);
  std::size_t vocab_size() const override { return n_; }
  std::vector<double> next_dist(const State&) const override;
  nlohmann::json spec() const override;

 private:
  std::size_t n_;
  TokenId token_;
};

// Same distribution at every state.
class FixedPolicy final : public Policy {
 public:
  explicit FixedPolicy(std::vector<double> probs);
  std::size_t vocab_size() const override { return probs_.size(); }
  std::vector<double> next_dist(const State&) const override { return probs_; }
  nlohmann::json spec() const override;

 private:
  std::vector<double> probs_;
};

// Next-token distribution conditioned on the previous token (last generated,
// else last prompt token, else a begin-of-sequence context).
class BigramPolicy final : public Policy {
 public:
  // counts is (vocab_size + 1) x vocab_size row-major; row vocab_size is BOS.
  BigramPolicy(std::size_t vocab_size, std::vector<double> counts, double alpha);

  std::size_t vocab_size() const override { return n_; }
  std::vector<double> next_dist(const State& state) const override;
  nlohmann::json spec() const override;

  std::size_t bos_context() const noexcept { return n_; }

 private:
  std::size_t n_;
  std::vector<double> counts_;
  double alpha_;
};

// Add-alpha smoothed bigram counts over the corpus. Each sequence starts in
// the BOS context. Querying an unseen context with alpha = 0 throws ZeroMassError.
BigramPolicy train_bigram(std::span<const TokenSeq> corpus, const Vocab& vocab, double alpha);

// A black-box provider that exposes only its top-k next-token log-probabilities.
class RestrictedPolicyView {
 public:
  virtual ~RestrictedPolicyView() = default;

  // Up to min(k, cap()) (token, log-probability) pairs, most probable first,
  // ties to the lowest token id. Zero-probability tokens are never returned.
  virtual std::vector<std::pair<TokenId, double>> top_logprobs(const State& state,
                                                               std::size_t k) const = 0;
  virtual std::size_t cap() const = 0;
};

// Local adapter exposing any Policy through the restricted interface.
class TopLogprobView final : public RestrictedPolicyView {
 public:
  explicit TopLogprobView(std::shared_ptr<const Policy> policy, std::size_t cap = 5);

  std::vector<std::pair<TokenId, double>> top_logprobs(const State& state,
                                                       std::size_t k) const override;
  std::size_t cap() const override { return cap_; }

 private:
  std::shared_ptr<const Policy> policy_;
  std::size_t cap_;
};

// Indices of the k largest entries, ties to the lowest index, in descending order.
std::vector<TokenId> top_k_indices(std::span<const double> values, std::size_t k);

}  // namespace vas
