#pragma once

// Terminal reward functions. Every variant reads only the eos-stripped
// generated tokens; intermediate states carry zero reward.

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"

namespace vas {

struct RewardSpec;

// 1 if the content tokens contain `pattern` contiguously, else 0.
struct PatternReward {
  TokenSeq pattern;
};

// -scale * number of content tokens.
struct NegLengthReward {
  double scale = 1.0;
};

// Fraction of content tokens that belong to `subset` (0 for an empty response).
struct TokenClassReward {
  std::vector<TokenId> subset;
};

// sum_i weights[i] * terms[i].
struct LinearReward {
  std::vector<double> weights;
  std::vector<RewardSpec> terms;
};

struct RewardSpec {
  std::variant<PatternReward, NegLengthReward, TokenClassReward, LinearReward> kind;
};

// Throws NonTerminalError for a non-terminal state and InvalidArgumentError
// for a malformed LinearReward.
double reward_eval(const RewardSpec& spec, const State& state, const EpisodeConfig& config);

// Structural validation (finite weights, at least one term, valid tokens).
void validate_reward_spec(const RewardSpec& spec, const Vocab& vocab);

std::string describe(const RewardSpec& spec, const Vocab& vocab);

class RewardFn {
 public:
  virtual ~RewardFn() = default;
  // Defined for every terminal state; deterministic.
  virtual double score(const State& terminal) const = 0;
  virtual nlohmann::json spec() const { return {{"kind", "custom"}}; }
};

class SpecReward final : public RewardFn {
 public:
  SpecReward(RewardSpec spec, EpisodeConfig config);
  double score(const State& terminal) const override;
  nlohmann::json spec() const override;
  const RewardSpec& reward_spec() const noexcept { return spec_; }

 private:
  RewardSpec spec_;
  EpisodeConfig config_;
};

// Wraps an arbitrary callable; used for judges and terminal metrics.
class FunctionReward final : public RewardFn {
 public:
  using Fn = std::function<double(const State&)>;
  FunctionReward(Fn fn, std::string name) : fn_(std::move(fn)), name_(std::move(name)) {}
  double score(const State& terminal) const override { return fn_(terminal); }
  nlohmann::json spec() const override { return {{"kind", "function"}, {"name", name_}}; }

 private:
  Fn fn_;
  std::string name_;
};

}  // namespace vas
