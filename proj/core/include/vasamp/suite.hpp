#pragma once

// Bundled enumerable instances (vocabulary <= 5 tokens, horizon <= 6), each
// with a base policy and several reward specifications.

#include <memory>
#include <string>
#include <vector>

#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"

namespace vas {

struct NamedReward {
  std::string name;
  RewardSpec spec;
};

struct SuiteInstance {
  std::string name;
  EpisodeConfig config;
  std::shared_ptr<const Policy> base;
  nlohmann::json policy_spec;
  TokenSeq prompt;
  // rewards[0] is the task reward used by default.
  std::vector<NamedReward> rewards;

  std::shared_ptr<const RewardFn> reward(std::size_t i = 0) const;
  std::shared_ptr<const RewardFn> reward(const std::string& name) const;
};

// vocab {a, b, eos}, uniform base, T = 2; task reward: contains "ab".
SuiteInstance tiny_ab();
// vocab {a, b, c, d, eos}, add-0.5 bigram over a small corpus, T = 5; task reward: contains "ca".
SuiteInstance bigram_instance();
// vocab {a, b, c, eos}, fixed skewed distribution, T = 6; task reward: fraction of b/c tokens.
SuiteInstance skew_instance();

// TINY-AB, BIGRAM, SKEW.
std::vector<SuiteInstance> standard_suite();
// Variants of TINY-AB (uniform, skewed base, token-class reward), all T = 2.
std::vector<SuiteInstance> tiny_ab_family();

// Instance by name ("tiny_ab", "bigram", "skew"); throws InvalidArgumentError.
SuiteInstance suite_instance(const std::string& name);

}  // namespace vas
