#pragma once

// Exact ground truth by enumerating every state reachable within the episode
// horizon. Each function builds the full sequence tree for one prompt, so
// these are only usable on small instances (node_cap guards the size).
//
// Value-like tables implement ValueFunction and policy-like tables implement
// Policy, so oracle output plugs straight into the decoder and evaluators.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/value_function.hpp"

namespace vas {

struct OracleConfig {
  std::size_t node_cap = 10'000'000;
};

// Complete |V|-ary tree of generated sequences, truncated at terminal states.
// Nodes are stored in breadth-first order, so parents precede children.
class SequenceTree {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Node {
    std::size_t parent = npos;
    TokenId token = 0;
    std::uint32_t depth = 0;
    bool terminal = false;
    std::size_t first_child = npos;  // children are contiguous, one per token id
  };

  // Throws StateSpaceTooLargeError once more than node_cap nodes would be created.
  static std::shared_ptr<const SequenceTree> build(const EpisodeConfig& config, TokenSeq prompt,
                                                   const OracleConfig& oracle = {});

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t child(std::size_t i, TokenId token) const;
  std::size_t vocab_size() const noexcept { return config_.vocab.size(); }
  const EpisodeConfig& config() const noexcept { return config_; }
  const TokenSeq& prompt() const noexcept { return prompt_; }

  State state(std::size_t i) const;
  // npos if the state is not in this tree (different prompt or invalid path).
  std::size_t find(const State& state) const;

 private:
  SequenceTree(EpisodeConfig config, TokenSeq prompt) : config_(std::move(config)), prompt_(std::move(prompt)) {}

  EpisodeConfig config_;
  TokenSeq prompt_;
  std::vector<Node> nodes_;
};

class ValueTable final : public ValueFunction {
 public:
  ValueTable(std::shared_ptr<const SequenceTree> tree, std::vector<double> values);

  // Throws InvalidArgumentError for states outside the tree.
  double at(const State& state) const;
  double at_node(std::size_t node) const { return values_.at(node); }
  double predict(const State& state) const override { return at(state); }

  const SequenceTree& tree() const noexcept { return *tree_; }
  std::shared_ptr<const SequenceTree> tree_ptr() const noexcept { return tree_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::shared_ptr<const SequenceTree> tree_;
  std::vector<double> values_;
};

// Per-state next-token distributions for every non-terminal node.
class PolicyTable final : public Policy {
 public:
  PolicyTable(std::shared_ptr<const SequenceTree> tree, std::vector<double> probs);

  std::size_t vocab_size() const override { return tree_->vocab_size(); }
  std::vector<double> next_dist(const State& state) const override;
  std::span<const double> dist_at_node(std::size_t node) const;
  nlohmann::json spec() const override { return {{"kind", "table"}, {"nodes", tree_->size()}}; }

  const SequenceTree& tree() const noexcept { return *tree_; }

 private:
  std::shared_ptr<const SequenceTree> tree_;
  std::vector<double> probs_;  // size() * vocab_size(), terminal rows are zero
};

// Evaluates `policy` at every non-terminal node.
PolicyTable tabulate_policy(const Policy& policy, std::shared_ptr<const SequenceTree> tree);

// V(s) = E[r(s_T) | s] under `policy`, by backward induction.
ValueTable exact_value(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config,
                       const TokenSeq& prompt = {}, const OracleConfig& oracle = {});

// Q(x | s) = V(x appended to s). Throws TerminalStateError for terminal states.
double exact_q(const ValueTable& values, const State& state, TokenId token);
double exact_q(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config, const State& state,
               TokenId token, const OracleConfig& oracle = {});

// pi(x | s) proportional to pi0(x | s) exp(beta Q(x | s)).
PolicyTable exact_vas_policy(const Policy& policy, const RewardFn& reward, double beta,
                             const EpisodeConfig& config, const TokenSeq& prompt = {},
                             const OracleConfig& oracle = {});

// Betas below this make the soft value numerically meaningless; use exact_value.
inline constexpr double kMinSoftBeta = 1e-8;

// V_soft(s) = (1/beta) ln sum_x pi0(x|s) exp(beta V_soft(x appended to s)), terminal V_soft = r.
// Throws BetaUnderflowError for beta < kMinSoftBeta.
ValueTable exact_soft_value(const Policy& policy, const RewardFn& reward, double beta,
                            const EpisodeConfig& config, const TokenSeq& prompt = {},
                            const OracleConfig& oracle = {});

// Per-state policy whose sequence marginal is pi0(seq) exp(beta r(seq)) / Z.
// Valid for any beta >= 0; beta = 0 returns pi0 unchanged.
PolicyTable exact_tilted_policy(const Policy& policy, const RewardFn& reward, double beta,
                                const EpisodeConfig& config, const TokenSeq& prompt = {},
                                const OracleConfig& oracle = {});

// ln Z(beta) = ln E_pi0[exp(beta r)].
double log_partition(const Policy& policy, const RewardFn& reward, double beta, const EpisodeConfig& config,
                     const TokenSeq& prompt = {}, const OracleConfig& oracle = {});

// Probability of reaching each tree node under `policy`.
std::vector<double> reach_probabilities(const Policy& policy, const SequenceTree& tree);

struct SequenceProb {
  TokenSeq generated;
  double prob = 0.0;
};

// Every terminal sequence with nonzero probability, in tree order.
std::vector<SequenceProb> sequence_distribution(const Policy& policy, const EpisodeConfig& config,
                                                const TokenSeq& prompt = {}, const OracleConfig& oracle = {});

// E[metric(s_T)] under `policy` by forward DP.
double expected_terminal_metric(const Policy& policy, const std::function<double(const State&)>& metric,
                                const EpisodeConfig& config, const TokenSeq& prompt = {},
                                const OracleConfig& oracle = {});

double policy_expected_reward(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config,
                              const TokenSeq& prompt = {}, const OracleConfig& oracle = {});

// Sequence-level KL(p || q) = E_p[sum_t KL(p(.|s_t) || q(.|s_t))].
// Throws SupportViolationError where p puts mass on a token q gives zero.
double policy_kl(const Policy& p, const Policy& q, const EpisodeConfig& config, const TokenSeq& prompt = {},
                 const OracleConfig& oracle = {});

// Total variation 0.5 * sum |p_i - q_i|. Throws DimensionMismatchError.
double dist_tv(std::span<const double> p, std::span<const double> q);

// Golden-test dump: {"metadata": {...}, "entries": {"<state key>": value | [dist]}}.
// State keys render the generated tokens with vocab labels ("" for the root).
nlohmann::json dump_table(const ValueTable& table, const nlohmann::json& metadata);
nlohmann::json dump_table(const PolicyTable& table, const nlohmann::json& metadata);

}  // namespace vas
