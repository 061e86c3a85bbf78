#include "vasamp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vasamp/errors.hpp"

namespace vas {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ln sum exp(x_i), skipping -inf entries; -inf if all are.
double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) {
    if (x != kNegInf) s += std::exp(x - m);
  }
  return m + std::log(s);
}

std::shared_ptr<const SequenceTree> make_tree(const EpisodeConfig& config, const TokenSeq& prompt,
                                              const OracleConfig& oracle) {
  return SequenceTree::build(config, prompt, oracle);
}

// Reward at every terminal node, zero elsewhere.
std::vector<double> terminal_rewards(const RewardFn& reward, const SequenceTree& tree) {
  std::vector<double> r(tree.size(), 0.0);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (tree.node(i).terminal) r[i] = reward.score(tree.state(i));
  }
  return r;
}

// W(s) = ln E_pi0[exp(beta r) | s], the log-partition of the subtree.
std::vector<double> subtree_log_partition(const PolicyTable& base, const std::vector<double>& rewards,
                                          double beta) {
  const auto& tree = base.tree();
  const std::size_t v = tree.vocab_size();
  std::vector<double> w(tree.size(), 0.0);
  std::vector<double> terms(v);
  for (std::size_t i = tree.size(); i-- > 0;) {
    const auto& node = tree.node(i);
    if (node.terminal) {
      w[i] = beta * rewards[i];
      continue;
    }
    const auto p = base.dist_at_node(i);
    for (std::size_t x = 0; x < v; ++x) {
      terms[x] = p[x] > 0.0 ? std::log(p[x]) + w[node.first_child + x] : kNegInf;
    }
    w[i] = log_sum_exp(terms);
  }
  return w;
}

// Normalizes ln pi0(x) + score(x) at each node, in the log domain.
PolicyTable tilt_table(const std::shared_ptr<const SequenceTree>& tree_ptr, const PolicyTable& base,
                       const std::vector<double>& child_scores) {
  const auto& tree = *tree_ptr;
  const std::size_t v = tree.vocab_size();
  std::vector<double> probs(tree.size() * v, 0.0);
  std::vector<double> logw(v);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& node = tree.node(i);
    if (node.terminal) continue;
    const auto p = base.dist_at_node(i);
    for (std::size_t x = 0; x < v; ++x) {
      logw[x] = p[x] > 0.0 ? std::log(p[x]) + child_scores[node.first_child + x] : kNegInf;
    }
    const double lz = log_sum_exp(logw);
    for (std::size_t x = 0; x < v; ++x) {
      probs[i * v + x] = logw[x] == kNegInf ? 0.0 : std::exp(logw[x] - lz);
    }
  }
  return PolicyTable(tree_ptr, std::move(probs));
}

}  // namespace

// ---------------------------------------------------------------------------
// SequenceTree

std::shared_ptr<const SequenceTree> SequenceTree::build(const EpisodeConfig& config, TokenSeq prompt,
                                                        const OracleConfig& oracle) {
  config.validate();
  if (oracle.node_cap == 0) throw InvalidArgumentError("node_cap must be > 0");
  std::shared_ptr<SequenceTree> tree(new SequenceTree(config, std::move(prompt)));
  validate_state(State{tree->prompt_, {}}, config);
  const std::size_t v = config.vocab.size();
  auto& nodes = tree->nodes_;
  nodes.push_back(Node{npos, 0, 0, config.max_new_tokens == 0, npos});
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].terminal) continue;
    if (nodes.size() + v > oracle.node_cap) {
      throw StateSpaceTooLargeError("state enumeration exceeds node_cap = " + std::to_string(oracle.node_cap));
    }
    const std::uint32_t depth = nodes[i].depth + 1;
    nodes[i].first_child = nodes.size();
    for (std::size_t x = 0; x < v; ++x) {
      const bool terminal = depth >= config.max_new_tokens || config.vocab.is_eos(static_cast<TokenId>(x));
      nodes.push_back(Node{i, static_cast<TokenId>(x), depth, terminal, npos});
    }
  }
  return tree;
}

std::size_t SequenceTree::child(std::size_t i, TokenId token) const {
  const auto& n = nodes_.at(i);
  if (n.terminal) throw TerminalStateError("terminal tree node has no children");
  config_.vocab.validate(token);
  return n.first_child + token;
}

State SequenceTree::state(std::size_t i) const {
  State s{prompt_, {}};
  s.generated.resize(nodes_.at(i).depth);
  for (std::size_t k = nodes_[i].depth; k-- > 0;) {
    s.generated[k] = nodes_[i].token;
    i = nodes_[i].parent;
  }
  return s;
}

std::size_t SequenceTree::find(const State& state) const {
  if (state.prompt != prompt_) return npos;
  std::size_t i = 0;
  for (TokenId t : state.generated) {
    if (t >= vocab_size() || nodes_[i].terminal) return npos;
    i = nodes_[i].first_child + t;
  }
  return i;
}

// ---------------------------------------------------------------------------
// Tables

ValueTable::ValueTable(std::shared_ptr<const SequenceTree> tree, std::vector<double> values)
    : tree_(std::move(tree)), values_(std::move(values)) {
  if (values_.size() != tree_->size()) throw DimensionMismatchError("value table size mismatch");
}

double ValueTable::at(const State& state) const {
  const auto i = tree_->find(state);
  if (i == SequenceTree::npos) throw InvalidArgumentError("state not covered by the exact table");
  return values_[i];
}

PolicyTable::PolicyTable(std::shared_ptr<const SequenceTree> tree, std::vector<double> probs)
    : tree_(std::move(tree)), probs_(std::move(probs)) {
  if (probs_.size() != tree_->size() * tree_->vocab_size()) {
    throw DimensionMismatchError("policy table size mismatch");
  }
}

std::span<const double> PolicyTable::dist_at_node(std::size_t node) const {
  if (tree_->node(node).terminal) throw TerminalStateError("no distribution at a terminal state");
  return std::span<const double>(probs_).subspan(node * vocab_size(), vocab_size());
}

std::vector<double> PolicyTable::next_dist(const State& state) const {
  const auto i = tree_->find(state);
  if (i == SequenceTree::npos) throw InvalidArgumentError("state not covered by the policy table");
  const auto d = dist_at_node(i);
  return {d.begin(), d.end()};
}

PolicyTable tabulate_policy(const Policy& policy, std::shared_ptr<const SequenceTree> tree) {
  const std::size_t v = tree->vocab_size();
  if (policy.vocab_size() != v) throw DimensionMismatchError("policy vocab size differs from episode vocab");
  std::vector<double> probs(tree->size() * v, 0.0);
  for (std::size_t i = 0; i < tree->size(); ++i) {
    if (tree->node(i).terminal) continue;
    const auto d = policy.next_dist(tree->state(i));
    if (d.size() != v) throw DimensionMismatchError("policy returned a distribution of the wrong size");
    std::copy(d.begin(), d.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * v));
  }
  return PolicyTable(std::move(tree), std::move(probs));
}

// ---------------------------------------------------------------------------
// Hard values

namespace {

std::vector<double> backward_values(const PolicyTable& base, const std::vector<double>& rewards) {
  const auto& tree = base.tree();
  const std::size_t v = tree.vocab_size();
  std::vector<double> values(tree.size(), 0.0);
  for (std::size_t i = tree.size(); i-- > 0;) {
    const auto& node = tree.node(i);
    if (node.terminal) {
      values[i] = rewards[i];
      continue;
    }
    const auto p = base.dist_at_node(i);
    double acc = 0.0;
    for (std::size_t x = 0; x < v; ++x) {
      if (p[x] > 0.0) acc += p[x] * values[node.first_child + x];
    }
    values[i] = acc;
  }
  return values;
}

}  // namespace

ValueTable exact_value(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config,
                       const TokenSeq& prompt, const OracleConfig& oracle) {
  auto tree = make_tree(config, prompt, oracle);
  const auto base = tabulate_policy(policy, tree);
  return ValueTable(tree, backward_values(base, terminal_rewards(reward, *tree)));
}

double exact_q(const ValueTable& values, const State& state, TokenId token) {
  const auto& tree = values.tree();
  const auto i = tree.find(state);
  if (i == SequenceTree::npos) throw InvalidArgumentError("state not covered by the exact table");
  if (tree.node(i).terminal) throw TerminalStateError("Q is undefined at a terminal state");
  return values.at_node(tree.child(i, token));
}

double exact_q(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config, const State& state,
               TokenId token, const OracleConfig& oracle) {
  return exact_q(exact_value(policy, reward, config, state.prompt, oracle), state, token);
}


PolicyTable exact_vas_policy(const Policy& policy, const RewardFn& reward, double beta,
                             const EpisodeConfig& config, const TokenSeq& prompt, const OracleConfig& oracle) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgumentError("beta must be finite and >= 0");
  auto tree = make_tree(config, prompt, oracle);
  auto base = tabulate_policy(policy, tree);
  if (beta == 0.0) return base;
  auto scores = backward_values(base, terminal_rewards(reward, *tree));
  for (double& s : scores) s *= beta;
  return tilt_table(tree, base, scores);
}

// ---------------------------------------------------------------------------
// Soft values and the sequence-level tilted optimum

ValueTable exact_soft_value(const Policy& policy, const RewardFn& reward, double beta,
                            const EpisodeConfig& config, const TokenSeq& prompt, const OracleConfig& oracle) {
  if (!std::isfinite(beta)) throw InvalidArgumentError("beta must be finite");
  if (beta < kMinSoftBeta) {
    throw BetaUnderflowError("soft value needs beta >= 1e-8; use exact_value for the beta -> 0 limit");
  }
  auto tree = make_tree(config, prompt, oracle);
  const auto base = tabulate_policy(policy, tree);
  auto w = subtree_log_partition(base, terminal_rewards(reward, *tree), beta);
  for (double& x : w) x /= beta;
  return ValueTable(tree, std::move(w));
}

PolicyTable exact_tilted_policy(const Policy& policy, const RewardFn& reward, double beta,
                                const EpisodeConfig& config, const TokenSeq& prompt, const OracleConfig& oracle) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgumentError("beta must be finite and >= 0");
  auto tree = make_tree(config, prompt, oracle);
  auto base = tabulate_policy(policy, tree);
  if (beta == 0.0) return base;
  // beta * V_soft(child) is the child's subtree log-partition; working with it
  // directly avoids dividing by beta.
  const auto w = subtree_log_partition(base, terminal_rewards(reward, *tree), beta);
  return tilt_table(tree, base, w);
}

double log_partition(const Policy& policy, const RewardFn& reward, double beta, const EpisodeConfig& config,
                     const TokenSeq& prompt, const OracleConfig& oracle) {
  if (!std::isfinite(beta)) throw InvalidArgumentError("beta must be finite");
  auto tree = make_tree(config, prompt, oracle);
  const auto base = tabulate_policy(policy, tree);
  return subtree_log_partition(base, terminal_rewards(reward, *tree), beta).front();
}

// ---------------------------------------------------------------------------
// Forward functionals

std::vector<double> reach_probabilities(const Policy& policy, const SequenceTree& tree) {
  const std::size_t v = tree.vocab_size();
  if (policy.vocab_size() != v) throw DimensionMismatchError("policy vocab size differs from episode vocab");
  std::vector<double> reach(tree.size(), 0.0);
  reach[0] = 1.0;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& node = tree.node(i);
    if (node.terminal || reach[i] == 0.0) continue;
    const auto p = policy.next_dist(tree.state(i));
    if (p.size() != v) throw DimensionMismatchError("policy returned a distribution of the wrong size");
    for (std::size_t x = 0; x < v; ++x) reach[node.first_child + x] = reach[i] * p[x];
  }
  return reach;
}

std::vector<SequenceProb> sequence_distribution(const Policy& policy, const EpisodeConfig& config,
                                                const TokenSeq& prompt, const OracleConfig& oracle) {
  auto tree = make_tree(config, prompt, oracle);
  const auto reach = reach_probabilities(policy, *tree);
  std::vector<SequenceProb> out;
  for (std::size_t i = 0; i < tree->size(); ++i) {
    if (tree->node(i).terminal && reach[i] > 0.0) out.push_back({tree->state(i).generated, reach[i]});
  }
  return out;
}

double expected_terminal_metric(const Policy& policy, const std::function<double(const State&)>& metric,
                                const EpisodeConfig& config, const TokenSeq& prompt, const OracleConfig& oracle) {
  auto tree = make_tree(config, prompt, oracle);
  const auto reach = reach_probabilities(policy, *tree);
  double total = 0.0;
  for (std::size_t i = 0; i < tree->size(); ++i) {
    if (tree->node(i).terminal && reach[i] > 0.0) total += reach[i] * metric(tree->state(i));
  }
  return total;
}

double policy_expected_reward(const Policy& policy, const RewardFn& reward, const EpisodeConfig& config,
                              const TokenSeq& prompt, const OracleConfig& oracle) {
  return expected_terminal_metric(
      policy, [&](const State& s) { return reward.score(s); }, config, prompt, oracle);
}

double policy_kl(const Policy& p, const Policy& q, const EpisodeConfig& config, const TokenSeq& prompt,
                 const OracleConfig& oracle) {
  auto tree = make_tree(config, prompt, oracle);
  const std::size_t v = tree->vocab_size();
  if (q.vocab_size() != v) throw DimensionMismatchError("policy vocab size differs from episode vocab");
  const auto reach = reach_probabilities(p, *tree);
  double kl = 0.0;
  for (std::size_t i = 0; i < tree->size(); ++i) {
    if (tree->node(i).terminal || reach[i] == 0.0) continue;
    const State s = tree->state(i);
    const auto pd = p.next_dist(s);
    const auto qd = q.next_dist(s);
    double step = 0.0;
    for (std::size_t x = 0; x < v; ++x) {
      if (pd[x] <= 0.0) continue;
      if (qd[x] <= 0.0) {
        throw SupportViolationError("p puts mass on token " + std::to_string(x) + " where q has none");
      }
      step += pd[x] * (std::log(pd[x]) - std::log(qd[x]));
    }
    kl += reach[i] * step;
  }
  return kl;
}

double dist_tv(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionMismatchError("distributions differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Dumps

namespace {

std::string state_key(const SequenceTree& tree, std::size_t i) {
  return tree.config().vocab.render(tree.state(i).generated);
}

}  // namespace

nlohmann::json dump_table(const ValueTable& table, const nlohmann::json& metadata) {
  nlohmann::json entries = nlohmann::json::object();
  for (std::size_t i = 0; i < table.tree().size(); ++i) entries[state_key(table.tree(), i)] = table.at_node(i);
  return {{"metadata", metadata}, {"entries", entries}};
}

nlohmann::json dump_table(const PolicyTable& table, const nlohmann::json& metadata) {
  nlohmann::json entries = nlohmann::json::object();
  for (std::size_t i = 0; i < table.tree().size(); ++i) {
    if (table.tree().node(i).terminal) continue;
    const auto d = table.dist_at_node(i);
    entries[state_key(table.tree(), i)] = std::vector<double>(d.begin(), d.end());
  }
  return {{"metadata", metadata}, {"entries", entries}};
}

}  // namespace vas
