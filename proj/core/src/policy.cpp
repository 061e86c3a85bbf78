#include "vasamp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vasamp/errors.hpp"

namespace vas {

void validate_distribution(std::span<const double> dist, double tol) {
  double sum = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidArgumentError("distribution entry negative or non-finite");
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw InvalidArgumentError("distribution sums to " + std::to_string(sum));
  }
}

TokenId argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgumentError("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::vector<double> apply_temperature(std::span<const double> dist, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgumentError("temperature must be > 0");
  std::vector<double> out(dist.begin(), dist.end());
  if (temperature == 1.0) return out;
  if (temperature <= kGreedyTemperature) {
    const TokenId best = argmax(dist);
    std::fill(out.begin(), out.end(), 0.0);
    out[best] = 1.0;
    return out;
  }
  const double log_max = std::log(*std::max_element(dist.begin(), dist.end()));
  double sum = 0.0;
  for (double& p : out) {
    if (p > 0.0) {
      p = std::exp((std::log(p) - log_max) / temperature);
      sum += p;
    }
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<TokenId> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<TokenId> idx(values.size());
  std::iota(idx.begin(), idx.end(), TokenId{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](TokenId a, TokenId b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

UniformPolicy::UniformPolicy(std::size_t vocab_size) : n_(vocab_size) {
  if (n_ == 0) throw InvalidArgumentError("uniform policy needs a non-empty vocab");
}

std::vector<double> UniformPolicy::next_dist(const State&) const {
  return std::vector<double>(n_, 1.0 / static_cast<double>(n_));
}

nlohmann::json UniformPolicy::spec() const { return {{"kind", "uniform"}, {"vocab_size", n_}}; }

PointMassPolicy::PointMassPolicy(std::size_t vocab_size, TokenId token) : n_(vocab_size), token_(token) {
  if (token_ >= n_) throw InvalidTokenError("point-mass token out of range");
}

std::vector<double> PointMassPolicy::next_dist(const State&) const {
  std::vector<double> d(n_, 0.0);
  d[token_] = 1.0;
  return d;
}

nlohmann::json PointMassPolicy::spec() const {
  return {{"kind", "point_mass"}, {"vocab_size", n_}, {"token", token_}};
}

FixedPolicy::FixedPolicy(std::vector<double> probs) : probs_(std::move(probs)) {
  validate_distribution(probs_);
}

nlohmann::json FixedPolicy::spec() const { return {{"kind", "fixed"}, {"probs", probs_}}; }

BigramPolicy::BigramPolicy(std::size_t vocab_size, std::vector<double> counts, double alpha)
    : n_(vocab_size), counts_(std::move(counts)), alpha_(alpha) {
  if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) throw InvalidArgumentError("alpha must be finite and >= 0");
  if (counts_.size() != (n_ + 1) * n_) throw DimensionMismatchError("bigram count table has wrong shape");
}

std::vector<double> BigramPolicy::next_dist(const State& state) const {
  std::size_t ctx = bos_context();
  if (!state.generated.empty()) {
    ctx = state.generated.back();
  } else if (!state.prompt.empty()) {
    ctx = state.prompt.back();
  }
  if (ctx > n_) throw InvalidTokenError("bigram context out of range");
  std::vector<double> d(n_);
  double total = 0.0;
  for (std::size_t j = 0; j < n_; ++j) {
    d[j] = counts_[ctx * n_ + j] + alpha_;
    total += d[j];
  }
  if (total <= 0.0) {
    throw ZeroMassError("bigram context " + std::to_string(ctx) + " unseen and alpha = 0");
  }
  for (double& p : d) p /= total;
  return d;
}

nlohmann::json BigramPolicy::spec() const {
  return {{"kind", "bigram"}, {"vocab_size", n_}, {"alpha", alpha_}, {"counts", counts_}};
}

BigramPolicy train_bigram(std::span<const TokenSeq> corpus, const Vocab& vocab, double alpha) {
  const std::size_t n = vocab.size();
  std::vector<double> counts((n + 1) * n, 0.0);
  for (const auto& seq : corpus) {
    std::size_t prev = n;
    for (TokenId t : seq) {
      vocab.validate(t);
      counts[prev * n + t] += 1.0;
      prev = t;
    }
  }
  return BigramPolicy(n, std::move(counts), alpha);
}

TopLogprobView::TopLogprobView(std::shared_ptr<const Policy> policy, std::size_t cap)
    : policy_(std::move(policy)), cap_(cap) {
  if (!policy_) throw InvalidArgumentError("TopLogprobView needs a policy");
  if (cap_ < 1) throw InvalidArgumentError("provider cap must be >= 1");
}

std::vector<std::pair<TokenId, double>> TopLogprobView::top_logprobs(const State& state,
                                                                     std::size_t k) const {
  const auto dist = policy_->next_dist(state);
  std::vector<std::pair<TokenId, double>> out;
  for (TokenId t : top_k_indices(dist, std::min(k, cap_))) {
    if (dist[t] > 0.0) out.emplace_back(t, std::log(dist[t]));
  }
  return out;
}

}  // namespace vas
