#include "vasamp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "vasamp/errors.hpp"
#include "vasamp/serialize.hpp"

namespace vas {

std::string to_string(Fallback f) { return f == Fallback::mean_value ? "mean_value" : "base_only"; }

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::full:
      return "full";
    case DecodeMode::topk:
      return "topk";
    case DecodeMode::blackbox_rerank:
      return "blackbox_rerank";
  }
  return "full";
}

Fallback fallback_from_string(const std::string& s) {
  if (s == "mean_value") return Fallback::mean_value;
  if (s == "base_only") return Fallback::base_only;
  throw InvalidArgumentError("unknown fallback '" + s + "' (expected mean_value|base_only)");
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "full") return DecodeMode::full;
  if (s == "topk") return DecodeMode::topk;
  if (s == "blackbox_rerank") return DecodeMode::blackbox_rerank;
  throw InvalidArgumentError("unknown decode mode '" + s + "' (expected full|topk|blackbox_rerank)");
}

void DecodeParams::validate(std::size_t vocab_size) const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgumentError("decode.beta must be finite and >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgumentError("decode.temperature must be finite and > 0");
  }
  if (top_k < 1) throw InvalidArgumentError("decode.top_k must be >= 1");
  if (mode == DecodeMode::blackbox_rerank) {
    if (provider_cap < 1) throw InvalidArgumentError("decode.provider_cap must be >= 1");
    if (top_k > provider_cap) {
      throw InvalidArgumentError("decode.top_k (" + std::to_string(top_k) + ") exceeds the provider cap (" +
                                 std::to_string(provider_cap) + ")");
    }
  } else if (top_k > vocab_size) {
    throw InvalidArgumentError("decode.top_k (" + std::to_string(top_k) + ") exceeds the vocabulary size (" +
                               std::to_string(vocab_size) + ")");
  }
}

nlohmann::json DecodeParams::to_json() const {
  return {{"beta", beta},
          {"top_k", top_k},
          {"fallback", to_string(fallback)},
          {"temperature", temperature},
          {"mode", to_string(mode)},
          {"seed", seed},
          {"greedy", greedy},
          {"blackbox_sample", blackbox_sample},
          {"provider_cap", provider_cap}};
}

namespace {

// base_i * exp(exponent_i - max), normalized. Returns base unchanged when the
// exponents agree on the support, so neutral tilts are exact identities.
std::vector<double> tilt(std::span<const double> base, std::span<const double> exponents, double* normalizer) {
  double top = -std::numeric_limits<double>::infinity();
  std::optional<double> common;
  bool uniform = true;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!std::isfinite(exponents[i])) throw NonFiniteError("non-finite value in tilt");
    if (base[i] <= 0.0) continue;
    top = std::max(top, exponents[i]);
    if (!common) {
      common = exponents[i];
    } else if (*common != exponents[i]) {
      uniform = false;
    }
  }
  if (!common) throw ZeroMassError("base distribution has no mass");
  if (uniform) {
    if (normalizer) *normalizer = 1.0;
    return {base.begin(), base.end()};
  }
  std::vector<double> out(base.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i] <= 0.0) continue;
    out[i] = base[i] * std::exp(exponents[i] - top);
    z += out[i];
  }
  for (double& p : out) p /= z;
  if (normalizer) *normalizer = z;
  return out;
}

std::vector<double> scaled(std::span<const double> values, double beta) {
  std::vector<double> e(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) e[i] = beta * values[i];
  return e;
}

std::shared_ptr<const Policy> borrow(const Policy& policy) {
  return std::shared_ptr<const Policy>(std::shared_ptr<const Policy>{}, &policy);
}

}  // namespace

std::vector<double> augment_full(std::span<const double> base, std::span<const double> values, double beta) {
  if (base.size() != values.size()) throw DimensionMismatchError("augment_full: base/values size mismatch");
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteError("augment_full: non-finite value estimate");
  }
  if (beta == 0.0) return {base.begin(), base.end()};
  return tilt(base, scaled(values, beta), nullptr);
}

AugmentedStep augment_topk(std::span<const double> base, const TokenValueFn& value_fn, double beta, std::size_t k,
                           Fallback fallback) {
  if (k < 1 || k > base.size()) throw InvalidArgumentError("augment_topk: k must be in [1, vocab size]");
  AugmentedStep step;
  step.candidates = top_k_indices(base, k);
  for (TokenId x : step.candidates) {
    const double v = value_fn(x);
    if (!std::isfinite(v)) throw NonFiniteError("augment_topk: non-finite value estimate");
    step.base_probs.push_back(base[x]);
    step.values.push_back(v);
  }

  std::vector<double> exponents(base.size(), 0.0);
  if (fallback == Fallback::mean_value) {
    const bool all_equal = std::all_of(step.values.begin(), step.values.end(),
                                       [&](double v) { return v == step.values.front(); });
    double mean = step.values.front();
    if (!all_equal) {
      double sum = 0.0;
      for (double v : step.values) sum += v;
      mean = sum / static_cast<double>(step.values.size());
    }
    step.mean_value = mean;
    std::fill(exponents.begin(), exponents.end(), beta * mean);
  }
  for (std::size_t i = 0; i < step.candidates.size(); ++i) exponents[step.candidates[i]] = beta * step.values[i];

  if (beta == 0.0) {
    step.dist.assign(base.begin(), base.end());
  } else {
    step.dist = tilt(base, exponents, &step.normalizer);
  }
  return step;
}

double StateValueScorer::score(const State& state, TokenId token, const EpisodeConfig& config) const {
  return value_->predict(transition(state, token, config));
}

double QValueScorer::score(const State& state, TokenId token, const EpisodeConfig& config) const {
  config.vocab.validate(token);
  if (is_terminal(state, config)) throw TerminalStateError("Q is undefined at a terminal state");
  return q_->predict(state, token);
}

AugmentedStep decode_step(const Policy& policy, const TokenScorer& scorer, const State& state,
                          const EpisodeConfig& config, const DecodeParams& params) {
  const auto base = apply_temperature(policy.next_dist(state), params.temperature);
  AugmentedStep step;
  if (params.mode == DecodeMode::full) {
    step.candidates.resize(base.size());
    for (std::size_t x = 0; x < base.size(); ++x) {
      step.candidates[x] = static_cast<TokenId>(x);
      step.values.push_back(scorer.score(state, static_cast<TokenId>(x), config));
    }
    step.base_probs = base;
    if (params.beta == 0.0) {
      step.dist = base;
    } else {
      step.dist = tilt(base, scaled(step.values, params.beta), &step.normalizer);
    }
  } else if (params.mode == DecodeMode::topk) {
    step = augment_topk(
        base, [&](TokenId x) { return scorer.score(state, x, config); }, params.beta, params.top_k,
        params.fallback);
  } else {
    const TopLogprobView view(borrow(policy), params.provider_cap);
    const auto visible = view.top_logprobs(state, params.top_k);
    if (visible.empty()) throw EmptyCandidateError("provider returned no candidates");
    std::vector<double> scores;
    for (const auto& [x, lp] : visible) {
      step.candidates.push_back(x);
      step.base_probs.push_back(std::exp(lp));
      step.values.push_back(scorer.score(state, x, config));
      scores.push_back(lp + params.beta * step.values.back());
    }
    step.dist.assign(base.size(), 0.0);
    if (params.blackbox_sample) {
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) z += (s = std::exp(s - top));
      for (std::size_t i = 0; i < scores.size(); ++i) step.dist[step.candidates[i]] = scores[i] / z;
      step.normalizer = z;
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best] || (scores[i] == scores[best] && step.candidates[i] < step.candidates[best])) {
          best = i;
        }
      }
      step.dist[step.candidates[best]] = 1.0;
    }
  }
  step.state = state;
  return step;
}

TokenId rerank_blackbox(const RestrictedPolicyView& view, const TokenScorer& scorer, double beta, const State& state,
                        std::size_t k, const EpisodeConfig& config) {
  const auto visible = view.top_logprobs(state, k);
  if (visible.empty()) throw EmptyCandidateError("provider returned no candidates");
  std::optional<TokenId> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [x, lp] : visible) {
    const double s = beta == 0.0 ? lp : lp + beta * scorer.score(state, x, config);
    if (!best || s > best_score || (s == best_score && x < *best)) {
      best = x;
      best_score = s;
    }
  }
  return *best;
}

DecodeResult decode_sequence(const Policy& policy, const TokenScorer& scorer, const RewardFn& reward,
                             const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params) {
  Rng rng(params.seed);
  return decode_sequence(policy, scorer, reward, prompt, config, params, rng);
}

DecodeResult decode_sequence(const Policy& policy, const TokenScorer& scorer, const RewardFn& reward,
                             const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params,
                             Rng& rng) {
  params.validate(config.vocab.size());
  DecodeResult result;
  Trajectory& t = result.trajectory;
  t.prompt = prompt;
  t.seed = params.seed;
  t.states.push_back(State{prompt, {}});
  validate_state(t.states.front(), config);
  const bool sample = params.mode == DecodeMode::blackbox_rerank ? params.blackbox_sample : !params.greedy;
  while (!is_terminal(t.states.back(), config)) {
    AugmentedStep step = decode_step(policy, scorer, t.states.back(), config, params);
    const TokenId x = sample ? sample_categorical(step.dist, rng) : argmax(step.dist);
    step.token = x;
    t.tokens.push_back(x);
    t.states.push_back(transition(t.states.back(), x, config));
    result.steps.push_back(std::move(step));
  }
  t.reward = reward.score(t.states.back());
  return result;
}

DecodedPolicy::DecodedPolicy(std::shared_ptr<const Policy> base, std::shared_ptr<const TokenScorer> scorer,
                             EpisodeConfig config, DecodeParams params)
    : base_(std::move(base)), scorer_(std::move(scorer)), config_(std::move(config)), params_(params) {
  if (!base_ || !scorer_) throw InvalidArgumentError("DecodedPolicy needs a base policy and a scorer");
  params_.validate(base_->vocab_size());
}

std::vector<double> DecodedPolicy::next_dist(const State& state) const {
  auto dist = decode_step(*base_, *scorer_, state, config_, params_).dist;
  if (params_.greedy && params_.mode != DecodeMode::blackbox_rerank) {
    const TokenId x = argmax(dist);
    std::fill(dist.begin(), dist.end(), 0.0);
    dist[x] = 1.0;
  }
  return dist;
}

nlohmann::json DecodedPolicy::spec() const {
  return {{"kind", "decoded"}, {"base", base_->spec()}, {"scorer", scorer_->describe()}, {"params", params_.to_json()}};
}

Trajectory best_of_n(const Policy& policy, const RewardFn& reward, const TokenSeq& prompt,
                     const EpisodeConfig& config, std::size_t n, std::uint64_t seed, double temperature) {
  if (n < 1) throw InvalidArgumentError("best_of_n needs N >= 1");
  std::optional<Trajectory> best;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = derive_seed(seed, "best_of_n", i);
    Rng rng(s);
    auto t = rollout(policy, reward, prompt, config, rng, temperature);
    t.seed = s;
    if (!best || t.reward > best->reward) best = std::move(t);
  }
  return std::move(*best);
}

std::vector<double> fudge_dist(std::span<const double> base, const Classifier& classifier, const State& state,
                               const EpisodeConfig& config) {
  std::vector<double> w(base.size(), 0.0);
  double z = 0.0;
  for (std::size_t x = 0; x < base.size(); ++x) {
    if (base[x] <= 0.0) continue;
    const double c = classifier(transition(state, static_cast<TokenId>(x), config));
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ClassifierRangeError("classifier output " + std::to_string(c) + " is outside [0, 1]");
    }
    w[x] = base[x] * c;
    z += w[x];
  }
  if (z <= 0.0) {
    spdlog::warn("fudge: every candidate has zero classifier mass at a {}-token prefix; using the base distribution",
                 state.generated.size());
    return {base.begin(), base.end()};
  }
  // A constant classifier cancels exactly.
  bool constant = true;
  std::optional<double> ratio;
  for (std::size_t x = 0; x < base.size() && constant; ++x) {
    if (base[x] <= 0.0) continue;
    const double r = w[x] / base[x];
    if (!ratio) {
      ratio = r;
    } else if (*ratio != r) {
      constant = false;
    }
  }
  if (constant) return {base.begin(), base.end()};
  for (double& p : w) p /= z;
  return w;
}

Trajectory fudge_decode(const Policy& policy, const Classifier& classifier, const RewardFn& reward,
                        const TokenSeq& prompt, const EpisodeConfig& config, const DecodeParams& params) {
  if (!(params.temperature > 0.0)) throw InvalidArgumentError("temperature must be > 0");
  Rng rng(params.seed);
  Trajectory t;
  t.prompt = prompt;
  t.seed = params.seed;
  t.states.push_back(State{prompt, {}});
  validate_state(t.states.front(), config);
  while (!is_terminal(t.states.back(), config)) {
    const auto base = apply_temperature(policy.next_dist(t.states.back()), params.temperature);
    const auto dist = fudge_dist(base, classifier, t.states.back(), config);
    const TokenId x = params.greedy ? argmax(dist) : sample_categorical(dist, rng);
    t.tokens.push_back(x);
    t.states.push_back(transition(t.states.back(), x, config));
  }
  t.reward = reward.score(t.states.back());
  return t;
}

nlohmann::json augmented_step_to_json(const AugmentedStep& step) {
  nlohmann::json j = {{"prompt", step.state.prompt},
                      {"generated", step.state.generated},
                      {"candidates", step.candidates},
                      {"base_probs", step.base_probs},
                      {"values", step.values},
                      {"mean_value", nullptr},
                      {"normalizer", step.normalizer},
                      {"dist", step.dist},
                      {"token", nullptr}};
  if (step.mean_value) j["mean_value"] = *step.mean_value;
  if (step.token) j["token"] = *step.token;
  return j;
}

nlohmann::json decode_result_to_json(const DecodeResult& result, const DecodeParams& params,
                                     const std::string& estimator_checksum) {
  auto j = trajectory_to_json(result.trajectory);
  j["beta"] = params.beta;
  j["k"] = params.top_k;
  j["mode"] = to_string(params.mode);
  j["estimator_checksum"] = estimator_checksum;
  return j;
}

}  // namespace vas
