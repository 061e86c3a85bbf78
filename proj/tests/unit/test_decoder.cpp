#include <cmath>
#include <map>

#include "doctest.h"
#include "reference.hpp"
#include "vasamp/decoder.hpp"
#include "vasamp/errors.hpp"
#include "vasamp/eval.hpp"
#include "vasamp/oracle.hpp"
#include "vasamp/suite.hpp"

using namespace vas;

namespace {

State gen(TokenSeq g) { return State{{}, std::move(g)}; }

class ConstValue final : public ValueFunction {
 public:
  explicit ConstValue(double c) : c_(c) {}
  double predict(const State&) const override { return c_; }

 private:
  double c_;
};

std::shared_ptr<const TokenScorer> exact_scorer(const SuiteInstance& inst, const RewardFn& r) {
  return std::make_shared<StateValueScorer>(
      std::make_shared<ValueTable>(exact_value(*inst.base, r, inst.config, inst.prompt)));
}

}  // namespace

TEST_CASE("augment_full") {
  const std::vector<double> base{0.5, 0.5};
  const std::vector<double> v{1.0, 0.0};
  CHECK(augment_full(base, v, 0.0) == base);
  const auto d = augment_full(base, v, std::log(3.0));
  CHECK(d[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(0.25).epsilon(1e-15));
  const std::vector<double> skew{0.2, 0.3, 0.5};
  CHECK(augment_full(skew, std::vector<double>{4.0, 4.0, 4.0}, 7.0) == skew);
  const auto big = augment_full(base, std::vector<double>{1000.0, 0.0}, 50.0);
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);
  CHECK_THROWS_AS(augment_full(base, std::vector<double>{1.0}, 1.0), DimensionMismatchError);
  CHECK_THROWS_AS(augment_full(base, std::vector<double>{NAN, 0.0}, 1.0), NonFiniteError);
}

TEST_CASE("augment_full with exact values reproduces the VAS oracle") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto v = exact_value(*inst.base, *r, inst.config);
  const auto base = inst.base->next_dist(State{});
  std::vector<double> q(3);
  for (TokenId x = 0; x < 3; ++x) q[x] = exact_q(v, State{}, x);
  const auto d = augment_full(base, q, 3.0);
  const auto want = ref::vas_dist(*inst.base, *r, inst.config, State{}, 3.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(d[i] - want[i]) <= 1e-12);
  CHECK(d[0] == doctest::Approx(0.5761).epsilon(1e-4));
  CHECK(d[1] == doctest::Approx(0.2119).epsilon(1e-3));
}

TEST_CASE("augment_topk degeneracies") {
  const auto inst = bigram_instance();
  const auto r = inst.reward();
  const auto v = exact_value(*inst.base, *r, inst.config);
  const std::size_t n = inst.config.vocab.size();
  for (const auto& s : ref::states(inst.config, State{})) {
    const auto base = inst.base->next_dist(s);
    std::vector<double> q(n);
    for (TokenId x = 0; x < n; ++x) q[x] = exact_q(v, s, x);
    const TokenValueFn fn = [&](TokenId x) { return q[x]; };
    const TokenValueFn cfn = [](TokenId) { return -0.7; };
    for (double beta : {0.5, 3.0, 20.0}) {
      const auto full = augment_full(base, q, beta);
      const auto all = augment_topk(base, fn, beta, n, Fallback::mean_value);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(all.dist[i] - full[i]) <= 1e-12);
      CHECK(augment_topk(base, fn, beta, 1, Fallback::mean_value).dist == base);
      for (std::size_t k = 1; k <= n; ++k) {
        CHECK(augment_topk(base, cfn, beta, k, Fallback::mean_value).dist == base);
      }
    }
  }
}

TEST_CASE("augment_topk fallbacks") {
  const std::vector<double> base{0.4, 0.3, 0.2, 0.1};
  const std::vector<double> q{1.0, 0.0, 2.0, 5.0};
  const TokenValueFn fn = [&](TokenId x) { return q[x]; };
  const auto mean = augment_topk(base, fn, 1.0, 2, Fallback::mean_value);
  CHECK(mean.candidates == std::vector<TokenId>{0, 1});
  REQUIRE(mean.mean_value.has_value());
  CHECK(*mean.mean_value == 0.5);
  const double w[] = {0.4 * std::exp(1.0), 0.3, 0.2 * std::exp(0.5), 0.1 * std::exp(0.5)};
  const double z = w[0] + w[1] + w[2] + w[3];
  for (std::size_t i = 0; i < 4; ++i) CHECK(mean.dist[i] == doctest::Approx(w[i] / z).epsilon(1e-14));

  const auto base_only = augment_topk(base, fn, 1.0, 2, Fallback::base_only);
  const double wb[] = {0.4 * std::exp(1.0), 0.3, 0.2, 0.1};
  const double zb = wb[0] + wb[1] + wb[2] + wb[3];
  for (std::size_t i = 0; i < 4; ++i) CHECK(base_only.dist[i] == doctest::Approx(wb[i] / zb).epsilon(1e-14));
  CHECK(base_only.dist != mean.dist);

  // Ties in base probability go to the lowest id.
  const std::vector<double> tied{0.25, 0.25, 0.25, 0.25};
  CHECK(augment_topk(tied, fn, 1.0, 2, Fallback::mean_value).candidates == std::vector<TokenId>{0, 1});
}

TEST_CASE("beta zero decoding reproduces the base rollout token stream") {
  for (const auto& inst : standard_suite()) {
    const auto r = inst.reward();
    const auto scorer = exact_scorer(inst, *r);
    for (auto mode : {DecodeMode::full, DecodeMode::topk}) {
      for (double temperature : {1.0, 0.7}) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
          DecodeParams p;
          p.mode = mode;
          p.top_k = 2;
          p.seed = seed;
          p.temperature = temperature;
          const auto d = decode_sequence(*inst.base, *scorer, *r, inst.prompt, inst.config, p);
          Rng rng(seed);
          const auto t = rollout(*inst.base, *r, inst.prompt, inst.config, rng, temperature);
          CHECK(d.trajectory.tokens == t.tokens);
        }
      }
    }
    DecodeParams bb;
    bb.mode = DecodeMode::blackbox_rerank;
    bb.top_k = 3;
    const auto d = decode_sequence(*inst.base, *scorer, *r, inst.prompt, inst.config, bb);
    Rng rng(0);
    const auto greedy = rollout(*inst.base, *r, inst.prompt, inst.config, rng, kGreedyTemperature);
    CHECK(d.trajectory.tokens == greedy.tokens);
  }
}

TEST_CASE("sampled VAS sequence distribution matches the oracle") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  const auto oracle = ref::sequence_probs(exact_vas_policy(*inst.base, *r, 3.0, inst.config), inst.config, State{});
  DecodeParams p;
  p.beta = 3.0;
  std::map<TokenSeq, int> counts;
  const int n = 100000;
  Rng rng(99);
  for (int i = 0; i < n; ++i) ++counts[decode_sequence(*inst.base, *scorer, *r, {}, inst.config, p, rng).trajectory.tokens];
  for (const auto& [seq, prob] : oracle) {
    const double sigma = std::sqrt(prob * (1 - prob) / n);
    CHECK(std::abs(counts[seq] / double(n) - prob) <= 3 * sigma + 1e-12);
  }
}

TEST_CASE("large beta follows the per-step argmax of Q") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  DecodeParams p;
  p.beta = 50.0;
  Rng rng(1);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) hits += decode_sequence(*inst.base, *scorer, *r, {}, inst.config, p, rng).trajectory.tokens == TokenSeq{0, 1};
  CHECK(hits >= 1990);
}

TEST_CASE("decoded policy equals the oracle tilt with exact values") {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  DecodeParams p;
  p.beta = 2.0;
  const DecodedPolicy decoded(inst.base, scorer, inst.config, p);
  const auto oracle = exact_vas_policy(*inst.base, *r, 2.0, inst.config);
  for (const auto& s : ref::states(inst.config, State{})) {
    const auto a = decoded.next_dist(s);
    const auto b = oracle.next_dist(s);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("blackbox rerank") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  const TopLogprobView view(inst.base, 5);
  CHECK(rerank_blackbox(view, *scorer, 3.0, State{}, 3, inst.config) == 0);
  CHECK(rerank_blackbox(view, *scorer, 0.0, gen({1}), 3, inst.config) == 0);

  auto skewed = std::make_shared<FixedPolicy>(std::vector<double>{0.2, 0.7, 0.1});
  const TopLogprobView sview(skewed, 5);
  CHECK(rerank_blackbox(sview, *scorer, 0.0, State{}, 3, inst.config) == 1);
  CHECK(rerank_blackbox(sview, *scorer, 100.0, State{}, 1, inst.config) == 1);
  CHECK(rerank_blackbox(sview, *scorer, 3.0, State{}, 3, inst.config) == 1);
  CHECK(rerank_blackbox(sview, *scorer, 10.0, State{}, 3, inst.config) == 0);

  struct Empty final : RestrictedPolicyView {
    std::vector<std::pair<TokenId, double>> top_logprobs(const State&, std::size_t) const override { return {}; }
    std::size_t cap() const override { return 5; }
  } empty;
  CHECK_THROWS_AS(rerank_blackbox(empty, *scorer, 1.0, State{}, 2, inst.config), EmptyCandidateError);
}

TEST_CASE("decode params validation") {
  DecodeParams p;
  p.top_k = 4;
  CHECK_THROWS_AS(p.validate(3), InvalidArgumentError);
  p.top_k = 1;
  p.beta = -1.0;
  CHECK_THROWS_AS(p.validate(3), InvalidArgumentError);
  p.beta = 1.0;
  p.temperature = 0.0;
  CHECK_THROWS_AS(p.validate(3), InvalidArgumentError);
  p = DecodeParams{};
  p.mode = DecodeMode::blackbox_rerank;
  p.top_k = 6;
  CHECK_THROWS_AS(p.validate(3), InvalidArgumentError);
  p.top_k = 5;
  CHECK_NOTHROW(p.validate(3));
}

TEST_CASE("topk with k equal to the vocabulary decodes like full mode") {
  const auto inst = bigram_instance();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    DecodeParams full;
    full.beta = 2.0;
    full.seed = seed;
    DecodeParams topk = full;
    topk.mode = DecodeMode::topk;
    topk.top_k = inst.config.vocab.size();
    CHECK(decode_sequence(*inst.base, *scorer, *r, {}, inst.config, full).trajectory.tokens ==
          decode_sequence(*inst.base, *scorer, *r, {}, inst.config, topk).trajectory.tokens);
  }
}

TEST_CASE("constant value scorer leaves the base policy unchanged") {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  auto scorer = std::make_shared<StateValueScorer>(std::make_shared<ConstValue>(4.2));
  DecodeParams p;
  p.beta = 5.0;
  const DecodedPolicy decoded(inst.base, scorer, inst.config, p);
  for (const auto& s : ref::states(inst.config, State{})) CHECK(decoded.next_dist(s) == inst.base->next_dist(s));
}

TEST_CASE("best of n") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  CHECK(bon_expected_reward(*inst.base, *r, 1, inst.config) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(bon_expected_reward(*inst.base, *r, 2, inst.config) == doctest::Approx(17.0 / 81.0).epsilon(1e-14));
  const double n = 40000;
  double hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += best_of_n(*inst.base, *r, {}, inst.config, 2, i).reward;
  const double p = 17.0 / 81.0;
  CHECK(std::abs(hits / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
  CHECK(best_of_n(*inst.base, *r, {}, inst.config, 4, 7).tokens ==
        best_of_n(*inst.base, *r, {}, inst.config, 4, 7).tokens);
}

TEST_CASE("fudge classifier decoding") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const std::vector<double> base{0.5, 0.25, 0.25};
  const Classifier prefers_b = [](const State& s) { return !s.generated.empty() && s.generated.back() == 1 ? 1.0 : 0.5; };
  const auto d = fudge_dist(base, prefers_b, State{}, inst.config);
  CHECK(d[0] == doctest::Approx(0.25 / 0.625));
  CHECK(d[1] == doctest::Approx(0.25 / 0.625));
  const Classifier zero = [](const State&) { return 0.0; };
  CHECK(fudge_dist(base, zero, State{}, inst.config) == base);
  const Classifier bad = [](const State&) { return 1.5; };
  CHECK_THROWS_AS(fudge_dist(base, bad, State{}, inst.config), ClassifierRangeError);
  const Classifier one = [](const State&) { return 1.0; };
  DecodeParams p;
  p.seed = 3;
  Rng rng(3);
  CHECK(fudge_decode(*inst.base, one, *r, {}, inst.config, p).tokens ==
        rollout(*inst.base, *r, {}, inst.config, rng).tokens);
}
