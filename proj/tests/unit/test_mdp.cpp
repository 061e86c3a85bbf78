#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "reference.hpp"
#include "vasamp/errors.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/rng.hpp"
#include "vasamp/rollout.hpp"
#include "vasamp/serialize.hpp"
#include "vasamp/suite.hpp"

using namespace vas;

namespace {

EpisodeConfig ab_config(std::size_t horizon = 2) { return {Vocab({"a", "b", "<eos>"}, 2), horizon}; }

State gen(TokenSeq g) { return State{{}, std::move(g)}; }

}  // namespace

TEST_CASE("transition appends one token") {
  const auto c = ab_config();
  const State root{};
  CHECK(transition(root, 0, c).generated == TokenSeq{0});
  CHECK(transition(gen({0}), 1, c).generated == TokenSeq{0, 1});
  const auto done = transition(gen({0}), 2, c);
  CHECK(done.generated == TokenSeq{0, 2});
  CHECK(is_terminal(done, c));
  CHECK(c.vocab.render(done.generated) == "a<eos>");
}

TEST_CASE("transition rejects terminal states and unknown tokens") {
  const auto c = ab_config();
  CHECK_THROWS_AS(transition(gen({0, 1}), 0, c), TerminalStateError);
  CHECK_THROWS_AS(transition(gen({2}), 0, c), TerminalStateError);
  CHECK_THROWS_AS(transition(State{}, 7, c), InvalidTokenError);
}

TEST_CASE("is_terminal on length and eos") {
  const auto c = ab_config();
  CHECK_FALSE(is_terminal(State{}, c));
  CHECK(is_terminal(gen({0, 1}), c));
  CHECK(is_terminal(gen({2}), c));
  CHECK_FALSE(is_terminal(gen({0}), c));
}

TEST_CASE("vocab validation") {
  CHECK_THROWS_AS(Vocab({"a"}, std::nullopt), InvalidArgumentError);
  CHECK_THROWS_AS(Vocab({"a", "a"}, std::nullopt), InvalidArgumentError);
  CHECK_THROWS_AS(Vocab({"a", ""}, std::nullopt), InvalidArgumentError);
  CHECK_THROWS_AS(Vocab({"a", "b"}, 5), InvalidArgumentError);
  CHECK_THROWS_AS(Vocab({"a", "b", "c"}, std::nullopt, 2), InvalidArgumentError);
  const Vocab v({"a", "b"}, std::nullopt);
  CHECK(v.find("b") == TokenId{1});
  CHECK_FALSE(v.find("z").has_value());
}

TEST_CASE("content tokens drop eos") {
  const auto c = ab_config();
  CHECK(content_tokens(gen({0, 2}), c.vocab) == TokenSeq{0});
  CHECK(content_tokens(gen({1, 0}), c.vocab) == TokenSeq{1, 0});
}

TEST_CASE("point mass policy without eos yields one trajectory") {
  const EpisodeConfig c{Vocab({"a", "b"}, std::nullopt), 2};
  const PointMassPolicy p(2, 0);
  const auto seqs = ref::sequence_probs(p, c, State{});
  REQUIRE(seqs.size() == 1);
  CHECK(seqs.begin()->first == TokenSeq{0, 0});
  CHECK(seqs.begin()->second == 1.0);
  const SpecReward r({PatternReward{{0, 0}}}, c);
  Rng rng(3);
  const auto t = rollout(p, r, {}, c, rng);
  CHECK(t.tokens == TokenSeq{0, 0});
  CHECK(t.reward == 1.0);
}

TEST_CASE("tiny_ab has seven terminal sequences and P(ab) = 1/9") {
  const auto inst = tiny_ab();
  const auto seqs = ref::sequence_probs(*inst.base, inst.config, State{});
  CHECK(seqs.size() == 7);
  CHECK(seqs.at({0, 1}) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(seqs.at({2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("temperature transform") {
  const std::vector<double> d{0.2, 0.5, 0.3};
  CHECK(apply_temperature(d, 1.0) == d);
  const auto greedy = apply_temperature(d, kGreedyTemperature);
  CHECK(greedy == std::vector<double>{0.0, 1.0, 0.0});
  const auto tie = apply_temperature(std::vector<double>{0.4, 0.4, 0.2}, 1e-9);
  CHECK(tie == std::vector<double>{1.0, 0.0, 0.0});
  const auto sharp = apply_temperature(d, 0.5);
  const double z = 0.04 + 0.25 + 0.09;
  CHECK(sharp[1] == doctest::Approx(0.25 / z));
  CHECK_THROWS_AS(apply_temperature(d, 0.0), InvalidArgumentError);
}

TEST_CASE("greedy rollout follows the lowest-index argmax") {
  const auto c = ab_config(3);
  const FixedPolicy p({0.4, 0.4, 0.2});
  const SpecReward r({NegLengthReward{1.0}}, c);
  Rng rng(11);
  const auto t = rollout(p, r, {}, c, rng, kGreedyTemperature);
  CHECK(t.tokens == TokenSeq{0, 0, 0});
  CHECK(t.reward == -3.0);
}

TEST_CASE("bigram training") {
  const Vocab v({"a", "b", "c"}, std::nullopt);
  const std::vector<TokenSeq> corpus{{0, 1, 0, 1}};
  const auto p = train_bigram(corpus, v, 0.0);
  const auto after_a = p.next_dist(gen({0}));
  CHECK(after_a[1] == 1.0);
  CHECK_THROWS_AS(p.next_dist(gen({2})), ZeroMassError);

  const auto smooth = train_bigram(corpus, v, 1e12);
  for (double x : smooth.next_dist(gen({0}))) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  const auto empty = train_bigram({}, v, 0.5);
  for (double x : empty.next_dist(State{})) CHECK(x == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("rewards read eos-stripped content") {
  const auto c = ab_config();
  const SpecReward pattern({PatternReward{{0, 1}}}, c);
  CHECK(pattern.score(gen({0, 1})) == 1.0);
  CHECK(pattern.score(gen({1, 0})) == 0.0);
  const SpecReward len({NegLengthReward{1.0}}, ab_config(3));
  CHECK(len.score(gen({0, 1, 2})) == -2.0);
  const RewardSpec lin{LinearReward{{0.5, 0.5}, {RewardSpec{PatternReward{{0, 1}}}, RewardSpec{NegLengthReward{1.0}}}}};
  CHECK(reward_eval(lin, gen({0, 1}), c) == -0.5);
  const SpecReward cls({TokenClassReward{{1}}}, ab_config(3));
  CHECK(cls.score(gen({0, 1, 2})) == 0.5);
  CHECK(cls.score(gen({2})) == 0.0);
  CHECK_THROWS_AS(pattern.score(gen({0})), NonTerminalError);
}

TEST_CASE("malformed linear reward") {
  const auto c = ab_config();
  const RewardSpec bad{LinearReward{{1.0}, {}}};
  CHECK_THROWS_AS(validate_reward_spec(bad, c.vocab), InvalidArgumentError);
  const RewardSpec nan{LinearReward{{NAN}, {RewardSpec{NegLengthReward{}}}}};
  CHECK_THROWS_AS(validate_reward_spec(nan, c.vocab), InvalidArgumentError);
}

TEST_CASE("derive_seed separates streams and indices") {
  CHECK(derive_seed(1, "rollout", 0) == derive_seed(1, "rollout", 0));
  CHECK(derive_seed(1, "rollout", 0) != derive_seed(1, "rollout", 1));
  CHECK(derive_seed(1, "rollout", 0) != derive_seed(1, "fit_value", 0));
  CHECK(derive_seed(1, "rollout", 0) != derive_seed(2, "rollout", 0));
}

TEST_CASE("categorical sampling frequencies") {
  const std::vector<double> d{0.1, 0.6, 0.3};
  Rng rng(5);
  std::vector<int> counts(3);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[sample_categorical(d, rng)];
  for (std::size_t i = 0; i < 3; ++i) {
    const double sigma = std::sqrt(d[i] * (1 - d[i]) / n);
    CHECK(std::abs(counts[i] / double(n) - d[i]) <= 4 * sigma);
  }
  const std::vector<double> zero_tail{0.5, 0.5, 0.0};
  for (int i = 0; i < 1000; ++i) CHECK(sample_categorical(zero_tail, rng) != 2);
}

TEST_CASE("trajectory JSONL round trip") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  Rng rng(9);
  std::vector<Trajectory> ts;
  for (int i = 0; i < 20; ++i) ts.push_back(rollout(*inst.base, *r, {}, inst.config, rng));
  std::stringstream ss;
  ss << "# header line\n\n";
  write_jsonl(ss, ts);
  const auto back = read_jsonl(ss, inst.config);
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back[i].tokens == ts[i].tokens);
    CHECK(back[i].reward == ts[i].reward);
    CHECK(back[i].states == ts[i].states);
  }
  std::stringstream bad("{\"prompt\":[],\"tokens\":[0,0,0],\"reward\":0}\n");
  CHECK_THROWS(read_jsonl(bad, inst.config));
}

TEST_CASE("reward and policy specs round trip through JSON") {
  const auto inst = bigram_instance();
  for (const auto& nr : inst.rewards) {
    const auto j = reward_spec_to_json(nr.spec, inst.config.vocab);
    const auto back = reward_spec_from_json(j, inst.config.vocab);
    CHECK(reward_spec_to_json(back, inst.config.vocab) == j);
  }
  const auto p = policy_from_json(inst.policy_spec, inst.config.vocab);
  const State s = gen({2});
  CHECK(p->next_dist(s) == inst.base->next_dist(s));
}

TEST_CASE("top logprob view") {
  auto p = std::make_shared<FixedPolicy>(std::vector<double>{0.2, 0.5, 0.0, 0.3});
  const TopLogprobView view(p, 3);
  const auto top = view.top_logprobs(State{}, 5);
  REQUIRE(top.size() == 3);
  CHECK(top[0].first == 1);
  CHECK(top[1].first == 3);
  CHECK(top[2].first == 0);
  CHECK(top[0].second == doctest::Approx(std::log(0.5)));
  const TopLogprobView wide(p, 10);
  CHECK(wide.top_logprobs(State{}, 10).size() == 3);
}

TEST_CASE("suite instances stay enumerable") {
  for (const auto& inst : standard_suite()) {
    CHECK(inst.config.vocab.size() <= 5);
    CHECK(inst.config.max_new_tokens <= 6);
    CHECK(inst.rewards.size() >= 4);
  }
}
