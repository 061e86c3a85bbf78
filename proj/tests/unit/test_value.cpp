#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "reference.hpp"
#include "vasamp/checkpoint.hpp"
#include "vasamp/composite.hpp"
#include "vasamp/errors.hpp"
#include "vasamp/oracle.hpp"
#include "vasamp/q_estimator.hpp"
#include "vasamp/suite.hpp"
#include "vasamp/td.hpp"
#include "vasamp/value.hpp"

using namespace vas;

namespace {

State gen(TokenSeq g) { return State{{}, std::move(g)}; }

TrajectoryDataset dataset(const SuiteInstance& inst, const RewardFn& r, std::size_t n, std::uint64_t seed,
                          double temperature = 1.0) {
  const std::vector<TokenSeq> prompts{inst.prompt};
  return collect_dataset(*inst.base, r, prompts, n, inst.config, temperature, seed);
}

double max_state_error(const ValueFunction& v, const ValueTable& exact) {
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.tree().size(); ++i) {
    worst = std::max(worst, std::abs(v.predict(exact.tree().state(i)) - exact.at_node(i)));
  }
  return worst;
}

std::vector<State> random_states(const EpisodeConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<State> out;
  while (out.size() < n) {
    State s;
    const std::size_t len = eng() % (c.max_new_tokens + 1);
    for (std::size_t i = 0; i < len && !is_terminal(s, c); ++i) s = transition(s, eng() % c.vocab.size(), c);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("lambda returns") {
  const std::vector<double> v{0.2, 0.5, -0.3};
  const auto mc = lambda_returns(v, 1.0, 1.0, 1.0);
  for (double t : mc) CHECK(t == doctest::Approx(1.0).epsilon(1e-15));
  const auto td0 = lambda_returns(v, 1.0, 0.9, 0.0);
  CHECK(td0[0] == doctest::Approx(0.9 * 0.5));
  CHECK(td0[1] == doctest::Approx(0.9 * -0.3));
  CHECK(td0[2] == 1.0);
  const auto two = lambda_returns(std::vector<double>{0.1, 0.5}, 1.0, 1.0, 0.95);
  CHECK(two[0] == doctest::Approx(0.05 * 0.5 + 0.95 * 1.0).epsilon(1e-15));
  // Recursive form G_t = r_t + gamma ((1 - lambda) V(s_{t+1}) + lambda G_{t+1}).
  const double g = 0.8;
  const double l = 0.7;
  const auto rec = lambda_returns(v, 2.0, g, l);
  CHECK(rec[2] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(rec[1] == doctest::Approx(g * (1 - l) * v[2] + g * l * rec[2]));
  CHECK(rec[0] == doctest::Approx(g * (1 - l) * v[1] + g * l * rec[1]));
}

TEST_CASE("dataset collection") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  CHECK(dataset(inst, *r, 0, 1).empty());
  const auto a = dataset(inst, *r, 50, 1);
  const auto b = dataset(inst, *r, 50, 1);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.trajectories[i].tokens == b.trajectories[i].tokens);
    CHECK(a.trajectories[i].seed == derive_seed(1, "rollout", i));
  }

  const EpisodeConfig c{Vocab({"a", "b", "<eos>"}, 2), 3};
  const PointMassPolicy point(3, 1);
  const SpecReward len({NegLengthReward{1.0}}, c);
  const std::vector<TokenSeq> prompts{{}};
  const auto same = collect_dataset(point, len, prompts, 10, c, 0.7, 3);
  for (const auto& t : same.trajectories) CHECK(t.tokens == TokenSeq{1, 1, 1});
}

TEST_CASE("empirical sequence frequency matches the oracle") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto d = dataset(inst, *r, 90000, 17);
  std::size_t hits = 0;
  for (const auto& t : d.trajectories) hits += t.tokens == TokenSeq{0, 1};
  const double p = 1.0 / 9.0;
  const double sigma = std::sqrt(p * (1 - p) / 90000.0);
  CHECK(std::abs(hits / 90000.0 - p) <= 3 * sigma);
}

TEST_CASE("tabular TD(lambda) converges on tiny_ab") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto exact = exact_value(*inst.base, *r, inst.config);
  const auto d = dataset(inst, *r, 50000, 5);
  TabularValue v;
  TdConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  const auto log = fit_value(v, d, cfg);
  CHECK(log.epoch_mse.size() == 10);
  CHECK(max_state_error(v, exact) <= 0.02);
}

TEST_CASE("constant reward dataset converges to the constant") {
  const auto inst = bigram_instance();
  const FunctionReward c([](const State&) { return 0.75; }, "const");
  const auto d = dataset(inst, c, 2000, 2);
  for (const char* kind : {"tabular", "linear"}) {
    std::unique_ptr<ValueEstimator> v;
    if (std::string(kind) == "tabular") {
      v = std::make_unique<TabularValue>();
    } else {
      v = std::make_unique<LinearValue>(NgramFeatures(inst.config.vocab.size(), 2, inst.config.max_new_tokens));
    }
    TdConfig cfg;
    cfg.learning_rate = std::string(kind) == "tabular" ? 1.0 : 0.1;
    cfg.epochs = 3;
    fit_value(*v, d, cfg);
    for (const auto& s : ref::states(inst.config, State{})) CHECK(std::abs(v->predict(s) - 0.75) <= 1e-3);
  }
}

TEST_CASE("single trajectory with lambda = 1 is memorized exactly") {
  const auto inst = tiny_ab();
  TrajectoryDataset d;
  d.trajectories.push_back(make_trajectory({}, {0, 1}, 1.0, inst.config));
  TabularValue v;
  TdConfig cfg;
  cfg.lambda = 1.0;
  cfg.epochs = 2;
  const auto log = fit_value(v, d, cfg);
  for (const auto& s : d.trajectories[0].states) CHECK(v.predict(s) == 1.0);
  CHECK(log.epoch_mse.back() == 0.0);
}

TEST_CASE("fit_value errors") {
  const auto inst = tiny_ab();
  TabularValue v;
  CHECK_THROWS_AS(fit_value(v, TrajectoryDataset{}, TdConfig{}), EmptyDatasetError);
  TdConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgumentError);
  bad = TdConfig{};
  bad.lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgumentError);

  const auto r = inst.reward();
  const auto d = dataset(inst, *r, 200, 1);
  LinearValue lin(NgramFeatures(3, 2, 2));
  TdConfig hot;
  hot.learning_rate = 1e9;
  CHECK_THROWS_AS(fit_value(lin, d, hot), DivergenceError);
}

TEST_CASE("training is deterministic per seed") {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  const auto d = dataset(inst, *r, 500, 4);
  TdConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3;
  MlpValue a(NgramFeatures(4, 2, 6), {8}, 3);
  MlpValue b(NgramFeatures(4, 2, 6), {8}, 3);
  const auto la = fit_value(a, d, cfg);
  const auto lb = fit_value(b, d, cfg);
  CHECK(la.epoch_mse == lb.epoch_mse);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
}

TEST_CASE("validation set labels") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const std::vector<TokenSeq> prompts{{}};
  const auto one = make_validation_set(*inst.base, *r, prompts, 1, inst.config, 40, 1, 3);
  REQUIRE(one.entries.size() == 40);
  for (const auto& e : one.entries) {
    CHECK(e.prefix.generated.size() == 1);
    CHECK((e.label == 0.0 || e.label == 1.0));
  }

  const EpisodeConfig c{Vocab({"a", "b", "<eos>"}, 2), 3};
  const PointMassPolicy point(3, 1);
  const SpecReward pattern({PatternReward{{1, 1}}}, c);
  for (std::size_t m : {1, 7}) {
    for (const auto& e : make_validation_set(point, pattern, prompts, 1, c, 5, m, 2).entries) CHECK(e.label == 1.0);
  }

  // Label of prefix "a" concentrates at V("a") = 1/3.
  const auto many = make_validation_set(*inst.base, *r, prompts, 1, inst.config, 300, 2000, 8);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : many.entries) {
    if (e.prefix.generated == TokenSeq{0}) {
      sum += e.label;
      ++n;
    }
  }
  REQUIRE(n > 0);
  CHECK(std::abs(sum / n - 1.0 / 3.0) <= 0.01);
}

TEST_CASE("validation mse") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const std::vector<TokenSeq> prompts{{}};
  const auto vs = make_validation_set(*inst.base, *r, prompts, 1, inst.config, 200, 1, 4);
  // Entries may share a prefix with different labels, so memorize the per-prefix label means.
  std::map<TokenSeq, std::pair<double, int>> by_prefix;
  for (const auto& e : vs.entries) {
    by_prefix[e.prefix.generated].first += e.label;
    by_prefix[e.prefix.generated].second += 1;
  }
  ValidationSet unique;
  for (const auto& [g, sn] : by_prefix) unique.entries.push_back({gen(g), sn.first / sn.second});
  TabularValue exact_memo;
  for (const auto& e : unique.entries) exact_memo.set(e.prefix, e.label);
  CHECK(validation_mse(exact_memo, unique) == 0.0);

  struct Const final : ValueFunction {
    double predict(const State&) const override { return 0.3; }
  } c;
  double expected = 0.0;
  for (const auto& e : vs.entries) expected += (0.3 - e.label) * (0.3 - e.label);
  CHECK(validation_mse(c, vs) == doctest::Approx(expected / vs.entries.size()).epsilon(1e-14));

  // Labels are M-sample means around the exact value, so the exact-V error is about Var/M.
  const auto big = make_validation_set(*inst.base, *r, prompts, 1, inst.config, 300, 10, 6);
  const auto exact = std::make_shared<ValueTable>(exact_value(*inst.base, *r, inst.config));
  double bound = 0.0;
  for (const auto& e : big.entries) {
    const double p = exact->at(e.prefix);
    bound += p * (1 - p) / 10.0;
  }
  bound /= big.entries.size();
  CHECK(validation_mse(*exact, big) <= 2.0 * bound);
}

TEST_CASE("gradient checks") {
  const EpisodeConfig c{Vocab({"a", "b", "c", "<eos>"}, 3), 5};
  const auto states = random_states(c, 16, 1);
  std::vector<const State*> ptrs;
  for (const auto& s : states) ptrs.push_back(&s);
  std::vector<double> targets;
  for (std::size_t i = 0; i < states.size(); ++i) targets.push_back(std::sin(double(i)));

  LinearValue lin(NgramFeatures(4, 2, 5));
  std::mt19937_64 eng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& w : lin.parameters()) w = u(eng);
  CHECK(grad_check(lin, ptrs, targets) <= 1e-9);

  for (std::vector<std::size_t> hidden : {std::vector<std::size_t>{8}, std::vector<std::size_t>{6, 5}}) {
    MlpValue mlp(NgramFeatures(4, 2, 5), hidden, 9);
    CHECK(grad_check(mlp, ptrs, targets) <= 1e-4);
    const std::vector<double> before(mlp.parameters().begin(), mlp.parameters().end());
    grad_check(mlp, ptrs, targets);
    CHECK(std::equal(before.begin(), before.end(), mlp.parameters().begin()));
  }

  MlpValue zero(NgramFeatures(4, 2, 5), {4}, 1);
  for (double& w : zero.parameters()) w = 0.0;
  CHECK(grad_check(zero, ptrs, targets) <= 1e-9);
}

TEST_CASE("ngram features") {
  const NgramFeatures f(3, 2, 4);
  const auto a = f.active(State{});
  const auto b = f.active(gen({0, 1}));
  CHECK(a.size() == 4);
  CHECK(b.size() == 4);
  CHECK(std::is_sorted(b.begin(), b.end()));
  CHECK(a != b);
  for (auto i : b) CHECK(i < f.dim());
}

TEST_CASE("checkpoints round trip") {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  const auto d = dataset(inst, *r, 300, 2);
  TdConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.05;
  std::vector<std::unique_ptr<ValueEstimator>> models;
  models.push_back(std::make_unique<TabularValue>());
  models.push_back(std::make_unique<LinearValue>(NgramFeatures(4, 2, 6)));
  models.push_back(std::make_unique<MlpValue>(NgramFeatures(4, 2, 6), std::vector<std::size_t>{5, 3}, 4));
  const auto states = random_states(inst.config, 50, 3);
  for (auto& m : models) {
    fit_value(*m, d, cfg);
    const auto j = checkpoint_to_json(*m);
    const auto back = estimator_from_checkpoint(nlohmann::json::parse(j.dump()));
    CHECK(back->kind() == m->kind());
    for (const auto& s : states) CHECK(back->predict(s) == m->predict(s));
  }
  CHECK_THROWS_AS(estimator_from_checkpoint({{"kind", "tabular"}}), FormatError);
  auto bad = checkpoint_to_json(*models[0]);
  bad["format_version"] = 99;
  CHECK_THROWS_AS(estimator_from_checkpoint(bad), FormatError);
  bad = checkpoint_to_json(*models[1]);
  bad["parameters"]["weights"] = std::vector<double>{1.0};
  CHECK_THROWS_AS(estimator_from_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(read_json_file("/nonexistent/ckpt.json"), MissingArtifactError);
}

TEST_CASE("composite values") {
  const auto inst = tiny_ab();
  const auto vp = std::make_shared<ValueTable>(exact_value(*inst.base, *inst.reward("pattern_ab"), inst.config));
  const auto vl = std::make_shared<ValueTable>(exact_value(*inst.base, *inst.reward("neg_length"), inst.config));
  const auto combined = exact_value(*inst.base, *inst.reward("ab_minus_length"), inst.config);
  const CompositeValue single({{1.0, vp}});
  const CompositeValue halves({{0.5, vp}, {0.5, vp}});
  const CompositeValue mix({{0.5, vp}, {0.5, vl}});
  for (std::size_t i = 0; i < combined.tree().size(); ++i) {
    const State s = combined.tree().state(i);
    CHECK(single.predict(s) == vp->at(s));
    CHECK(halves.predict(s) == doctest::Approx(vp->at(s)).epsilon(1e-15));
    CHECK(std::abs(mix.predict(s) - combined.at_node(i)) <= 1e-12);
  }
  CHECK_THROWS_AS(CompositeValue({}), EmptyCompositionError);
  CHECK_THROWS_AS(CompositeValue({{NAN, vp}}), NonFiniteError);
  const std::vector<double> w{1.0, 2.0};
  const std::vector<std::shared_ptr<const ValueFunction>> one{vp};
  CHECK_THROWS_AS(compose(w, one), LengthMismatchError);
}

TEST_CASE("tabular Q converges on tiny_ab in both bootstrap modes") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto exact = exact_value(*inst.base, *r, inst.config);
  const auto d = dataset(inst, *r, 50000, 21);
  TdConfig cfg;
  cfg.epochs = 10;
  for (auto mode : {BootstrapMode::exact, BootstrapMode::sampled}) {
    for (auto param : {QParameterization::flat, QParameterization::dueling}) {
      QFitOptions opts;
      opts.mode = mode;
      opts.parameterization = param;
      const auto fit = fit_q(d, cfg, opts, *inst.base);
      double worst = 0.0;
      for (const auto& s : ref::states(inst.config, State{})) {
        for (TokenId x = 0; x < 3; ++x) worst = std::max(worst, std::abs(fit.estimator.predict(s, x) - exact_q(exact, s, x)));
      }
      CHECK(worst <= 0.02);
    }
  }
}

TEST_CASE("Q estimator identities") {
  const auto inst = tiny_ab();
  TabularQ duel(3, QParameterization::dueling);
  duel.initialize(0.4);
  const auto q = duel.predict_all(State{});
  CHECK(q == std::vector<double>{0.4, 0.4, 0.4});
  CHECK(duel.state_value(State{}) == 0.4);

  const FunctionReward c([](const State&) { return -1.5; }, "const");
  const std::vector<TokenSeq> prompts{{}};
  const auto d = collect_dataset(*inst.base, c, prompts, 500, inst.config, 1.0, 3);
  TdConfig cfg;
  cfg.epochs = 3;
  for (auto param : {QParameterization::flat, QParameterization::dueling}) {
    QFitOptions opts;
    opts.parameterization = param;
    const auto fit = fit_q(d, cfg, opts);
    for (const auto& s : ref::states(inst.config, State{})) {
      for (double x : fit.estimator.predict_all(s)) CHECK(std::abs(x + 1.5) <= 1e-9);
    }
  }

  const TopLogprobView view(inst.base, 2);
  QFitOptions exact_opts;
  exact_opts.mode = BootstrapMode::exact;
  CHECK_THROWS_AS(fit_q(d, cfg, exact_opts, view), ModeUnavailableError);
  CHECK_NOTHROW(fit_q(d, cfg, QFitOptions{}, view));
}

TEST_CASE("centered advantages leave Q unchanged") {
  const auto inst = bigram_instance();
  const auto r = inst.reward();
  const auto d = dataset(inst, *r, 3000, 6);
  TdConfig cfg;
  cfg.epochs = 4;
  QFitOptions plain;
  plain.parameterization = QParameterization::dueling;
  QFitOptions centered = plain;
  centered.center_advantage = true;
  const auto a = fit_q(d, cfg, plain, *inst.base);
  const auto b = fit_q(d, cfg, centered, *inst.base);
  for (const auto& s : random_states(inst.config, 200, 5)) {
    if (is_terminal(s, inst.config)) continue;
    const auto qa = a.estimator.predict_all(s);
    const auto qb = b.estimator.predict_all(s);
    for (std::size_t x = 0; x < qa.size(); ++x) CHECK(qa[x] == doctest::Approx(qb[x]).epsilon(1e-9));
  }
}

TEST_CASE("Q checkpoints round trip") {
  const auto inst = tiny_ab();
  const auto d = dataset(inst, *inst.reward(), 500, 1);
  TdConfig cfg;
  cfg.epochs = 2;
  for (auto param : {QParameterization::flat, QParameterization::dueling}) {
    QFitOptions opts;
    opts.parameterization = param;
    const auto fit = fit_q(d, cfg, opts, *inst.base);
    const auto back = q_estimator_from_checkpoint(nlohmann::json::parse(checkpoint_to_json(fit.estimator).dump()));
    for (const auto& s : ref::states(inst.config, State{})) CHECK(back.predict_all(s) == fit.estimator.predict_all(s));
  }
}
