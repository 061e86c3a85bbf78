#include <atomic>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "reference.hpp"
#include "vasamp/errors.hpp"
#include "vasamp/eval.hpp"
#include "vasamp/suite.hpp"

using namespace vas;

namespace {

std::shared_ptr<const TokenScorer> exact_scorer(const SuiteInstance& inst, const RewardFn& r) {
  return std::make_shared<StateValueScorer>(
      std::make_shared<ValueTable>(exact_value(*inst.base, r, inst.config, inst.prompt)));
}

FrontierPoint point(double kl, double reward) {
  FrontierPoint p;
  p.kl = kl;
  p.reward = reward;
  return p;
}

}  // namespace

TEST_CASE("exact frontier matches the oracle VAS policy") {
  for (const auto& inst : standard_suite()) {
    const auto r = inst.reward();
    const std::vector<double> grid{0.0, 1.0, 4.0};
    const auto pts = frontier_exact(inst.base, exact_scorer(inst, *r), *r, grid, inst.config, DecodeParams{},
                                    "vas_exact", inst.prompt, 2);
    REQUIRE(pts.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto pi = exact_vas_policy(*inst.base, *r, grid[i], inst.config, inst.prompt);
      const State root{inst.prompt, {}};
      CHECK(pts[i].reward == doctest::Approx(ref::expected(pi, [&](const State& s) { return r->score(s); },
                                                           inst.config, root))
                                 .epsilon(1e-12));
      CHECK(pts[i].kl == doctest::Approx(ref::sequence_kl(pi, *inst.base, inst.config, root)).epsilon(1e-10));
      CHECK(pts[i].method == "vas_exact");
    }
    CHECK(pts[0].kl == 0.0);
  }
}

TEST_CASE("tilted frontier satisfies the KL identity") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const std::vector<double> grid{0.0, 3.0};
  const auto pts = frontier_tilted(*inst.base, *r, grid, inst.config);
  CHECK(pts[0].reward == doctest::Approx(1.0 / 9.0));
  CHECK(pts[1].reward == doctest::Approx(0.7152).epsilon(1e-4));
  CHECK(pts[1].kl == doctest::Approx(3.0 * pts[1].reward - log_partition(*inst.base, *r, 3.0, inst.config))
                         .epsilon(1e-12));
}

TEST_CASE("exact Best-of-N matches pairwise enumeration") {
  for (const auto& inst : standard_suite()) {
    const auto r = inst.reward();
    const State root{inst.prompt, {}};
    const auto seqs = ref::sequence_probs(*inst.base, inst.config, root);
    std::map<TokenSeq, double> bon;
    for (const auto& [s1, p1] : seqs) {
      for (const auto& [s2, p2] : seqs) {
        const bool second = r->score(State{inst.prompt, s2}) > r->score(State{inst.prompt, s1});
        bon[second ? s2 : s1] += p1 * p2;
      }
    }
    double reward = 0.0;
    for (const auto& [s, p] : bon) reward += p * r->score(State{inst.prompt, s});
    // BoN is a function of the reward level only once ties within a level are
    // resolved in pi0 proportions, so compare KL at the level granularity.
    std::map<double, double> lvl_bon, lvl_base;
    for (const auto& [s, p] : bon) lvl_bon[r->score(State{inst.prompt, s})] += p;
    for (const auto& [s, p] : seqs) lvl_base[r->score(State{inst.prompt, s})] += p;
    double kl = 0.0;
    for (const auto& [level, p] : lvl_bon) {
      if (p > 0.0) kl += p * std::log(p / lvl_base.at(level));
    }
    const std::vector<std::size_t> n{1, 2};
    const auto pts = frontier_bon_exact(*inst.base, *r, n, inst.config, inst.prompt);
    CHECK(pts[0].kl == doctest::Approx(0.0));
    CHECK(pts[1].reward == doctest::Approx(reward).epsilon(1e-12));
    CHECK(pts[1].kl == doctest::Approx(kl).epsilon(1e-12));
    CHECK(pts[1].beta == 2.0);
  }
  const auto inst = tiny_ab();
  const auto pts = frontier_bon_exact(*inst.base, *inst.reward(), std::vector<std::size_t>{2}, inst.config);
  CHECK(pts[0].reward == doctest::Approx(17.0 / 81.0));
  CHECK(pts[0].kl ==
        doctest::Approx(17.0 / 81.0 * std::log(17.0 / 9.0) + 64.0 / 81.0 * std::log(8.0 / 9.0)).epsilon(1e-12));
}

TEST_CASE("Monte Carlo frontier agrees with the exact frontier") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  const auto scorer = exact_scorer(inst, *r);
  const std::vector<double> grid{0.0, 1.0, 3.0, 6.0};
  const auto exact = frontier_exact(inst.base, scorer, *r, grid, inst.config, DecodeParams{}, "vas_exact");
  const auto mc = frontier_mc(*inst.base, *scorer, *r, grid, 20000, 5, DecodeParams{}, inst.config, "vas_exact", {}, 4);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(mc[i].estimation == "monte_carlo");
    CHECK(mc[i].n_samples == 20000);
    CHECK(std::abs(mc[i].reward - exact[i].reward) <= 3 * *mc[i].se_reward + 1e-12);
    CHECK(std::abs(mc[i].kl - exact[i].kl) <= 3 * *mc[i].se_kl + 1e-12);
  }
  const auto again = frontier_mc(*inst.base, *scorer, *r, grid, 20000, 5, DecodeParams{}, inst.config, "vas_exact");
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(again[i].reward == mc[i].reward);
}

TEST_CASE("frontier CSV") {
  std::vector<FrontierPoint> pts{point(0.0, 0.1), point(0.5, 0.3)};
  std::ostringstream os;
  write_frontier_csv(os, pts, "deadbeef");
  const auto text = os.str();
  CHECK(text.rfind("# config_checksum: deadbeef\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("weak dominance against a piecewise-linear reference") {
  const std::vector<FrontierPoint> ref{point(0.0, 0.0), point(1.0, 1.0), point(2.0, 1.5)};
  CHECK(weakly_dominated(point(0.5, 0.5), ref));
  CHECK_FALSE(weakly_dominated(point(0.5, 0.6), ref));
  CHECK(weakly_dominated(point(3.0, 1.5), ref));
  CHECK_FALSE(weakly_dominated(point(3.0, 1.6), ref));
  const std::vector<FrontierPoint> arm{point(0.5, 0.5), point(0.5, 0.9), point(1.5, 1.2), point(1.5, 1.3)};
  CHECK(dominance_fraction(arm, ref) == 0.5);
  CHECK_THROWS_AS(dominance_fraction(std::vector<FrontierPoint>{}, ref), InvalidArgumentError);
}

TEST_CASE("the tilted optimum beats VAS at equal KL") {
  for (const auto& inst : standard_suite()) {
    const auto r = inst.reward();
    const std::vector<double> grid{0.5, 1.0, 2.0, 4.0, 8.0};
    const auto vas = frontier_exact(inst.base, exact_scorer(inst, *r), *r, grid, inst.config, DecodeParams{},
                                    "vas_exact", inst.prompt);
    for (const auto& p : vas) {
      double lo = 0.0, hi = 200.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const std::vector<double> b{mid};
        (frontier_tilted(*inst.base, *r, b, inst.config, inst.prompt)[0].kl <= p.kl ? lo : hi) = mid;
      }
      const std::vector<double> b{lo};
      CHECK(frontier_tilted(*inst.base, *r, b, inst.config, inst.prompt)[0].reward >= p.reward - 1e-9);
    }
  }
}

TEST_CASE("cost model") {
  CostModel c{10.0, 1.0, 1.0, 20.0, 128.0};
  CHECK(cost_flops(c, CostMethod::policy_only) == 10.0);
  CHECK(cost_flops(c, CostMethod::bon) == 1408.0);
  CHECK(cost_flops(c, CostMethod::vas) == 30.0);
  CHECK(cost_flops(c, CostMethod::bon) / cost_flops(c, CostMethod::vas) == doctest::Approx(46.93).epsilon(1e-4));
  CostModel d{1.0, 1.0, 4.0, 20.0, 128.0};
  CHECK(cost_flops(d, CostMethod::bon) / cost_flops(d, CostMethod::vas) == doctest::Approx(256.0 / 21.0));
  CHECK(cost_flops(d, CostMethod::vas) == 16.0 * 21.0);
  CostModel free_value{5.0, 0.0, 3.0, 4.0, 2.0};
  CHECK(cost_flops(free_value, CostMethod::vas) == cost_flops(free_value, CostMethod::policy_only));
  CostModel missing{10.0, std::nullopt, 1.0, 20.0, std::nullopt};
  CHECK(cost_flops(missing, CostMethod::policy_only) == 10.0);
  CHECK_THROWS_WITH_AS(cost_flops(missing, CostMethod::vas), doctest::Contains("'n'"), MissingFieldError);
  CostModel negative{-1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(cost_flops(negative, CostMethod::policy_only), InvalidArgumentError);
  CHECK(cost_method_from_string(to_string(CostMethod::bon)) == CostMethod::bon);
  CHECK_THROWS_AS(cost_method_from_string("nope"), InvalidArgumentError);
}

TEST_CASE("beta sweeps steer a length metric") {
  const auto inst = skew_instance();
  const auto shorter = inst.reward("neg_length");
  const auto scorer = exact_scorer(inst, *shorter);
  const std::function<double(const State&)> length = [&](const State& s) {
    return static_cast<double>(content_tokens(s, inst.config.vocab).size());
  };
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 4.0};
  const auto exact = beta_sweep_exact(
      [&](double beta) {
        return std::make_shared<const PolicyTable>(exact_vas_policy(*inst.base, *shorter, beta, inst.config));
      },
      length, grid, inst.config);
  CHECK(count_inversions(exact) == 0);
  CHECK(exact.back().value < exact.front().value);
  const auto mc = beta_sweep_mc(*inst.base, *scorer, length, grid, 4000, 1, DecodeParams{}, inst.config, {}, 2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    REQUIRE(mc[i].se.has_value());
    CHECK(std::abs(mc[i].value - exact[i].value) <= 4 * *mc[i].se + 1e-6);
  }
  CHECK(count_inversions(mc, 2.0) == 0);
}

TEST_CASE("inversion counting") {
  const std::vector<CurvePoint> c{{0.0, 3.0, 0.1}, {1.0, 3.1, 0.1}, {2.0, 2.0, 0.1}, {3.0, 2.5, 0.1}};
  CHECK(count_inversions(c) == 2);
  CHECK(count_inversions(c, 2.0) == 1);
}

TEST_CASE("spearman with ties") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{5, 6, 7, 8, 7};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  CHECK(spearman(x, x) == doctest::Approx(1.0));
  CHECK(spearman(x, rev) == doctest::Approx(-1.0));
  // Ranks of y are 1, 2, 3.5, 5, 3.5.
  CHECK(spearman(x, y) == doctest::Approx(0.8207826816681233));
  CHECK(std::isnan(spearman(x, std::vector<double>{1, 1, 1, 1, 1})));
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), LengthMismatchError);
}

TEST_CASE("varying k report") {
  const auto inst = bigram_instance();
  const auto r = inst.reward();
  const std::size_t n = inst.config.vocab.size();
  std::vector<std::size_t> ks;
  for (std::size_t k = 1; k <= n; ++k) ks.push_back(k);
  const auto rep = varying_k_report(inst.base, exact_scorer(inst, *r), *r, 3.0, ks, inst.config);
  REQUIRE(rep.size() == n);
  CHECK(rep.back().mean_tv <= 1e-12);
  CHECK(rep.back().max_tv <= 1e-12);
  CHECK(rep.front().mean_tv > 0.0);
  for (const auto& k : rep) CHECK(k.max_tv >= k.mean_tv);
  const auto full = frontier_exact(inst.base, exact_scorer(inst, *r), *r, std::vector<double>{3.0}, inst.config,
                                   DecodeParams{}, "vas_exact");
  CHECK(rep.back().point.reward == doctest::Approx(full[0].reward).epsilon(1e-12));
}

TEST_CASE("judge comparison") {
  const auto inst = tiny_ab();
  const auto r = inst.reward();
  Rng rng(2);
  std::vector<Trajectory> a, b;
  for (int i = 0; i < 50; ++i) a.push_back(rollout(*inst.base, *r, {}, inst.config, rng));
  for (int i = 0; i < 50; ++i) b.push_back(rollout(*inst.base, *r, {}, inst.config, rng));
  CHECK(judge_compare(a, a, *r) == 0.5);
  const FunctionReward constant([](const State&) { return 1.0; }, "const");
  CHECK(judge_compare(a, b, constant) == 0.5);
  double wins = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) wins += a[i].reward > b[i].reward ? 1.0 : a[i].reward == b[i].reward ? 0.5 : 0.0;
  CHECK(judge_compare(a, b, *r) == wins / 50.0);
  CHECK(judge_compare(a, b, *r) + judge_compare(b, a, *r) == doctest::Approx(1.0));
  CHECK_THROWS_AS(judge_compare(a, std::span(b).first(3), *r), LengthMismatchError);
}

TEST_CASE("ablation report JSON") {
  AblationReport rep;
  rep.factor = "fallback";
  rep.beta_grid = {0.0, 1.0};
  rep.seeds = {7};
  rep.arms = {{"mean_value", {point(0.0, 0.1)}}, {"base_only", {point(0.0, 0.1)}}};
  rep.summary = {{"dominance_fraction", 1.0}};
  const auto j = rep.to_json("abc");
  CHECK(j.at("config_checksum") == "abc");
  CHECK(j.at("arms").size() == 2);
  CHECK(j.at("arms")[0].at("name") == "mean_value");
  CHECK(j.at("arms")[0].at("csv").get<std::string>().find("method") != std::string::npos);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw InvalidArgumentError("boom");
                  }),
                  InvalidArgumentError);
}
