#include "vasamp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "vasamp/errors.hpp"
#include "vasamp/rng.hpp"

namespace vas {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t count = std::min(jobs, n);
  threads.reserve(count);
  for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

FrontierPoint exact_point(const Policy& decoded, const Policy& base, const RewardFn& reward,
                          const EpisodeConfig& config, const TokenSeq& prompt, const std::string& method,
                          double beta) {
  const auto tree = SequenceTree::build(config, prompt);
  const auto table = tabulate_policy(decoded, tree);
  const auto base_table = tabulate_policy(base, tree);
  FrontierPoint p;
  p.method = method;
  p.beta = beta;
  p.reward = policy_expected_reward(table, reward, config, prompt);
  p.kl = beta == 0.0 ? 0.0 : policy_kl(table, base_table, config, prompt);
  return p;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

std::vector<FrontierPoint> frontier_exact(std::shared_ptr<const Policy> base,
                                          std::shared_ptr<const TokenScorer> scorer, const RewardFn& reward,
                                          std::span<const double> beta_grid, const EpisodeConfig& config,
                                          const DecodeParams& params, const std::string& method,
                                          const TokenSeq& prompt, std::size_t jobs) {
  std::vector<FrontierPoint> out(beta_grid.size());
  parallel_for(beta_grid.size(), jobs, [&](std::size_t i) {
    DecodeParams p = params;
    p.beta = beta_grid[i];
    const DecodedPolicy decoded(base, scorer, config, p);
    out[i] = exact_point(decoded, *base, reward, config, prompt, method, beta_grid[i]);
    out[i].seed = params.seed;
  });
  return out;
}

std::vector<FrontierPoint> frontier_tilted(const Policy& base, const RewardFn& reward,
                                           std::span<const double> beta_grid, const EpisodeConfig& config,
                                           const TokenSeq& prompt, std::size_t jobs) {
  std::vector<FrontierPoint> out(beta_grid.size());
  parallel_for(beta_grid.size(), jobs, [&](std::size_t i) {
    const auto tilted = exact_tilted_policy(base, reward, beta_grid[i], config, prompt);
    out[i] = exact_point(tilted, base, reward, config, prompt, "tilted_oracle", beta_grid[i]);
  });
  return out;
}

namespace {

struct RewardLevels {
  std::vector<double> rewards;  // ascending, distinct
  std::vector<double> mass;     // normalized probability of each level
};

RewardLevels reward_levels(const Policy& base, const RewardFn& reward, const EpisodeConfig& config,
                           const TokenSeq& prompt) {
  std::map<double, double> levels;
  double total = 0.0;
  for (const auto& s : sequence_distribution(base, config, prompt)) {
    levels[reward.score(State{prompt, s.generated})] += s.prob;
    total += s.prob;
  }
  RewardLevels out;
  for (const auto& [r, m] : levels) {
    out.rewards.push_back(r);
    out.mass.push_back(m / total);
  }
  return out;
}

// Probability that the maximum of N draws lands on each level.
std::vector<double> bon_level_mass(const RewardLevels& levels, std::size_t n) {
  std::vector<double> q(levels.mass.size());
  double cdf_prev = 0.0;
  double cdf = 0.0;
  const double nn = static_cast<double>(n);
  for (std::size_t l = 0; l < q.size(); ++l) {
    cdf = l + 1 == q.size() ? 1.0 : std::min(1.0, cdf + levels.mass[l]);
    q[l] = std::pow(cdf, nn) - std::pow(cdf_prev, nn);
    cdf_prev = cdf;
  }
  return q;
}

}  // namespace

double bon_expected_reward(const Policy& base, const RewardFn& reward, std::size_t n, const EpisodeConfig& config,
                           const TokenSeq& prompt) {
  if (n < 1) throw InvalidArgumentError("Best-of-N needs N >= 1");
  const auto levels = reward_levels(base, reward, config, prompt);
  const auto q = bon_level_mass(levels, n);
  double e = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) e += levels.rewards[l] * q[l];
  return e;
}

std::vector<FrontierPoint> frontier_bon_exact(const Policy& base, const RewardFn& reward,
                                              std::span<const std::size_t> n_grid, const EpisodeConfig& config,
                                              const TokenSeq& prompt) {
  const auto levels = reward_levels(base, reward, config, prompt);
  std::vector<FrontierPoint> out;
  for (std::size_t n : n_grid) {
    if (n < 1) throw InvalidArgumentError("Best-of-N needs N >= 1");
    const auto q = bon_level_mass(levels, n);
    FrontierPoint p;
    p.method = "bon";
    p.beta = static_cast<double>(n);
    for (std::size_t l = 0; l < q.size(); ++l) {
      p.reward += levels.rewards[l] * q[l];
      // Within a level BoN keeps pi0's relative proportions, so only level masses contribute.
      if (q[l] > 0.0) p.kl += q[l] * std::log(q[l] / levels.mass[l]);
    }
    p.kl = std::max(0.0, p.kl);
    out.push_back(p);
  }
  return out;
}

std::vector<FrontierPoint> frontier_mc(const Policy& base, const TokenScorer& scorer, const RewardFn& reward,
                                       std::span<const double> beta_grid, std::size_t n_samples, std::uint64_t seed,
                                       const DecodeParams& params, const EpisodeConfig& config,
                                       const std::string& method, const TokenSeq& prompt, std::size_t jobs) {
  if (n_samples < 1) throw InvalidArgumentError("frontier_mc needs n_samples >= 1");
  std::vector<FrontierPoint> out;
  for (double beta : beta_grid) {
    DecodeParams p = params;
    p.beta = beta;
    std::vector<double> rewards(n_samples);
    std::vector<double> kls(n_samples);
    parallel_for(n_samples, jobs, [&](std::size_t i) {
      Rng rng(derive_seed(seed, "frontier_mc", i));
      const auto result = decode_sequence(base, scorer, reward, prompt, config, p, rng);
      double kl = 0.0;
      for (const auto& step : result.steps) {
        const TokenId x = *step.token;
        kl += std::log(step.dist[x]) - std::log(base.next_dist(step.state)[x]);
      }
      rewards[i] = result.trajectory.reward;
      kls[i] = kl;
    });
    const auto r = mean_se(rewards);
    const auto k = mean_se(kls);
    FrontierPoint point;
    point.method = method;
    point.beta = beta;
    point.reward = r.mean;
    point.kl = k.mean;
    point.estimation = "monte_carlo";
    point.n_samples = n_samples;
    point.se_reward = r.se;
    point.se_kl = k.se;
    point.seed = seed;
    out.push_back(point);
  }
  return out;
}

std::string frontier_csv_block(std::span<const FrontierPoint> points) {
  std::ostringstream os;
  os << "method,beta,kl,reward,estimation,n_samples,se_reward,se_kl,seed\n";
  for (const auto& p : points) {
    os << p.method << ',' << format_double(p.beta) << ',' << format_double(p.kl) << ','
       << format_double(p.reward) << ',' << p.estimation << ',' << p.n_samples << ','
       << (p.se_reward ? format_double(*p.se_reward) : "") << ',' << (p.se_kl ? format_double(*p.se_kl) : "")
       << ',' << p.seed << '\n';
  }
  return os.str();
}

void write_frontier_csv(std::ostream& os, std::span<const FrontierPoint> points, const std::string& checksum) {
  os << "# config_checksum: " << checksum << '\n' << frontier_csv_block(points);
}

bool weakly_dominated(const FrontierPoint& point, std::span<const FrontierPoint> reference, double tol) {
  std::vector<std::pair<double, double>> curve;
  for (const auto& r : reference) curve.emplace_back(r.kl, r.reward);
  std::sort(curve.begin(), curve.end());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto [k, r] = curve[i];
    if (k <= point.kl + 1e-15) best = std::max(best, r);
    if (i + 1 < curve.size()) {
      const auto [k2, r2] = curve[i + 1];
      if (k <= point.kl && point.kl < k2) best = std::max(best, r + (r2 - r) * (point.kl - k) / (k2 - k));
    }
  }
  return best >= point.reward - tol;
}

double dominance_fraction(std::span<const FrontierPoint> arm, std::span<const FrontierPoint> reference,
                          double tol) {
  if (arm.empty()) throw InvalidArgumentError("dominance_fraction needs at least one arm point");
  std::size_t dominated = 0;
  for (const auto& p : arm) dominated += weakly_dominated(p, reference, tol) ? 1 : 0;
  return static_cast<double>(dominated) / static_cast<double>(arm.size());
}

std::string to_string(CostMethod m) {
  switch (m) {
    case CostMethod::policy_only:
      return "policy_only";
    case CostMethod::bon:
      return "bon";
    case CostMethod::vas:
      return "vas";
  }
  return "policy_only";
}

CostMethod cost_method_from_string(const std::string& s) {
  if (s == "policy_only") return CostMethod::policy_only;
  if (s == "bon") return CostMethod::bon;
  if (s == "vas") return CostMethod::vas;
  throw InvalidArgumentError("unknown cost method '" + s + "' (expected policy_only|bon|vas)");
}

double cost_flops(const CostModel& model, CostMethod method) {
  auto need = [&](const std::optional<double>& field, const char* name) {
    if (!field) throw MissingFieldError("cost model field '" + std::string(name) + "' is required for " + to_string(method));
    if (!(*field >= 0.0) || !std::isfinite(*field)) {
      throw InvalidArgumentError("cost model field '" + std::string(name) + "' must be finite and >= 0");
    }
    return *field;
  };
  const double t = need(model.T, "T");
  const double m = need(model.m, "m");
  switch (method) {
    case CostMethod::policy_only:
      return t * t * m;
    case CostMethod::bon:
      return need(model.N, "N") * t * t * (need(model.n, "n") + m);
    case CostMethod::vas:
      return t * t * (m + need(model.k, "k") * need(model.n, "n"));
  }
  return 0.0;
}

std::vector<CurvePoint> beta_sweep_exact(const std::function<std::shared_ptr<const Policy>(double)>& make_policy,
                                         const std::function<double(const State&)>& metric,
                                         std::span<const double> beta_grid, const EpisodeConfig& config,
                                         const TokenSeq& prompt, std::size_t jobs) {
  std::vector<CurvePoint> out(beta_grid.size());
  parallel_for(beta_grid.size(), jobs, [&](std::size_t i) {
    const auto policy = make_policy(beta_grid[i]);
    out[i] = {beta_grid[i], expected_terminal_metric(*policy, metric, config, prompt), std::nullopt};
  });
  return out;
}

std::vector<CurvePoint> beta_sweep_mc(const Policy& base, const TokenScorer& scorer,
                                      const std::function<double(const State&)>& metric,
                                      std::span<const double> beta_grid, std::size_t n_samples, std::uint64_t seed,
                                      const DecodeParams& params, const EpisodeConfig& config,
                                      const TokenSeq& prompt, std::size_t jobs) {
  if (n_samples < 1) throw InvalidArgumentError("beta_sweep_mc needs n_samples >= 1");
  const FunctionReward none([](const State&) { return 0.0; }, "none");
  std::vector<CurvePoint> out;
  for (double beta : beta_grid) {
    DecodeParams p = params;
    p.beta = beta;
    std::vector<double> values(n_samples);
    parallel_for(n_samples, jobs, [&](std::size_t i) {
      Rng rng(derive_seed(seed, "beta_sweep", i));
      values[i] = metric(decode_sequence(base, scorer, none, prompt, config, p, rng).trajectory.terminal());
    });
    const auto m = mean_se(values);
    out.push_back({beta, m.mean, m.se});
  }
  return out;
}

std::size_t count_inversions(std::span<const CurvePoint> curve, double se_mult) {
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double se0 = curve[i].se.value_or(0.0);
    const double se1 = curve[i + 1].se.value_or(0.0);
    if (curve[i + 1].value > curve[i].value + se_mult * std::sqrt(se0 * se0 + se1 * se1)) ++count;
  }
  return count;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatchError("spearman: x and y differ in length");
  if (x.size() < 2) throw InvalidArgumentError("spearman needs at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

AccuracyReport accuracy_vs_performance(std::shared_ptr<const Policy> base, const RewardFn& reward,
                                       const ValidationSet& valset, const AccuracyStudy& study,
                                       const EpisodeConfig& config,
                                       const std::function<std::unique_ptr<ValueEstimator>()>& make_estimator,
                                       std::size_t jobs) {
  if (study.dataset_sizes.size() < 3) throw InvalidArgumentError("accuracy study needs at least 3 dataset sizes");
  if (study.seeds.empty()) throw InvalidArgumentError("accuracy study needs at least one seed");
  const std::size_t cells = study.seeds.size() * study.dataset_sizes.size();
  AccuracyReport report;
  report.rows.resize(cells);
  const std::vector<TokenSeq> prompts{study.prompt};
  parallel_for(cells, jobs, [&](std::size_t c) {
    const std::uint64_t seed = study.seeds[c / study.dataset_sizes.size()];
    const std::size_t size = study.dataset_sizes[c % study.dataset_sizes.size()];
    const auto dataset = collect_dataset(*base, reward, prompts, size, config, study.collect_temperature,
                                         derive_seed(seed, "dataset", size));
    std::shared_ptr<ValueEstimator> estimator = make_estimator();
    TdConfig td = study.td;
    td.seed = derive_seed(seed, "train", size);
    fit_value(*estimator, dataset, td);
    DecodeParams p = study.decode;
    p.beta = study.beta;
    const DecodedPolicy decoded(base, std::make_shared<StateValueScorer>(estimator), config, p);
    report.rows[c] = {size, seed, validation_mse(*estimator, valset),
                      policy_expected_reward(decoded, reward, config, study.prompt)};
  });
  std::vector<double> mse;
  std::vector<double> rew;
  for (const auto& r : report.rows) {
    mse.push_back(r.validation_mse);
    rew.push_back(r.reward);
  }
  report.spearman_rho = spearman(mse, rew);
  return report;
}

std::vector<KReport> varying_k_report(std::shared_ptr<const Policy> base, std::shared_ptr<const TokenScorer> scorer,
                                      const RewardFn& reward, double beta, std::span<const std::size_t> k_grid,
                                      const EpisodeConfig& config, Fallback fallback, const TokenSeq& prompt) {
  const auto tree = SequenceTree::build(config, prompt);
  DecodeParams full;
  full.beta = beta;
  full.mode = DecodeMode::full;
  std::vector<std::vector<double>> full_dists(tree->size());
  for (std::size_t i = 0; i < tree->size(); ++i) {
    if (!tree->node(i).terminal) full_dists[i] = decode_step(*base, *scorer, tree->state(i), config, full).dist;
  }
  std::vector<KReport> out;
  for (std::size_t k : k_grid) {
    DecodeParams p = full;
    p.mode = DecodeMode::topk;
    p.top_k = k;
    p.fallback = fallback;
    p.validate(config.vocab.size());
    KReport r;
    r.k = k;
    std::size_t states = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < tree->size(); ++i) {
      if (tree->node(i).terminal) continue;
      const double tv = dist_tv(decode_step(*base, *scorer, tree->state(i), config, p).dist, full_dists[i]);
      sum += tv;
      r.max_tv = std::max(r.max_tv, tv);
      ++states;
    }
    r.mean_tv = sum / static_cast<double>(states);
    const DecodedPolicy decoded(base, scorer, config, p);
    r.point = exact_point(decoded, *base, reward, config, prompt, "vas_k" + std::to_string(k), beta);
    out.push_back(r);
  }
  return out;
}

double judge_compare(std::span<const Trajectory> a, std::span<const Trajectory> b, const RewardFn& judge) {
  if (a.size() != b.size()) {
    throw LengthMismatchError("judge_compare: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                              " trajectories");
  }
  if (a.empty()) throw EmptyDatasetError("judge_compare needs at least one pair");
  double wins = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].prompt != b[i].prompt) throw InvalidArgumentError("judge_compare: pair " + std::to_string(i) + " has different prompts");
    const double ja = judge.score(a[i].terminal());
    const double jb = judge.score(b[i].terminal());
    wins += ja > jb ? 1.0 : (ja == jb ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(a.size());
}

nlohmann::json AblationReport::to_json(const std::string& checksum) const {
  nlohmann::json arms_json = nlohmann::json::array();
  for (const auto& arm : arms) arms_json.push_back({{"name", arm.name}, {"csv", frontier_csv_block(arm.points)}});
  return {{"config_checksum", checksum}, {"factor", factor},   {"beta_grid", beta_grid},
          {"seeds", seeds},              {"arms", arms_json}, {"summary", summary},
          {"shared_config", shared_config}};
}

}  // namespace vas
