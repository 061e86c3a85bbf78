#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "vasamp/checkpoint.hpp"
#include "vasamp/composite.hpp"
#include "vasamp/oracle.hpp"
#include "vasamp/serialize.hpp"

namespace vas::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class ZeroValue final : public ValueFunction {
 public:
  double predict(const State&) const override { return 0.0; }
};

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

std::string fmt(double x, int precision = 10) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

const Policy& require_base(const SuiteInstance& inst) {
  if (!inst.base) throw ConfigError("missing required field 'policy'");
  return *inst.base;
}

void validate_params(const DecodeParams& params, const SuiteInstance& inst) {
  try {
    params.validate(inst.config.vocab.size());
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string("decode: ") + e.what());
  }
}

struct Scorer {
  std::shared_ptr<const TokenScorer> scorer;
  std::string checksum;
};

Scorer exact_scorer(const SuiteInstance& inst, const RewardFn& reward) {
  auto table = std::make_shared<ValueTable>(exact_value(require_base(inst), reward, inst.config, inst.prompt));
  return {std::make_shared<StateValueScorer>(std::move(table), "exact"), "exact"};
}

Scorer checkpoint_scorer(const fs::path& path) {
  const json j = read_json_file(path);
  const std::string checksum =
      j.contains("config_checksum") && j.at("config_checksum").is_string() ? j.at("config_checksum").get<std::string>()
                                                                          : checksum_hex(j.dump());
  try {
    if (j.value("kind", "") == "tabular_q") {
      auto q = std::make_shared<TabularQ>(q_estimator_from_checkpoint(j));
      return {std::make_shared<QValueScorer>(std::move(q), checksum), checksum};
    }
    return {std::make_shared<StateValueScorer>(value_function_from_checkpoint(j), checksum), checksum};
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

fs::path checkpoint_path(const RunConfig& cfg, const std::optional<std::string>& configured) {
  return configured ? fs::path(*configured) : cfg.out / "checkpoint.json";
}

TrajectoryDataset collect(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const std::vector<TokenSeq> prompts{inst.prompt};
  return collect_dataset(require_base(inst), reward, prompts, cfg.train.n_trajectories, inst.config,
                         cfg.train.temperature, derive_seed(cfg.seed, "dataset"));
}

struct Trained {
  json checkpoint;
  TrainingLog log;
  std::shared_ptr<const TokenScorer> scorer;
  std::shared_ptr<const ValueFunction> value;
};

Trained train(const RunConfig& cfg, const SuiteInstance& inst, const TrajectoryDataset& data,
              const EstimatorConfig& est, const TdConfig& td) {
  Trained out;
  if (est.kind == "tabular_q") {
    QFitOptions opts;
    opts.mode = est.bootstrap;
    opts.parameterization = est.parameterization;
    opts.center_advantage = est.center_advantage;
    auto fit = fit_q(data, td, opts, require_base(inst));
    out.checkpoint = checkpoint_to_json(fit.estimator);
    out.log = std::move(fit.log);
    auto q = std::make_shared<TabularQ>(std::move(fit.estimator));
    out.scorer = std::make_shared<QValueScorer>(q, cfg.checksum());
    out.value = std::make_shared<QAsValue>(q);
    return out;
  }
  auto estimator = make_estimator(est, inst.config, cfg.seed);
  out.log = fit_value(*estimator, data, td);
  out.checkpoint = checkpoint_to_json(*estimator);
  out.value = std::shared_ptr<const ValueFunction>(std::move(estimator));
  out.scorer = std::make_shared<StateValueScorer>(out.value, cfg.checksum());
  return out;
}

std::string render(const SuiteInstance& inst, const State& s) {
  return "\"" + inst.config.vocab.render(s.generated) + "\"";
}

// ---------------------------------------------------------------------------
// oracle-check

struct Check {
  std::string name;
  double tol;
  double max_err = 0.0;
};

class Verifier {
 public:
  Verifier(std::ostream& os, const SuiteInstance& inst) : os_(os), inst_(inst) {}

  // Records err for `state`; the first violation prints a FAIL line and throws.
  void observe(Check& check, double err, const std::string& reward, double beta, const State& state) {
    if (!(err <= check.tol)) {
      os_ << "FAIL " << check.name << " reward=" << reward << " beta=" << fmt(beta) << " state=" << render(inst_, state)
          << " err=" << fmt(err) << " tol=" << fmt(check.tol) << "\n";
      throw VerificationFailure(check.name + " violated at state " + render(inst_, state) + " (reward " + reward +
                                ", beta " + fmt(beta) + ")");
    }
    check.max_err = std::max(check.max_err, err);
  }

  void pass(const Check& check, const std::string& reward) {
    os_ << "PASS " << check.name << " reward=" << reward << " max_err=" << fmt(check.max_err, 3) << "\n";
  }

 private:
  std::ostream& os_;
  const SuiteInstance& inst_;
};

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

double mismatch(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end()) ? 0.0 : std::max(max_abs_diff(a, b), 1e-300);
}

void check_reward(Verifier& v, const SuiteInstance& inst, const NamedReward& named, std::span<const double> betas) {
  const auto& base = require_base(inst);
  const auto& config = inst.config;
  const SpecReward reward(named.spec, config);
  const auto values = exact_value(base, reward, config, inst.prompt);
  const auto& tree = values.tree();
  const std::size_t vocab = config.vocab.size();
  const State root{inst.prompt, {}};

  Check eq3{"q_equals_child_value", 0.0};
  Check bellman{"value_bellman", 1e-12};
  Check beta0{"beta_zero_identity", 0.0};
  Check full{"augment_full_matches_exact_vas", 1e-12};
  Check kfull{"topk_all_tokens_matches_full", 1e-12};
  Check k1{"top1_mean_fallback_is_base", 0.0};
  Check constant{"constant_value_is_neutral", 0.0};

  const auto vas0 = exact_vas_policy(base, reward, 0.0, config, inst.prompt);
  std::vector<PolicyTable> vas;
  for (double b : betas) vas.push_back(exact_vas_policy(base, reward, b, config, inst.prompt));

  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (tree.node(i).terminal) continue;
    const State s = tree.state(i);
    const auto dist = base.next_dist(s);
    std::vector<double> q(vocab);
    double expected = 0.0;
    for (TokenId x = 0; x < vocab; ++x) {
      q[x] = exact_q(values, s, x);
      v.observe(eq3, std::abs(q[x] - values.at(transition(s, x, config))), named.name, 0.0, s);
      expected += dist[x] * q[x];
    }
    v.observe(bellman, std::abs(expected - values.at_node(i)), named.name, 0.0, s);
    v.observe(beta0, mismatch(vas0.dist_at_node(i), dist), named.name, 0.0, s);
    v.observe(beta0, mismatch(augment_full(dist, q, 0.0), dist), named.name, 0.0, s);
    const TokenValueFn qfn = [&](TokenId x) { return q[x]; };
    const TokenValueFn cfn = [](TokenId) { return 0.25; };
    const std::vector<double> cvals(vocab, 0.25);
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      const double b = betas[bi];
      const auto f = augment_full(dist, q, b);
      v.observe(full, max_abs_diff(f, vas[bi].dist_at_node(i)), named.name, b, s);
      v.observe(kfull, max_abs_diff(augment_topk(dist, qfn, b, vocab, Fallback::mean_value).dist, f), named.name, b,
                s);
      v.observe(k1, mismatch(augment_topk(dist, qfn, b, 1, Fallback::mean_value).dist, dist), named.name, b, s);
      v.observe(constant, mismatch(augment_full(dist, cvals, b), dist), named.name, b, s);
      for (std::size_t k = 1; k <= vocab; ++k) {
        v.observe(constant, mismatch(augment_topk(dist, cfn, b, k, Fallback::mean_value).dist, dist), named.name, b,
                  s);
      }
    }
  }
  for (const auto* c : {&eq3, &bellman, &beta0, &full, &kfull, &k1, &constant}) v.pass(*c, named.name);

  Check marginal{"tilted_marginal", 1e-10};
  Check kl_identity{"tilted_kl_identity", 1e-10};
  const auto base_seqs = sequence_distribution(base, config, inst.prompt);
  for (double b : betas) {
    const auto tilted = exact_tilted_policy(base, reward, b, config, inst.prompt);
    const double log_z = log_partition(base, reward, b, config, inst.prompt);
    const auto seqs = sequence_distribution(tilted, config, inst.prompt);
    std::size_t j = 0;
    double mean_r = 0.0;
    for (const auto& sp : base_seqs) {
      const State terminal{inst.prompt, sp.generated};
      const double r = reward.score(terminal);
      const double target = sp.prob * std::exp(b * r - log_z);
      double got = 0.0;
      if (j < seqs.size() && seqs[j].generated == sp.generated) got = seqs[j++].prob;
      v.observe(marginal, std::abs(got - target), named.name, b, terminal);
      mean_r += target * r;
    }
    const double kl = policy_kl(tilted, base, config, inst.prompt);
    v.observe(kl_identity, std::abs(kl - (b * mean_r - log_z)), named.name, b, root);
  }
  v.pass(marginal, named.name);
  v.pass(kl_identity, named.name);
}

void check_composition(Verifier& v, const SuiteInstance& inst, const NamedReward& a, const NamedReward& b) {
  const auto& base = require_base(inst);
  const auto& config = inst.config;
  const double wa = 0.7;
  const double wb = -0.3;
  auto va = std::make_shared<ValueTable>(exact_value(base, SpecReward(a.spec, config), config, inst.prompt));
  auto vb = std::make_shared<ValueTable>(exact_value(base, SpecReward(b.spec, config), config, inst.prompt));
  const CompositeValue composite({{wa, va}, {wb, vb}});
  const RewardSpec combined{LinearReward{{wa, wb}, {a.spec, b.spec}}};
  const auto direct = exact_value(base, SpecReward(combined, config), config, inst.prompt);
  const std::string name = a.name + "+" + b.name;
  Check linear{"composition_linearity", 1e-12};
  for (std::size_t i = 0; i < direct.tree().size(); ++i) {
    const State s = direct.tree().state(i);
    v.observe(linear, std::abs(composite.predict(s) - direct.at_node(i)), name, 0.0, s);
  }
  v.pass(linear, name);
}

std::vector<double> positive(std::span<const double> betas) {
  std::vector<double> out;
  for (double b : betas) {
    if (b > 0.0) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ablate

json summary_dominance(const std::string& arm, const std::string& reference, double fraction) {
  return {{"arm", arm}, {"reference", reference}, {"weakly_dominated_fraction", fraction}};
}

Scorer ablation_scorer(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  if (cfg.ablate.value == "exact") return exact_scorer(inst, reward);
  const auto data = collect(cfg, inst, reward);
  auto trained = train(cfg, inst, data, cfg.estimator, cfg.train.td);
  return {trained.scorer, cfg.checksum()};
}

ValidationSet validation_set(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const std::vector<TokenSeq> prompts{inst.prompt};
  const std::size_t prefix_len = cfg.validation.prefix_len.value_or(inst.config.max_new_tokens / 2);
  return make_validation_set(require_base(inst), reward, prompts, prefix_len, inst.config, cfg.validation.entries,
                             cfg.validation.completions, cfg.seed);
}

AblationReport ablate_fallback(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const auto scorer = ablation_scorer(cfg, inst, reward);
  AblationReport report;
  for (Fallback f : {Fallback::mean_value, Fallback::base_only}) {
    DecodeParams p = cfg.decode.params;
    p.mode = DecodeMode::topk;
    p.top_k = cfg.ablate.k;
    p.fallback = f;
    validate_params(p, inst);
    report.arms.push_back({to_string(f), frontier_exact(inst.base, scorer.scorer, reward, cfg.ablate.betas,
                                                         inst.config, p, "vas_" + to_string(f), inst.prompt,
                                                         cfg.jobs)});
  }
  report.summary = summary_dominance("base_only", "mean_value",
                                     dominance_fraction(report.arms[1].points, report.arms[0].points));
  report.shared_config = {{"k", cfg.ablate.k}, {"value", cfg.ablate.value}};
  return report;
}

AblationReport ablate_lambda(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const auto data = collect(cfg, inst, reward);
  validate_params(cfg.decode.params, inst);
  AblationReport report;
  json mse = json::object();
  for (double lambda : cfg.ablate.lambdas) {
    TdConfig td = cfg.train.td;
    td.lambda = lambda;
    td.epochs = cfg.ablate.epochs;
    auto trained = train(cfg, inst, data, cfg.estimator, td);
    const std::string name = "lambda=" + fmt(lambda);
    mse[name] = trained.log.epoch_mse.back();
    report.arms.push_back({name, frontier_exact(inst.base, trained.scorer, reward, cfg.ablate.betas, inst.config,
                                                cfg.decode.params, "vas_learned", inst.prompt, cfg.jobs)});
  }
  report.summary = summary_dominance(report.arms.front().name, report.arms.back().name,
                                     dominance_fraction(report.arms.front().points, report.arms.back().points));
  report.summary["final_train_mse"] = mse;
  report.shared_config = {{"epochs", cfg.ablate.epochs},
                          {"n_trajectories", cfg.train.n_trajectories},
                          {"temperature", cfg.train.temperature},
                          {"estimator", cfg.estimator.kind}};
  return report;
}

AblationReport ablate_k(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const auto scorer = ablation_scorer(cfg, inst, reward);
  std::vector<std::size_t> grid = cfg.ablate.k_grid;
  if (grid.empty()) {
    grid.resize(inst.config.vocab.size());
    std::iota(grid.begin(), grid.end(), std::size_t{1});
  }
  for (std::size_t k : grid) {
    if (k < 1 || k > inst.config.vocab.size()) throw ConfigError("ablate.k_grid entries must lie in [1, vocab size]");
  }
  const auto rows = varying_k_report(inst.base, scorer.scorer, reward, cfg.ablate.beta, grid, inst.config,
                                     cfg.decode.params.fallback, inst.prompt);
  AblationReport report;
  json table = json::array();
  for (const auto& row : rows) {
    report.arms.push_back({"k=" + std::to_string(row.k), {row.point}});
    table.push_back({{"k", row.k},
                     {"mean_tv", row.mean_tv},
                     {"max_tv", row.max_tv},
                     {"reward", row.point.reward},
                     {"kl", row.point.kl}});
  }
  report.summary = {{"beta", cfg.ablate.beta}, {"k", table}};
  report.shared_config = {{"fallback", to_string(cfg.decode.params.fallback)}, {"value", cfg.ablate.value}};
  return report;
}

AblationReport ablate_dataset_size(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const auto valset = validation_set(cfg, inst, reward);
  AccuracyStudy study;
  study.dataset_sizes = cfg.ablate.sizes;
  study.seeds = cfg.ablate.seeds;
  study.beta = cfg.ablate.beta;
  study.collect_temperature = cfg.train.temperature;
  study.td = cfg.train.td;
  study.decode = cfg.decode.params;
  study.prompt = inst.prompt;
  validate_params(study.decode, inst);
  const auto result = accuracy_vs_performance(
      inst.base, reward, valset, study, inst.config,
      [&] { return make_estimator(cfg.estimator, inst.config, cfg.seed); }, cfg.jobs);
  AblationReport report;
  report.seeds = cfg.ablate.seeds;
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"dataset_size", r.dataset_size},
                    {"seed", r.seed},
                    {"validation_mse", r.validation_mse},
                    {"reward", r.reward}});
  }
  report.summary = {{"beta", cfg.ablate.beta}, {"rows", rows}, {"spearman_rho", result.spearman_rho}};
  report.shared_config = {{"validation_entries", valset.entries.size()},
                          {"validation_completions", valset.completions},
                          {"estimator", cfg.estimator.kind}};
  return report;
}

AblationReport ablate_capacity(const RunConfig& cfg, const SuiteInstance& inst, const RewardFn& reward) {
  const auto data = collect(cfg, inst, reward);
  const auto valset = validation_set(cfg, inst, reward);
  validate_params(cfg.decode.params, inst);
  const bool lr_given = cfg.raw().contains("td") && cfg.raw().at("td").contains("learning_rate");
  AblationReport report;
  json mse = json::object();
  for (const auto& kind : cfg.ablate.capacities) {
    EstimatorConfig est = cfg.estimator;
    est.kind = kind;
    TdConfig td = cfg.train.td;
    if (!lr_given) td.learning_rate = kind == "tabular" ? 1.0 : 0.1;
    auto trained = train(cfg, inst, data, est, td);
    mse[kind] = validation_mse(*trained.value, valset);
    report.arms.push_back({kind, frontier_exact(inst.base, trained.scorer, reward, cfg.ablate.betas, inst.config,
                                                cfg.decode.params, "vas_learned", inst.prompt, cfg.jobs)});
  }
  report.summary = {{"validation_mse", mse}};
  report.shared_config = {{"n_trajectories", cfg.train.n_trajectories}, {"epochs", cfg.train.td.epochs}};
  return report;
}

}  // namespace

void cmd_train_value(const RunConfig& cfg, std::ostream& os) {
  const auto& inst = cfg.instance();
  const auto reward = cfg.reward();
  require_base(inst);
  ensure_out_dir(cfg);

  const auto data = collect(cfg, inst, *reward);
  auto trained = train(cfg, inst, data, cfg.estimator, cfg.train.td);
  trained.checkpoint["config_checksum"] = cfg.checksum();
  write_json_file(cfg.out / "checkpoint.json", trained.checkpoint);

  std::ostringstream dataset;
  dataset << cfg.header() << "\n";
  write_jsonl(dataset, data.trajectories);
  write_text(cfg.out / "dataset.jsonl", dataset.str());

  std::ostringstream log;
  log << cfg.header() << "\nepoch,mse\n" << std::setprecision(17);
  for (std::size_t e = 0; e < trained.log.epoch_mse.size(); ++e) log << e << "," << trained.log.epoch_mse[e] << "\n";
  write_text(cfg.out / "training_log.csv", log.str());

  os << cfg.header() << "\n"
     << "trained " << cfg.estimator.kind << " estimator on " << data.size() << " trajectories, "
     << trained.log.epoch_mse.size() << " epochs, final mse " << fmt(trained.log.epoch_mse.back(), 6) << "\n"
     << "wrote " << (cfg.out / "checkpoint.json").string() << "\n";
}

void cmd_decode(const RunConfig& cfg, std::ostream& os) {
  const auto& inst = cfg.instance();
  const auto reward = cfg.reward();
  const auto& base = require_base(inst);
  const auto& params = cfg.decode.params;
  validate_params(params, inst);
  const Scorer scorer = cfg.decode.value == "exact" ? exact_scorer(inst, *reward)
                                                    : checkpoint_scorer(checkpoint_path(cfg, cfg.decode.checkpoint));
  ensure_out_dir(cfg);

  std::vector<DecodeResult> results;
  std::vector<DecodeParams> used;
  for (std::size_t i = 0; i < cfg.decode.n; ++i) {
    DecodeParams p = params;
    p.seed = derive_seed(cfg.seed, "decode", i);
    results.push_back(decode_sequence(base, *scorer.scorer, *reward, inst.prompt, inst.config, p));
    used.push_back(p);
  }

  if (params.mode == DecodeMode::blackbox_rerank) {
    const TopLogprobView view(inst.base, params.provider_cap);
    for (const auto& r : results) {
      for (std::size_t t = 0; t < r.trajectory.tokens.size(); ++t) {
        const auto visible = view.top_logprobs(r.trajectory.states[t], params.top_k);
        const TokenId chosen = r.trajectory.tokens[t];
        const bool ok = std::any_of(visible.begin(), visible.end(), [&](const auto& c) { return c.first == chosen; });
        if (!ok) {
          os << "FAIL blackbox_containment state=" << render(inst, r.trajectory.states[t])
             << " token=" << inst.config.vocab.label(chosen) << "\n";
          throw VerificationFailure("chosen token outside the provider's visible top-" +
                                    std::to_string(params.top_k));
        }
      }
    }
  }

  std::ostringstream seqs;
  std::ostringstream steps;
  seqs << cfg.header() << "\n";
  steps << cfg.header() << "\n";
  double total = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    seqs << decode_result_to_json(results[i], used[i], scorer.checksum).dump() << "\n";
    for (std::size_t t = 0; t < results[i].steps.size(); ++t) {
      json step = augmented_step_to_json(results[i].steps[t]);
      step["sequence"] = i;
      step["t"] = t;
      steps << step.dump() << "\n";
    }
    total += results[i].trajectory.reward;
  }
  write_text(cfg.out / "decode.jsonl", seqs.str());
  write_text(cfg.out / "decode_steps.jsonl", steps.str());

  os << cfg.header() << "\n"
     << "decoded " << results.size() << " sequences (mode " << to_string(params.mode) << ", beta "
     << fmt(params.beta) << ", k " << params.top_k << "), mean reward "
     << fmt(results.empty() ? 0.0 : total / static_cast<double>(results.size()), 6) << "\n";
  if (params.mode == DecodeMode::blackbox_rerank) os << "PASS blackbox_containment\n";
}

void cmd_frontier(const RunConfig& cfg, std::ostream& os) {
  const auto& inst = cfg.instance();
  const auto reward = cfg.reward();
  const auto& base = require_base(inst);
  const auto& fc = cfg.frontier;
  const auto& params = cfg.decode.params;
  validate_params(params, inst);
  const bool exact = fc.estimation != "monte_carlo";
  const bool mc = fc.estimation != "exact";

  std::vector<FrontierPoint> points;
  auto append = [&](std::vector<FrontierPoint> more) { points.insert(points.end(), more.begin(), more.end()); };
  const std::vector<double> zero{0.0};
  for (const auto& method : fc.methods) {
    if (method == "base") {
      if (exact) {
        FrontierPoint p;
        p.method = "base";
        p.reward = policy_expected_reward(base, *reward, inst.config, inst.prompt);
        append({p});
      }
      if (mc) {
        const StateValueScorer zero_scorer(std::make_shared<ZeroValue>());
        append(frontier_mc(base, zero_scorer, *reward, zero, fc.n_samples, cfg.seed, params, inst.config, "base",
                           inst.prompt, cfg.jobs));
      }
    } else if (method == "vas_exact" || method == "vas_learned") {
      const Scorer s = method == "vas_exact" ? exact_scorer(inst, *reward)
                                             : checkpoint_scorer(checkpoint_path(cfg, fc.checkpoint));
      if (exact) {
        append(frontier_exact(inst.base, s.scorer, *reward, fc.betas, inst.config, params, method, inst.prompt,
                              cfg.jobs));
      }
      if (mc) {
        append(frontier_mc(base, *s.scorer, *reward, fc.betas, fc.n_samples, cfg.seed, params, inst.config, method,
                           inst.prompt, cfg.jobs));
      }
    } else if (method == "tilted_oracle") {
      append(frontier_tilted(base, *reward, fc.betas, inst.config, inst.prompt, cfg.jobs));
    } else if (method == "bon") {
      append(frontier_bon_exact(base, *reward, fc.bon_n, inst.config, inst.prompt));
    }
  }

  ensure_out_dir(cfg);
  std::ostringstream csv;
  write_frontier_csv(csv, points, cfg.checksum());
  write_text(cfg.out / "frontier.csv", csv.str());
  os << csv.str();
}

void cmd_ablate(const RunConfig& cfg, std::ostream& os) {
  const auto& inst = cfg.instance();
  const auto reward = cfg.reward();
  require_base(inst);
  const auto& factor = cfg.ablate.factor;
  AblationReport report;
  if (factor == "fallback") {
    report = ablate_fallback(cfg, inst, *reward);
  } else if (factor == "lambda") {
    report = ablate_lambda(cfg, inst, *reward);
  } else if (factor == "k") {
    report = ablate_k(cfg, inst, *reward);
  } else if (factor == "dataset_size") {
    report = ablate_dataset_size(cfg, inst, *reward);
  } else {
    report = ablate_capacity(cfg, inst, *reward);
  }
  report.factor = factor;
  if (report.beta_grid.empty()) {
    report.beta_grid = factor == "k" || factor == "dataset_size" ? std::vector<double>{cfg.ablate.beta}
                                                                 : cfg.ablate.betas;
  }
  if (report.seeds.empty()) report.seeds = {cfg.seed};
  report.shared_config["instance"] = inst.name;
  report.shared_config["reward"] = describe(cfg.reward_spec(), inst.config.vocab);
  report.shared_config["kl_estimator"] = "exact sequence-level KL by enumeration";

  ensure_out_dir(cfg);
  const auto path = cfg.out / ("ablation_" + factor + ".json");
  write_json_file(path, report.to_json(cfg.checksum()));
  os << cfg.header() << "\n" << report.summary.dump(2) << "\nwrote " << path.string() << "\n";
}

void cmd_bench_cost(const RunConfig& cfg, std::ostream& os) {
  CostModel model = cfg.cost;
  const bool per_t2 = !model.T;
  if (per_t2) model.T = 1.0;
  os << cfg.header() << "\n";
  if (per_t2) os << "# T not set: costs are per T^2\n";
  std::optional<double> costs[3];
  std::size_t computed = 0;
  const CostMethod methods[] = {CostMethod::policy_only, CostMethod::bon, CostMethod::vas};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      costs[i] = cost_flops(model, methods[i]);
      os << to_string(methods[i]) << ": " << fmt(*costs[i]) << "\n";
      ++computed;
    } catch (const MissingFieldError& e) {
      os << to_string(methods[i]) << ": n/a (" << e.what() << ")\n";
    } catch (const InvalidArgumentError& e) {
      throw ConfigError(std::string("cost: ") + e.what());
    }
  }
  if (computed == 0) throw ConfigError("cost: no method computable; set cost.m, cost.n, cost.k, cost.N");
  if (costs[1] && costs[2]) {
    std::ostringstream ratio;
    ratio << std::fixed << std::setprecision(2) << *costs[1] / *costs[2];
    os << "ratio bon/vas: " << ratio.str() << "\n";
  }
  if (model.m && model.n && model.k) {
    os << "bon N at matched compute: " << fmt((*model.m + *model.k * *model.n) / (*model.n + *model.m)) << "\n";
  }
}

void cmd_oracle_check(const RunConfig& cfg, std::ostream& os) {
  const auto& inst = cfg.instance();
  require_base(inst);
  const auto rewards = cfg.all_rewards();
  const auto betas = positive(cfg.frontier.betas);
  os << cfg.header() << "\n";
  Verifier verifier(os, inst);
  for (const auto& r : rewards) check_reward(verifier, inst, r, betas);
  const auto& pool = inst.rewards.size() >= 2 ? inst.rewards : rewards;
  if (pool.size() >= 2) check_composition(verifier, inst, pool[0], pool[1]);
  os << "all identities hold on " << inst.name << " (" << rewards.size() << " rewards)\n";
}

void cmd_compose(const RunConfig& cfg, std::ostream& os) {
  const auto& cc = cfg.compose;
  if (cc.checkpoints.empty()) throw ConfigError("missing required field 'compose.checkpoints'");
  if (cc.weights.size() != cc.checkpoints.size()) {
    throw ConfigError("compose.weights has " + std::to_string(cc.weights.size()) + " entries but compose.checkpoints has " +
                      std::to_string(cc.checkpoints.size()));
  }
  json components = json::array();
  std::vector<std::shared_ptr<const ValueFunction>> values;
  for (std::size_t i = 0; i < cc.checkpoints.size(); ++i) {
    const json j = read_json_file(cc.checkpoints[i]);
    values.push_back(value_function_from_checkpoint(j));
    components.push_back({{"weight", cc.weights[i]}, {"checkpoint", j}});
  }
  try {
    compose(cc.weights, values);
  } catch (const NonFiniteError& e) {
    throw ConfigError(std::string("compose: ") + e.what());
  }
  json out = {{"format_version", kCheckpointFormatVersion},
              {"kind", "composite"},
              {"hyperparams", json::object()},
              {"parameters", {{"components", components}}},
              {"config_checksum", cfg.checksum()}};
  ensure_out_dir(cfg);
  const auto path = cfg.out / "composite.json";
  write_json_file(path, out);
  os << cfg.header() << "\nwrote " << path.string() << " (" << values.size() << " components)\n";
}

}  // namespace vas::cli
