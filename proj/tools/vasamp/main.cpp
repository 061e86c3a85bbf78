#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "vasamp/errors.hpp"

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kMissingArtifact = 4, kVerification = 5 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("vasamp");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("VASAMP_LOG")) {
    const std::string level(env);
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") {
      spdlog::warn("VASAMP_LOG='{}' is not a log level; using warn", level);
    } else {
      spdlog::set_level(parsed);
    }
  }
}

std::string toml_string(const std::string& s) { return nlohmann::json(s).dump(); }

template <typename T>
std::string toml_list(const std::vector<T>& values, const std::function<std::string(const T&)>& item) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + item(values[i]);
  return out + "]";
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Value augmented sampling workbench: train value estimators, decode, and evaluate.", "vasamp"};
  app.set_version_flag("--version", "vasamp 0.1.0");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  vas::cli::Overrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 1;
  app.add_option("-c,--config", config_path, "TOML run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides the config)");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for independent cells")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides.set, "Override a config value: section.key=value (repeatable)");

  auto* train = app.add_subcommand("train-value", "Collect base-policy rollouts and fit a value estimator by TD(lambda)");
  auto* decode = app.add_subcommand("decode", "Decode sequences with the value-augmented sampler");
  auto* frontier = app.add_subcommand("frontier", "Compute reward/KL frontiers for the configured methods");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation study and write a JSON report");
  auto* bench = app.add_subcommand("bench-cost", "Evaluate the inference cost model");
  auto* oracle = app.add_subcommand("oracle-check", "Verify the exact-oracle identities by enumeration");
  auto* compose = app.add_subcommand("compose", "Combine value checkpoints linearly into a composite checkpoint");

  std::optional<double> beta;
  std::optional<std::size_t> k;
  std::optional<std::string> mode;
  std::optional<std::size_t> n;
  std::optional<std::string> decode_checkpoint;
  decode->add_option("--beta", beta, "Tilt strength");
  decode->add_option("--k", k, "Number of candidate tokens (top-k and blackbox modes)");
  decode->add_option("--mode", mode, "full | topk | blackbox_rerank");
  decode->add_option("--n", n, "Number of sequences");
  decode->add_option("--checkpoint", decode_checkpoint, "Value checkpoint (default <out>/checkpoint.json)");

  std::optional<std::string> estimation;
  std::optional<std::string> frontier_checkpoint;
  frontier->add_option("--estimation", estimation, "exact | monte_carlo | both");
  frontier->add_option("--checkpoint", frontier_checkpoint, "Checkpoint for vas_learned");

  std::optional<std::string> factor;
  ablate->add_option("--factor", factor, "fallback | lambda | k | dataset_size | capacity");

  std::optional<double> cost_m, cost_n, cost_T, cost_k, cost_N;
  bench->add_option("--m", cost_m, "Base-model FLOPS per token");
  bench->add_option("--n", cost_n, "Value-model FLOPS per token");
  bench->add_option("--T", cost_T, "Response length");
  bench->add_option("--k", cost_k, "Evaluated candidates per step");
  bench->add_option("--N", cost_N, "Best-of-N samples");

  std::vector<double> weights;
  std::vector<std::string> checkpoints;
  compose->add_option("--weights", weights, "Component weights")->delimiter(',');
  compose->add_option("--checkpoints", checkpoints, "Component checkpoint files")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*seed_opt) overrides.seed = seed;
  if (*out_opt) overrides.out = out;
  if (*jobs_opt) overrides.jobs = jobs;
  auto set = [&](const std::string& key, const std::string& value) { overrides.set.push_back(key + "=" + value); };
  auto num = [](double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    const auto s = os.str();
    return s.find_first_of(".eEn") == std::string::npos ? s + ".0" : s;
  };
  if (beta) set("decode.beta", num(*beta));
  if (k) set("decode.top_k", std::to_string(*k));
  if (mode) set("decode.mode", toml_string(*mode));
  if (n) set("decode.n", std::to_string(*n));
  if (decode_checkpoint) set("decode.checkpoint", toml_string(*decode_checkpoint));
  if (estimation) set("frontier.estimation", toml_string(*estimation));
  if (frontier_checkpoint) set("frontier.checkpoint", toml_string(*frontier_checkpoint));
  if (factor) set("ablate.factor", toml_string(*factor));
  for (auto [key, value] : {std::pair{"cost.m", &cost_m}, std::pair{"cost.n", &cost_n}, std::pair{"cost.T", &cost_T},
                            std::pair{"cost.k", &cost_k}, std::pair{"cost.N", &cost_N}}) {
    if (*value) set(key, num(**value));
  }
  if (!weights.empty()) set("compose.weights", toml_list<double>(weights, num));
  if (!checkpoints.empty()) set("compose.checkpoints", toml_list<std::string>(checkpoints, toml_string));

  try {
    const vas::cli::RunConfig config(vas::cli::load_config_json(config_path, overrides));
    if (*train) vas::cli::cmd_train_value(config, std::cout);
    if (*decode) vas::cli::cmd_decode(config, std::cout);
    if (*frontier) vas::cli::cmd_frontier(config, std::cout);
    if (*ablate) vas::cli::cmd_ablate(config, std::cout);
    if (*bench) vas::cli::cmd_bench_cost(config, std::cout);
    if (*oracle) vas::cli::cmd_oracle_check(config, std::cout);
    if (*compose) vas::cli::cmd_compose(config, std::cout);
    return kOk;
  } catch (const vas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const vas::StateSpaceTooLargeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const vas::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kConfig;
  } catch (const vas::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const vas::NonFiniteGradientError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const vas::MissingArtifactError& e) {
    std::cerr << e.what() << "\n";
    return kMissingArtifact;
  } catch (const vas::cli::VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
