#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "doctest.h"
#include "vasamp/errors.hpp"

using namespace vas;
using namespace vas::cli;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

const char* kMinimal = R"(config_version = 1
[instance]
suite = "tiny_ab"
[reward]
name = "pattern_ab"
)";

}  // namespace

TEST_CASE("minimal config loads with defaults") {
  const RunConfig cfg(load_config_json(write_temp("vasamp_min.toml", kMinimal), {}));
  CHECK(cfg.seed == 0);
  CHECK(cfg.jobs == 1);
  CHECK(cfg.instance().name == "tiny_ab");
  CHECK(cfg.reward()->score(State{{}, {0, 1}}) == 1.0);
  CHECK(cfg.train.td.lambda == 0.95);
  CHECK(cfg.header().rfind("# config_checksum: ", 0) == 0);
}

TEST_CASE("unknown keys and bad versions are rejected") {
  const auto unknown = write_temp("vasamp_unknown.toml", std::string(kMinimal) + "[td]\nlambdaa = 0.5\n");
  CHECK_THROWS_WITH_AS(RunConfig(load_config_json(unknown, {})), doctest::Contains("td.lambdaa"), ConfigError);
  const auto top = write_temp("vasamp_top.toml", std::string(kMinimal) + "[bogus]\nx = 1\n");
  CHECK_THROWS_AS(RunConfig(load_config_json(top, {})), ConfigError);
  const auto version = write_temp("vasamp_version.toml", "config_version = 9\n");
  CHECK_THROWS_AS(RunConfig(load_config_json(version, {})), ConfigError);
  const auto missing = write_temp("vasamp_noversion.toml", "seed = 1\n");
  CHECK_THROWS_AS(RunConfig(load_config_json(missing, {})), ConfigError);
  CHECK_THROWS_AS(load_config_json("/nonexistent/vasamp.toml", {}), ConfigError);
  const auto syntax = write_temp("vasamp_syntax.toml", "config_version = = 1\n");
  CHECK_THROWS_AS(load_config_json(syntax, {}), ConfigError);
}

TEST_CASE("overrides apply and feed the checksum") {
  const auto path = write_temp("vasamp_over.toml", kMinimal);
  const RunConfig base(load_config_json(path, {}));
  Overrides o;
  o.seed = 17;
  o.set = {"td.lambda=0.5", "decode.mode=topk", "decode.top_k=2"};
  const RunConfig cfg(load_config_json(path, o));
  CHECK(cfg.seed == 17);
  CHECK(cfg.train.td.lambda == 0.5);
  CHECK(cfg.decode.params.mode == DecodeMode::topk);
  CHECK(cfg.checksum() != base.checksum());

  Overrides out_only;
  out_only.out = "elsewhere";
  out_only.jobs = 8;
  const RunConfig moved(load_config_json(path, out_only));
  CHECK(moved.checksum() == base.checksum());
  CHECK(moved.jobs == 8);

  Overrides bad;
  bad.set = {"td.nope=1"};
  CHECK_THROWS_AS(RunConfig(load_config_json(path, bad)), ConfigError);
  bad.set = {"novalue"};
  CHECK_THROWS_AS(load_config_json(path, bad), ConfigError);
}

TEST_CASE("semantic validation") {
  const auto path = write_temp("vasamp_sem.toml", kMinimal);
  auto with = [&](std::vector<std::string> set) {
    Overrides o;
    o.set = std::move(set);
    return RunConfig(load_config_json(path, o));
  };
  CHECK_THROWS_AS(with({"td.epochs=0"}), ConfigError);
  CHECK_THROWS_AS(with({"td.lambda=1.5"}), ConfigError);
  CHECK_THROWS_AS(with({"decode.mode=\"sideways\""}), ConfigError);
  CHECK_THROWS_AS(with({"frontier.betas=[-1.0]"}), ConfigError);
  CHECK_THROWS_AS(with({"reward.name=\"missing\""}).reward(), ConfigError);
}

TEST_CASE("custom instance from labels and an explicit policy") {
  const auto path = write_temp("vasamp_custom.toml", R"(config_version = 1
[instance]
labels = ["x", "y", "<eos>"]
eos = "<eos>"
max_new_tokens = 3
prompt = ["x"]
[policy]
kind = "uniform"
[reward]
kind = "pattern"
tokens = ["y", "y"]
)");
  const RunConfig cfg(load_config_json(path, {}));
  const auto& inst = cfg.instance();
  CHECK(inst.config.vocab.size() == 3);
  CHECK(inst.prompt == TokenSeq{0});
  CHECK(cfg.reward()->score(State{{0}, {1, 1, 2}}) == 1.0);
  const auto est = make_estimator(cfg.estimator, inst.config, 1);
  CHECK(est->kind() == "tabular");
}
