#include "config.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "toml.hpp"
#include "vasamp/errors.hpp"
#include "vasamp/serialize.hpp"

namespace vas::cli {
namespace {

using json = nlohmann::json;

json toml_to_json(const toml::node& node, const std::string& where) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) {
      const std::string key(k.str());
      out[key] = toml_to_json(v, where.empty() ? key : where + "." + key);
    }
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v, where));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* d = node.as_floating_point()) return d->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ConfigError(where + ": dates and times are not supported");
}

json parse_toml_value(const std::string& text) {
  try {
    const auto doc = toml::parse("v = " + text);
    return toml_to_json(*doc.get("v"), "v");
  } catch (const toml::parse_error&) {
    return text;
  }
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"instance", {"suite", "labels", "eos", "max_new_tokens", "prompt"}},
      {"policy", {"kind", "token", "probs", "alpha", "corpus"}},
      {"reward", {"name", "kind", "tokens", "scale", "weights", "terms"}},
      {"td",
       {"lambda", "gamma", "learning_rate", "epochs", "batch_size", "n_trajectories", "temperature",
        "train_terminal_states"}},
      {"estimator", {"kind", "order", "hidden", "init_scale", "bootstrap", "parameterization", "center_advantage"}},
      {"decode",
       {"beta", "top_k", "fallback", "temperature", "mode", "greedy", "blackbox_sample", "provider_cap", "n",
        "value", "checkpoint"}},
      {"frontier", {"betas", "methods", "estimation", "n_samples", "bon_n", "checkpoint"}},
      {"ablate", {"factor", "beta", "betas", "k", "lambdas", "epochs", "k_grid", "value", "sizes", "seeds", "capacities"}},
      {"cost", {"m", "n", "T", "k", "N"}},
      {"validation", {"prefix_len", "entries", "completions"}},
      {"compose", {"weights", "checkpoints"}},
  };
  return s;
}

const std::set<std::string> kTopLevel = {"config_version", "experiment", "seed", "out", "jobs"};

void check_schema(const json& raw) {
  if (!raw.is_object()) throw ConfigError("config must be a table");
  for (const auto& [key, value] : raw.items()) {
    if (kTopLevel.count(key)) continue;
    auto it = schema().find(key);
    if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
    if (!value.is_object()) throw ConfigError("'" + key + "' must be a table");
    for (const auto& [sub, _] : value.items()) {
      if (!it->second.count(sub)) throw ConfigError("unknown config key '" + key + "." + sub + "'");
    }
  }
}

const json& section(const json& raw, const char* name) {
  static const json empty = json::object();
  auto it = raw.find(name);
  return it == raw.end() ? empty : *it;
}

template <typename T>
T get(const json& sec, const std::string& where, const char* key, T fallback) {
  auto it = sec.find(key);
  if (it == sec.end()) return fallback;
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (it->is_number_integer() && it->template get<long long>() < 0) {
        throw ConfigError(where + "." + key + " must be >= 0");
      }
      if (!it->is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError(where + "." + key + " must be a number");
    }
    if constexpr (std::is_same_v<T, std::vector<std::size_t>> || std::is_same_v<T, std::vector<std::uint64_t>>) {
      for (const auto& e : *it) {
        if (!e.is_number_integer() || e.template get<long long>() < 0) {
          throw ConfigError(where + "." + key + " must be a list of non-negative integers");
        }
      }
    }
    return it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string one_of(const std::string& value, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (value == a) return value;
  }
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
  throw ConfigError(where + " must be one of " + list + " (got '" + value + "')");
}

template <typename F>
auto as_config_error(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void set_path(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("--set: '" + parts[i] + "' is not a table");
    node = &next;
  }
  (*node)[parts.back()] = parse_toml_value(assignment.substr(eq + 1));
}

}  // namespace

json load_config_json(const std::string& path, const Overrides& overrides) {
  json raw = json::object();
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
    try {
      raw = toml_to_json(toml::parse_file(path), "");
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << "cannot parse " << path << ": " << e.description() << " (line " << e.source().begin.line << ")";
      throw ConfigError(os.str());
    }
  } else {
    raw["config_version"] = kConfigVersion;
  }
  for (const auto& s : overrides.set) set_path(raw, s);
  if (overrides.seed) raw["seed"] = *overrides.seed;
  if (overrides.out) raw["out"] = *overrides.out;
  if (overrides.jobs) raw["jobs"] = *overrides.jobs;
  return raw;
}

RunConfig::RunConfig(json raw) : raw_(std::move(raw)) {
  check_schema(raw_);
  if (!raw_.contains("config_version")) throw ConfigError("missing required field 'config_version'");
  if (raw_.at("config_version") != kConfigVersion) {
    throw ConfigError("unsupported config_version " + raw_.at("config_version").dump() + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  json hashed = raw_;
  hashed.erase("out");
  hashed.erase("jobs");
  checksum_ = checksum_hex(hashed.dump());

  experiment = get<std::string>(raw_, "config", "experiment", "vasamp");
  seed = get<std::uint64_t>(raw_, "config", "seed", 0);
  out = get<std::string>(raw_, "config", "out", "out");
  jobs = get<std::size_t>(raw_, "config", "jobs", 1);
  if (jobs < 1) throw ConfigError("jobs must be >= 1");

  const auto& td = section(raw_, "td");
  train.td.lambda = get<double>(td, "td", "lambda", train.td.lambda);
  train.td.gamma = get<double>(td, "td", "gamma", train.td.gamma);
  train.td.epochs = get<std::size_t>(td, "td", "epochs", train.td.epochs);
  train.td.batch_size = get<std::size_t>(td, "td", "batch_size", train.td.batch_size);
  train.td.train_terminal_states = get<bool>(td, "td", "train_terminal_states", true);
  train.n_trajectories = get<std::size_t>(td, "td", "n_trajectories", train.n_trajectories);
  train.temperature = get<double>(td, "td", "temperature", train.temperature);
  train.td.seed = derive_seed(seed, "train");

  const auto& est = section(raw_, "estimator");
  estimator.kind =
      one_of(get<std::string>(est, "estimator", "kind", "tabular"), "estimator.kind",
             {"tabular", "linear", "mlp", "tabular_q"});
  estimator.order = get<std::size_t>(est, "estimator", "order", estimator.order);
  estimator.hidden = get<std::vector<std::size_t>>(est, "estimator", "hidden", estimator.hidden);
  estimator.init_scale = get<double>(est, "estimator", "init_scale", estimator.init_scale);
  estimator.center_advantage = get<bool>(est, "estimator", "center_advantage", false);
  as_config_error("estimator", [&] {
    estimator.bootstrap = bootstrap_mode_from_string(get<std::string>(est, "estimator", "bootstrap", "sampled"));
    estimator.parameterization =
        q_parameterization_from_string(get<std::string>(est, "estimator", "parameterization", "flat"));
    return 0;
  });

  // Gradient-trained estimators take smaller steps than the averaging table.
  const double default_lr = estimator.kind == "linear" || estimator.kind == "mlp" ? 0.1 : 1.0;
  train.td.learning_rate = get<double>(td, "td", "learning_rate", default_lr);
  as_config_error("td", [&] {
    train.td.validate();
    if (!(train.temperature > 0.0)) throw InvalidArgumentError("temperature must be > 0");
    return 0;
  });

  const auto& dec = section(raw_, "decode");
  auto& p = decode.params;
  p.beta = get<double>(dec, "decode", "beta", p.beta);
  p.top_k = get<std::size_t>(dec, "decode", "top_k", p.top_k);
  p.temperature = get<double>(dec, "decode", "temperature", p.temperature);
  p.greedy = get<bool>(dec, "decode", "greedy", p.greedy);
  p.blackbox_sample = get<bool>(dec, "decode", "blackbox_sample", p.blackbox_sample);
  p.provider_cap = get<std::size_t>(dec, "decode", "provider_cap", p.provider_cap);
  p.seed = derive_seed(seed, "decode");
  as_config_error("decode", [&] {
    p.fallback = fallback_from_string(get<std::string>(dec, "decode", "fallback", "mean_value"));
    p.mode = decode_mode_from_string(get<std::string>(dec, "decode", "mode", "full"));
    return 0;
  });
  decode.n = get<std::size_t>(dec, "decode", "n", decode.n);
  decode.value = one_of(get<std::string>(dec, "decode", "value", decode.value), "decode.value", {"checkpoint", "exact"});
  if (dec.contains("checkpoint")) decode.checkpoint = get<std::string>(dec, "decode", "checkpoint", "");
  as_config_error("decode", [&] {
    if (!(p.beta >= 0.0)) throw InvalidArgumentError("beta must be >= 0");
    if (!(p.temperature > 0.0)) throw InvalidArgumentError("temperature must be > 0");
    if (p.top_k < 1) throw InvalidArgumentError("top_k must be >= 1");
    return 0;
  });

  const auto& fr = section(raw_, "frontier");
  frontier.betas = get<std::vector<double>>(fr, "frontier", "betas", frontier.betas);
  frontier.methods = get<std::vector<std::string>>(fr, "frontier", "methods", frontier.methods);
  for (const auto& m : frontier.methods) {
    one_of(m, "frontier.methods", {"base", "vas_exact", "vas_learned", "tilted_oracle", "bon"});
  }
  frontier.estimation = one_of(get<std::string>(fr, "frontier", "estimation", frontier.estimation),
                               "frontier.estimation", {"exact", "monte_carlo", "both"});
  frontier.n_samples = get<std::size_t>(fr, "frontier", "n_samples", frontier.n_samples);
  frontier.bon_n = get<std::vector<std::size_t>>(fr, "frontier", "bon_n", frontier.bon_n);
  if (fr.contains("checkpoint")) frontier.checkpoint = get<std::string>(fr, "frontier", "checkpoint", "");
  for (double b : frontier.betas) {
    if (!(b >= 0.0)) throw ConfigError("frontier.betas must be >= 0");
  }
  if (frontier.n_samples < 1) throw ConfigError("frontier.n_samples must be >= 1");

  const auto& ab = section(raw_, "ablate");
  ablate.factor = one_of(get<std::string>(ab, "ablate", "factor", ablate.factor), "ablate.factor",
                         {"fallback", "lambda", "k", "dataset_size", "capacity"});
  ablate.beta = get<double>(ab, "ablate", "beta", ablate.beta);
  ablate.betas = get<std::vector<double>>(ab, "ablate", "betas", ablate.betas);
  ablate.k = get<std::size_t>(ab, "ablate", "k", ablate.k);
  ablate.lambdas = get<std::vector<double>>(ab, "ablate", "lambdas", ablate.lambdas);
  ablate.epochs = get<std::size_t>(ab, "ablate", "epochs", ablate.epochs);
  ablate.k_grid = get<std::vector<std::size_t>>(ab, "ablate", "k_grid", ablate.k_grid);
  ablate.value = one_of(get<std::string>(ab, "ablate", "value", ablate.value), "ablate.value", {"exact", "learned"});
  ablate.sizes = get<std::vector<std::size_t>>(ab, "ablate", "sizes", ablate.sizes);
  ablate.seeds = get<std::vector<std::uint64_t>>(ab, "ablate", "seeds", ablate.seeds);
  ablate.capacities = get<std::vector<std::string>>(ab, "ablate", "capacities", ablate.capacities);
  for (const auto& c : ablate.capacities) one_of(c, "ablate.capacities", {"tabular", "linear", "mlp"});
  if (ablate.lambdas.size() < 2) throw ConfigError("ablate.lambdas needs at least two arms");
  if (ablate.epochs < 1) throw ConfigError("ablate.epochs must be >= 1");

  const auto& co = section(raw_, "cost");
  for (auto [key, field] : {std::pair{"m", &cost.m}, std::pair{"n", &cost.n}, std::pair{"T", &cost.T},
                            std::pair{"k", &cost.k}, std::pair{"N", &cost.N}}) {
    if (co.contains(key)) *field = get<double>(co, "cost", key, 0.0);
  }

  const auto& va = section(raw_, "validation");
  if (va.contains("prefix_len")) validation.prefix_len = get<std::size_t>(va, "validation", "prefix_len", 0);
  validation.entries = get<std::size_t>(va, "validation", "entries", validation.entries);
  validation.completions = get<std::size_t>(va, "validation", "completions", validation.completions);
  if (validation.completions < 1) throw ConfigError("validation.completions must be >= 1");

  const auto& cm = section(raw_, "compose");
  compose.weights = get<std::vector<double>>(cm, "compose", "weights", {});
  compose.checkpoints = get<std::vector<std::string>>(cm, "compose", "checkpoints", {});
}

const SuiteInstance& RunConfig::instance() const {
  if (instance_) return *instance_;
  if (!raw_.contains("instance")) throw ConfigError("missing required field 'instance'");
  const auto& in = raw_.at("instance");
  instance_ = as_config_error("instance", [&]() -> SuiteInstance {
    auto build = [&]() -> SuiteInstance {
      if (in.contains("suite")) {
        if (in.contains("labels") || in.contains("eos")) {
          throw ConfigError("instance: give either 'suite' or 'labels', not both");
        }
        auto inst = suite_instance(get<std::string>(in, "instance", "suite", ""));
        if (in.contains("max_new_tokens")) {
          inst.config.max_new_tokens = get<std::size_t>(in, "instance", "max_new_tokens", 0);
        }
        return inst;
      }
      if (!in.contains("labels")) throw ConfigError("instance: missing required field 'instance.labels' (or 'instance.suite')");
      if (!in.contains("max_new_tokens")) throw ConfigError("instance: missing required field 'instance.max_new_tokens'");
      const auto labels = get<std::vector<std::string>>(in, "instance", "labels", {});
      std::optional<TokenId> eos;
      if (in.contains("eos")) {
        const auto label = get<std::string>(in, "instance", "eos", "");
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw ConfigError("instance.eos '" + label + "' is not among instance.labels");
        eos = static_cast<TokenId>(it - labels.begin());
      }
      if (!raw_.contains("policy")) throw ConfigError("missing required field 'policy' (no suite given)");
      return SuiteInstance{experiment,
                           EpisodeConfig{Vocab(labels, eos), get<std::size_t>(in, "instance", "max_new_tokens", 0)},
                           nullptr, json::object(), {}, {}};
    };
    SuiteInstance inst = build();
    inst.config.validate();
    if (raw_.contains("policy")) {
      inst.policy_spec = raw_.at("policy");
      inst.base = policy_from_json(inst.policy_spec, inst.config.vocab);
    }
    if (in.contains("prompt")) inst.prompt = tokens_from_json(in.at("prompt"), inst.config.vocab);
    validate_state(State{inst.prompt, {}}, inst.config);
    return inst;
  });
  return *instance_;
}

const RewardSpec& RunConfig::reward_spec() const {
  if (reward_spec_) return *reward_spec_;
  if (!raw_.contains("reward")) throw ConfigError("missing required field 'reward'");
  const auto& inst = instance();
  const auto& r = raw_.at("reward");
  reward_spec_ = as_config_error("reward", [&]() -> RewardSpec {
    if (r.contains("name")) {
      if (r.size() != 1) throw ConfigError("reward: 'name' selects a bundled reward and takes no other keys");
      const auto name = get<std::string>(r, "reward", "name", "");
      for (const auto& nr : inst.rewards) {
        if (nr.name == name) return nr.spec;
      }
      throw ConfigError("reward.name '" + name + "' is not a reward of instance '" + inst.name + "'");
    }
    if (!r.contains("kind")) throw ConfigError("reward: missing required field 'reward.kind' (or 'reward.name')");
    auto spec = reward_spec_from_json(r, inst.config.vocab);
    validate_reward_spec(spec, inst.config.vocab);
    return spec;
  });
  return *reward_spec_;
}

std::shared_ptr<const RewardFn> RunConfig::reward() const {
  return std::make_shared<SpecReward>(reward_spec(), instance().config);
}

std::vector<NamedReward> RunConfig::all_rewards() const {
  std::vector<NamedReward> out = instance().rewards;
  if (raw_.contains("reward")) out.insert(out.begin(), NamedReward{"configured", reward_spec()});
  if (out.empty()) throw ConfigError("missing required field 'reward'");
  return out;
}

std::unique_ptr<ValueEstimator> make_estimator(const EstimatorConfig& config, const EpisodeConfig& episode,
                                               std::uint64_t seed) {
  if (config.kind == "tabular") return std::make_unique<TabularValue>();
  NgramFeatures features(episode.vocab.size(), config.order, episode.max_new_tokens);
  if (config.kind == "linear") return std::make_unique<LinearValue>(features);
  if (config.kind == "mlp") {
    return std::make_unique<MlpValue>(features, config.hidden, derive_seed(seed, "mlp"), config.init_scale);
  }
  throw ConfigError("estimator.kind '" + config.kind + "' is not a state-value estimator");
}

}  // namespace vas::cli
