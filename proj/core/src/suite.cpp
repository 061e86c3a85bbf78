#include "vasamp/suite.hpp"

#include "vasamp/errors.hpp"
#include "vasamp/serialize.hpp"

namespace vas {

std::shared_ptr<const RewardFn> SuiteInstance::reward(std::size_t i) const {
  return std::make_shared<SpecReward>(rewards.at(i).spec, config);
}

std::shared_ptr<const RewardFn> SuiteInstance::reward(const std::string& name) const {
  for (const auto& r : rewards) {
    if (r.name == name) return std::make_shared<SpecReward>(r.spec, config);
  }
  throw InvalidArgumentError("instance " + this->name + " has no reward named '" + name + "'");
}

namespace {

SuiteInstance make_instance(std::string name, Vocab vocab, std::size_t horizon, const nlohmann::json& policy_spec,
                            std::vector<std::pair<std::string, nlohmann::json>> rewards) {
  SuiteInstance inst{std::move(name), EpisodeConfig{std::move(vocab), horizon}, nullptr, policy_spec, {}, {}};
  inst.config.validate();
  inst.base = policy_from_json(policy_spec, inst.config.vocab);
  for (auto& [n, j] : rewards) {
    auto spec = reward_spec_from_json(j, inst.config.vocab);
    validate_reward_spec(spec, inst.config.vocab);
    inst.rewards.push_back({n, std::move(spec)});
  }
  return inst;
}

const nlohmann::json kNegLength = {{"kind", "neg_length"}, {"scale", 1.0}};

}  // namespace

SuiteInstance tiny_ab() {
  const nlohmann::json ab = {{"kind", "pattern"}, {"tokens", {"a", "b"}}};
  return make_instance("tiny_ab", Vocab({"a", "b", "<eos>"}, 2), 2, {{"kind", "uniform"}},
                       {{"pattern_ab", ab},
                        {"neg_length", kNegLength},
                        {"formality_b", {{"kind", "token_class"}, {"tokens", {"b"}}}},
                        {"ab_minus_length", {{"kind", "linear"}, {"weights", {0.5, 0.5}}, {"terms", {ab, kNegLength}}}}});
}

SuiteInstance bigram_instance() {
  const nlohmann::json corpus = {{"a", "b", "c", "d", "<eos>"}, {"c", "a", "b", "<eos>"},
                                 {"b", "b", "c", "<eos>"},      {"d", "c", "a", "<eos>"},
                                 {"a", "a", "b", "c", "<eos>"}, {"c", "d", "b", "<eos>"},
                                 {"b", "c", "d", "a", "<eos>"}};
  const nlohmann::json ca = {{"kind", "pattern"}, {"tokens", {"c", "a"}}};
  return make_instance("bigram", Vocab({"a", "b", "c", "d", "<eos>"}, 4), 5,
                       {{"kind", "bigram"}, {"alpha", 0.5}, {"corpus", corpus}},
                       {{"pattern_ca", ca},
                        {"neg_length", kNegLength},
                        {"formality_ab", {{"kind", "token_class"}, {"tokens", {"a", "b"}}}},
                        {"ca_minus_length",
                         {{"kind", "linear"}, {"weights", {1.0, 0.2}}, {"terms", {ca, kNegLength}}}}});
}

SuiteInstance skew_instance() {
  const nlohmann::json formal = {{"kind", "token_class"}, {"tokens", {"b", "c"}}};
  return make_instance("skew", Vocab({"a", "b", "c", "<eos>"}, 3), 6,
                       {{"kind", "fixed"}, {"probs", {0.45, 0.3, 0.15, 0.10}}},
                       {{"formality_bc", formal},
                        {"neg_length", kNegLength},
                        {"pattern_bc", {{"kind", "pattern"}, {"tokens", {"b", "c"}}}},
                        {"formal_minus_length",
                         {{"kind", "linear"}, {"weights", {1.0, 0.1}}, {"terms", {formal, kNegLength}}}}});
}

std::vector<SuiteInstance> standard_suite() { return {tiny_ab(), bigram_instance(), skew_instance()}; }

std::vector<SuiteInstance> tiny_ab_family() {
  auto uniform = tiny_ab();
  auto skewed = tiny_ab();
  skewed.name = "tiny_ab_skewed";
  skewed.policy_spec = {{"kind", "fixed"}, {"probs", {0.5, 0.3, 0.2}}};
  skewed.base = policy_from_json(skewed.policy_spec, skewed.config.vocab);
  auto formal = tiny_ab();
  formal.name = "tiny_ab_formality";
  std::swap(formal.rewards[0], formal.rewards[2]);
  return {uniform, skewed, formal};
}

SuiteInstance suite_instance(const std::string& name) {
  if (name == "tiny_ab") return tiny_ab();
  if (name == "bigram") return bigram_instance();
  if (name == "skew") return skew_instance();
  throw InvalidArgumentError("unknown suite instance '" + name + "' (expected tiny_ab|bigram|skew)");
}

}  // namespace vas
