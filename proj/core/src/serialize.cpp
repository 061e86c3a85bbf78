#include "vasamp/serialize.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "vasamp/errors.hpp"

namespace vas {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw FormatError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

const json& require(const json& j, const char* key, std::string_view what) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string(what) + ": missing field '" + key + "'");
  return *it;
}

TokenId token_from_json(const json& j, const Vocab& vocab) {
  if (j.is_string()) {
    auto id = vocab.find(j.get<std::string>());
    if (!id) throw FormatError("unknown token label '" + j.get<std::string>() + "'");
    return *id;
  }
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw FormatError("negative token id");
    vocab.validate(static_cast<TokenId>(v));
    return static_cast<TokenId>(v);
  }
  throw FormatError("token must be a label string or an integer id");
}

json labels_json(const TokenSeq& seq, const Vocab& vocab) {
  json out = json::array();
  for (TokenId t : seq) out.push_back(vocab.label(t));
  return out;
}

}  // namespace

json vocab_to_json(const Vocab& vocab) {
  json j{{"labels", vocab.labels()}};
  j["eos_id"] = vocab.eos() ? json(*vocab.eos()) : json(nullptr);
  return j;
}

Vocab vocab_from_json(const json& j) {
  check_keys(j, {"labels", "eos_id"}, "vocab");
  auto labels = require(j, "labels", "vocab").get<std::vector<std::string>>();
  std::optional<TokenId> eos;
  if (auto it = j.find("eos_id"); it != j.end() && !it->is_null()) {
    const auto v = it->get<std::int64_t>();
    if (v < 0) throw FormatError("vocab: eos_id must be >= 0 or null");
    eos = static_cast<TokenId>(v);
  }
  return Vocab(std::move(labels), eos);
}

TokenSeq tokens_from_json(const json& j, const Vocab& vocab) {
  if (!j.is_array()) throw FormatError("expected an array of tokens");
  TokenSeq out;
  for (const auto& t : j) out.push_back(token_from_json(t, vocab));
  return out;
}

json reward_spec_to_json(const RewardSpec& spec, const Vocab& vocab) {
  if (auto* p = std::get_if<PatternReward>(&spec.kind)) {
    return {{"kind", "pattern"}, {"tokens", labels_json(p->pattern, vocab)}};
  }
  if (auto* n = std::get_if<NegLengthReward>(&spec.kind)) return {{"kind", "neg_length"}, {"scale", n->scale}};
  if (auto* c = std::get_if<TokenClassReward>(&spec.kind)) {
    return {{"kind", "token_class"}, {"tokens", labels_json(c->subset, vocab)}};
  }
  const auto& l = std::get<LinearReward>(spec.kind);
  json terms = json::array();
  for (const auto& t : l.terms) terms.push_back(reward_spec_to_json(t, vocab));
  return {{"kind", "linear"}, {"weights", l.weights}, {"terms", terms}};
}

RewardSpec reward_spec_from_json(const json& j, const Vocab& vocab) {
  if (!j.is_object()) throw FormatError("reward: expected an object");
  const auto kind = require(j, "kind", "reward").get<std::string>();
  RewardSpec spec;
  if (kind == "pattern") {
    check_keys(j, {"kind", "tokens"}, "reward.pattern");
    spec.kind = PatternReward{tokens_from_json(require(j, "tokens", "reward.pattern"), vocab)};
  } else if (kind == "neg_length") {
    check_keys(j, {"kind", "scale"}, "reward.neg_length");
    spec.kind = NegLengthReward{j.value("scale", 1.0)};
  } else if (kind == "token_class") {
    check_keys(j, {"kind", "tokens"}, "reward.token_class");
    spec.kind = TokenClassReward{tokens_from_json(require(j, "tokens", "reward.token_class"), vocab)};
  } else if (kind == "linear") {
    check_keys(j, {"kind", "weights", "terms"}, "reward.linear");
    LinearReward l;
    l.weights = require(j, "weights", "reward.linear").get<std::vector<double>>();
    for (const auto& t : require(j, "terms", "reward.linear")) l.terms.push_back(reward_spec_from_json(t, vocab));
    spec.kind = std::move(l);
  } else {
    throw FormatError("reward: unknown kind '" + kind + "'");
  }
  try {
    validate_reward_spec(spec, vocab);
  } catch (const InvalidArgumentError& e) {
    throw FormatError(std::string("reward: ") + e.what());
  }
  return spec;
}

std::shared_ptr<const Policy> policy_from_json(const json& j, const Vocab& vocab) {
  if (!j.is_object()) throw FormatError("policy: expected an object");
  const auto kind = require(j, "kind", "policy").get<std::string>();
  if (kind == "uniform") {
    check_keys(j, {"kind"}, "policy.uniform");
    return std::make_shared<UniformPolicy>(vocab.size());
  }
  if (kind == "point_mass") {
    check_keys(j, {"kind", "token"}, "policy.point_mass");
    return std::make_shared<PointMassPolicy>(vocab.size(), token_from_json(require(j, "token", "policy"), vocab));
  }
  if (kind == "fixed") {
    check_keys(j, {"kind", "probs"}, "policy.fixed");
    auto probs = require(j, "probs", "policy.fixed").get<std::vector<double>>();
    if (probs.size() != vocab.size()) throw FormatError("policy.fixed: probs length must equal vocab size");
    try {
      return std::make_shared<FixedPolicy>(std::move(probs));
    } catch (const InvalidArgumentError& e) {
      throw FormatError(std::string("policy.fixed: ") + e.what());
    }
  }
  if (kind == "bigram") {
    check_keys(j, {"kind", "alpha", "corpus"}, "policy.bigram");
    std::vector<TokenSeq> corpus;
    for (const auto& seq : require(j, "corpus", "policy.bigram")) corpus.push_back(tokens_from_json(seq, vocab));
    const double alpha = j.value("alpha", 1.0);
    if (!(alpha >= 0.0)) throw FormatError("policy.bigram: alpha must be >= 0");
    return std::make_shared<BigramPolicy>(train_bigram(corpus, vocab, alpha));
  }
  throw FormatError("policy: unknown kind '" + kind + "'");
}

json trajectory_to_json(const Trajectory& t) {
  return {{"prompt", t.prompt}, {"tokens", t.tokens}, {"reward", t.reward}, {"seed", t.seed}};
}

Trajectory trajectory_from_json(const json& j, const EpisodeConfig& config) {
  check_keys(j, {"prompt", "tokens", "reward", "seed"}, "trajectory");
  auto traj = make_trajectory(require(j, "prompt", "trajectory").get<TokenSeq>(),
                              require(j, "tokens", "trajectory").get<TokenSeq>(),
                              require(j, "reward", "trajectory").get<double>(), config);
  traj.seed = j.value("seed", std::uint64_t{0});
  return traj;
}

void write_jsonl(std::ostream& os, const std::vector<Trajectory>& trajectories) {
  for (const auto& t : trajectories) os << trajectory_to_json(t).dump() << '\n';
}

std::vector<Trajectory> read_jsonl(std::istream& is, const EpisodeConfig& config) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    try {
      out.push_back(trajectory_from_json(json::parse(line), config));
    } catch (const json::exception& e) {
      throw FormatError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string checksum_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vas
