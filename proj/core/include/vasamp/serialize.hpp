#pragma once

// JSON and JSONL interchange formats:
//   Vocab           {"labels": [...], "eos_id": int | null}
//   Trajectory      {"prompt": [ids], "tokens": [ids], "reward": float, "seed": int}
//   RewardSpec      {"kind": "pattern", "tokens": [labels]} | {"kind": "neg_length", "scale": x}
//                   | {"kind": "token_class", "tokens": [labels]}
//                   | {"kind": "linear", "weights": [...], "terms": [spec, ...]}
//   Policy spec     {"kind": "uniform"} | {"kind": "point_mass", "token": label}
//                   | {"kind": "fixed", "probs": [...]}
//                   | {"kind": "bigram", "alpha": x, "corpus": [[labels...], ...]}

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/rollout.hpp"

namespace vas {

nlohmann::json vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const nlohmann::json& j);

nlohmann::json reward_spec_to_json(const RewardSpec& spec, const Vocab& vocab);
RewardSpec reward_spec_from_json(const nlohmann::json& j, const Vocab& vocab);

// Builds a policy from its config description.
std::shared_ptr<const Policy> policy_from_json(const nlohmann::json& j, const Vocab& vocab);

// Labels or ids to token ids.
TokenSeq tokens_from_json(const nlohmann::json& j, const Vocab& vocab);

nlohmann::json trajectory_to_json(const Trajectory& t);
// Rebuilds intermediate states by replaying the tokens through transition().
Trajectory trajectory_from_json(const nlohmann::json& j, const EpisodeConfig& config);

void write_jsonl(std::ostream& os, const std::vector<Trajectory>& trajectories);
// Blank lines and "#" header lines are skipped.
std::vector<Trajectory> read_jsonl(std::istream& is, const EpisodeConfig& config);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string checksum_hex(std::string_view bytes);

}  // namespace vas
