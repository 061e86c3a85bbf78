#pragma once

#include <cstdint>
#include <vector>

#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/reward.hpp"
#include "vasamp/rng.hpp"

namespace vas {

struct Trajectory {
  TokenSeq prompt;
  TokenSeq tokens;
  // states[0] is the prompt-only state, states[t + 1] = transition(states[t], tokens[t]).
  std::vector<State> states;
  double reward = 0.0;
  std::uint64_t seed = 0;

  const State& terminal() const { return states.back(); }
};

// Replays `tokens` from the prompt and checks the result is terminal.
Trajectory make_trajectory(TokenSeq prompt, TokenSeq tokens, double reward, const EpisodeConfig& config);

// Samples one episode from the temperature-transformed policy, one uniform draw per step.
Trajectory rollout(const Policy& policy, const RewardFn& reward, const TokenSeq& prompt,
                   const EpisodeConfig& config, Rng& rng, double temperature = 1.0);

}  // namespace vas
