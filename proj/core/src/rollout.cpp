#include "vasamp/rollout.hpp"

#include "vasamp/errors.hpp"

namespace vas {

Trajectory make_trajectory(TokenSeq prompt, TokenSeq tokens, double reward, const EpisodeConfig& config) {
  Trajectory t;
  t.prompt = std::move(prompt);
  t.tokens = std::move(tokens);
  t.reward = reward;
  t.states.reserve(t.tokens.size() + 1);
  t.states.push_back(State{t.prompt, {}});
  validate_state(t.states.front(), config);
  for (TokenId x : t.tokens) t.states.push_back(transition(t.states.back(), x, config));
  if (!is_terminal(t.states.back(), config)) throw NonTerminalError("trajectory does not end in a terminal state");
  return t;
}

Trajectory rollout(const Policy& policy, const RewardFn& reward, const TokenSeq& prompt,
                   const EpisodeConfig& config, Rng& rng, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgumentError("temperature must be > 0");
  Trajectory t;
  t.prompt = prompt;
  t.states.push_back(State{prompt, {}});
  validate_state(t.states.front(), config);
  while (!is_terminal(t.states.back(), config)) {
    const auto dist = apply_temperature(policy.next_dist(t.states.back()), temperature);
    const TokenId x = sample_categorical(dist, rng);
    t.tokens.push_back(x);
    t.states.push_back(transition(t.states.back(), x, config));
  }
  t.reward = reward.score(t.states.back());
  return t;
}

}  // namespace vas
