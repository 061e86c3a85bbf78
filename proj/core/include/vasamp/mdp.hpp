#pragma once

// Token-generation MDP: a state is a prompt plus the tokens generated so far,
// and every transition appends exactly one token.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vas {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::size_t kDefaultVocabCap = std::size_t{1} << 16;

class Vocab {
 public:
  // Labels must be unique and non-empty; 2 <= size <= cap.
  Vocab(std::vector<std::string> labels, std::optional<TokenId> eos_id,
        std::size_t cap = kDefaultVocabCap);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(TokenId id) const;
  std::optional<TokenId> eos() const noexcept { return eos_; }
  bool is_eos(TokenId id) const noexcept { return eos_ && *eos_ == id; }
  std::optional<TokenId> find(std::string_view label) const;

  // Throws InvalidTokenError for ids outside [0, size).
  void validate(TokenId id) const;

  // Labels concatenated; labels longer than one character are space separated.
  std::string render(std::span<const TokenId> tokens) const;

  bool operator==(const Vocab&) const = default;

 private:
  std::vector<std::string> labels_;
  std::optional<TokenId> eos_;
};

struct EpisodeConfig {
  Vocab vocab;
  std::size_t max_new_tokens = 1;

  void validate() const;
};

struct State {
  TokenSeq prompt;
  TokenSeq generated;

  bool operator==(const State&) const = default;
};

bool is_terminal(const State& state, const EpisodeConfig& config);

// Throws InvalidArgumentError if `state` violates the episode invariants
// (eos not last, length beyond the horizon, token out of range).
void validate_state(const State& state, const EpisodeConfig& config);

// Appends `token`. Throws TerminalStateError / InvalidTokenError.
State transition(const State& state, TokenId token, const EpisodeConfig& config);

// Generated tokens with eos removed; rewards and length metrics see only these.
TokenSeq content_tokens(const State& state, const Vocab& vocab);

}  // namespace vas
