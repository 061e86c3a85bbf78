#include "vasamp/mdp.hpp"

#include <algorithm>
#include <unordered_set>

#include "vasamp/errors.hpp"

namespace vas {

Vocab::Vocab(std::vector<std::string> labels, std::optional<TokenId> eos_id, std::size_t cap)
    : labels_(std::move(labels)), eos_(eos_id) {
  if (labels_.size() < 2) {
    throw InvalidArgumentError("vocab needs at least 2 tokens, got " + std::to_string(labels_.size()));
  }
  if (labels_.size() > cap) {
    throw InvalidArgumentError("vocab size " + std::to_string(labels_.size()) + " exceeds cap " +
                               std::to_string(cap));
  }
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw InvalidArgumentError("vocab labels must be non-empty");
    if (!seen.insert(l).second) throw InvalidArgumentError("duplicate vocab label '" + l + "'");
  }
  if (eos_ && *eos_ >= labels_.size()) {
    throw InvalidArgumentError("eos_id " + std::to_string(*eos_) + " out of range");
  }
}

const std::string& Vocab::label(TokenId id) const {
  validate(id);
  return labels_[id];
}

std::optional<TokenId> Vocab::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<TokenId>(it - labels_.begin());
}

void Vocab::validate(TokenId id) const {
  if (id >= labels_.size()) {
    throw InvalidTokenError("token id " + std::to_string(id) + " out of range for vocab of size " +
                            std::to_string(labels_.size()));
  }
}

std::string Vocab::render(std::span<const TokenId> tokens) const {
  const bool spaced = std::any_of(labels_.begin(), labels_.end(), [&](const std::string& l) {
    return l.size() > 1 && !(eos_ && l == labels_[*eos_]);
  });
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (spaced && i > 0) out += ' ';
    out += label(tokens[i]);
  }
  return out;
}

void EpisodeConfig::validate() const {
  if (max_new_tokens < 1) throw InvalidArgumentError("max_new_tokens must be >= 1");
}

bool is_terminal(const State& state, const EpisodeConfig& config) {
  if (state.generated.size() >= config.max_new_tokens) return true;
  return !state.generated.empty() && config.vocab.is_eos(state.generated.back());
}

void validate_state(const State& state, const EpisodeConfig& config) {
  for (TokenId t : state.prompt) config.vocab.validate(t);
  if (state.generated.size() > config.max_new_tokens) {
    throw InvalidArgumentError("generated length exceeds max_new_tokens");
  }
  for (std::size_t i = 0; i < state.generated.size(); ++i) {
    config.vocab.validate(state.generated[i]);
    if (config.vocab.is_eos(state.generated[i]) && i + 1 != state.generated.size()) {
      throw InvalidArgumentError("eos may only appear as the last generated token");
    }
  }
}

State transition(const State& state, TokenId token, const EpisodeConfig& config) {
  config.vocab.validate(token);
  if (is_terminal(state, config)) throw TerminalStateError("transition from a terminal state");
  State next = state;
  next.generated.push_back(token);
  return next;
}

TokenSeq content_tokens(const State& state, const Vocab& vocab) {
  TokenSeq out;
  out.reserve(state.generated.size());
  for (TokenId t : state.generated) {
    if (!vocab.is_eos(t)) out.push_back(t);
  }
  return out;
}

}  // namespace vas
