#include "vasamp/reward.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vasamp/errors.hpp"
#include "vasamp/serialize.hpp"

namespace vas {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double eval_content(const RewardSpec& spec, const TokenSeq& content) {
  return std::visit(
      Overloaded{
          [&](const PatternReward& r) -> double {
            if (r.pattern.empty()) return 1.0;
            auto it = std::search(content.begin(), content.end(), r.pattern.begin(), r.pattern.end());
            return it != content.end() ? 1.0 : 0.0;
          },
          [&](const NegLengthReward& r) -> double {
            return -r.scale * static_cast<double>(content.size());
          },
          [&](const TokenClassReward& r) -> double {
            if (content.empty()) return 0.0;
            const auto hits = std::count_if(content.begin(), content.end(), [&](TokenId t) {
              return std::find(r.subset.begin(), r.subset.end(), t) != r.subset.end();
            });
            return static_cast<double>(hits) / static_cast<double>(content.size());
          },
          [&](const LinearReward& r) -> double {
            if (r.terms.empty() || r.terms.size() != r.weights.size()) {
              throw InvalidArgumentError("linear reward needs matching, non-empty weights and terms");
            }
            double total = 0.0;
            for (std::size_t i = 0; i < r.terms.size(); ++i) {
              total += r.weights[i] * eval_content(r.terms[i], content);
            }
            return total;
          },
      },
      spec.kind);
}

}  // namespace

double reward_eval(const RewardSpec& spec, const State& state, const EpisodeConfig& config) {
  if (!is_terminal(state, config)) throw NonTerminalError("reward requested for a non-terminal state");
  return eval_content(spec, content_tokens(state, config.vocab));
}

void validate_reward_spec(const RewardSpec& spec, const Vocab& vocab) {
  std::visit(Overloaded{
                 [&](const PatternReward& r) {
                   for (TokenId t : r.pattern) vocab.validate(t);
                 },
                 [&](const NegLengthReward& r) {
                   if (!std::isfinite(r.scale)) throw InvalidArgumentError("neg_length scale must be finite");
                 },
                 [&](const TokenClassReward& r) {
                   for (TokenId t : r.subset) vocab.validate(t);
                 },
                 [&](const LinearReward& r) {
                   if (r.terms.empty()) throw InvalidArgumentError("linear reward needs at least one term");
                   if (r.terms.size() != r.weights.size()) {
                     throw InvalidArgumentError("linear reward weights/terms count mismatch");
                   }
                   for (double w : r.weights) {
                     if (!std::isfinite(w)) throw InvalidArgumentError("linear reward weights must be finite");
                   }
                   for (const auto& t : r.terms) validate_reward_spec(t, vocab);
                 },
             },
             spec.kind);
}

std::string describe(const RewardSpec& spec, const Vocab& vocab) {
  return std::visit(Overloaded{
                        [&](const PatternReward& r) { return "pattern(" + vocab.render(r.pattern) + ")"; },
                        [&](const NegLengthReward& r) {
                          std::ostringstream os;
                          os << "neg_length(" << r.scale << ")";
                          return os.str();
                        },
                        [&](const TokenClassReward& r) { return "token_class(" + vocab.render(r.subset) + ")"; },
                        [&](const LinearReward& r) {
                          std::ostringstream os;
                          os << "linear(";
                          for (std::size_t i = 0; i < r.terms.size(); ++i) {
                            if (i) os << " + ";
                            os << r.weights[i] << "*" << describe(r.terms[i], vocab);
                          }
                          os << ")";
                          return os.str();
                        },
                    },
                    spec.kind);
}

SpecReward::SpecReward(RewardSpec spec, EpisodeConfig config) : spec_(std::move(spec)), config_(std::move(config)) {
  validate_reward_spec(spec_, config_.vocab);
}

double SpecReward::score(const State& terminal) const { return reward_eval(spec_, terminal, config_); }

nlohmann::json SpecReward::spec() const { return reward_spec_to_json(spec_, config_.vocab); }

}  // namespace vas
