#include "vasamp/composite.hpp"

#include <cmath>

#include "vasamp/errors.hpp"

namespace vas {

CompositeValue::CompositeValue(std::vector<Component> components) : components_(std::move(components)) {
  if (components_.empty()) throw EmptyCompositionError("composition needs at least one estimator");
  for (const auto& [w, v] : components_) {
    if (!std::isfinite(w)) throw NonFiniteError("composition weight is not finite");
    if (!v) throw InvalidArgumentError("composition component is null");
  }
}

double CompositeValue::predict(const State& state) const {
  double sum = 0.0;
  for (const auto& [w, v] : components_) sum += w * v->predict(state);
  return sum;
}

CompositeValue compose(std::span<const double> weights,
                       std::span<const std::shared_ptr<const ValueFunction>> estimators) {
  if (weights.size() != estimators.size()) {
    throw LengthMismatchError("compose: " + std::to_string(weights.size()) + " weights for " +
                              std::to_string(estimators.size()) + " estimators");
  }
  std::vector<CompositeValue::Component> parts;
  for (std::size_t i = 0; i < weights.size(); ++i) parts.emplace_back(weights[i], estimators[i]);
  return CompositeValue(std::move(parts));
}

}  // namespace vas
