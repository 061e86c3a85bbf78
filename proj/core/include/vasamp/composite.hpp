#pragma once

// Inference-time combination of value estimators: predict = sum_i w_i V_i(s).

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "vasamp/value_function.hpp"

namespace vas {

class CompositeValue final : public ValueFunction {
 public:
  using Component = std::pair<double, std::shared_ptr<const ValueFunction>>;

  // Throws EmptyCompositionError for no components, NonFiniteError for a
  // non-finite weight, InvalidArgumentError for a null estimator.
  explicit CompositeValue(std::vector<Component> components);

  double predict(const State& state) const override;
  const std::vector<Component>& components() const noexcept { return components_; }

 private:
  std::vector<Component> components_;
};

// Throws LengthMismatchError when the counts differ.
CompositeValue compose(std::span<const double> weights,
                       std::span<const std::shared_ptr<const ValueFunction>> estimators);

}  // namespace vas
